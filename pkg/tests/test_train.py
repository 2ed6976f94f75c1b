import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xferlab.datagen import LabeledDataset
from xferlab.errors import ConfigError, ContractError
from xferlab.subspace import Representation
from xferlab.train import (
    EstimatorConfig,
    empirical_mean_direction,
    fit_adv_l2,
    fit_adv_linf,
    fit_standard,
    fit_target,
    oracle_fit,
    pseudo_label,
)


def _ds_with_mean(mu, n=4):
    """Dataset whose empirical mean direction is exactly mu."""
    mu = np.asarray(mu, dtype=float)
    inputs = np.tile(mu, (n, 1))
    labels = np.ones(n)
    return LabeledDataset(inputs=inputs, labels=labels)


def _random_ds(rng, p, n):
    labels = rng.integers(0, 2, size=n) * 2.0 - 1.0
    mu = rng.normal(size=p)
    inputs = rng.normal(size=(n, p)) + labels[:, None] * mu
    return LabeledDataset(inputs=inputs, labels=labels)


class TestEmpiricalMean:
    def test_single_point(self):
        x = np.array([1.0, -2.0, 3.0])
        ds = LabeledDataset(inputs=x[None], labels=np.array([1.0]))
        assert np.array_equal(empirical_mean_direction(ds), x)

    def test_cancellation(self):
        x = np.array([1.0, 2.0])
        ds = LabeledDataset(
            inputs=np.stack([x, x]), labels=np.array([1.0, -1.0])
        )
        assert np.array_equal(empirical_mean_direction(ds), np.zeros(2))

    def test_noiseless_recovers_mu(self):
        mu = np.array([0.3, -0.7, 0.1])
        labels = np.array([1.0, -1.0, 1.0, -1.0])
        ds = LabeledDataset(inputs=labels[:, None] * mu, labels=labels)
        assert np.max(np.abs(empirical_mean_direction(ds) - mu)) < 1e-10


class TestFitStandard:
    def test_normalization(self):
        res = fit_standard(_ds_with_mean([3.0, 4.0]))
        assert np.allclose(res.beta, [0.6, 0.8])
        assert res.objective == pytest.approx(-5.0)
        assert not res.suppressed

    def test_zero_mean_suppressed(self):
        x = np.array([1.0, 2.0])
        ds = LabeledDataset(inputs=np.stack([x, x]), labels=np.array([1.0, -1.0]))
        res = fit_standard(ds)
        assert res.suppressed and res.objective == 0.0
        assert np.array_equal(res.beta, np.zeros(2))

    def test_matches_oracle(self):
        ds = _random_ds(np.random.default_rng(0), p=3, n=5)
        closed = fit_standard(ds)
        numeric = oracle_fit(ds, EstimatorConfig("standard"))
        assert abs(closed.objective - numeric.objective) < 1e-4


class TestFitAdvL2:
    def test_above_threshold(self):
        res = fit_adv_l2(_ds_with_mean([2.0, 0.0]), eps=0.5)
        assert np.allclose(res.beta, [1.0, 0.0])
        assert res.objective == pytest.approx(-1.5)

    def test_suppression_branch(self):
        res = fit_adv_l2(_ds_with_mean([0.3, 0.0]), eps=0.5)
        assert res.suppressed and res.objective == 0.0

    def test_boundary_keeps_direction(self):
        res = fit_adv_l2(_ds_with_mean([0.5, 0.0]), eps=0.5)
        assert not res.suppressed
        assert res.objective == pytest.approx(0.0)
        assert np.allclose(res.beta, [1.0, 0.0])

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(ConfigError):
            fit_adv_l2(_ds_with_mean([1.0, 0.0]), eps=0.0)


class TestFitAdvLinf:
    def test_single_surviving_coordinate(self):
        res = fit_adv_linf(_ds_with_mean([1.0, 0.1, -0.2]), eps=0.5)
        assert np.allclose(res.beta, [1.0, 0.0, 0.0])
        assert res.objective == pytest.approx(-0.5)

    def test_full_suppression(self):
        res = fit_adv_linf(_ds_with_mean([0.2, -0.1]), eps=0.3)
        assert res.suppressed and res.objective == 0.0

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            ds = _random_ds(rng, p=4, n=6)
            closed = fit_adv_linf(ds, eps=0.2)
            numeric = oracle_fit(ds, EstimatorConfig("adv_linf", 0.2))
            assert abs(closed.objective - numeric.objective) < 1e-3


class TestOracleFit:
    def test_known_optimum(self):
        ds = _ds_with_mean([1.0, 0.0, 0.0])
        res = oracle_fit(ds, EstimatorConfig("standard"))
        assert abs(res.objective - (-1.0)) < 1e-4
        assert np.linalg.norm(res.beta - [1.0, 0.0, 0.0]) < 1e-2

    def test_suppression_optimum(self):
        ds = _ds_with_mean([0.2, 0.1])
        res = oracle_fit(ds, EstimatorConfig("adv_l2", 0.8))
        assert abs(res.objective) < 1e-4

    def test_size_limits(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ContractError):
            oracle_fit(_random_ds(rng, p=17, n=4), EstimatorConfig("standard"))
        with pytest.raises(ContractError):
            oracle_fit(_random_ds(rng, p=4, n=65), EstimatorConfig("standard"))

    def test_unresolved_epsilon_rejected(self):
        ds = _ds_with_mean([1.0, 0.0])
        with pytest.raises(ConfigError):
            oracle_fit(ds, EstimatorConfig("adv_l2", None))


class TestPseudoLabel:
    def test_coordinate_sign(self):
        X = np.array([[2.0, 9.0], [-3.0, 9.0]])
        assert np.array_equal(pseudo_label(np.array([1.0, 0.0]), X), [1.0, -1.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=5)
        X = rng.normal(size=(20, 5))
        assert np.array_equal(pseudo_label(5 * w, X), pseudo_label(w, X))

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(4)
        mu = rng.normal(size=6)
        labels = rng.integers(0, 2, size=30) * 2.0 - 1.0
        X = labels[:, None] * mu
        assert np.array_equal(pseudo_label(mu, X), labels)

    def test_zero_classifier_rejected(self):
        with pytest.raises(ContractError):
            pseudo_label(np.zeros(3), np.ones((2, 3)))

    def test_sign_zero_is_positive(self):
        assert pseudo_label(np.array([1.0, 0.0]), np.zeros((1, 2)))[0] == 1.0


class TestFitTarget:
    def _w1(self):
        return Representation(np.eye(4)[:, :2])

    def test_normalized_projection(self):
        ds = _ds_with_mean([0.0, 2.0, 0.0, 0.0])
        assert np.allclose(fit_target(ds, self._w1()), [0.0, 1.0])

    def test_orthogonal_mean_gives_zero(self):
        ds = _ds_with_mean([0.0, 0.0, 3.0, 0.0])
        assert np.array_equal(fit_target(ds, self._w1()), np.zeros(2))

    def test_noiseless_end_to_end_value(self):
        mu = np.array([0.6, 0.8, 0.0, 0.0])
        ds = _ds_with_mean(mu)
        w1 = self._w1()
        w2 = fit_target(ds, w1)
        assert (w1.basis @ w2) @ mu == pytest.approx(np.linalg.norm(mu))


class TestEstimatorConfig:
    def test_standard_forces_zero_epsilon(self):
        assert EstimatorConfig("standard", None).epsilon == 0.0
        with pytest.raises(ConfigError):
            EstimatorConfig("standard", 0.5)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ConfigError):
            EstimatorConfig("adv_l2", -0.1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            EstimatorConfig("pgd")


class TestTrainInvariants:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_l2_reduces_to_standard(self, seed):
        ds = _random_ds(np.random.default_rng(seed), p=5, n=8)
        if np.linalg.norm(empirical_mean_direction(ds)) < 1e-6:
            return
        std, adv = fit_standard(ds), fit_adv_l2(ds, eps=1e-12)
        assert np.max(np.abs(std.beta - adv.beta)) < 1e-9
        assert abs(std.objective - adv.objective) < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_linf_reduces_to_standard(self, seed):
        ds = _random_ds(np.random.default_rng(seed), p=5, n=8)
        mu = empirical_mean_direction(ds)
        nz = np.abs(mu)[np.abs(mu) > 0]
        if nz.size == 0 or nz.min() < 1e-6:
            return
        std, adv = fit_standard(ds), fit_adv_linf(ds, eps=1e-12)
        assert np.max(np.abs(std.beta - adv.beta)) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.floats(0.01, 1.0),
        st.floats(0.0, 1.0),
    )
    def test_support_monotone_in_epsilon(self, seed, eps1, bump):
        ds = _random_ds(np.random.default_rng(seed), p=6, n=8)
        eps2 = eps1 + bump
        s1 = np.count_nonzero(fit_adv_linf(ds, eps1).beta)
        s2 = np.count_nonzero(fit_adv_linf(ds, eps2).beta)
        assert s2 <= s1

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.5))
    def test_closed_form_never_loses_to_oracle(self, seed, eps):
        ds = _random_ds(np.random.default_rng(seed), p=4, n=6)
        for closed, cfg in (
            (fit_standard(ds), EstimatorConfig("standard")),
            (fit_adv_l2(ds, eps), EstimatorConfig("adv_l2", eps)),
            (fit_adv_linf(ds, eps), EstimatorConfig("adv_linf", eps)),
        ):
            assert closed.objective <= oracle_fit(ds, cfg).objective + 1e-3

    def test_fits_depend_only_on_mean(self):
        # Two different datasets with identical empirical means.
        mu = np.array([0.4, -0.3, 0.2])
        ds1 = _ds_with_mean(mu, n=2)
        noise = np.array([0.5, 1.0, -2.0])
        ds2 = LabeledDataset(
            inputs=np.stack([mu + noise, -(mu - noise)]),
            labels=np.array([1.0, -1.0]),
        )
        assert np.allclose(empirical_mean_direction(ds1), empirical_mean_direction(ds2))
        for fit in (
            fit_standard,
            lambda d: fit_adv_l2(d, 0.2),
            lambda d: fit_adv_linf(d, 0.2),
        ):
            a, b = fit(ds1), fit(ds2)
            assert np.allclose(a.beta, b.beta)
            assert a.objective == pytest.approx(b.objective)
            assert a.suppressed == b.suppressed

    def test_suppressed_iff_zero_beta(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            ds = _random_ds(rng, p=4, n=5)
            for res in (
                fit_standard(ds),
                fit_adv_l2(ds, 0.7),
                fit_adv_linf(ds, 0.7),
            ):
                assert res.suppressed == (np.linalg.norm(res.beta) == 0.0)
