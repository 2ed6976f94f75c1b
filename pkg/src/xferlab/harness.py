"""Seeded Monte-Carlo experiment runner.

A sweep varies one axis (n, T, p, epsilon, alpha, n_unlabeled) over a list of
values; each (axis value, trial) cell draws a fresh ensemble and datasets from
a seed derived only from the root seed, axis index, and trial index, so every
estimator in the cell sees byte-identical data and comparisons are paired.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .datagen import (
    EnsembleSpec,
    SnrProfile,
    SparsitySpec,
    make_ensemble,
    sample_dataset,
    sample_unlabeled,
)
from .errors import (
    AllSuppressedError,
    ConfigError,
    DegenerateRankError,
    DiversityError,
)
from .metrics import excess_risk, representation_error, target_accuracy
from .pipeline import (
    epsilon_band,
    learn_representation,
    learn_representation_adversarial,
    learn_with_pseudo_labels,
)
from .train import EstimatorConfig

SWEEP_AXES = ("n", "T", "p", "epsilon", "alpha", "n_unlabeled")

PRESET_NAMES = (
    "lemma1_rate_n",
    "lemma1_rate_T",
    "thm1_l2_snr",
    "thm2_linf_sparse",
    "thm3_pseudo",
    "thm4_pseudo_adv",
    "thm4_pseudo_adv_linf",
    "verify_closed_forms",
)

_MASK = (1 << 64) - 1


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a fixed 64-bit mixing permutation."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def trial_seed(root_seed: int, axis_index: int, trial_index: int) -> int:
    """Per-cell data seed; deliberately independent of the estimator so all
    estimators in a cell consume identical datasets."""
    return mix64((root_seed & _MASK) ^ (axis_index * 10**6 + trial_index))


@dataclass(frozen=True)
class SweepConfig:
    experiment: str
    ensemble: EnsembleSpec
    sweep_axis: str
    sweep_values: tuple
    estimators: tuple
    n_source: int
    n_target: int
    n_unlabeled: int
    trials: int
    root_seed: int

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        vals = tuple(self.sweep_values)
        if not vals:
            raise ConfigError("sweep_values must be nonempty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep_values must be strictly ascending")
        # n_unlabeled may start at 0 (labeled-only baseline); other axes positive
        low = 0 if self.sweep_axis == "n_unlabeled" else 1
        if any(v < low for v in vals):
            raise ConfigError("sweep_values out of range for this axis")
        if not self.estimators:
            raise ConfigError("estimators must be nonempty")
        if self.n_source < 1 or self.n_target < 1 or self.n_unlabeled < 0:
            raise ConfigError("sample sizes out of range")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        object.__setattr__(self, "sweep_values", vals)
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    axis_value: float
    estimator: str
    trial: int
    seed: int
    p: int
    r: int
    T: int
    n: int
    n_target: int
    n_unlabeled: int
    epsilon: float
    alpha: float
    support_size: float
    sin_theta: float
    excess_risk: float
    target_accuracy: float
    suppressed_count: int
    wall_ms: float
    status: str


@dataclass(frozen=True)
class AggregateRecord:
    experiment: str
    axis_value: float
    estimator: str
    trial_count: int
    failed_count: int
    sin_theta_median: float
    sin_theta_q25: float
    sin_theta_q75: float
    excess_risk_median: float
    excess_risk_q25: float
    excess_risk_q75: float
    target_accuracy_median: float
    target_accuracy_q25: float
    target_accuracy_q75: float


def _resolve_axis(cfg: SweepConfig, axis_value):
    """Apply the swept value to the ensemble spec / sample sizes."""
    spec = cfg.ensemble
    n_source, n_unlabeled = cfg.n_source, cfg.n_unlabeled
    axis = cfg.sweep_axis
    if axis == "n":
        n_source = int(axis_value)
    elif axis == "T":
        spec = replace(spec, T=int(axis_value))
    elif axis == "p":
        spec = replace(spec, p=int(axis_value))
    elif axis == "alpha":
        spec = replace(spec, snr=replace(spec.snr, alpha=float(axis_value)))
    elif axis == "n_unlabeled":
        n_unlabeled = int(axis_value)
    # axis == "epsilon" is resolved per estimator, not on the spec
    return spec, n_source, n_unlabeled


def resolve_epsilon(
    estimator: EstimatorConfig,
    ensemble,
    p: int,
    n_total: int,
    axis: str,
    axis_value,
) -> float:
    """Concrete attack budget for a trial.

    An epsilon axis overrides adversarial budgets. epsilon=None auto-resolves:
    two-group band midpoint for adv_l2, 2*sqrt(log(p)/n) on the full per-task
    sample count for adv_linf.
    """
    if estimator.kind == "standard":
        return 0.0
    if axis == "epsilon":
        return float(axis_value)
    if estimator.epsilon is not None:
        return float(estimator.epsilon)
    if estimator.kind == "adv_l2":
        return epsilon_band(ensemble)[2]
    return 2.0 * math.sqrt(math.log(p) / n_total)


def _failed(record_kwargs, status: str) -> TrialRecord:
    record_kwargs.update(
        sin_theta=float("nan"),
        excess_risk=float("nan"),
        target_accuracy=float("nan"),
        suppressed_count=0,
        status=status,
    )
    return TrialRecord(**record_kwargs)


def run_trial(
    cfg: SweepConfig,
    axis_value,
    estimator: EstimatorConfig,
    trial_index: int,
) -> TrialRecord:
    """One (axis value, estimator, trial) cell: generate, fit, evaluate."""
    axis_index = cfg.sweep_values.index(axis_value)
    seed = trial_seed(cfg.root_seed, axis_index, trial_index)
    spec, n_source, n_unlabeled = _resolve_axis(cfg, axis_value)
    base = dict(
        experiment=cfg.experiment,
        axis_value=float(axis_value),
        estimator=estimator.kind,
        trial=trial_index,
        seed=seed,
        p=spec.p,
        r=spec.r,
        T=spec.T,
        n=n_source,
        n_target=cfg.n_target,
        n_unlabeled=n_unlabeled,
        epsilon=float("nan"),
        alpha=spec.snr.alpha if spec.snr.kind == "two_group" else float("nan"),
        support_size=(
            float(spec.sparsity.support_size)
            if spec.sparsity.kind == "row_sparse"
            else float("nan")
        ),
        wall_ms=0.0,
    )
    t0 = time.perf_counter()
    try:
        rng = np.random.default_rng(seed)
        ensemble = make_ensemble(spec, rng)
        sources = [
            sample_dataset(ensemble, t, n_source, rng) for t in range(1, spec.T + 1)
        ]
        pools = [
            sample_unlabeled(ensemble, t, n_unlabeled, rng)
            for t in range(1, spec.T + 1)
        ]
        target = sample_dataset(ensemble, spec.T + 1, cfg.n_target, rng)
        eps = resolve_epsilon(
            estimator, ensemble, spec.p, n_source + n_unlabeled,
            cfg.sweep_axis, axis_value,
        )
        base["epsilon"] = eps
        if estimator.kind == "standard":
            if n_unlabeled > 0:
                out, _ = learn_with_pseudo_labels(
                    sources, pools, target, spec.r, EstimatorConfig("standard")
                )
            else:
                out = learn_representation(sources, target, spec.r)
        else:
            est = EstimatorConfig(estimator.kind, eps)
            if n_unlabeled > 0:
                _, out = learn_with_pseudo_labels(
                    sources, pools, target, spec.r, est
                )
            else:
                out = learn_representation_adversarial(sources, target, spec.r, est)
        base.update(
            sin_theta=representation_error(out.W1, ensemble),
            excess_risk=excess_risk(out, ensemble),
            target_accuracy=target_accuracy(out, ensemble),
            suppressed_count=out.suppressed_count,
            status="ok",
        )
        base["wall_ms"] = (time.perf_counter() - t0) * 1000.0
        return TrialRecord(**base)
    except (AllSuppressedError, DegenerateRankError, DiversityError) as exc:
        base["wall_ms"] = (time.perf_counter() - t0) * 1000.0
        return _failed(base, f"error:{type(exc).__name__}")


def run_sweep(cfg: SweepConfig, parallelism: int = 1) -> list[TrialRecord]:
    """Run all (axis value x estimator x trial) cells.

    Output is sorted on (axis_value, estimator, trial) and is identical for
    any parallelism level.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be positive")
    cells = [
        (v, est, k)
        for v in cfg.sweep_values
        for est in cfg.estimators
        for k in range(cfg.trials)
    ]
    if parallelism == 1:
        records = [run_trial(cfg, v, est, k) for v, est, k in cells]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(
                pool.map(lambda c: run_trial(cfg, c[0], c[1], c[2]), cells)
            )
    records.sort(key=lambda rec: (rec.axis_value, rec.estimator, rec.trial))
    return records


def aggregate(records) -> list[AggregateRecord]:
    """Median and quartiles per (experiment, axis_value, estimator) cell.

    Failed trials are excluded from the statistics and counted separately.
    """
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.experiment, rec.axis_value, rec.estimator), []).append(
            rec
        )
    out = []
    for (exp, axis_value, est), recs in sorted(groups.items()):
        ok = [r for r in recs if r.status == "ok"]
        failed = len(recs) - len(ok)

        def q(metric, pct):
            if not ok:
                return float("nan")
            return float(np.percentile([getattr(r, metric) for r in ok], pct))

        out.append(
            AggregateRecord(
                experiment=exp,
                axis_value=axis_value,
                estimator=est,
                trial_count=len(ok),
                failed_count=failed,
                sin_theta_median=q("sin_theta", 50),
                sin_theta_q25=q("sin_theta", 25),
                sin_theta_q75=q("sin_theta", 75),
                excess_risk_median=q("excess_risk", 50),
                excess_risk_q25=q("excess_risk", 25),
                excess_risk_q75=q("excess_risk", 75),
                target_accuracy_median=q("target_accuracy", 50),
                target_accuracy_q25=q("target_accuracy", 25),
                target_accuracy_q75=q("target_accuracy", 75),
            )
        )
    return out


def _uniform(base_norm: float) -> SnrProfile:
    return SnrProfile(kind="uniform", base_norm=base_norm)


def preset(name: str) -> SweepConfig:
    """Canonical desk-scale configuration for each headline experiment."""
    dense = SparsitySpec(kind="dense")
    if name == "lemma1_rate_n":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=64, r=4, T=64, snr=_uniform(1.0), sparsity=dense,
                noise_rho=1.0, noise_kind="gaussian", target_norm=1.0,
            ),
            sweep_axis="n",
            sweep_values=(64, 128, 256, 512, 1024, 2048, 4096),
            estimators=(EstimatorConfig("standard"),),
            n_source=256, n_target=100, n_unlabeled=0,
            trials=50, root_seed=0x5EED_0001,
        )
    if name == "lemma1_rate_T":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=128, r=4, T=64, snr=_uniform(1.0), sparsity=dense,
                noise_rho=1.0, noise_kind="gaussian", target_norm=1.0,
            ),
            sweep_axis="T",
            sweep_values=(16, 32, 64, 128, 256, 512),
            estimators=(EstimatorConfig("standard"),),
            n_source=256, n_target=100, n_unlabeled=0,
            trials=50, root_seed=0x5EED_0002,
        )
    if name == "thm1_l2_snr":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=100, r=4, T=80,
                snr=SnrProfile("two_group", base_norm=1.0, alpha=8.0, frac_strong=0.5),
                sparsity=dense, noise_rho=1.0, noise_kind="gaussian",
                target_norm=1.0,
            ),
            sweep_axis="alpha",
            sweep_values=(4.0, 8.0),
            estimators=(
                EstimatorConfig("standard"),
                EstimatorConfig("adv_l2", epsilon=None),  # band midpoint
            ),
            n_source=100, n_target=100, n_unlabeled=0,
            trials=50, root_seed=0x5EED_0003,
        )
    if name == "thm2_linf_sparse":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=128, r=4, T=64, snr=_uniform(2.0),
                sparsity=SparsitySpec("row_sparse", support_size=10),
                noise_rho=1.0, noise_kind="gaussian", target_norm=2.0,
            ),
            sweep_axis="p",
            sweep_values=(128, 512, 2048),
            estimators=(
                EstimatorConfig("standard"),
                EstimatorConfig("adv_linf", epsilon=None),  # 2*sqrt(log p / n)
            ),
            n_source=128, n_target=100, n_unlabeled=0,
            trials=50, root_seed=0x5EED_0004,
        )
    if name == "thm3_pseudo":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=64, r=4, T=64, snr=_uniform(4.0), sparsity=dense,
                noise_rho=1.0, noise_kind="gaussian", target_norm=4.0,
            ),
            sweep_axis="n_unlabeled",
            sweep_values=(0, 200, 800),
            estimators=(EstimatorConfig("standard"),),
            n_source=50, n_target=100, n_unlabeled=0,
            trials=50, root_seed=0x5EED_0005,
        )
    if name == "thm4_pseudo_adv":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=100, r=4, T=80,
                snr=SnrProfile("two_group", base_norm=1.0, alpha=8.0, frac_strong=0.5),
                sparsity=dense, noise_rho=1.0, noise_kind="gaussian",
                target_norm=1.0,
            ),
            sweep_axis="n_unlabeled",
            sweep_values=(800,),
            estimators=(
                EstimatorConfig("standard"),
                EstimatorConfig("adv_l2", epsilon=None),
            ),
            n_source=100, n_target=100, n_unlabeled=800,
            trials=50, root_seed=0x5EED_0006,
        )
    if name == "thm4_pseudo_adv_linf":
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=512, r=4, T=64, snr=_uniform(2.0),
                sparsity=SparsitySpec("row_sparse", support_size=10),
                noise_rho=1.0, noise_kind="gaussian", target_norm=2.0,
            ),
            sweep_axis="n_unlabeled",
            sweep_values=(800,),
            estimators=(
                EstimatorConfig("standard"),
                EstimatorConfig("adv_linf", epsilon=None),
            ),
            n_source=128, n_target=100, n_unlabeled=800,
            trials=50, root_seed=0x5EED_0007,
        )
    if name == "verify_closed_forms":
        # Consumed by the closed-form audit: trials = instance count, the
        # ensemble and n_source cap the per-instance sizes.
        return SweepConfig(
            experiment=name,
            ensemble=EnsembleSpec(
                p=8, r=2, T=4, snr=_uniform(1.0), sparsity=dense,
                noise_rho=1.0, noise_kind="gaussian", target_norm=1.0,
            ),
            sweep_axis="n",
            sweep_values=(16,),
            estimators=(
                EstimatorConfig("standard"),
                EstimatorConfig("adv_l2", epsilon=1.0),
                EstimatorConfig("adv_linf", epsilon=1.0),
            ),
            n_source=16, n_target=16, n_unlabeled=0,
            trials=100, root_seed=0x5EED_0008,
        )
    raise ConfigError(f"unknown preset {name!r}")
