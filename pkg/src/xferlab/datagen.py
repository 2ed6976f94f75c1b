"""Synthetic task ensembles and dataset sampling.

The generative model: each task t has mean direction mu_t = B @ a_t for a
shared orthonormal B (p x r) and task vector a_t in R^r. A sample is
x = eta + y * mu_t with y uniform on {-1, +1} and isotropic noise eta of
per-coordinate standard deviation rho (gaussian or bounded uniform).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, DiversityError
from .subspace import Representation, random_orthonormal

DIVERSITY_RETRIES = 100


@dataclass(frozen=True)
class SnrProfile:
    """Norm profile of the source task vectors.

    uniform: every source task has norm base_norm. two_group: a frac_strong
    fraction of tasks gets norm base_norm * alpha (the easy, high-SNR group),
    the rest base_norm.
    """

    kind: str
    base_norm: float
    alpha: float = 1.0
    frac_strong: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "two_group"):
            raise ConfigError(f"unknown snr kind {self.kind!r}")
        if self.base_norm <= 0:
            raise ConfigError("base_norm must be positive")
        if self.kind == "two_group":
            if self.alpha <= 1:
                raise ConfigError("two_group requires alpha > 1")
            if not 0 < self.frac_strong < 1:
                raise ConfigError("frac_strong must lie in (0, 1)")


@dataclass(frozen=True)
class SparsitySpec:
    """Row-support structure of B: dense, or confined to support_size rows."""

    kind: str
    support_size: int | None = None

    def __post_init__(self):
        if self.kind not in ("dense", "row_sparse"):
            raise ConfigError(f"unknown sparsity kind {self.kind!r}")
        if self.kind == "row_sparse" and (
            self.support_size is None or self.support_size < 1
        ):
            raise ConfigError("row_sparse requires a positive support_size")


@dataclass(frozen=True)
class EnsembleSpec:
    p: int
    r: int
    T: int
    snr: SnrProfile
    sparsity: SparsitySpec
    noise_rho: float
    noise_kind: str = "gaussian"
    target_norm: float = 1.0

    def __post_init__(self):
        if self.p < 1 or self.r < 1 or self.T < 1:
            raise ConfigError("p, r, T must be positive")
        if 2 * self.r > min(self.p, self.T):
            raise ConfigError(
                f"need 2r <= min(p, T); got r={self.r}, p={self.p}, T={self.T}"
            )
        if self.noise_rho <= 0:
            raise ConfigError("noise_rho must be positive")
        if self.noise_kind not in ("gaussian", "bounded_uniform"):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        if self.target_norm <= 0:
            raise ConfigError("target_norm must be positive")
        if self.sparsity.kind == "row_sparse":
            if not self.r <= self.sparsity.support_size <= self.p:
                raise ConfigError("row_sparse needs r <= support_size <= p")
        if self.snr.kind == "two_group":
            n_strong = math.floor(self.snr.frac_strong * self.T)
            if not 1 <= n_strong <= self.T - 1:
                raise ConfigError("two_group needs 1 <= floor(frac*T) <= T-1")


@dataclass(frozen=True)
class TaskEnsemble:
    """Ground truth: shared basis B plus T source and one target task vector."""

    B: Representation
    a: tuple  # T+1 vectors in R^r; a[-1] is the target task
    noise_rho: float
    noise_kind: str

    def __post_init__(self):
        for v in self.a:
            if np.linalg.norm(v) <= 0:
                raise ConfigError("all task vectors must be nonzero")

    @property
    def T(self) -> int:
        return len(self.a) - 1

    @property
    def p(self) -> int:
        return self.B.p

    @property
    def r(self) -> int:
        return self.B.r

    def mu(self, t: int) -> np.ndarray:
        """Mean direction of task t (1-based, t = T+1 is the target)."""
        if not 1 <= t <= self.T + 1:
            raise IndexError(f"task index {t} out of range [1, {self.T + 1}]")
        return self.B.basis @ self.a[t - 1]


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray  # n x p
    labels: np.ndarray  # n, values in {-1, +1}

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DimensionMismatch("inputs must be n x p with n labels")
        if x.shape[0] < 1:
            raise ConfigError("dataset must contain at least one point")
        if not np.all(np.abs(y) == 1):
            raise ConfigError("labels must be exactly +/-1")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]


def source_norms(spec: EnsembleSpec) -> np.ndarray:
    """Deterministic norm assignment for the T source task vectors."""
    norms = np.full(spec.T, spec.snr.base_norm)
    if spec.snr.kind == "two_group":
        n_strong = math.floor(spec.snr.frac_strong * spec.T)
        norms[:n_strong] = spec.snr.base_norm * spec.snr.alpha
    return norms


def _sphere_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    n = np.linalg.norm(g, axis=1, keepdims=True)
    while np.any(n == 0):  # measure-zero guard
        g = rng.standard_normal((count, dim))
        n = np.linalg.norm(g, axis=1, keepdims=True)
    return g / n


def make_ensemble(spec: EnsembleSpec, rng: np.random.Generator) -> TaskEnsemble:
    """Sample a ground-truth ensemble honoring the norm/sparsity profile.

    Source directions are resampled (up to DIVERSITY_RETRIES times) until the
    diversity floor 0.5/r is met.
    """
    if spec.sparsity.kind == "row_sparse":
        s = spec.sparsity.support_size
        support = np.sort(rng.choice(spec.p, size=s, replace=False))
        inner = random_orthonormal(s, spec.r, rng)
        basis = np.zeros((spec.p, spec.r))
        basis[support] = inner.basis
        B = Representation(basis)
    else:
        B = random_orthonormal(spec.p, spec.r, rng)

    target = _sphere_directions(rng, 1, spec.r)[0] * spec.target_norm
    norms = source_norms(spec)
    floor = 0.5 / spec.r
    best_sigma = -1.0
    for _ in range(DIVERSITY_RETRIES):
        dirs = _sphere_directions(rng, spec.T, spec.r)
        sources = dirs * norms[:, None]
        ensemble = TaskEnsemble(
            B=B,
            a=tuple(sources) + (target,),
            noise_rho=spec.noise_rho,
            noise_kind=spec.noise_kind,
        )
        sigma = task_diversity(ensemble)
        if sigma >= floor:
            return ensemble
        best_sigma = max(best_sigma, sigma)
    raise DiversityError(
        f"diversity floor {floor:.4g} unreachable after {DIVERSITY_RETRIES} "
        f"retries (best sigma_r = {best_sigma:.4g})",
        best_sigma=best_sigma,
    )


def task_diversity(ensemble: TaskEnsemble) -> float:
    """sigma_r(M^T M / T) for the matrix M of normalized source directions."""
    T, r = ensemble.T, ensemble.r
    if T < r:
        raise DimensionMismatch(f"need T >= r, got T={T}, r={r}")
    M = np.stack([v / np.linalg.norm(v) for v in ensemble.a[:T]], axis=1)
    svals = np.linalg.svd(M, compute_uv=False)
    return float(svals[r - 1] ** 2 / T)


def _draw(ensemble: TaskEnsemble, t: int, n: int, rng: np.random.Generator):
    mu = ensemble.mu(t)
    labels = rng.integers(0, 2, size=n) * 2.0 - 1.0
    rho = ensemble.noise_rho
    if ensemble.noise_kind == "gaussian":
        noise = rng.standard_normal((n, ensemble.p)) * rho
    else:
        half = rho * math.sqrt(3.0)
        noise = rng.uniform(-half, half, size=(n, ensemble.p))
    return noise + labels[:, None] * mu, labels


def sample_dataset(
    ensemble: TaskEnsemble, t: int, n: int, rng: np.random.Generator
) -> LabeledDataset:
    """Draw n labeled points from task t (1-based; t = T+1 is the target)."""
    if n < 1:
        raise ConfigError("n must be positive")
    inputs, labels = _draw(ensemble, t, n, rng)
    return LabeledDataset(inputs=inputs, labels=labels)


def sample_unlabeled(
    ensemble: TaskEnsemble, t: int, n_u: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n_u inputs from task t; the latent labels are discarded."""
    if n_u < 0:
        raise ConfigError("n_u must be nonnegative")
    if n_u == 0:
        ensemble.mu(t)  # still validate the task index
        return np.zeros((0, ensemble.p))
    inputs, _ = _draw(ensemble, t, n_u, rng)
    return inputs
