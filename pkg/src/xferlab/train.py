"""Per-task estimators.

All fits reduce to closed forms in the empirical mean direction
mu_hat = (1/n) sum_i y_i x_i: the linear loss -<beta, mu_hat> over the unit
ball is minimized by normalizing mu_hat, and a worst-case input perturbation
of radius eps adds the dual-norm penalty eps * ||beta||_q* (||.||_2 for an l2
attack, ||.||_1 for an l-infinity attack). A projected-subgradient numerical
solver is provided as an independent cross-check of the closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, ContractError
from .datagen import LabeledDataset
from .subspace import Representation

ORACLE_MAX_P = 16
ORACLE_MAX_N = 64
ORACLE_ITERS = 50_000

_PEN_NONE, _PEN_L2, _PEN_L1 = 0, 1, 2


@dataclass(frozen=True)
class EstimatorConfig:
    """Which trainer to run; epsilon is the attack budget.

    epsilon=None on an adversarial kind means "resolve from the experiment
    context" (two-group norm band midpoint for adv_l2, log(p)/n scaling for
    adv_linf); the harness performs that resolution.
    """

    kind: str
    epsilon: float | None = 0.0

    def __post_init__(self):
        if self.kind not in ("standard", "adv_l2", "adv_linf"):
            raise ConfigError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "standard":
            if self.epsilon not in (0, 0.0, None):
                raise ConfigError("standard training requires epsilon = 0")
            object.__setattr__(self, "epsilon", 0.0)
        elif self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    objective: float
    suppressed: bool

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if np.linalg.norm(b) > 1 + 1e-10:
            raise ContractError("beta must lie in the unit ball")
        object.__setattr__(self, "beta", b)


def empirical_mean_direction(ds: LabeledDataset) -> np.ndarray:
    """mu_hat = (1/n) sum_i y_i x_i."""
    return (ds.labels @ ds.inputs) / ds.n


def _fit_from_mean(mu_hat: np.ndarray) -> FitResult:
    nrm = float(np.linalg.norm(mu_hat))
    if nrm == 0.0:
        return FitResult(np.zeros_like(mu_hat), 0.0, True)
    return FitResult(mu_hat / nrm, -nrm, False)


def fit_standard(ds: LabeledDataset) -> FitResult:
    """Minimize -<beta, mu_hat> over the unit ball: normalize the mean."""
    return _fit_from_mean(empirical_mean_direction(ds))


def fit_adv_l2(ds: LabeledDataset, eps: float) -> FitResult:
    """Minimize -<beta, mu_hat> + eps*||beta|| over the unit ball.

    The signal survives iff ||mu_hat|| >= eps (the boundary resolves to the
    non-suppressed branch; the objectives tie there).
    """
    if eps <= 0:
        raise ConfigError("eps must be positive (use fit_standard for eps=0)")
    mu_hat = empirical_mean_direction(ds)
    nrm = float(np.linalg.norm(mu_hat))
    if nrm >= eps:
        return FitResult(mu_hat / nrm, -nrm + eps, False)
    return FitResult(np.zeros_like(mu_hat), 0.0, True)


def fit_adv_linf(ds: LabeledDataset, eps: float) -> FitResult:
    """Minimize -<beta, mu_hat> + eps*||beta||_1 over the unit ball.

    The minimizer is the normalized coordinatewise shrinkage
    sgn(mu_j) * max(|mu_j| - eps, 0); full shrinkage suppresses the task.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive (use fit_standard for eps=0)")
    mu_hat = empirical_mean_direction(ds)
    shrunk = np.sign(mu_hat) * np.maximum(np.abs(mu_hat) - eps, 0.0)
    nrm = float(np.linalg.norm(shrunk))
    if nrm == 0.0:
        return FitResult(np.zeros_like(mu_hat), 0.0, True)
    beta = shrunk / nrm
    obj = -float(beta @ mu_hat) + eps * float(np.sum(np.abs(beta)))
    return FitResult(beta, obj, False)


@njit(cache=True)
def _projected_subgradient(mu, eps, pen_code, iters):  # pragma: no cover - jitted
    p = mu.shape[0]
    mu_norm = np.sqrt(np.sum(mu * mu))
    c = mu_norm + eps + 1.0
    beta = np.zeros(p)
    best = np.zeros(p)
    best_obj = 0.0  # objective at beta = 0
    for k in range(1, iters + 1):
        g = -mu.copy()
        if pen_code == _PEN_L2:
            bn = np.sqrt(np.sum(beta * beta))
            if bn > 1e-15:
                g += eps * beta / bn
            else:
                # minimal-norm subgradient at the kink
                if mu_norm > 0.0:
                    g += mu * min(1.0, eps / mu_norm)
        elif pen_code == _PEN_L1:
            for j in range(p):
                if beta[j] > 1e-15:
                    g[j] += eps
                elif beta[j] < -1e-15:
                    g[j] -= eps
                else:
                    g[j] += min(eps, max(-eps, mu[j]))
        beta = beta - (c / np.sqrt(k)) * g
        bn = np.sqrt(np.sum(beta * beta))
        if bn > 1.0:
            beta = beta / bn
        obj = -np.dot(beta, mu)
        if pen_code == _PEN_L2:
            obj += eps * np.sqrt(np.sum(beta * beta))
        elif pen_code == _PEN_L1:
            obj += eps * np.sum(np.abs(beta))
        if obj < best_obj:
            best_obj = obj
            best = beta.copy()
    return best, best_obj


def oracle_fit(ds: LabeledDataset, cfg: EstimatorConfig) -> FitResult:
    """Numerical minimizer of the (adversarial) linear loss over the unit ball.

    Projected subgradient descent with O(1/sqrt(k)) steps and best-iterate
    tracking; intended as a testing-scale cross-check of the closed forms.
    """
    if ds.p > ORACLE_MAX_P or ds.n > ORACLE_MAX_N:
        raise ContractError(
            f"oracle limited to p <= {ORACLE_MAX_P}, n <= {ORACLE_MAX_N}"
        )
    if cfg.epsilon is None:
        raise ConfigError("oracle_fit needs a concrete epsilon")
    mu_hat = empirical_mean_direction(ds)
    pen = {"standard": _PEN_NONE, "adv_l2": _PEN_L2, "adv_linf": _PEN_L1}[cfg.kind]
    beta, obj = _projected_subgradient(
        mu_hat, float(cfg.epsilon), pen, ORACLE_ITERS
    )
    suppressed = bool(np.linalg.norm(beta) == 0.0)
    return FitResult(beta, float(obj), suppressed)


def pseudo_label(w_init: np.ndarray, X_u: np.ndarray) -> np.ndarray:
    """Sign predictions of the initial classifier on a pool of inputs."""
    w = np.asarray(w_init, dtype=float)
    if np.linalg.norm(w) == 0.0:
        raise ContractError("cannot pseudo-label with a zero classifier")
    scores = np.asarray(X_u, dtype=float) @ w
    return np.where(scores >= 0, 1.0, -1.0)


def fit_target(ds_target: LabeledDataset, W1: Representation) -> np.ndarray:
    """Head fit on the fixed representation: normalized projected mean."""
    proj = W1.basis.T @ empirical_mean_direction(ds_target)
    nrm = float(np.linalg.norm(proj))
    if nrm == 0.0:
        return np.zeros(W1.r)
    return proj / nrm
