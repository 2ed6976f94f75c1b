"""Evaluation metrics and rate-curve utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import TaskEnsemble, sample_dataset
from .errors import ConfigError, NotApplicableError
from .pipeline import TransferOutput
from .subspace import Representation, sin_theta_dist

REFERENCE_KINDS = (
    "lemma1_n",
    "lemma1_T",
    "thm1_l2",
    "thm2_linf",
    "thm3_pseudo",
    "prop1_lower",
)


@dataclass(frozen=True)
class EvalReport:
    sin_theta: float
    excess_risk: float
    target_accuracy: float
    suppressed_count: int


def representation_error(W1: Representation, ensemble: TaskEnsemble) -> float:
    """Sin-theta distance between the learned and the true subspace."""
    return sin_theta_dist(W1, ensemble.B)


def excess_risk(out: TransferOutput, ensemble: TaskEnsemble) -> float:
    """Population loss of the learned predictor above the optimum -||mu||.

    The best population loss over orthonormal representations and unit-ball
    heads is -||mu_target|| (a linear functional maximized through an
    isometry), so the excess risk is ||mu|| - <W1 w2, mu>.
    """
    mu = ensemble.mu(ensemble.T + 1)
    predictor = out.W1.basis @ out.w2
    return float(np.linalg.norm(mu) - predictor @ mu)


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def target_accuracy(
    out: TransferOutput,
    ensemble: TaskEnsemble,
    mode: str = "closed_form",
    m: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Accuracy of sign(<W1 w2, x>) on the target task.

    closed_form evaluates Phi(<v, mu>/rho) for the normalized predictor
    direction v (gaussian noise only); monte_carlo draws m fresh samples.
    A zero head scores chance level 0.5.
    """
    mu = ensemble.mu(ensemble.T + 1)
    predictor = out.W1.basis @ out.w2
    nrm = float(np.linalg.norm(predictor))
    if mode == "closed_form":
        if ensemble.noise_kind != "gaussian":
            raise NotApplicableError("closed-form accuracy needs gaussian noise")
        if nrm == 0.0:
            return 0.5
        return _phi(float(predictor @ mu) / (nrm * ensemble.noise_rho))
    if mode == "monte_carlo":
        if m is None or m < 1 or rng is None:
            raise ConfigError("monte_carlo mode needs m >= 1 and an rng")
        ds = sample_dataset(ensemble, ensemble.T + 1, m, rng)
        scores = ds.inputs @ predictor
        preds = np.where(scores >= 0, 1.0, -1.0)
        return float(np.mean(preds == ds.labels))
    raise ConfigError(f"unknown accuracy mode {mode!r}")


def fit_loglog_slope(points) -> tuple[float, float, float]:
    """OLS fit of ln y on ln x; returns (slope, intercept, r_squared)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ConfigError("need at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ConfigError("all coordinates must be strictly positive")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(intercept), max(0.0, min(1.0, r_squared))


def _lemma1_curve(n: float, T: float, p: float, r: float) -> float:
    return r * (
        math.sqrt(1.0 / n) + math.sqrt(p / (n * T)) + math.sqrt(math.log(n) / (n * T))
    )


def reference_rate(kind: str, params: dict) -> float:
    """Theoretical rate curves with all hidden constants set to 1.

    Intended for plot overlays and shape checks only.
    """

    def need(*keys):
        missing = [k for k in keys if k not in params]
        if missing:
            raise ConfigError(f"reference_rate({kind!r}) missing params {missing}")
        return [float(params[k]) for k in keys]

    if kind in ("lemma1_n", "lemma1_T"):
        n, T, p, r = need("n", "T", "p", "r")
        return _lemma1_curve(n, T, p, r)
    if kind == "thm1_l2":
        n, T, p, r, alpha_T = need("n", "T", "p", "r", "alpha_T")
        return _lemma1_curve(n, T, p, r) / alpha_T
    if kind == "thm2_linf":
        n, T, p, r, s = need("n", "T", "p", "r", "s")
        return (
            r
            * (math.sqrt(1.0 / n) + math.sqrt(s * s / (n * T)))
            * math.log(T + p)
        )
    if kind == "thm3_pseudo":
        n_tilde, T, p, r = need("n_tilde", "T", "p", "r")
        return _lemma1_curve(n_tilde, T, p, r)
    if kind == "prop1_lower":
        n, T, p, r = need("n", "T", "p", "r")
        return math.sqrt(r * p / (n * T))
    raise ConfigError(f"unknown reference rate kind {kind!r}")
