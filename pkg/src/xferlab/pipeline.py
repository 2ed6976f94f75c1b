"""End-to-end transfer learning pipelines.

Each pipeline fits one direction per source task, extracts the top-r left
singular subspace of the stacked directions as the shared representation, and
fits the target head on that fixed representation. Variants swap the per-task
fit (standard vs adversarial) and optionally augment each source task with
pseudo-labeled unlabeled data first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import LabeledDataset, TaskEnsemble
from .errors import AllSuppressedError, ConfigError, DimensionMismatch, NotApplicableError
from .subspace import Representation, StackedDirections, top_r_left_singular
from .train import (
    EstimatorConfig,
    FitResult,
    fit_adv_l2,
    fit_adv_linf,
    fit_standard,
    fit_target,
    pseudo_label,
)


@dataclass(frozen=True)
class TransferOutput:
    W1: Representation
    w2: np.ndarray
    per_task_fits: tuple
    singular_values: np.ndarray

    def __post_init__(self):
        if np.linalg.norm(self.w2) > 1 + 1e-10:
            raise ConfigError("w2 must lie in the unit ball")

    @property
    def suppressed_count(self) -> int:
        return sum(1 for f in self.per_task_fits if f.suppressed)


def _extract(fits: list[FitResult], target: LabeledDataset, r: int) -> TransferOutput:
    stacked = StackedDirections(np.stack([f.beta for f in fits], axis=1))
    W1, svals = top_r_left_singular(stacked, r, return_singular_values=True)
    w2 = fit_target(target, W1)
    return TransferOutput(
        W1=W1, w2=w2, per_task_fits=tuple(fits), singular_values=svals
    )


def learn_representation(
    sources: list[LabeledDataset], target: LabeledDataset, r: int
) -> TransferOutput:
    """Standard pipeline: per-task normalized-mean fits, SVD, target head."""
    if len(sources) < r:
        raise DimensionMismatch(f"need at least r={r} source tasks")
    fits = [fit_standard(ds) for ds in sources]
    return _extract(fits, target, r)


def learn_representation_adversarial(
    sources: list[LabeledDataset],
    target: LabeledDataset,
    r: int,
    cfg: EstimatorConfig,
) -> TransferOutput:
    """Adversarial pipeline: suppressed tasks contribute zero columns."""
    if cfg.kind not in ("adv_l2", "adv_linf"):
        raise ConfigError("adversarial pipeline needs adv_l2 or adv_linf")
    if cfg.epsilon is None or cfg.epsilon <= 0:
        raise ConfigError("adversarial pipeline needs a positive epsilon")
    if len(sources) < r:
        raise DimensionMismatch(f"need at least r={r} source tasks")
    fit = fit_adv_l2 if cfg.kind == "adv_l2" else fit_adv_linf
    fits = [fit(ds, cfg.epsilon) for ds in sources]
    surviving = sum(1 for f in fits if not f.suppressed)
    if surviving < r:
        raise AllSuppressedError(
            f"only {surviving} of {len(fits)} tasks survive epsilon={cfg.epsilon}"
            f" (need {r})",
            epsilon=cfg.epsilon,
            surviving=surviving,
        )
    return _extract(fits, target, r)


def learn_with_pseudo_labels(
    labeled_sources: list[LabeledDataset],
    unlabeled_sources: list[np.ndarray],
    target: LabeledDataset,
    r: int,
    cfg: EstimatorConfig,
) -> tuple[TransferOutput, TransferOutput | None]:
    """Pseudo-label augmentation, then the standard (and optionally
    adversarial) pipeline on the augmented sources.

    Returns (standard-path output, adversarial-path output or None).
    """
    if len(labeled_sources) != len(unlabeled_sources):
        raise DimensionMismatch("labeled and unlabeled task lists must align")
    augmented: list[LabeledDataset] = []
    for ds, pool in zip(labeled_sources, unlabeled_sources):
        pool = np.asarray(pool, dtype=float)
        if pool.shape[0] == 0:
            augmented.append(ds)
            continue
        w_init = fit_standard(ds).beta
        labels_u = pseudo_label(w_init, pool)
        augmented.append(
            LabeledDataset(
                inputs=np.concatenate([ds.inputs, pool], axis=0),
                labels=np.concatenate([ds.labels, labels_u]),
            )
        )
    std_out = learn_representation(augmented, target, r)
    adv_out = None
    if cfg.kind in ("adv_l2", "adv_linf"):
        adv_out = learn_representation_adversarial(augmented, target, r, cfg)
    return std_out, adv_out


def epsilon_band(ensemble: TaskEnsemble) -> tuple[float, float, float]:
    """Attack-budget band separating the weak and strong task groups.

    Returns (lo, hi, mid) with lo the largest weak-group norm, hi the smallest
    strong-group norm, and mid their average (the recommended epsilon).
    """
    norms = np.array([np.linalg.norm(v) for v in ensemble.a[: ensemble.T]])
    lo_all, hi_all = float(norms.min()), float(norms.max())
    if hi_all - lo_all < 1e-9:
        raise NotApplicableError("epsilon band needs a two-group norm profile")
    split = (lo_all + hi_all) / 2.0
    lo = float(norms[norms < split].max())
    hi = float(norms[norms >= split].min())
    return lo, hi, (lo + hi) / 2.0
