"""Dense linear algebra for orthonormal bases and subspace comparison.

Everything here is a pure function of its inputs: orthonormal basis
construction, extraction of the top-r left singular subspace of a stack of
direction vectors, the Frobenius sin-theta distance between subspaces of equal
rank, and threshold-based rank estimation from a singular value profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateRankError, DimensionMismatch

GRAM_TOL = 1e-8
RANK_TOL = 1e-12


@dataclass(frozen=True)
class Representation:
    """A p x r matrix with orthonormal columns spanning a rank-r subspace."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float, copy=True)
        if b.ndim != 2:
            raise DimensionMismatch("basis must be a 2-d matrix")
        p, r = b.shape
        if not 1 <= r <= p:
            raise DimensionMismatch(f"need 1 <= r <= p, got p={p}, r={r}")
        gram = b.T @ b
        if np.max(np.abs(gram - np.eye(r))) > GRAM_TOL:
            raise ContractError("basis columns are not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def p(self) -> int:
        return self.basis.shape[0]

    @property
    def r(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class StackedDirections:
    """A p x T stack of per-task direction vectors (zero columns allowed)."""

    columns: np.ndarray

    def __post_init__(self):
        c = np.array(self.columns, dtype=float, copy=True)
        if c.ndim != 2:
            raise DimensionMismatch("columns must be a 2-d matrix")
        if c.shape[1] < 1:
            raise DimensionMismatch("need at least one column")
        norms = np.linalg.norm(c, axis=0)
        if np.any(norms > 1 + 1e-8):
            raise ContractError("columns must have Euclidean norm <= 1")
        c.setflags(write=False)
        object.__setattr__(self, "columns", c)

    @property
    def p(self) -> int:
        return self.columns.shape[0]

    @property
    def T(self) -> int:
        return self.columns.shape[1]


def random_orthonormal(p: int, r: int, rng: np.random.Generator) -> Representation:
    """Draw a basis whose column span is Haar-distributed on the Grassmannian."""
    if r > p:
        raise DimensionMismatch(f"r={r} exceeds p={p}")
    if p < 1 or r < 1:
        raise DimensionMismatch("p and r must be positive")
    g = rng.standard_normal((p, r))
    q, rmat = np.linalg.qr(g)
    # Fixing the sign of diag(R) makes the QR factor exactly Haar.
    d = np.sign(np.diag(rmat))
    d[d == 0] = 1.0
    return Representation(q * d)


def _fix_column_signs(u: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    out = u.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def top_r_left_singular(
    M: StackedDirections | np.ndarray,
    r: int,
    return_singular_values: bool = False,
):
    """Top-r left singular subspace of the stacked direction matrix.

    Column signs are normalized so repeated runs on identical input produce
    identical bases. Raises DegenerateRankError when the matrix has fewer than
    r singular values above the numerical-rank threshold.
    """
    cols = M.columns if isinstance(M, StackedDirections) else np.asarray(M, dtype=float)
    p, T = cols.shape
    if r < 1 or r > min(p, T):
        raise DimensionMismatch(f"r={r} must lie in [1, min(p={p}, T={T})]")
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s[r - 1] < RANK_TOL:
        nrank = int(np.count_nonzero(s >= RANK_TOL))
        raise DegenerateRankError(
            f"requested rank {r} but numerical rank is {nrank}", numerical_rank=nrank
        )
    rep = Representation(_fix_column_signs(u[:, :r]))
    if return_singular_values:
        return rep, s
    return rep


def sin_theta_dist(E: Representation, F: Representation) -> float:
    """Frobenius norm of the sines of the principal angles between two subspaces.

    Equals sqrt(max(0, r - ||E^T F||_F^2)), evaluated as the residual norm
    ||(I - F F^T) E||_F, which is algebraically identical but avoids the
    catastrophic cancellation of subtracting two near-equal O(r) quantities
    when the subspaces nearly coincide. 0 for equal spans, sqrt(r) for
    orthogonal ones.
    """
    if E.p != F.p or E.r != F.r:
        raise DimensionMismatch(
            f"shape mismatch: ({E.p},{E.r}) vs ({F.p},{F.r})"
        )
    resid = E.basis - F.basis @ (F.basis.T @ E.basis)
    return min(float(np.linalg.norm(resid)), float(np.sqrt(E.r)))


def rank_estimate(singular_values, tau: float) -> int:
    """Count singular values strictly greater than the threshold tau."""
    vals = np.asarray(singular_values, dtype=float)
    if tau <= 0:
        raise ContractError("tau must be positive")
    if vals.ndim != 1 or vals.size == 0:
        raise ContractError("singular_values must be a nonempty 1-d sequence")
    if np.any(vals < 0):
        raise ContractError("singular values must be nonnegative")
    if np.any(np.diff(vals) > 0):
        raise ContractError("singular values must be sorted nonincreasing")
    return int(np.count_nonzero(vals > tau))
