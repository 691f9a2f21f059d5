"""Initial archetypes: spectral and successive projections."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateGeometryError, InvalidInputError
from .geometry import distance_to_affine
from .risk import check_data_matrix

__all__ = ["InitResult", "spectral_init", "successive_projections_init", "initialize"]

# Relative (to the largest row norm) distance below which a point is
# considered to lie in the affine hull of the points already selected.
_SPA_DEGENERACY = 1e-12


@dataclass(frozen=True)
class InitResult:
    archetypes: np.ndarray
    method: str
    selected_indices: Optional[tuple] = None
    diagnostics: dict = field(default_factory=dict)


def _check_rank_arg(r, upper, what):
    if not isinstance(r, (int, np.integer)) or r < 1 or r > upper:
        raise InvalidInputError(f"r must be an integer in [1, {upper}] ({what}), got {r!r}")


def spectral_init(X, r):
    """Top-``r`` right singular vectors of ``X`` as initial archetypes.

    Each vector is signed so that its largest-magnitude entry is positive.
    If ``r`` exceeds the numerical rank of ``X`` the trailing vectors are an
    arbitrary orthonormal completion and ``diagnostics["rank_deficient"]``
    is set.
    """
    X = check_data_matrix(X, "X")
    n, d = X.shape
    _check_rank_arg(r, min(n, d), "at most min(n, d)")
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    H = Vt[:r].copy()
    for row in H:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    rank = int(np.sum(s > 1e-12 * s[0])) if s[0] > 0 else 0
    return InitResult(H, "spectral", None, {"rank_deficient": rank < r, "numerical_rank": rank})


def successive_projections_init(X, r):
    """Greedy farthest-point selection against affine hulls.

    The first archetype is the row of ``X`` with the largest norm; each
    later one is the row farthest from the affine hull of those already
    chosen.  Ties go to the lowest row index.  When the data are separable
    and the archetypes affinely independent this returns them exactly.

    Raises
    ------
    DegenerateGeometryError
        If fewer than ``r`` affinely independent rows exist; ``found``
        holds the number that were selected.
    """
    X = check_data_matrix(X, "X")
    n = X.shape[0]
    _check_rank_arg(r, n, "at most the number of rows")
    sq = np.einsum("ij,ij->i", X, X)
    first = int(np.argmax(sq))
    selected = [first]
    scale = max(float(np.sqrt(sq.max())), np.finfo(float).tiny)
    for _ in range(1, r):
        dist = distance_to_affine(X, X[selected])
        nxt = int(np.argmax(dist))
        if dist[nxt] <= _SPA_DEGENERACY * scale:
            raise DegenerateGeometryError(
                f"only {len(selected)} affinely independent points found, {r} requested",
                found=len(selected),
            )
        selected.append(nxt)
    return InitResult(X[selected].copy(), "successive_projections", tuple(selected), {})


def initialize(X, r, method):
    """Dispatch on ``method`` in {"spectral", "spa", "successive_projections"}."""
    if method == "spectral":
        return spectral_init(X, r)
    if method in ("spa", "successive_projections"):
        return successive_projections_init(X, r)
    raise InvalidInputError(f"unknown initialization {method!r}")
