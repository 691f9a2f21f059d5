"""Projections onto simplices, convex hulls and affine hulls.

Everything here works with the squared Euclidean loss.  Two exact solvers
are provided for the hull projection

    min_{pi in simplex}  || V^T pi - u ||^2 ,

a vectorised face enumeration that is used whenever the number of candidate
faces is small, and Wolfe's minimum-norm-point active-set method for large
point sets.  An accelerated projected-gradient solver is kept as an
independent cross-check.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Optional
import warnings

import numpy as np

from .exceptions import ConvergenceWarning, InvalidInputError

__all__ = [
    "project_simplex",
    "project_simplex_rows",
    "ProjectionResult",
    "HullProjection",
    "HullProjector",
    "project_convex_hull",
    "project_onto_hull",
    "distance_to_affine",
    "affine_rank",
]

# Negative barycentric weights down to this value are treated as rounding.
_FEASIBILITY_SLACK = 1e-12
# Absolute part of the active-set stopping rule, relative to the squared
# diameter of the shifted point cloud.
_ABS_GAP = 1e-14

MAX_ENUMERATED_FACES = 512


def _as_float_array(a, ndim, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def project_simplex(v):
    """Euclidean projection of a vector onto the probability simplex.

    Sort-and-threshold algorithm, O(m log m).

    Parameters
    ----------
    v : array_like, shape (m,)

    Returns
    -------
    numpy.ndarray, shape (m,)
        Non-negative vector summing to one.
    """
    v = _as_float_array(v, 1, "v")
    if v.size == 0:
        raise InvalidInputError("cannot project an empty vector")
    return project_simplex_rows(v[None, :])[0]


def project_simplex_rows(M):
    """Project every row of ``M`` onto the simplex (vectorised)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError("expected a 2-D array")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("matrix contains non-finite entries")
    m = M.shape[1]
    u = -np.sort(-M, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, m + 1)
    cond = u - css / ind > 0
    # cond is true on a prefix; rho is the last true position
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(M.shape[0]), rho] / (rho + 1.0)
    out = np.maximum(M - theta[:, None], 0.0)
    # clean up the last ulp so that rows sum to one as tightly as possible
    out /= out.sum(axis=1, keepdims=True)
    return out


@dataclass(frozen=True)
class ProjectionResult:
    """Closest point of a convex hull to a query point."""

    point: np.ndarray
    weights: np.ndarray
    sq_distance: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class HullProjection:
    """Row-wise projections of a batch of points onto one hull."""

    points: np.ndarray
    weights: np.ndarray
    sq_distances: np.ndarray
    converged: np.ndarray
    support_lists: Optional[list] = None

    @property
    def supports(self):
        """Per row, indices of the hull vertices with positive weight."""
        if self.support_lists is not None:
            return self.support_lists
        return [np.flatnonzero(w > 0).tolist() for w in self.weights]

    @property
    def all_converged(self):
        return bool(np.all(self.converged))


# ---------------------------------------------------------------------------
# face enumeration


def _face_count(m, d):
    return sum(comb(m, k) for k in range(1, min(m, d + 1) + 1))


class _FaceTable:
    """Affine-projection operators for every small subset of the rows of V.

    The projection onto conv(V) lies in the relative interior of the convex
    hull of an affinely independent subset of at most d+1 rows, where it
    coincides with the affine projection onto that subset.  Enumerating all
    such subsets and keeping the closest feasible candidate is exact.
    """

    def __init__(self, V):
        m, d = V.shape
        # Work in coordinates of the linear span of V - V[0]; the component
        # of a query orthogonal to it does not affect the minimizer.
        self.origin = V[0]
        self.basis = None
        if m - 1 < d:
            self.basis, _ = np.linalg.qr((V[1:] - V[0]).T)
            V = (V - self.origin) @ self.basis
        self.V = V
        self.groups = []
        for k in range(1, min(m, d + 1) + 1):
            subsets = np.array(list(combinations(range(m), k)), dtype=np.intp)
            base = V[subsets[:, 0]]
            if k == 1:
                self.groups.append((subsets, base, None, None))
                continue
            D = V[subsets[:, 1:]] - base[:, None, :]
            pinv = np.linalg.pinv(D)  # (S, d, k-1)
            self.groups.append((subsets, base, D, pinv))

    def project(self, U):
        if self.basis is not None:
            U = (U - self.origin) @ self.basis
        n = U.shape[0]
        m = self.V.shape[0]
        best_sq = np.full(n, np.inf)
        best_w = np.zeros((n, m))
        for subsets, base, D, pinv in self.groups:
            k = subsets.shape[1]
            if k == 1:
                diff = U[None, :, :] - base[:, None, :]
                sq = np.einsum("snd,snd->sn", diff, diff)
                s_idx = np.argmin(sq, axis=0)
                sq_min = sq[s_idx, np.arange(n)]
                better = sq_min < best_sq
                if np.any(better):
                    rows = np.flatnonzero(better)
                    best_sq[rows] = sq_min[rows]
                    best_w[rows] = 0.0
                    best_w[rows, subsets[s_idx[rows], 0]] = 1.0
                continue
            Y = U[None, :, :] - base[:, None, :]
            C = np.einsum("snd,sdk->snk", Y, pinv)
            W = np.concatenate([1.0 - C.sum(axis=2, keepdims=True), C], axis=2)
            feasible = np.all(W >= -_FEASIBILITY_SLACK, axis=2)
            if not np.any(feasible):
                continue
            W = np.clip(W, 0.0, None)
            W /= W.sum(axis=2, keepdims=True)
            P = np.einsum("snk,skd->snd", W, self.V[subsets])
            R = U[None, :, :] - P
            sq = np.einsum("snd,snd->sn", R, R)
            sq[~feasible] = np.inf
            s_idx = np.argmin(sq, axis=0)
            sq_min = sq[s_idx, np.arange(n)]
            better = sq_min < best_sq
            if np.any(better):
                rows = np.flatnonzero(better)
                best_sq[rows] = sq_min[rows]
                best_w[rows] = 0.0
                chosen = subsets[s_idx[rows]]
                best_w[rows[:, None], chosen] = W[s_idx[rows], rows]
        return best_w


# ---------------------------------------------------------------------------
# Wolfe's minimum-norm-point method


def _affine_min_norm(B):
    """Barycentric weights of the min-norm point of aff(rows of B)."""
    k = B.shape[0]
    if k == 1:
        return np.ones(1)
    b0 = B[0]
    D = B[1:] - b0
    c = np.linalg.lstsq(D.T, -b0, rcond=None)[0]
    return np.concatenate([[1.0 - c.sum()], c])


def _wolfe(P, tol, max_iter, support=None):
    """Minimum-norm point of conv(rows of P).

    Returns (weights, iterations, converged, support).
    """
    m = P.shape[0]
    sqn = np.einsum("ij,ij->i", P, P)
    scale = float(sqn.max())
    if support:
        S = list(dict.fromkeys(int(i) for i in support))
        lam = np.full(len(S), 1.0 / len(S))
    else:
        S = [int(np.argmin(sqn))]
        lam = np.ones(1)
    x = lam @ P[S]
    if len(S) > 1:
        S, lam = _wolfe_minor(P, S, lam)
        x = lam @ P[S]

    converged = False
    it = 0
    while it < max_iter:
        it += 1
        g = P @ x
        j = int(np.argmin(g))
        xx = float(x @ x)
        gap = xx - g[j]
        if gap <= tol * xx + _ABS_GAP * scale or j in S:
            converged = True
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        S, lam = _wolfe_minor(P, S, lam)
        x = lam @ P[S]
    weights = np.zeros(m)
    weights[S] = lam
    return weights, it, converged, S


def _wolfe_minor(P, S, lam):
    while True:
        alpha = _affine_min_norm(P[S])
        if np.all(alpha > 0):
            return S, alpha
        mask = alpha <= 0
        denom = lam[mask] - alpha[mask]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(denom > 0, lam[mask] / denom, np.inf)
        theta = float(np.min(ratios)) if ratios.size else 0.0
        if not np.isfinite(theta):
            theta = 0.0
        lam = lam + theta * (alpha - lam)
        drop = np.flatnonzero(mask)[int(np.argmin(ratios))]
        keep = lam > 0
        keep[drop] = False
        if not np.any(keep):
            keep[int(np.argmax(alpha))] = True
            lam = np.ones_like(lam)
        S = [s for s, k in zip(S, keep) if k]
        lam = lam[keep]
        lam = lam / lam.sum()
        if len(S) == 1:
            return S, np.ones(1)


# ---------------------------------------------------------------------------
# accelerated projected gradient (cross-check only)


def _apg(u, V, tol, max_iter):
    """FISTA with function-value restart.

    Stops on the Frank-Wolfe duality gap, which bounds f(pi) - f*.
    """
    m = V.shape[0]
    L = 2.0 * max(np.linalg.norm(V, 2) ** 2, 1e-300)
    pi = np.full(m, 1.0 / m)
    y = pi.copy()
    t = 1.0
    r = V.T @ pi - u
    f_old = float(r @ r)
    scale = float(np.max(np.einsum("ij,ij->i", V - u, V - u)))
    restarted = False
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        grad = 2.0 * V @ (V.T @ y - u)
        pi_new = project_simplex(y - grad / L)
        r_new = V.T @ pi_new - u
        f_new = float(r_new @ r_new)
        if f_new > f_old and not restarted:
            t = 1.0
            y = pi.copy()
            restarted = True
        else:
            restarted = False
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = pi_new + ((t - 1.0) / t_new) * (pi_new - pi)
            pi, t, f_old, r = pi_new, t_new, f_new, r_new
        g = 2.0 * V @ r
        gap = float(g @ pi - g.min())
        if gap <= tol * f_old + _ABS_GAP * scale:
            converged = True
            break
    return pi, it, converged


# ---------------------------------------------------------------------------
# public API


def _extreme_rows(V):
    """Indices of the rows of V that can be vertices of conv(V), if cheap."""
    m, d = V.shape
    if d < 2 or d > 5 or m <= 4 * (d + 1):
        return None
    try:
        from scipy.spatial import ConvexHull, QhullError
    except ImportError:  # pragma: no cover
        return None
    try:
        hull = ConvexHull(V)
    except (QhullError, ValueError):
        return None
    return np.sort(hull.vertices)


class HullProjector:
    """Reusable projector onto the convex hull of the rows of ``V``.

    Face tables (and, in low dimension, the reduction of ``V`` to its
    extreme points) are computed once, so repeated calls are cheap.

    Parameters
    ----------
    V : array_like, shape (m, d)
    method : {"auto", "enumerate", "active_set", "apg"}
    tol : float
        Relative tolerance of the iterative solvers.
    max_iter : int
        Iteration cap of the iterative solvers.
    """

    def __init__(self, V, method="auto", tol=1e-12, max_iter=10000):
        V = _as_float_array(V, 2, "V")
        if V.shape[0] < 1 or V.shape[1] < 1:
            raise InvalidInputError("V must have at least one row and one column")
        if tol <= 0:
            raise InvalidInputError("tol must be positive")
        self.V = V
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        m, d = V.shape
        self._keep = None
        if method in ("auto", "active_set"):
            self._keep = _extreme_rows(V)
        Vr = V if self._keep is None else V[self._keep]
        if method == "auto":
            method = "enumerate" if _face_count(Vr.shape[0], d) <= MAX_ENUMERATED_FACES else "active_set"
        if method not in ("enumerate", "active_set", "apg"):
            raise InvalidInputError(f"unknown hull projection method {method!r}")
        self.method = method
        self._Vr = Vr
        self._table = _FaceTable(Vr) if method == "enumerate" else None

    def project(self, U, supports=None):
        """Project each row of ``U``.

        ``supports`` optionally gives, per row, indices (into ``V``) used to
        warm-start the active-set solver.
        """
        U = _as_float_array(U, 2, "U")
        if U.shape[1] != self.V.shape[1]:
            raise InvalidInputError(
                f"dimension mismatch: points have {U.shape[1]} columns, hull has {self.V.shape[1]}"
            )
        n = U.shape[0]
        Vr = self._Vr
        mr = Vr.shape[0]
        converged = np.ones(n, dtype=bool)
        out_supports = [None] * n
        if self.method == "enumerate":
            Wr = self._table.project(U)
            out_supports = None
        else:
            Wr = np.zeros((n, mr))
            local = None
            if supports is not None and self._keep is not None:
                local = {int(g): j for j, g in enumerate(self._keep)}
            for i in range(n):
                if self.method == "apg":
                    w, _, ok = _apg(U[i], Vr, self.tol, self.max_iter)
                    sup = list(np.flatnonzero(w > 0))
                else:
                    init = None
                    if supports is not None and supports[i]:
                        init = supports[i] if local is None else [local[s] for s in supports[i] if s in local]
                    w, _, ok, sup = _wolfe(Vr - U[i], self.tol, self.max_iter, init)
                Wr[i] = w
                converged[i] = ok
                out_supports[i] = sup
        if self._keep is not None:
            W = np.zeros((n, self.V.shape[0]))
            W[:, self._keep] = Wr
            if out_supports is not None:
                out_supports = [[int(self._keep[s]) for s in sup] for sup in out_supports]
        else:
            W = Wr
            if out_supports is not None:
                out_supports = [[int(s) for s in sup] for sup in out_supports]
        P = W @ self.V
        R = U - P
        sq = np.einsum("ij,ij->i", R, R)
        return HullProjection(P, W, sq, converged, out_supports)


def project_onto_hull(U, V, **kwargs):
    """Project the rows of ``U`` onto conv(rows of ``V``); see HullProjector."""
    res = HullProjector(V, **kwargs).project(U)
    if not res.all_converged:
        warnings.warn(
            f"{int(np.sum(~res.converged))} hull projection(s) did not converge",
            ConvergenceWarning,
            stacklevel=2,
        )
    return res


def project_convex_hull(u, V, tol=1e-10, max_iter=10000, method="auto"):
    """Closest point of conv(rows of ``V``) to ``u``.

    Parameters
    ----------
    u : array_like, shape (d,)
    V : array_like, shape (m, d)
    tol : float
        Relative objective tolerance for the iterative solvers; the
        enumeration path is exact.
    max_iter : int
    method : {"auto", "enumerate", "active_set", "apg"}

    Returns
    -------
    ProjectionResult
        ``converged`` is False when ``max_iter`` ran out first.
    """
    u = _as_float_array(u, 1, "u")
    V = _as_float_array(V, 2, "V")
    if V.shape[1] != u.shape[0]:
        raise InvalidInputError("u and V have different dimensions")
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    m, d = V.shape
    if method == "auto":
        method = "enumerate" if _face_count(m, d) <= MAX_ENUMERATED_FACES else "active_set"
    if method == "enumerate":
        w = _FaceTable(V).project(u[None, :])[0]
        iterations, converged = 1, True
    elif method == "active_set":
        w, iterations, converged, _ = _wolfe(V - u, tol, max_iter)
    elif method == "apg":
        w, iterations, converged = _apg(u, V, tol, max_iter)
    else:
        raise InvalidInputError(f"unknown hull projection method {method!r}")
    point = w @ V
    r = u - point
    return ProjectionResult(point, w, float(r @ r), int(iterations), bool(converged))


def affine_rank(P, rtol=1e-10):
    """Dimension of the affine hull of the rows of ``P``."""
    P = _as_float_array(P, 2, "P")
    if P.shape[0] <= 1:
        return 0
    D = P[1:] - P[0]
    s = np.linalg.svd(D, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _affine_basis(P, rtol=1e-10):
    D = P[1:] - P[0]
    if D.shape[0] == 0:
        return np.zeros((P.shape[1], 0))
    _, s, Vt = np.linalg.svd(D, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((P.shape[1], 0))
    k = int(np.sum(s > rtol * s[0]))
    return Vt[:k].T


def distance_to_affine(u, P, return_rank=False):
    """Euclidean distance from ``u`` to the affine hull of the rows of ``P``.

    ``u`` may be a single point or a matrix of points (one per row).
    Affinely dependent rows of ``P`` are handled by working with the affine
    hull of a maximal independent subset; pass ``return_rank=True`` to also
    get that hull's dimension (less than ``len(P) - 1`` flags degeneracy).
    """
    P = _as_float_array(P, 2, "P")
    if P.shape[0] < 1:
        raise InvalidInputError("P needs at least one row")
    U = np.asarray(u, dtype=float)
    single = U.ndim == 1
    U = np.atleast_2d(U)
    if U.shape[1] != P.shape[1]:
        raise InvalidInputError("dimension mismatch between u and P")
    if not np.all(np.isfinite(U)):
        raise InvalidInputError("u contains non-finite entries")
    Q = _affine_basis(P)
    Y = U - P[0]
    R = Y - (Y @ Q) @ Q.T
    dist = np.sqrt(np.einsum("ij,ij->i", R, R))
    out = float(dist[0]) if single else dist
    if return_rank:
        return out, Q.shape[1]
    return out
