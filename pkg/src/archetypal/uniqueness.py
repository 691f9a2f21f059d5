"""Identifiability diagnostics: internal radius, uniqueness constant, bounds.

The uniqueness constant of a pair (X0, H0) is the largest ``alpha`` with

    D(H, X0)^1/2 - D(H0, X0)^1/2 >= alpha * (D(H, H0)^1/2 + D(H0, H)^1/2)

for every archetype set ``H`` whose hull contains conv(X0).  It lies in
[0, 1], equals 1 for separable data and vanishes when the archetypes are
not identifiable.  ``estimate_alpha`` computes an upper estimate by
multi-start local search.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull, QhullError

from .exceptions import InvalidInputError
from .geometry import HullProjector
from .risk import check_data_matrix, spectrum
from .synth import make_rng

__all__ = [
    "InternalRadiusResult",
    "internal_radius",
    "AlphaSearchConfig",
    "AlphaEstimate",
    "alpha_ratio",
    "estimate_alpha",
    "check_uniqueness_inequality",
    "RobustnessBound",
    "robustness_constants",
    "robustness_bound",
    "HexagonFamily",
    "hexagon_family",
]

# Value assigned to candidates that cannot be made to contain the data or
# that coincide with H0; any value above 1 never wins the minimization.
_PENALTY = 2.0
# Containment tolerance, relative to the diameter of the data.
_CONTAINMENT_TOL = 1e-8
# Largest affine dimension handed to Qhull for the facet description.
_MAX_FACET_DIM = 8


@dataclass(frozen=True)
class InternalRadiusResult:
    """Largest ball inside conv(X0) within its affine hull.

    ``basis`` spans the (r-1)-dimensional directions of the ball.  When the
    data span more than r-1 dimensions the reported radius is that of the
    largest full-dimensional ball, a lower bound on the (r-1)-ball radius,
    and ``exceeds_rank`` is set.
    """

    mu: float
    center: np.ndarray
    basis: np.ndarray
    affine_dim: int
    degenerate: bool = False
    exceeds_rank: bool = False


def _affine_frame(P):
    c = P.mean(axis=0)
    _, s, Vt = np.linalg.svd(P - c, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return c, np.zeros((P.shape[1], 0))
    k = int(np.sum(s > 1e-10 * s[0]))
    return c, Vt[:k].T


def internal_radius(X0, r):
    """Chebyshev center of conv(X0) in affine coordinates.

    Facets come from Qhull; the inscribed ball maximizes ``t`` subject to
    ``a_j . y + t <= -b_j`` for every facet ``a_j . y + b_j <= 0`` with unit
    normal ``a_j``.
    """
    X0 = check_data_matrix(X0, "X0")
    if not isinstance(r, (int, np.integer)) or r < 2:
        raise InvalidInputError("r must be an integer >= 2")
    d = X0.shape[1]
    c, Q = _affine_frame(X0)
    k = Q.shape[1]
    if k < r - 1:
        return InternalRadiusResult(0.0, c, np.zeros((d, r - 1)), k, degenerate=True)
    Y = (X0 - c) @ Q
    if k == 1:
        lo, hi = float(Y.min()), float(Y.max())
        center = c + Q[:, 0] * (lo + hi) / 2
        return InternalRadiusResult((hi - lo) / 2, center, Q, 1)
    if k > _MAX_FACET_DIM:
        raise InvalidInputError(
            f"affine dimension {k} is too large for a facet description (max {_MAX_FACET_DIM})"
        )
    try:
        eq = ConvexHull(Y).equations
    except QhullError as exc:
        raise InvalidInputError(f"facet enumeration failed: {exc}") from None
    A, b = eq[:, :-1], eq[:, -1]
    norms = np.linalg.norm(A, axis=1)
    A_ub = np.hstack([A, norms[:, None]])
    cost = np.zeros(k + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=A_ub, b_ub=-b, bounds=[(None, None)] * k + [(0, None)], method="highs")
    if res.status != 0:
        raise InvalidInputError(f"Chebyshev-center LP failed: {res.message}")
    y, t = res.x[:k], float(res.x[-1])
    return InternalRadiusResult(t, c + Q @ y, Q[:, : r - 1], k, exceeds_rank=k > r - 1)


# ---------------------------------------------------------------------------
# uniqueness constant


def _sq_dist(U, V):
    return float(np.sum(HullProjector(V).project(U).sq_distances))


def alpha_ratio(H, H0, X0, base=None):
    """Uniqueness ratio of a candidate ``H``; ``base`` caches D(H0, X0)^1/2."""
    if base is None:
        base = math.sqrt(_sq_dist(H0, X0))
    num = math.sqrt(_sq_dist(H, X0)) - base
    den = math.sqrt(_sq_dist(H, H0)) + math.sqrt(_sq_dist(H0, H))
    return num, den


@dataclass(frozen=True)
class AlphaSearchConfig:
    restarts: int = 200
    max_evals: int = 400
    seed: int = 0
    max_scale: float = 1.6
    jitter: float = 0.1
    polish: int = 3
    keep_visited: bool = True

    def __post_init__(self):
        if self.restarts < 1 or self.max_evals < 1:
            raise InvalidInputError("restarts and max_evals must be positive")
        if not self.max_scale >= 1:
            raise InvalidInputError("max_scale must be at least 1")


@dataclass(frozen=True)
class AlphaEstimate:
    alpha_hat: float
    witness_H: np.ndarray
    search_evals: int
    raw_minimum: float
    visited: list = field(default_factory=list, repr=False)


class _ContainmentRepair:
    """Radial expansion about the data centroid until the hull contains X0.

    For r = k + 1 archetypes in a k-dimensional affine frame the smallest
    expansion factor follows in closed form from barycentric coordinates;
    otherwise it is found by bisection.
    """

    def __init__(self, X0, k):
        self.Yx = X0
        self.g = X0.mean(axis=0)
        self.k = k
        self.scale = max(float(np.ptp(X0, axis=0).max()), 1e-300)

    def _barycentric(self, H, P):
        A = np.vstack([H.T, np.ones(H.shape[0])])
        rhs = np.vstack([P.T, np.ones(P.shape[0])])
        return np.linalg.solve(A, rhs).T

    def __call__(self, H):
        g = self.g
        if H.shape[0] == self.k + 1:
            try:
                bg = self._barycentric(H, g[None, :])[0]
                bx = self._barycentric(H, self.Yx)
            except np.linalg.LinAlgError:
                return None
            if np.min(bg) <= 1e-12:
                return None
            s = max(1.0, float(np.max((bg - bx) / bg)))
            return g + s * (H - g)
        return self._bisect(H)

    def _contains(self, H):
        proj = HullProjector(H).project(self.Yx)
        return np.sqrt(proj.sq_distances.max()) <= _CONTAINMENT_TOL * self.scale

    def _bisect(self, H):
        g = self.g
        if self._contains(H):
            return H
        hi = 2.0
        while not self._contains(g + hi * (H - g)):
            hi *= 2
            if hi > 1e6:
                return None
        lo = 1.0
        for _ in range(60):
            mid = (lo + hi) / 2
            if self._contains(g + mid * (H - g)):
                hi = mid
            else:
                lo = mid
        return g + hi * (H - g)


def _check_contains(H, X0, what):
    scale = max(float(np.ptp(X0, axis=0).max()), 1.0)
    proj = HullProjector(H).project(X0)
    if np.sqrt(proj.sq_distances.max()) > _CONTAINMENT_TOL * scale:
        raise InvalidInputError(f"conv(X0) is not contained in conv({what})")


def _rotation_2d(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def estimate_alpha(X0, H0, search=AlphaSearchConfig()):
    """Upper estimate of the uniqueness constant by multi-start Nelder-Mead.

    Candidates are parameterized by their coordinates in the affine hull of
    ``H0``.  Restarts begin from rotated, enlarged and jittered copies of
    ``H0``; in a planar frame the first ones use evenly spaced rotation
    angles, the rest random orthogonal maps.  Every evaluated candidate is
    first expanded radially about the data centroid until it contains
    conv(X0).  The best candidate is polished by further local searches and
    the minimum ratio found is clamped to [0, 1].
    """
    X0 = check_data_matrix(X0, "X0")
    H0 = check_data_matrix(H0, "H0")
    if X0.shape[1] != H0.shape[1]:
        raise InvalidInputError("X0 and H0 have different numbers of columns")
    _check_contains(H0, X0, "H0")
    r = H0.shape[0]
    c, Q = _affine_frame(H0)
    k = Q.shape[1]
    if k == 0:
        raise InvalidInputError("H0 must contain at least two distinct archetypes")
    # work entirely in the affine frame; distances are preserved there
    Y0 = (H0 - c) @ Q
    Xc = (X0 - c) @ Q
    x_hull = HullProjector(Xc)
    h0_hull = HullProjector(Y0)
    base = math.sqrt(float(np.sum(x_hull.project(Y0).sq_distances)))
    repair = _ContainmentRepair(Xc, k)
    centroid = Y0.mean(axis=0)
    size = max(float(np.linalg.norm(Y0 - centroid, axis=1).max()), 1e-300)
    tiny = 1e-12 * size

    visited = []
    best = [math.inf, None]
    evals = [0]

    def value(flat):
        evals[0] += 1
        Y = repair(flat.reshape(r, k))
        if Y is None:
            return _PENALTY
        num = math.sqrt(float(np.sum(x_hull.project(Y).sq_distances))) - base
        den = math.sqrt(float(np.sum(h0_hull.project(Y).sq_distances)))
        den += math.sqrt(float(np.sum(HullProjector(Y).project(Y0).sq_distances)))
        if den <= tiny:
            return _PENALTY
        v = num / den
        if search.keep_visited:
            visited.append((c + Y @ Q.T, v))
        if v < best[0]:
            best[0], best[1] = v, Y
        return v

    def local_search(start):
        minimize(
            value,
            start.ravel(),
            method="Nelder-Mead",
            options={"maxfev": search.max_evals, "xatol": 1e-10 * size, "fatol": 1e-12, "adaptive": True},
        )

    rng = make_rng(search.seed)
    n_angles = min(search.restarts, 12) if k == 2 else 0
    for i in range(search.restarts):
        if i < n_angles:
            R = _rotation_2d(2 * math.pi * (i + 0.5) / n_angles)
            start = centroid + (Y0 - centroid) @ R
        else:
            R, _ = np.linalg.qr(rng.standard_normal((k, k)))
            s = rng.uniform(1.0, search.max_scale)
            start = centroid + s * (Y0 - centroid) @ R
            start = start + search.jitter * size * rng.standard_normal((r, k))
        local_search(start)
    for _ in range(search.polish):
        if best[1] is None:
            break
        local_search(best[1])
    if best[1] is None:
        raise InvalidInputError("no feasible candidate was found")
    alpha = min(1.0, max(0.0, best[0]))
    return AlphaEstimate(alpha, c + best[1] @ Q.T, evals[0], best[0], visited)


def check_uniqueness_inequality(H, H0, X0, alpha):
    """Evaluate the uniqueness inequality for one candidate.

    Returns ``(holds, slack)`` where ``slack`` is the left side minus the
    right side and ``holds`` means ``slack >= -1e-9``.
    """
    H = check_data_matrix(H, "H")
    H0 = check_data_matrix(H0, "H0")
    X0 = check_data_matrix(X0, "X0")
    _check_contains(H, X0, "H")
    num, den = alpha_ratio(H, H0, X0)
    slack = num - alpha * den
    return slack >= -1e-9, float(slack)


# ---------------------------------------------------------------------------
# robustness constants


@dataclass(frozen=True)
class RobustnessBound:
    c_star: float
    c_star_star: float
    bound_primary: float
    bound_secondary: float
    primary_condition_ok: bool
    secondary_condition_ok: bool
    mu: float
    sigma_max: float
    kappa: float

    @property
    def noise_condition_ok(self):
        return self.primary_condition_ok and self.secondary_condition_ok


def robustness_constants(sigma_max, kappa, mu, r, center_norm):
    """The two geometric constants of the robustness bounds."""
    if not mu > 0:
        raise InvalidInputError("internal radius must be positive")
    shape = max(1.0, kappa / math.sqrt(r))
    c_star = 120.0 * (sigma_max / mu) * shape
    c_star_star = 120.0 * max(kappa, (sigma_max / r + center_norm) / (mu * math.sqrt(r))) * shape
    return c_star, c_star_star


def robustness_bound(H0, X0, delta, alpha):
    """Error bounds on the archetype loss for noise of row norm ``delta``.

    The primary bound ``C*^2 r^5 delta^2 / alpha^2`` holds when
    ``delta <= alpha mu / (30 r^1.5)``; the secondary bound
    ``C**^2 r^4 delta^2 / alpha^2`` when
    ``delta <= alpha mu / (330 kappa r^2.5)``.
    """
    H0 = check_data_matrix(H0, "H0")
    X0 = check_data_matrix(X0, "X0")
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    if not delta >= 0:
        raise InvalidInputError("delta must be non-negative")
    r = H0.shape[0]
    rad = internal_radius(X0, r)
    if rad.degenerate or rad.mu <= 0:
        raise InvalidInputError("internal radius of X0 is zero")
    spec = spectrum(H0)
    mu = rad.mu
    c1, c2 = robustness_constants(spec.sigma_max, spec.kappa, mu, r, float(np.linalg.norm(rad.center)))
    return RobustnessBound(
        c_star=c1,
        c_star_star=c2,
        bound_primary=c1**2 * r**5 * delta**2 / alpha**2,
        bound_secondary=c2**2 * r**4 * delta**2 / alpha**2,
        primary_condition_ok=delta <= alpha * mu / (30.0 * r**1.5),
        secondary_condition_ok=delta <= alpha * mu / (330.0 * spec.kappa * r**2.5),
        mu=mu,
        sigma_max=spec.sigma_max,
        kappa=spec.kappa,
    )


# ---------------------------------------------------------------------------
# truncated-triangle hexagons


@dataclass(frozen=True)
class HexagonFamily:
    X0: np.ndarray
    H0: np.ndarray
    non_unique: bool


_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def hexagon_family(L):
    """Unit triangle with every corner cut at fraction ``L`` of both edges.

    For ``L < 1/3`` the archetypes are the uncut triangle.  For larger ``L``
    the cut edges are the longer ones and the archetypes form the triangle
    bounded by their supporting lines, rotated by pi/3.  At ``L = 1/3`` the
    hexagon is regular, both triangles fit equally well and the uncut one
    is returned with ``non_unique`` set.
    """
    L = float(L)
    if not 0 < L <= 0.5:
        raise InvalidInputError("L must lie in (0, 1/2]")
    A, B, C = _TRIANGLE
    X0 = np.array([
        A + L * (B - A),
        B + L * (A - B),
        B + L * (C - B),
        C + L * (B - C),
        C + L * (A - C),
        A + L * (C - A),
    ])
    third = math.isclose(L, 1 / 3, rel_tol=0, abs_tol=1e-12)
    if L < 1 / 3 or third:
        return HexagonFamily(X0, _TRIANGLE.copy(), third)
    G = _TRIANGLE.mean(axis=0)
    rho = (2 / 3 - L) * math.sqrt(3) / 2
    toward_g = (G - _TRIANGLE) / np.linalg.norm(G - _TRIANGLE, axis=1, keepdims=True)
    return HexagonFamily(X0, G + 2 * rho * toward_g, False)
