"""Hull-distance losses, the regularized archetypal risk and its gradient."""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .exceptions import ConvergenceWarning, DegenerateGeometryError, InvalidInputError
from .geometry import HullProjector, affine_rank

__all__ = [
    "RiskValue",
    "SpectrumDiagnostics",
    "check_data_matrix",
    "hull_sq_distance",
    "regularized_risk",
    "risk_gradient",
    "archetype_loss",
    "nearest_archetypes",
    "spectrum",
    "loss_bound_slack",
]


def check_data_matrix(M, name="matrix"):
    """Validate a finite, non-empty 2-D float matrix and return it."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _check_same_width(A, B, a="X", b="H"):
    if A.shape[1] != B.shape[1]:
        raise InvalidInputError(
            f"dimension mismatch: {a} has {A.shape[1]} columns, {b} has {B.shape[1]}"
        )


@dataclass(frozen=True)
class RiskValue:
    """Value of D(X;H) + lam * D(H;X) together with its two terms."""

    fit_term: float
    reg_term: float
    total: float
    lam: float


@dataclass(frozen=True)
class SpectrumDiagnostics:
    sigma_max: float
    sigma_min: float
    kappa: float


def _projection(U, V, projector=None):
    proj = (projector or HullProjector(V)).project(U)
    if not proj.all_converged:
        warnings.warn(
            f"{int(np.sum(~proj.converged))} hull projection(s) did not converge",
            ConvergenceWarning,
            stacklevel=3,
        )
    return proj


def hull_sq_distance(U, V):
    """Sum over the rows of ``U`` of their squared distance to conv(V).

    A ``ConvergenceWarning`` is emitted if any projection stopped early.
    """
    U = check_data_matrix(U, "U")
    V = check_data_matrix(V, "V")
    _check_same_width(U, V, "U", "V")
    return float(np.sum(_projection(U, V).sq_distances))


def regularized_risk(X, H, lam):
    """Regularized archetypal risk ``D(X;H) + lam * D(H;X)``.

    ``lam`` may be ``math.inf``; the total is then finite only when every
    archetype lies in conv(X).
    """
    X = check_data_matrix(X, "X")
    H = check_data_matrix(H, "H")
    _check_same_width(X, H)
    if lam < 0 or math.isnan(lam):
        raise InvalidInputError("lambda must be non-negative")
    fit = float(np.sum(_projection(X, H).sq_distances))
    reg = float(np.sum(_projection(H, X).sq_distances))
    return make_risk_value(fit, reg, lam)


def make_risk_value(fit, reg, lam, feasibility_tol=0.0):
    """Combine the two risk terms; an infinite weight acts as a hard constraint.

    Under the hard constraint a penalty up to ``feasibility_tol`` counts as
    zero, which absorbs round-off in points already projected onto the hull.
    """
    if math.isinf(lam):
        total = fit if reg <= feasibility_tol else math.inf
    else:
        total = fit + lam * reg
    return RiskValue(fit, reg, total, float(lam))


def gradient_from_projections(X, H, fit_weights, fit_points, hull_points, lam):
    """Assemble the risk gradient from precomputed hull projections.

    ``fit_weights``/``fit_points`` are the projections of the rows of X onto
    conv(H); ``hull_points`` the projections of the rows of H onto conv(X).
    """
    G = 2.0 * fit_weights.T @ (fit_points - X)
    if lam:
        G = G + 2.0 * lam * (H - hull_points)
    return G


def _complementarity_ties(X, H, weights, points, rtol=1e-10):
    """Rows of X whose projection onto conv(H) sits on a kink of the risk.

    A point outside the hull whose projection has a zero weight on some
    archetype with a vanishing multiplier lies where the active face is
    about to change; the risk is not differentiable in H there.
    """
    resid = X - points
    outside = np.einsum("ij,ij->i", resid, resid) > (rtol * max(1.0, float(np.abs(X).max()))) ** 2
    # multiplier of archetype l at row i: <h_l - p_i, p_i - x_i>
    mult = H @ (points - X).T - np.einsum("ij,ij->i", points, points - X)[None, :]
    scale = np.linalg.norm(resid, axis=1)[None, :] * (np.linalg.norm(H, axis=1)[:, None] + 1.0)
    tied = (weights.T == 0) & (np.abs(mult) <= rtol * scale) & outside[None, :]
    return np.flatnonzero(tied.any(axis=0))


def risk_gradient(X, H, lam, return_diagnostics=False):
    """Gradient of the regularized risk with respect to the archetypes.

    Valid where the rows of ``H`` are affinely independent; raises
    ``DegenerateGeometryError`` otherwise.  At kinks of the risk (see
    ``_complementarity_ties``) the formula is still evaluated; with
    ``return_diagnostics=True`` the offending rows of X are reported.

    Returns
    -------
    numpy.ndarray, shape (r, d), or ``(gradient, {"tied_rows": [...]})``
    """
    X = check_data_matrix(X, "X")
    H = check_data_matrix(H, "H")
    _check_same_width(X, H)
    if lam < 0 or not math.isfinite(lam):
        raise InvalidInputError("lambda must be finite and non-negative")
    r = H.shape[0]
    if affine_rank(H) < r - 1:
        raise DegenerateGeometryError("archetypes are affinely dependent; the risk is not differentiable")
    fit = _projection(X, H)
    hull = _projection(H, X) if lam else None
    G = gradient_from_projections(
        X, H, fit.weights, fit.points, None if hull is None else hull.points, lam
    )
    if return_diagnostics:
        ties = _complementarity_ties(X, H, fit.weights, fit.points)
        return G, {"tied_rows": ties.tolist()}
    return G


def nearest_archetypes(H0, Hhat):
    """For each row of ``H0``: index of and squared distance to the closest row of ``Hhat``."""
    H0 = check_data_matrix(H0, "H0")
    Hhat = check_data_matrix(Hhat, "Hhat")
    _check_same_width(H0, Hhat, "H0", "Hhat")
    diff = H0[:, None, :] - Hhat[None, :, :]
    sq = np.einsum("abk,abk->ab", diff, diff)
    idx = np.argmin(sq, axis=1)
    return idx, sq[np.arange(H0.shape[0]), idx]


def archetype_loss(H0, Hhat):
    """Sum over true archetypes of the squared distance to the nearest estimate.

    Rows of ``Hhat`` may be fewer or more than those of ``H0``; the same
    formula applies.
    """
    _, sq = nearest_archetypes(H0, Hhat)
    return float(np.sum(sq))


def loss_bound_slack(H0, H):
    """Slack of the bound of the archetype loss by the two hull distances.

    For ``H0`` and ``H`` with the same number of linearly independent rows,
    ``L(H0, H)^1/2 <= sqrt(2) kappa(H0) D(H0; H)^1/2 + (1 + sqrt(2)) sqrt(r) D(H; H0)^1/2``.
    Returns the right side minus the left side.
    """
    H0 = check_data_matrix(H0, "H0")
    H = check_data_matrix(H, "H")
    _check_same_width(H0, H, "H0", "H")
    r = H0.shape[0]
    lhs = math.sqrt(archetype_loss(H0, H))
    kappa = spectrum(H0).kappa
    rhs = math.sqrt(2.0) * kappa * math.sqrt(hull_sq_distance(H0, H))
    rhs += (1.0 + math.sqrt(2.0)) * math.sqrt(r) * math.sqrt(hull_sq_distance(H, H0))
    return rhs - lhs


def spectrum(H):
    """Largest and smallest nonzero singular values and their ratio."""
    H = check_data_matrix(H, "H")
    s = np.linalg.svd(H, compute_uv=False)
    smax = float(s[0])
    if smax == 0.0:
        raise InvalidInputError("spectrum of an all-zero matrix is undefined")
    nonzero = s[s > 1e-12 * smax]
    smin = float(nonzero[-1])
    return SpectrumDiagnostics(smax, smin, smax / smin)
