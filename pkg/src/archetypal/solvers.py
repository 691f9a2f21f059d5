"""Descent solvers for the regularized archetypal risk.

Three methods share one stopping rule and one report type:

* ``fit_palm``   proximal alternating linearized minimization on (H, W),
* ``fit_sgd``    subsampled gradient steps with Armijo backtracking,
* ``fit_altmin`` alternating minimization generalizing Cutler and Breiman;
  ``lam=math.inf`` reproduces their archetypal analysis.
"""

from dataclasses import dataclass, field, replace
import math
import time
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError, NumericalFailureError
from .geometry import HullProjector, project_simplex_rows
from .risk import RiskValue, check_data_matrix, make_risk_value

__all__ = [
    "SolverConfig",
    "FitReport",
    "solve_weights",
    "fit_palm",
    "fit_sgd",
    "fit_altmin",
    "fit",
    "SOLVERS",
]

# Step-size margin over the Lipschitz moduli (strict inequalities).
STEP_MARGIN = 1.01
# Tolerance handed to the active-set hull projections inside the solvers.
_PROJ_TOL = 1e-13


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by all solvers.

    ``sgd_batch=None`` means ``min(n, 50)``.
    """

    lam: float = 1.0
    max_iter: int = 5000
    rel_tol: float = 1e-9
    rel_tol_window: int = 5
    grad_tol: float = 1e-8
    epsilon_step: float = 1e-8
    sgd_batch: Optional[int] = None
    backtrack_shrink: float = 0.5
    armijo_c: float = 1e-4
    initial_step: float = 1.0
    max_backtracks: int = 60
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.lam) or self.lam < 0:
            raise InvalidInputError("lam must be non-negative")
        if self.max_iter < 0:
            raise InvalidInputError("max_iter must be non-negative")
        for name in ("rel_tol", "grad_tol", "epsilon_step", "initial_step"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0 < self.backtrack_shrink < 1:
            raise InvalidInputError("backtrack_shrink must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise InvalidInputError("armijo_c must lie in (0, 1)")
        if self.sgd_batch is not None and self.sgd_batch < 1:
            raise InvalidInputError("sgd_batch must be at least 1")
        if self.rel_tol_window < 1:
            raise InvalidInputError("rel_tol_window must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class FitReport:
    archetypes: np.ndarray
    weights: np.ndarray
    risk_trace: np.ndarray
    psi_trace: Optional[np.ndarray]
    final_grad_norm: float
    iterations: int
    converged: bool
    wall_seconds: float
    solver: str
    stop_reason: str
    final_risk: RiskValue
    diagnostics: dict = field(default_factory=dict)

    @property
    def risk(self):
        return float(self.risk_trace[-1])


def solve_weights(X, H, projector=None):
    """Row-wise simplex-constrained least squares ``argmin_w ||H^T w - x_i||``."""
    X = check_data_matrix(X, "X")
    H = check_data_matrix(H, "H")
    if X.shape[1] != H.shape[1]:
        raise InvalidInputError("X and H have different numbers of columns")
    proj = (projector or HullProjector(H, tol=_PROJ_TOL)).project(X)
    return proj.weights


class _Evaluator:
    """Risk, gradient and optimal weights at a given H for fixed data."""

    def __init__(self, X, lam):
        self.X = X
        self.lam = lam
        self.xhull = HullProjector(X, tol=_PROJ_TOL) if lam else None
        self.supports = None
        self.projection_failures = 0
        # squared hull distance treated as zero under the hard constraint
        scale = max(1.0, float(np.max(np.abs(X))))
        self.feasibility_tol = 1e-18 * scale * scale

    def hull_points(self, H):
        proj = self.xhull.project(H, self.supports)
        self.supports = proj.supports
        self.projection_failures += int(np.sum(~proj.converged))
        return proj.points

    def at(self, H, hull_points=None):
        X, lam = self.X, self.lam
        fit = HullProjector(H, tol=_PROJ_TOL).project(X)
        self.projection_failures += int(np.sum(~fit.converged))
        fit_val = float(np.sum(fit.sq_distances))
        G = 2.0 * fit.weights.T @ (fit.points - X)
        if lam:
            if hull_points is None:
                hull_points = self.hull_points(H)
            D = H - hull_points
            reg = float(np.einsum("ij,ij->", D, D))
            if math.isfinite(lam):
                G = G + 2.0 * lam * D
        else:
            reg = 0.0
        return make_risk_value(fit_val, reg, lam, self.feasibility_tol), G, fit.weights


class _StopRule:
    def __init__(self, cfg):
        self.cfg = cfg
        self.streak = 0

    def __call__(self, prev, cur, grad_norm):
        if grad_norm < self.cfg.grad_tol:
            return "grad_tol"
        if math.isfinite(prev) and abs(cur - prev) <= self.cfg.rel_tol * abs(prev):
            self.streak += 1
        else:
            self.streak = 0
        if self.streak >= self.cfg.rel_tol_window:
            return "rel_tol"
        return None


def _prepare(X, H_init):
    X = check_data_matrix(X, "X")
    H = check_data_matrix(H_init, "H_init").copy()
    if X.shape[1] != H.shape[1]:
        raise InvalidInputError(
            f"dimension mismatch: X has {X.shape[1]} columns, H_init has {H.shape[1]}"
        )
    return X, H


def _check_finite(k, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailureError(f"non-finite values at iteration {k}", iteration=k)


def _report(solver, X, H, W, risks, psis, grad_norm, k, stop, t0, final, diag):
    return FitReport(
        archetypes=H,
        weights=W,
        risk_trace=np.asarray(risks),
        psi_trace=None if psis is None else np.asarray(psis),
        final_grad_norm=float(grad_norm),
        iterations=k,
        converged=stop in ("rel_tol", "grad_tol"),
        wall_seconds=time.perf_counter() - t0,
        solver=solver,
        stop_reason=stop,
        final_risk=final,
        diagnostics=diag,
    )


def fit_palm(X, H_init, cfg=SolverConfig()):
    """Proximal alternating linearized minimization.

    Each iteration performs

    1. a gradient step on H for the fit term with step ``1/gamma1``,
    2. the proximal step of the hull-distance penalty, which pulls every
       row towards its projection on conv(X) by ``lam / (lam + gamma1)``,
    3. a projected gradient step on the weights with step ``1/gamma2``,

    where ``gamma1 = 1.01 ||W^T W||_F`` (floored at ``epsilon_step``) and
    ``gamma2 = 1.01 max(||H H^T||_F, epsilon_step)``.  With these steps the
    objective ``psi(H, W) = ||X - W H||_F^2 + lam * D(H; X)`` never
    increases; its values are recorded in ``psi_trace``.
    """
    t0 = time.perf_counter()
    X, H = _prepare(X, H_init)
    lam = float(cfg.lam)
    eps = cfg.epsilon_step
    ev = _Evaluator(X, lam)
    risk, G, W = ev.at(H)
    if lam:
        P = ev.hull_points(H)
        reg_rows = np.einsum("ij,ij->i", H - P, H - P)
    else:
        reg_rows = np.zeros(H.shape[0])
    R = X - W @ H
    psi = float(np.einsum("ij,ij->", R, R)) + (lam * float(reg_rows.sum()) if math.isfinite(lam) else 0.0)
    risks, psis = [risk.total], [psi]
    grad_norm = float(np.linalg.norm(G))
    stop_rule = _StopRule(cfg)
    stop = "max_iter"
    k = 0
    if grad_norm < cfg.grad_tol:
        stop = "grad_tol"
    while stop == "max_iter" and k < cfg.max_iter:
        k += 1
        gamma1 = max(STEP_MARGIN * np.linalg.norm(W.T @ W), eps)
        Ht = H - (W.T @ (W @ H - X)) / gamma1
        if lam:
            P = ev.hull_points(Ht)
            if math.isinf(lam):
                Hn = P.copy()
            else:
                Hn = Ht - (lam / (lam + gamma1)) * (Ht - P)
            # Hn lies on the segment from Ht to its projection, so P is
            # also the projection of Hn.
            D = Hn - P
            reg_rows = np.einsum("ij,ij->i", D, D)
        else:
            P = None
            Hn = Ht
        gamma2 = STEP_MARGIN * max(np.linalg.norm(Hn @ Hn.T), eps)
        Wn = W - ((W @ Hn - X) @ Hn.T) / gamma2
        _check_finite(k, Hn, Wn)
        Wn = project_simplex_rows(Wn)
        R = X - Wn @ Hn
        psi = float(np.einsum("ij,ij->", R, R))
        if lam and math.isfinite(lam):
            psi += lam * float(reg_rows.sum())
        risk, G, _ = ev.at(Hn, P)
        H, W = Hn, Wn
        grad_norm = float(np.linalg.norm(G))
        stop = stop_rule(risks[-1], risk.total, grad_norm) or "max_iter"
        risks.append(risk.total)
        psis.append(psi)
    diag = {"projection_failures": ev.projection_failures}
    return _report("palm", X, H, W, risks, psis, grad_norm, k, stop, t0, risk, diag)


def fit_sgd(X, H_init, cfg=SolverConfig()):
    """Subsampled gradient descent with Armijo backtracking on the full risk.

    The direction uses a uniformly drawn subset ``S`` of the data, with the
    fit part rescaled by ``n / |S|``, plus the full regularization term.
    Subsets are drawn from a Philox stream seeded with ``cfg.seed``.  The
    first trial step is ``initial_step``; afterwards each search starts from
    twice the last accepted step, capped at ``initial_step``.
    """
    t0 = time.perf_counter()
    X, H = _prepare(X, H_init)
    lam = float(cfg.lam)
    if math.isinf(lam):
        raise InvalidInputError("fit_sgd needs a finite lam; use fit_altmin for lam=inf")
    n = X.shape[0]
    batch = min(n, 50) if cfg.sgd_batch is None else int(cfg.sgd_batch)
    if batch > n:
        raise InvalidInputError(f"sgd_batch={batch} exceeds the number of data points {n}")
    rng = np.random.Generator(np.random.Philox(int(cfg.seed)))
    ev = _Evaluator(X, lam)
    hull_pts = ev.hull_points(H) if lam else None
    risk, G_full, W = ev.at(H, hull_pts)
    risks = [risk.total]
    grad_norm = float(np.linalg.norm(G_full))
    stop_rule = _StopRule(cfg)
    stop = "grad_tol" if grad_norm < cfg.grad_tol else "max_iter"
    step = cfg.initial_step
    fallbacks = 0
    failed_searches = 0
    k = 0
    while stop == "max_iter" and k < cfg.max_iter:
        k += 1
        direction = sgd_direction(X, H, W, hull_pts, lam, batch, rng)
        slope = float(np.einsum("ij,ij->", G_full, direction))
        if not slope > 0:
            direction, slope = G_full, grad_norm**2
            fallbacks += 1
        gamma = min(cfg.initial_step, 2.0 * step)
        accepted = False
        for _ in range(cfg.max_backtracks):
            Hn = H - gamma * direction
            _check_finite(k, Hn)
            hull_n = ev.hull_points(Hn) if lam else None
            risk_n, G_n, W_n = ev.at(Hn, hull_n)
            if risk_n.total <= risk.total - cfg.armijo_c * gamma * slope:
                accepted = True
                break
            gamma *= cfg.backtrack_shrink
        if accepted:
            H, W, G_full, risk, hull_pts, step = Hn, W_n, G_n, risk_n, hull_n, gamma
            grad_norm = float(np.linalg.norm(G_full))
        else:
            failed_searches += 1
            if lam:
                hull_pts = ev.hull_points(H)
        stop = stop_rule(risks[-1], risk.total, grad_norm) or "max_iter"
        risks.append(risk.total)
    diag = {
        "batch": batch,
        "full_gradient_fallbacks": fallbacks,
        "failed_line_searches": failed_searches,
        "projection_failures": ev.projection_failures,
    }
    return _report("sgd", X, H, W, risks, None, grad_norm, k, stop, t0, risk, diag)


def sgd_direction(X, H, W, hull_points, lam, batch, rng):
    """Subsampled risk gradient.

    ``W`` holds the optimal weights of all rows of X for the current H, and
    ``hull_points`` the projections of the rows of H onto conv(X).  With
    ``batch == n`` no sampling takes place and the exact gradient results.
    """
    n = X.shape[0]
    if batch >= n:
        idx = np.arange(n)
    else:
        idx = np.sort(rng.choice(n, size=batch, replace=False))
    Ws = W[idx]
    resid = Ws @ H - X[idx]
    G = (2.0 * n / len(idx)) * (Ws.T @ resid)
    if lam:
        G = G + 2.0 * lam * (H - hull_points)
    return G


def fit_altmin(X, H_init, cfg=SolverConfig()):
    """Alternating minimization over weights and archetypes.

    A sweep first recomputes all weights, then updates the archetypes one at
    a time.  With ``w_tot = sum_i w_il^2`` and ``v_l`` the weighted average
    of the residuals that archetype ``l`` must explain, the archetype update
    minimizes ``w_tot ||h - v_l||^2 + lam ||h - X^T a||^2`` over ``h`` and
    ``a`` in the simplex.  The optimal ``X^T a`` is the projection ``p`` of
    ``v_l`` onto conv(X) and ``h = (w_tot v_l + lam p) / (w_tot + lam)``;
    for ``lam=inf`` the archetype is ``p`` itself.

    An archetype with no weight is moved to the worst-fitted data point; the
    events are listed in ``diagnostics["reseeded"]``.
    """
    t0 = time.perf_counter()
    X, H = _prepare(X, H_init)
    lam = float(cfg.lam)
    r = H.shape[0]
    xhull = HullProjector(X, tol=_PROJ_TOL) if lam else None
    supports = [None] * r
    ev = _Evaluator(X, lam)
    if math.isinf(lam):
        # the hard constraint needs a feasible start
        H = HullProjector(X, tol=_PROJ_TOL).project(H).points
    risk, G, W = ev.at(H)
    risks = [risk.total]
    grad_norm = float(np.linalg.norm(G))
    stop_rule = _StopRule(cfg)
    stop = "grad_tol" if grad_norm < cfg.grad_tol else "max_iter"
    reseeded = []
    k = 0
    while stop == "max_iter" and k < cfg.max_iter:
        k += 1
        H = H.copy()
        for ell in range(r):
            w = W[:, ell]
            wtot = float(w @ w)
            if wtot <= 0.0:
                resid = X - W @ H
                worst = int(np.argmax(np.einsum("ij,ij->i", resid, resid)))
                H[ell] = X[worst]
                supports[ell] = None
                reseeded.append((k, ell, worst))
                continue
            partial = X - W @ H + np.outer(w, H[ell])
            v = (w @ partial) / wtot
            if lam:
                proj = xhull.project(v[None, :], [supports[ell]])
                supports[ell] = proj.supports[0]
                p = proj.points[0]
                H[ell] = p if math.isinf(lam) else (wtot * v + lam * p) / (wtot + lam)
            else:
                H[ell] = v
        _check_finite(k, H)
        risk, G, W = ev.at(H)
        grad_norm = float(np.linalg.norm(G))
        stop = stop_rule(risks[-1], risk.total, grad_norm) or "max_iter"
        risks.append(risk.total)
    diag = {"reseeded": reseeded, "projection_failures": ev.projection_failures}
    return _report("altmin", X, H, W, risks, None, grad_norm, k, stop, t0, risk, diag)


SOLVERS = {
    "palm": fit_palm,
    "sgd": fit_sgd,
    "altmin": fit_altmin,
}


def fit(X, H_init, solver="palm", cfg=SolverConfig()):
    """Run a solver by name; ``"altmin-inf"`` is altmin with ``lam=inf``."""
    if solver == "altmin-inf":
        return fit_altmin(X, H_init, replace(cfg, lam=math.inf))
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise InvalidInputError(f"unknown solver {solver!r}") from None
    return fn(X, H_init, cfg)
