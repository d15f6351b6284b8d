"""Numerical audits of the quantitative estimates.

Each audit takes discrete fields, evaluates both sides of one claimed
inequality with the explicit constants from :mod:`pxlaplace.constants`, and
reports the worst node or ball together with the measured ratio, so constant
looseness stays observable.  Pointwise inequalities are audited against the
tolerance model ``LHS - RHS <= kappa * h^2 * scale`` that accounts for the
O(h^2) bias of discrete derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import ConstantSet, ExponentWindow, constant_set
from .diffops import (
    StretchParams,
    frobenius_sq,
    gradient,
    hessian,
    infinity_laplacian_values,
    sigma2_values,
    stretched_gradient_values,
    stretched_jacobian_values,
)
from .fields import BallRegion, GridSpec, ScalarField, ball_mask, cutoff, require_inside

__all__ = [
    "AuditError",
    "EstimateReport",
    "GehringResult",
    "ball_family",
    "caccioppoli_audit",
    "equation_residual",
    "gehring_delta_search",
    "pointwise_stretch_audit",
    "quasiregularity_audit",
    "reverse_holder_audit",
]

DISTORTION_FLOOR = 1e-12


class AuditError(RuntimeError):
    """An audit could not be run meaningfully."""


@dataclass
class EstimateReport:
    audit: str
    region: str
    n: int
    t_minus: float
    t_plus: float
    beta: float
    eps: float
    h: float
    constants: Optional[ConstantSet]
    worst: float
    worst_location: Optional[tuple]
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass
class GehringResult:
    delta: float
    c_target: float
    feasible_at_zero: bool
    balls: list
    ratios: list
    worst_ratio: float


def _derivative_data(v: ScalarField):
    grad = gradient(v)
    hess = hessian(v)
    return grad, hess, grad.valid & hess.valid


def _worst_location(values: np.ndarray, mask: np.ndarray, grid: GridSpec):
    masked = np.where(mask, values, -np.inf)
    index = np.unravel_index(int(np.argmax(masked)), grid.shape)
    return tuple(float(grid.axis(i)[index[i]]) for i in range(grid.dimension))


def equation_residual(v: ScalarField, p: ScalarField, g: ScalarField, eps: float) -> float:
    """Max-norm residual of the discrete regularized equation at valid nodes."""
    grad, hess, valid = _derivative_data(v)
    g2 = np.sum(grad.values**2, axis=-1)
    lap = np.trace(hess.values, axis1=-2, axis2=-1)
    inf_lap = infinity_laplacian_values(grad.values, hess.values)
    res = -lap - (p.values - 2.0) * inf_lap / (g2 + eps) + v.values - g.values
    return float(np.abs(res[valid]).max())


# ---------------------------------------------------------------------------
# Pointwise stretched-gradient bound
# ---------------------------------------------------------------------------


def pointwise_stretch_audit(
    v: ScalarField,
    p: ScalarField,
    g: ScalarField,
    params: StretchParams,
    window: ExponentWindow,
    kappa: float = 10.0,
    constants: Optional[ConstantSet] = None,
) -> EstimateReport:
    """Audit ``|DF|^2 <= C* sigma2(DF) + C~* (|Dv|^2+eps)^beta (g-v)^2`` per node.

    ``v`` must (approximately) solve the regularized equation with data
    ``(p, g, eps)``: the residual is checked first, because the bound is an
    algebraic consequence of the equation.
    """
    if params.eps <= 0:
        raise AuditError("the pointwise audit targets the regularized equation: eps > 0")
    grid = v.grid
    n = grid.dimension
    hmax = max(grid.spacing)
    consts = constants or constant_set(window, n, params.beta)
    tolerance = kappa * hmax**2

    eq_res = equation_residual(v, p, g, params.eps)
    eq_budget = tolerance * max(1.0, float(np.abs(g.values).max()))
    if eq_res > eq_budget:
        raise AuditError(
            f"equation residual {eq_res:.3e} too large to audit meaningfully "
            f"(budget {eq_budget:.3e})"
        )

    grad, hess, valid = _derivative_data(v)
    df = stretched_jacobian_values(grad.values, hess.values, params.beta, params.eps)
    lhs = frobenius_sq(df)
    s2 = sigma2_values(df)
    base = np.sum(grad.values**2, axis=-1) + params.eps
    data_term = consts.c_tilde_star * base**params.beta * (g.values - v.values) ** 2
    residual = lhs - consts.c_star * s2 - data_term
    normalized = residual / (lhs + 1.0)

    worst = float(normalized[valid].max())
    location = _worst_location(normalized, valid, grid)
    return EstimateReport(
        audit="pointwise-stretch",
        region="interior",
        n=n,
        t_minus=window.t_minus,
        t_plus=window.t_plus,
        beta=params.beta,
        eps=params.eps,
        h=hmax,
        constants=consts,
        worst=worst,
        worst_location=location,
        tolerance=tolerance,
        passed=worst <= tolerance,
        details={
            "worst_raw": float(residual[valid].max()),
            "equation_residual": eq_res,
            "nodes": int(valid.sum()),
        },
    )


# ---------------------------------------------------------------------------
# Quasiregularity / distortion
# ---------------------------------------------------------------------------


def quasiregularity_audit(
    u: ScalarField,
    beta: float,
    region: Optional[BallRegion] = None,
    budget: Optional[float] = None,
    window: Optional[ExponentWindow] = None,
) -> EstimateReport:
    """Distortion ``K = |DF|^2 / sigma2(DF)`` of the stretched-gradient map.

    Nodes where ``|DF|`` sits below the relative floor are excluded (0/0
    territory); nodes above it with ``sigma2 <= 0`` are counted as
    violations.  In dimension 2 ``sigma2`` is exactly ``-det``.
    """
    if beta < 0:
        raise AuditError("distortion audit requires a nonnegative stretch exponent")
    grid = u.grid
    grad, hess, valid = _derivative_data(u)
    if region is not None:
        valid = valid & ball_mask(region, grid)
        if not valid.any():
            raise AuditError("audit region lies outside the interior-validity nodes")
    df = stretched_jacobian_values(grad.values, hess.values, beta, 0.0)
    lhs = frobenius_sq(df)
    s2 = sigma2_values(df)

    norm = np.sqrt(lhs)
    floor = DISTORTION_FLOOR * float(norm[valid].max()) if valid.any() else 0.0
    audited = valid & (norm > floor)
    positive = audited & (s2 > 0.0)
    violations = int(np.sum(audited & (s2 <= 0.0)))

    distortion = np.zeros_like(lhs)
    np.divide(lhs, s2, out=distortion, where=positive)
    sup = float(distortion[positive].max()) if positive.any() else 0.0
    location = _worst_location(distortion, positive, grid) if positive.any() else None

    passed = violations == 0 and (budget is None or sup <= budget)
    return EstimateReport(
        audit="quasiregularity",
        region="interior" if region is None else _ball_name(region),
        n=grid.dimension,
        t_minus=window.t_minus if window else float("nan"),
        t_plus=window.t_plus if window else float("nan"),
        beta=beta,
        eps=0.0,
        h=max(grid.spacing),
        constants=None,
        worst=sup,
        worst_location=location,
        tolerance=budget if budget is not None else float("inf"),
        passed=passed,
        details={
            "violations": violations,
            "audited_nodes": int(audited.sum()),
            "floor": floor,
        },
    )


# ---------------------------------------------------------------------------
# Caccioppoli (cutoff energy) bound
# ---------------------------------------------------------------------------


def caccioppoli_audit(
    v: ScalarField,
    p: ScalarField,
    g: ScalarField,
    params: StretchParams,
    window: ExponentWindow,
    ball: BallRegion,
    c: Optional[np.ndarray] = None,
    constants: Optional[ConstantSet] = None,
) -> EstimateReport:
    """Audit the cutoff energy bound on one ball; the pass mark is ratio <= 1.

    LHS integrates ``|DF|^2 phi^2``; RHS is ``C#`` times the oscillation of
    the stretched gradient around ``c`` under ``|Dphi|^2`` plus the data
    term.  ``c`` defaults to the mean of the stretched gradient over the
    three-quarter ball, the variance-minimizing choice.
    """
    grid = v.grid
    n = grid.dimension
    consts = constants or constant_set(window, n, params.beta)
    phi = cutoff(ball, grid)
    grad, hess, valid = _derivative_data(v)
    support = phi.values > 0.0
    if np.any(support & ~valid):
        raise AuditError("cutoff support leaves the interior-validity region")

    f_vals = stretched_gradient_values(grad.values, params.beta, params.eps)
    df = stretched_jacobian_values(grad.values, hess.values, params.beta, params.eps)
    dphi = gradient(phi).values
    if c is None:
        mean_mask = ball_mask(ball.scaled(0.75), grid)
        c = f_vals[mean_mask].mean(axis=0)
    c = np.asarray(c, dtype=float)

    vol = grid.cell_volume
    base = np.sum(grad.values**2, axis=-1) + params.eps
    lhs = float(np.sum(frobenius_sq(df) * phi.values**2) * vol)
    osc = float(np.sum(np.sum((f_vals - c) ** 2, axis=-1) * np.sum(dphi**2, axis=-1)) * vol)
    data = float(np.sum(base**params.beta * (g.values - v.values) ** 2 * phi.values**2) * vol)
    rhs = consts.c_sharp * (osc + data)
    ratio = 0.0 if lhs == 0.0 else (np.inf if rhs == 0.0 else lhs / rhs)

    return EstimateReport(
        audit="caccioppoli",
        region=_ball_name(ball),
        n=n,
        t_minus=window.t_minus,
        t_plus=window.t_plus,
        beta=params.beta,
        eps=params.eps,
        h=max(grid.spacing),
        constants=consts,
        worst=ratio,
        worst_location=None,
        tolerance=1.0,
        passed=ratio <= 1.0,
        details={"lhs": lhs, "oscillation": osc, "data_term": data, "rhs": rhs},
    )


# ---------------------------------------------------------------------------
# Reverse Holder and the exponent-gain search
# ---------------------------------------------------------------------------


def _ball_name(ball: BallRegion) -> str:
    center = ",".join(f"{c:g}" for c in ball.center)
    return f"B(({center}),{ball.effective_radius:g})"


def ball_family(grid: GridSpec, r_max: Optional[float] = None, seed: int = 0) -> list:
    """Concentric shrinking balls plus a jittered lattice of off-center balls.

    Radii halve from ``r_max`` down to the resolvable ``8 h``; every ball is
    kept only if its three-quarter scaling sits inside the grid margin.
    Deterministic for a fixed seed.
    """
    h = max(grid.spacing)
    r_min = 8.0 * h
    if r_max is None:
        r_max = 0.25 * min(grid.extents)
    if r_max < r_min:
        raise AuditError(f"r_max {r_max} below the resolvable radius {r_min}")
    center = tuple(0.5 * (a + b) for a, b in zip(grid.lo, grid.hi))
    radii = []
    r = float(r_max)
    while r >= r_min:
        radii.append(r)
        r *= 0.5
    rng = np.random.default_rng(seed)
    balls = []
    for radius in radii:
        balls.append(BallRegion(center, radius))
    fractions = (0.35, 0.65)
    lattice_radius = radii[min(1, len(radii) - 1)]
    for offsets in np.stack(
        np.meshgrid(*(fractions,) * grid.dimension, indexing="ij"), axis=-1
    ).reshape(-1, grid.dimension):
        point = tuple(
            a + frac * ext + float(rng.uniform(-0.02, 0.02)) * ext
            for a, ext, frac in zip(grid.lo, grid.extents, offsets)
        )
        candidate = BallRegion(point, lattice_radius)
        try:
            require_inside(candidate, grid)
        except Exception:
            continue
        balls.append(candidate)
    return balls


def _holder_ratio(dfnorm, fvals, fweight, ball_masks, delta, radius_list):
    """Worst per-ball ratio of the higher-integrability bound at one delta."""
    ratios = []
    for (mq, m3), radius in zip(ball_masks, radius_list):
        lhs = float(np.mean(dfnorm[mq] ** (2.0 + delta)) ** (1.0 / (2.0 + delta)))
        cbar = fvals[m3].mean(axis=0)
        osc = np.sqrt(float(np.mean(np.sum((fvals[m3] - cbar) ** 2, axis=-1)))) / radius
        rhs = osc
        if fweight is not None:
            rhs += float(np.mean(fweight[m3] ** (2.0 + delta)) ** (1.0 / (2.0 + delta)))
        if rhs == 0.0:
            ratios.append(0.0 if lhs == 0.0 else np.inf)
        else:
            ratios.append(lhs / rhs)
    return ratios


def _holder_data(u: ScalarField, f: Optional[ScalarField], beta: float, balls):
    grid = u.grid
    grad, hess, valid = _derivative_data(u)
    df = stretched_jacobian_values(grad.values, hess.values, beta, 0.0)
    dfnorm = np.sqrt(frobenius_sq(df))
    fvals = stretched_gradient_values(grad.values, beta, 0.0)
    fweight = None
    if f is not None and float(np.abs(f.values).max()) > 0.0:
        gnorm = np.sqrt(np.sum(grad.values**2, axis=-1))
        fweight = gnorm**beta * np.abs(f.values)
    masks = []
    for ball in balls:
        m3 = ball_mask(ball.scaled(0.75), grid)
        if np.any(m3 & ~valid):
            raise AuditError(f"ball {_ball_name(ball)} leaves the validity region")
        mq = ball_mask(ball.scaled(0.25), grid)
        if not mq.any():
            raise AuditError(f"quarter ball of {_ball_name(ball)} contains no nodes")
        masks.append((mq, m3))
    return dfnorm, fvals, fweight, masks


def reverse_holder_audit(
    u: ScalarField,
    f: Optional[ScalarField],
    beta: float,
    delta: float,
    balls,
) -> GehringResult:
    """Measured constants of the higher-integrability bound at a fixed delta.

    Per ball: the ``(2+delta)``-average of ``|DF|`` over the quarter ball
    against the L2 oscillation of the stretched gradient over the
    three-quarter ball scaled by ``1/R`` (plus the weighted data term when
    ``f`` is nonzero).
    """
    if not balls:
        raise AuditError("empty ball family")
    if delta < 0:
        raise AuditError("delta must be nonnegative")
    dfnorm, fvals, fweight, masks = _holder_data(u, f, beta, balls)
    radii = [ball.radius for ball in balls]
    ratios = _holder_ratio(dfnorm, fvals, fweight, masks, delta, radii)
    return GehringResult(
        delta=delta,
        c_target=float("nan"),
        feasible_at_zero=True,
        balls=list(balls),
        ratios=ratios,
        worst_ratio=float(np.max(ratios)),
    )


def gehring_delta_search(
    u: ScalarField,
    f: Optional[ScalarField],
    beta: float,
    balls,
    c_target: float,
    resolution: float = 1e-3,
) -> GehringResult:
    """Largest delta in [0, 2] whose worst per-ball ratio stays under budget.

    Bisection at the stated resolution; if even delta = 0 misses the budget
    the result reports that instead of failing.
    """
    if not balls:
        raise AuditError("empty ball family")
    dfnorm, fvals, fweight, masks = _holder_data(u, f, beta, balls)
    radii = [ball.radius for ball in balls]

    def worst(delta):
        return float(np.max(_holder_ratio(dfnorm, fvals, fweight, masks, delta, radii)))

    def result(delta, feasible):
        ratios = _holder_ratio(dfnorm, fvals, fweight, masks, delta, radii)
        return GehringResult(
            delta=delta,
            c_target=c_target,
            feasible_at_zero=feasible,
            balls=list(balls),
            ratios=ratios,
            worst_ratio=float(np.max(ratios)),
        )

    if worst(0.0) > c_target:
        return result(0.0, False)
    if worst(2.0) <= c_target:
        return result(2.0, True)
    lo, hi = 0.0, 2.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if worst(mid) <= c_target:
            lo = mid
        else:
            hi = mid
    return result(lo, True)
