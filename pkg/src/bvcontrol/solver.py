"""Homotopy continuation solver for the smoothed control problem.

The nonsmooth objective J(u) = F(u) + alpha*TV(u) is approached through a
family of C1 surrogates

    J_{eps,delta}(u) = F(u) + alpha*TV_delta(u) + (eps/2) ||grad u||^2,

where TV_delta is the Huber-smoothed total variation.  A geometric
schedule shrinks eps and delta in lockstep, each stage warm starting from
the previous minimizer, followed by a terminal polish stage with eps = 0
so that the final inner gradient coincides with the stationarity residual
of the original problem (the Huber dual is the certificate candidate).

Each subproblem is solved by limited-memory BFGS whose seed matrix is the
inverse of a lagged-diffusivity model of the surrogate Hessian; plain
quasi-Newton stalls once delta is small because the Huber curvature
alpha/delta dwarfs the gamma * identity floor of the tracking part.

The line search never subtracts two O(J) objective values.  Every trial
is scored through a cancellation-free decrement oracle: the state moves
by the difference equation (solve_state_difference), the Huber term by a
stable evaluation of psi(s2) - psi(s1), and the quadratic terms expand
exactly in the step.  Decrements therefore stay meaningful far below the
float resolution of J itself, which is what lets the terminal stage push
the stationarity residual to the gradient-evaluation noise floor instead
of stalling near sqrt(eps) * |J|-sized artifacts.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import fsum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .grid import (
    ControlField,
    GradField,
    ScalarField,
    divergence,
    gradient,
    gradient_matrix,
    inner_product,
)
from .objective import (
    ProblemSpec,
    eval_F,
    eval_J,
    eval_TV,
    eval_TV_smoothed,
    grad_F,
    hess_F_bilinear,
    solve_problem_state,
)
from .state import (
    EllipticOperator,
    NonConvergence,
    StateSolution,
    solve_state_difference,
)

__all__ = [
    "HomotopySchedule",
    "InnerStats",
    "StageRecord",
    "SolveReport",
    "dual_from_smoothed",
    "homotopy_solve",
    "solve_smooth_subproblem",
    "two_phase_solve",
]

# norm bound of the tracking Hessian on the unit square: ||(-Laplace)^-1||^2
_CURVATURE_FLOOR = 1.0 / (4.0 * np.pi ** 4)

_ARMIJO = 1e-4
_MAX_HALVINGS = 40
_MEMORY = 10
_EPS_MACH = float(np.finfo(float).eps)
_STALL_WINDOW = 60


@dataclass(frozen=True)
class HomotopySchedule:
    """Geometric shrink schedule for the smoothing pair (eps, delta).

    Stage k = 1..stages uses eps0*shrink**k and delta0*shrink**k.  With
    polish=True a final stage runs at eps = 0 and the terminal delta, so
    the last gradient norm doubles as the stationarity residual.
    """

    eps0: float = 1e-1
    delta0: float = 1e-1
    shrink: float = 0.5
    stages: int = 12
    grad_tol: float = 1e-8
    max_inner: int = 500
    polish: bool = True

    def __post_init__(self):
        if not (self.eps0 > 0.0 and self.delta0 > 0.0):
            raise ValueError("eps0 and delta0 must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.stages < 1:
            raise ValueError("need at least one stage")
        if not self.grad_tol > 0.0:
            raise ValueError("grad_tol must be positive")
        if self.max_inner < 1:
            raise ValueError("max_inner must be at least 1")

    def eps_at(self, k: int) -> float:
        return self.eps0 * self.shrink ** k

    def delta_at(self, k: int) -> float:
        return self.delta0 * self.shrink ** k

    @property
    def delta_final(self) -> float:
        return self.delta_at(self.stages)

    def pairs(self) -> list:
        """(eps, delta) per stage, polish stage included."""
        out = [(self.eps_at(k), self.delta_at(k)) for k in range(1, self.stages + 1)]
        if self.polish:
            out.append((0.0, self.delta_final))
        return out


@dataclass(frozen=True)
class InnerStats:
    """Diagnostics of one smooth subproblem solve.

    values holds the accepted objective sequence built by accumulating
    exact line-search decrements; it is nonincreasing by construction,
    with total drift against a fresh evaluation well under 1e-12.
    """

    iterations: int
    n_evals: int
    grad_norm: float
    objective: float
    converged: bool
    line_search_failed: bool = False
    at_float_floor: bool = False
    values: tuple = ()
    final_state: StateSolution = field(repr=False, default=None)


@dataclass(frozen=True)
class StageRecord:
    """Per-stage summary of a homotopy run.

    eps_term is eps * ||grad u||^2 in L2(omega) quadrature; J_eps equals
    F + alpha*TV_smooth + eps_term/2 by construction.
    """

    stage: int
    eps: float
    delta: float
    J_eps: float
    J: float
    F: float
    TV: float
    TV_smooth: float
    eps_term: float
    grad_norm: float
    inner_iters: int
    n_evals: int
    converged: bool
    u_change: float


@dataclass(frozen=True)
class SolveReport:
    """Final primal-dual pair with the full stage history."""

    u: ControlField
    lam: GradField
    y: ScalarField
    stages: tuple
    converged: bool

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.stages], dtype=float)

    @property
    def delta_final(self) -> float:
        return self.stages[-1].delta

    @property
    def eps_terms_strictly_decreasing(self) -> bool:
        t = self.series("eps_term")
        return bool(np.all(np.diff(t) < 0.0))

    def tail_spread(self, name: str, n: int = 3) -> float:
        """max - min of a stage series over the last n stages."""
        v = self.series(name)[-n:]
        return float(v.max() - v.min())


def dual_from_smoothed(u: ControlField, delta: float, norm_choice: str = "l2") -> GradField:
    """Huber dual at u: saturated wherever the gradient exceeds delta."""
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    _, _, lam = eval_TV_smoothed(u, norm_choice, delta)
    return lam


def _tv_weights(u: ControlField, delta: float, norm_choice: str) -> np.ndarray:
    p = gradient(u)
    if norm_choice == "l2":
        s = np.hypot(p.gx, p.gy)
        wx = 1.0 / np.maximum(delta, s)
        wy = wx
    else:
        wx = 1.0 / np.maximum(delta, np.abs(p.gx))
        wy = 1.0 / np.maximum(delta, np.abs(p.gy))
    return np.concatenate([wx.ravel(), wy.ravel()])


def _metric_factor(u: ControlField, spec: ProblemSpec, eps: float, delta: float):
    """LU factors of the Hessian model at u.

    M = c*I + alpha * G^T W G + eps * G^T G with lagged Huber weights
    W = 1/max(delta, |grad u|) and c bounding the tracking + mean + L2
    curvature.  The weights are continuous in u, so the metric never
    chatters across the Huber threshold (the exact Huber Hessian does,
    and line searches collapse near kink cells); the full metric step is
    the majorize-minimize update for the TV term, giving guaranteed
    descent that the quasi-Newton memory then accelerates.
    """
    g = spec.grid
    G = gradient_matrix(g)
    c = spec.gamma + spec.beta * g.omega_area + _CURVATURE_FLOOR
    M = c * sp.identity(g.mx * g.my, format="csr") + eps * (G.T @ G)
    if spec.alpha > 0.0:
        w = _tv_weights(u, delta, spec.norm_choice)
        M = M + spec.alpha * (G.T @ sp.diags(w) @ G)
    return spla.splu(M.tocsc())


def _evaluate(u: ControlField, spec: ProblemSpec, eps: float, delta: float, y0):
    state = solve_problem_state(u, spec, y0=y0)
    tv_smooth, tv_grad, lam = eval_TV_smoothed(u, spec.norm_choice, delta)
    value = eval_F(u, spec, state) + spec.alpha * tv_smooth
    if eps != 0.0:
        p = gradient(u)
        value += 0.5 * eps * inner_product(p, p)
    return value, state, tv_grad, lam


def _surrogate_gradient(u, spec, eps, delta, state, tv_grad) -> np.ndarray:
    gvals = grad_F(u, spec, state).values + spec.alpha * tv_grad.values
    if eps != 0.0:
        gvals = gvals - eps * divergence(gradient(u)).values
    return gvals


def _huber_gap(s1sq: np.ndarray, ds2: np.ndarray, delta: float) -> np.ndarray:
    """psi_delta(s2) - psi_delta(s1) from s1^2 and the increment s2^2 - s1^2.

    The caller supplies ds2 = s2^2 - s1^2 in product form, and every
    branch divides it by a positive O(s + delta) factor, so the gap keeps
    relative accuracy however small the step; evaluating psi at both
    points and subtracting loses all digits once the change drops under
    sqrt(eps) * s.
    """
    s2sq = np.maximum(s1sq + ds2, 0.0)
    s1 = np.sqrt(s1sq)
    s2 = np.sqrt(s2sq)
    dsq = delta * delta
    both_lo = ds2 / (2.0 * delta)
    both_hi = ds2 / np.maximum(s1 + s2, delta)
    up = (s2sq - dsq) / (s2 + delta) + (dsq - s1sq) / (2.0 * delta)
    down = -((s1sq - dsq) / (s1 + delta) + (dsq - s2sq) / (2.0 * delta))
    lo1 = s1 <= delta
    lo2 = s2 <= delta
    return np.where(lo1 & lo2, both_lo, np.where(~lo1 & ~lo2, both_hi, np.where(lo1, up, down)))


def _tv_gap(pu: GradField, dp: GradField, t: float, delta: float, norm_choice: str) -> float:
    """Unweighted cell sum of psi_delta increments for the step t * d."""
    if norm_choice == "l2":
        s1sq = pu.gx * pu.gx + pu.gy * pu.gy
        ds2 = t * (dp.gx * (2.0 * pu.gx + t * dp.gx) + dp.gy * (2.0 * pu.gy + t * dp.gy))
        return fsum(_huber_gap(s1sq, ds2, delta).ravel())
    gap = _huber_gap(pu.gx * pu.gx, t * dp.gx * (2.0 * pu.gx + t * dp.gx), delta)
    gap = gap + _huber_gap(pu.gy * pu.gy, t * dp.gy * (2.0 * pu.gy + t * dp.gy), delta)
    return fsum(gap.ravel())


def _decrement(u, state, spec, eps, delta, d2, t, w0=None):
    """Exact surrogate decrement J(u + t d) - J(u) plus the state increment.

    Every term is evaluated in increment form (difference equation for the
    state, stable Huber gaps, expanded quadratics), so the result keeps
    relative accuracy at any magnitude instead of degrading to
    eps_mach * |J| like a subtraction of two evaluations would.
    """
    g = u.grid
    h2 = g.h ** 2
    w = solve_state_difference(state, ControlField(g, t * d2), spec.f, w0=w0)
    wv = w.values
    mis2 = 2.0 * (state.y.values - spec.y_d.values)
    dJ = 0.5 * h2 * fsum((wv * (mis2 + wv)).ravel())
    if spec.gamma != 0.0:
        ud = float(u.values.ravel() @ d2.ravel())
        dd = float(d2.ravel() @ d2.ravel())
        dJ += spec.gamma * h2 * (t * ud + 0.5 * t * t * dd)
    if spec.beta != 0.0:
        int_u = h2 * float(u.values.sum())
        int_d = h2 * float(d2.sum())
        dJ += spec.beta * (int_u * t * int_d + 0.5 * (t * int_d) ** 2)
    if eps != 0.0 or spec.alpha != 0.0:
        pu = gradient(u)
        dp = gradient(ControlField(g, d2))
        if eps != 0.0:
            gud = float(pu.gx.ravel() @ dp.gx.ravel()) + float(pu.gy.ravel() @ dp.gy.ravel())
            gdd = float(dp.gx.ravel() @ dp.gx.ravel()) + float(dp.gy.ravel() @ dp.gy.ravel())
            dJ += eps * h2 * (t * gud + 0.5 * t * t * gdd)
        if spec.alpha != 0.0:
            dJ += spec.alpha * h2 * _tv_gap(pu, dp, t, delta, spec.norm_choice)
    return dJ, w


def _two_loop(grad_vals, mem, lu, h2) -> np.ndarray:
    """L-BFGS two-loop recursion in the L2(omega) inner product."""
    q = grad_vals.ravel().copy()
    alphas = []
    for s, yv, rho in reversed(mem):
        a = rho * h2 * float(s @ q)
        q -= a * yv
        alphas.append(a)
    r = lu.solve(q)
    for (s, yv, rho), a in zip(mem, reversed(alphas)):
        b = rho * h2 * float(yv @ r)
        r += (a - b) * s
    return -r


def _plateau_polish(u, value, state, spec, delta, values, max_rounds=4):
    """Exact Newton equilibration of per-flat-region constant shifts.

    Near the terminal iterate the full gradient is dominated by the float
    lattice of u: one ulp of a plateau cell already moves the Huber dual
    by eps_mach |u| / (h delta), which masks the few genuinely smooth
    degrees of freedom left, the mean levels of the flat regions.
    Shifting a whole region in lockstep rides over that noise, so a few
    exact Newton steps along region indicators settle the region means to
    the decrement oracle's resolution.  The certifier's dual refinement
    bottoms out at the per-region flux imbalance, which is exactly what
    these steps remove.  Returns (u, value, state, extra_evals); appends
    accepted objective values to keep the stage record monotone.
    """
    g = u.grid
    h2 = g.h ** 2
    n_extra = 0
    for _ in range(max_rounds):
        p = gradient(u)
        if spec.norm_choice == "l2":
            s = np.hypot(p.gx, p.gy)
        else:
            s = np.maximum(np.abs(p.gx), np.abs(p.gy))
        labels, nlab = ndimage.label(s < delta)
        if nlab == 0:
            break
        tv_grad = eval_TV_smoothed(u, spec.norm_choice, delta)[1]
        grad = grad_F(u, spec, state).values + spec.alpha * tv_grad.values
        moved = False
        for lab in range(1, nlab + 1):
            mask = labels == lab
            if int(mask.sum()) < 4:
                continue
            d2 = mask.astype(float)
            slope = h2 * float(grad.ravel() @ d2.ravel())
            if slope == 0.0:
                continue
            dP = ControlField(g, d2)
            curv = hess_F_bilinear(u, dP, dP, spec, state)
            # Huber curvature along the shift; only cells on the region's
            # rim see a gradient change
            dp = gradient(dP)
            sb = np.maximum(s, delta)
            if spec.norm_choice == "l2":
                dot = (p.gx * dp.gx + p.gy * dp.gy) / sb
                curv_tv = (dp.gx ** 2 + dp.gy ** 2 - np.where(s > delta, dot ** 2, 0.0)) / sb
            else:
                curv_tv = np.where(np.abs(p.gx) > delta, 0.0, dp.gx ** 2 / delta)
                curv_tv = curv_tv + np.where(np.abs(p.gy) > delta, 0.0, dp.gy ** 2 / delta)
            curv = curv + spec.alpha * h2 * float(np.sum(curv_tv))
            if not curv > 0.0:
                continue
            t = -slope / curv
            for _ in range(6):
                try:
                    dJ, w = _decrement(u, state, spec, 0.0, delta, d2, t)
                except NonConvergence:
                    n_extra += 1
                    t *= 0.25
                    continue
                n_extra += 1
                if dJ < 0.0:
                    u = ControlField(g, u.values + t * d2)
                    y_new = ScalarField(g, state.y.values + w.values)
                    state = StateSolution(
                        y_new, 0, state.residual_norm,
                        EllipticOperator(g, spec.f.fy(y_new.values, g)),
                    )
                    value += dJ
                    values.append(value)
                    moved = True
                    break
                t *= 0.5
        if not moved:
            break
    return u, value, state, n_extra


def solve_smooth_subproblem(
    spec: ProblemSpec,
    eps: float,
    delta: float,
    u_init: ControlField | None = None,
    grad_tol: float = 1e-8,
    max_inner: int = 500,
    y0: ScalarField | None = None,
    memory: int = _MEMORY,
):
    """Minimize the (eps, delta)-surrogate; returns (u, lam, InnerStats).

    Stops once the L2(omega) gradient norm drops below
    grad_tol * (1 + |J_eps|); if a stall window passes with neither a
    resolvable objective decrease nor a new best gradient norm, the best
    iterate is returned with stats.at_float_floor set (stationary up to
    gradient evaluation noise).  stats.values accumulates the line-search
    decrements, so the sequence is exactly nonincreasing; the homotopy
    driver refreshes the stage objective from scratch afterwards.  eps
    may be zero (terminal polish); delta must stay positive so the
    surrogate stays C1.
    """
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    g = spec.grid
    h2 = g.h ** 2
    u = ControlField.zeros(g) if u_init is None else u_init
    if u.grid is not g and u.grid != g:
        raise ValueError("u_init lives on a different grid")

    value, state, tv_grad, lam = _evaluate(u, spec, eps, delta, y0)
    grad = _surrogate_gradient(u, spec, eps, delta, state, tv_grad)
    n_evals = 1
    values = [value]
    mem = deque(maxlen=memory)
    steps = 0
    fallbacks = 0
    converged = False
    line_search_failed = False
    at_float_floor = False
    best = (np.inf, None)
    last_gain = 0

    def line_search(d, slope, max_trials):
        # plain halving scored by the cancellation-free decrement oracle;
        # each trial costs one difference solve against the frozen state
        # operator, no fresh Newton solve and no O(J) subtraction
        nonlocal n_evals
        d2 = d.reshape(g.mx, g.my)
        t = 1.0
        w_hint = None
        for _ in range(max_trials):
            try:
                dJ, w = _decrement(u, state, spec, eps, delta, d2, t, w0=w_hint)
            except NonConvergence:
                n_evals += 1
                t *= 0.25
                w_hint = None
                continue
            n_evals += 1
            if dJ <= _ARMIJO * t * slope:
                return t, dJ, w
            w_hint = 0.5 * w.values
            t *= 0.5
        return None

    while True:
        grad_norm = g.h * float(np.linalg.norm(grad))
        if grad_norm < best[0]:
            best = (grad_norm, (u, value, state, tv_grad, lam, grad))
            last_gain = steps
        if grad_norm <= grad_tol * (1.0 + abs(value)):
            converged = True
            break
        if steps - last_gain >= _STALL_WINDOW:
            # a full window of steps with neither a resolvable J decrease
            # nor a new best gradient norm: the iterate is stationary to
            # the evaluation noise of the gradient itself
            converged = True
            at_float_floor = True
            break
        if steps >= max_inner:
            break

        lu = _metric_factor(u, spec, eps, delta)
        d = _two_loop(grad, mem, lu, h2)
        slope = h2 * float(grad.ravel() @ d)
        if not slope < 0.0:
            mem.clear()
            fallbacks += 1
            d = -lu.solve(grad.ravel())
            slope = h2 * float(grad.ravel() @ d)

        # give the accelerated direction only a few trials; the plain metric
        # step is a majorizer for the TV block and rarely needs shortening
        hit = line_search(d, slope, 3 if mem else _MAX_HALVINGS)
        if hit is None and mem:
            mem.clear()
            fallbacks += 1
            d = -lu.solve(grad.ravel())
            slope = h2 * float(grad.ravel() @ d)
            hit = line_search(d, slope, _MAX_HALVINGS)
        if hit is None:
            if slope < 0.0:
                # Armijo with a negative slope must succeed for small t on a
                # C1 surrogate, so failure at every trial step means the
                # decrement oracle can no longer resolve the predicted gain:
                # the iterate is stationary to working precision
                converged = True
                at_float_floor = True
            else:
                line_search_failed = True
            break

        t, dJ, w = hit
        trial = ControlField(g, u.values + t * d.reshape(g.mx, g.my))
        y_new = ScalarField(g, state.y.values + w.values)
        state_new = StateSolution(
            y_new, 0, state.residual_norm, EllipticOperator(g, spec.f.fy(y_new.values, g))
        )
        _, tv_grad_new, lam_new = eval_TV_smoothed(trial, spec.norm_choice, delta)
        value_new = value + dJ
        grad_new = _surrogate_gradient(trial, spec, eps, delta, state_new, tv_grad_new)
        s = (t * d).ravel()
        yv = (grad_new - grad).ravel()
        sy = h2 * float(s @ yv)
        if sy > 1e-12 * np.sqrt(h2 * float(s @ s)) * np.sqrt(h2 * float(yv @ yv)):
            mem.append((s, yv, 1.0 / sy))
        steps += 1
        if value - value_new > 4.0 * _EPS_MACH * abs(value):
            last_gain = steps
        u, value, state, tv_grad, lam, grad = trial, value_new, state_new, tv_grad_new, lam_new, grad_new
        values.append(value)

    if best[1] is not None and best[0] < g.h * float(np.linalg.norm(grad)):
        u, value, state, tv_grad, lam, grad = best[1]

    if eps == 0.0 and spec.alpha > 0.0:
        u, value, state, extra = _plateau_polish(u, value, state, spec, delta, values)
        n_evals += extra
        _, tv_grad, lam = eval_TV_smoothed(u, spec.norm_choice, delta)
        grad = _surrogate_gradient(u, spec, eps, delta, state, tv_grad)

    stats = InnerStats(
        iterations=steps,
        n_evals=n_evals,
        grad_norm=g.h * float(np.linalg.norm(grad)),
        objective=value,
        converged=converged,
        line_search_failed=line_search_failed,
        at_float_floor=at_float_floor,
        values=tuple(values),
        final_state=state,
    )
    return u, lam, stats


def homotopy_solve(
    spec: ProblemSpec,
    schedule: HomotopySchedule | None = None,
    u_init: ControlField | None = None,
) -> SolveReport:
    """Run the shrink schedule with warm starts and collect the history."""
    if schedule is None:
        schedule = HomotopySchedule()
    g = spec.grid
    u = ControlField.zeros(g) if u_init is None else u_init
    y = None
    lam = None
    records = []
    all_converged = True

    for idx, (eps, delta) in enumerate(schedule.pairs(), start=1):
        u_prev = u
        u, lam, stats = solve_smooth_subproblem(
            spec,
            eps,
            delta,
            u_init=u,
            grad_tol=schedule.grad_tol,
            max_inner=schedule.max_inner,
            y0=y,
        )
        state = stats.final_state
        y = state.y
        F_val = eval_F(u, spec, state)
        tv = eval_TV(u, spec.norm_choice)
        tv_smooth, _, _ = eval_TV_smoothed(u, spec.norm_choice, delta)
        p = gradient(u)
        grad_sq = inner_product(p, p)
        diff = ControlField(g, u.values - u_prev.values)
        records.append(
            StageRecord(
                stage=idx,
                eps=eps,
                delta=delta,
                J_eps=F_val + spec.alpha * tv_smooth + 0.5 * eps * grad_sq,
                J=F_val + spec.alpha * tv,
                F=F_val,
                TV=tv,
                TV_smooth=tv_smooth,
                eps_term=eps * grad_sq,
                grad_norm=stats.grad_norm,
                inner_iters=stats.iterations,
                n_evals=stats.n_evals,
                converged=stats.converged,
                u_change=np.sqrt(inner_product(diff, diff)),
            )
        )
        all_converged = all_converged and stats.converged

    return SolveReport(u=u, lam=lam, y=y, stages=tuple(records), converged=all_converged)


def two_phase_solve(
    spec: ProblemSpec,
    burnin: int = 18,
    stages: int = 10,
    eps0: float = 1e-1,
    delta0: float = 1e-1,
    shrink: float = 0.5,
    grad_tol: float = 1e-8,
    max_inner: int = 400,
    u_init: ControlField | None = None,
) -> SolveReport:
    """Burn-in continuation, then a measured schedule on the found branch.

    Plateau structure emerges somewhere along the continuation path, and
    while it does the stagewise quantities jump around: a single cold
    schedule cannot exhibit clean asymptotics across an emergence event.
    The burn-in phase (no polish) carries the iterate through emergence;
    the measured phase restarts the schedule bookkeeping at the reached
    smoothing level, warm started, so its recorded stages all live on
    one structural branch.  The returned report covers the measured
    phase and ends with the eps = 0 polish stage.
    """
    if burnin > 0:
        burn = HomotopySchedule(
            eps0=eps0, delta0=delta0, shrink=shrink, stages=burnin,
            grad_tol=grad_tol, max_inner=max_inner, polish=False,
        )
        u_init = homotopy_solve(spec, schedule=burn, u_init=u_init).u
        eps0 = eps0 * shrink ** burnin
        delta0 = delta0 * shrink ** burnin
    meas = HomotopySchedule(
        eps0=eps0, delta0=delta0, shrink=shrink, stages=stages,
        grad_tol=grad_tol, max_inner=max_inner, polish=True,
    )
    return homotopy_solve(spec, schedule=meas, u_init=u_init)
