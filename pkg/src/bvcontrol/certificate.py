"""First-order optimality certificates and control-structure diagnostics.

A stationary control of the nonsmooth objective is certified by
exhibiting an admissible dual field lambda: pointwise dual norm at most
one, pairing <lambda, grad u> equal to TV(u), and -alpha div(lambda)
balancing the smooth gradient phi + gamma u + beta int u.  Nothing here
assumes how (u, lambda) was produced; check_first_order just measures
how far a given pair is from that system.

refine_dual improves the dual witness without touching u.  Any lambda
satisfying the bound and the pairing is equally valid, so the witness
may be optimized over that admissible set: components on flat cells are
free, and on steep cells the component orthogonal to grad u costs the
pairing only at second order.  This matters in practice because the
Huber dual grad u / |grad u| amplifies the last-bit granularity of u on
flat cells by 1/delta, burying an otherwise clean stationarity residual
under rounding noise that no amount of further minimization can remove.

The structure report quantifies the piecewise-constancy that the TV
penalty promotes: plateaus are connected cell regions whose values agree
within a quantization tolerance, and the jump set is the interface
between them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsmr

from .grid import (
    ControlField,
    GradField,
    divergence,
    gradient,
    gradient_matrix,
)
from .objective import (
    ProblemSpec,
    default_theta,
    eval_TV,
    eval_TV_smoothed,
    grad_F,
    solve_problem_state,
)
from .state import StateSolution

__all__ = [
    "Certificate",
    "StructureReport",
    "check_first_order",
    "refine_dual",
    "plateau_labels",
    "structure_report",
]


@dataclass(frozen=True)
class Certificate:
    """Measured distance of a (u, lambda) pair from first-order stationarity.

    residual_abs is the L2(omega) norm of -alpha div(lambda) + phi +
    gamma u + beta int u; residual_rel divides by scale, the largest
    L2 norm among the gradient's constituent terms, so the figure is
    invariant under rescaling the problem data.  dual_overshoot is the
    amount by which the worst cell exceeds the unit dual-norm bound.
    pairing_gap is TV(u) - <lambda, grad u>, nonnegative whenever the
    dual bound holds.  saturation_fraction is the share of active cells
    (gradient above theta) whose dual has unit norm within stol; the
    linf sign fractions refine this per component and sign.  Fractions
    over an empty active set are reported as 1.0 with the count 0.
    """

    residual_abs: float
    residual_rel: float
    scale: float
    dual_max: float
    dual_overshoot: float
    pairing_gap: float
    tv_value: float
    saturation_fraction: float
    active_cells: int
    active_fraction: float
    theta: float
    stol: float
    norm_choice: str
    sign_pos_x: float | None = None
    sign_neg_x: float | None = None
    sign_pos_y: float | None = None
    sign_neg_y: float | None = None

    def __post_init__(self):
        assert self.residual_abs >= 0.0 and self.residual_rel >= 0.0
        assert 0.0 <= self.saturation_fraction <= 1.0
        assert self.theta > 0.0 and self.stol > 0.0

    def as_json(self) -> dict:
        """Flat dict with stable keys for machine consumption."""
        doc = {
            "residual_abs": float(self.residual_abs),
            "residual_rel": float(self.residual_rel),
            "scale": float(self.scale),
            "dual_max": float(self.dual_max),
            "dual_overshoot": float(self.dual_overshoot),
            "pairing_gap": float(self.pairing_gap),
            "tv_value": float(self.tv_value),
            "saturation_fraction": float(self.saturation_fraction),
            "active_cells": int(self.active_cells),
            "active_fraction": float(self.active_fraction),
            "theta": float(self.theta),
            "stol": float(self.stol),
            "norm_choice": self.norm_choice,
        }
        for key in ("sign_pos_x", "sign_neg_x", "sign_pos_y", "sign_neg_y"):
            val = getattr(self, key)
            doc[key] = None if val is None else float(val)
        return doc


@dataclass(frozen=True)
class StructureReport:
    """Plateau decomposition of a control field.

    Plateaus are connected components of the cell grid under 4-adjacency
    where neighboring values agree within quantization_tol; areas are in
    domain units and sum to the control-region area exactly.  The jump
    length counts inter-plateau cell interfaces, h apiece.
    """

    plateau_count: int
    plateau_areas: tuple
    active_fraction: float
    jump_length: float
    quantization_tol: float
    domain_area: float

    def __post_init__(self):
        assert self.plateau_count == len(self.plateau_areas)
        total = float(np.sum(self.plateau_areas)) if self.plateau_areas else 0.0
        assert abs(total - self.domain_area) <= 1e-12 * max(1.0, self.domain_area)

    def coverage(self, k: int) -> float:
        """Fraction of the control region covered by the k largest plateaus."""
        if not self.plateau_areas:
            return 0.0
        return float(np.sum(self.plateau_areas[:k])) / self.domain_area

    def as_json(self) -> dict:
        return {
            "plateau_count": int(self.plateau_count),
            "plateau_areas": [float(a) for a in self.plateau_areas],
            "active_fraction": float(self.active_fraction),
            "jump_length": float(self.jump_length),
            "quantization_tol": float(self.quantization_tol),
            "domain_area": float(self.domain_area),
        }


def _component_norm(lam: GradField, norm_choice: str) -> np.ndarray:
    if norm_choice == "l2":
        return np.hypot(lam.gx, lam.gy)
    return np.maximum(np.abs(lam.gx), np.abs(lam.gy))


def _fraction(mask_ok: np.ndarray, mask_all: np.ndarray) -> float:
    n = int(mask_all.sum())
    if n == 0:
        return 1.0
    return float(np.sum(mask_ok & mask_all)) / n


def check_first_order(
    u: ControlField,
    lam: GradField,
    spec: ProblemSpec,
    theta: float | None = None,
    stol: float = 1e-6,
    state: StateSolution | None = None,
) -> Certificate:
    """Measure the stationarity system for a given control and dual field.

    theta defaults to 1e-3 times the largest gradient magnitude of u in
    the matching norm; stol is the saturation slack on |lambda| = 1.
    """
    g = u.grid
    state = state or solve_problem_state(u, spec)
    q = grad_F(u, spec, state)
    tv_grad = -divergence(lam).values
    resid = spec.alpha * tv_grad + q.values
    h = g.h

    def l2(vals):
        return h * float(np.linalg.norm(vals))

    phi_part = q.values - spec.gamma * u.values - spec.beta * h * h * float(np.sum(u.values))
    scale = max(
        l2(spec.alpha * tv_grad),
        l2(phi_part),
        l2(spec.gamma * u.values),
        l2(np.full_like(u.values, spec.beta * h * h * float(np.sum(u.values)))),
    )
    residual_abs = l2(resid)
    residual_rel = residual_abs / scale if scale > 0.0 else residual_abs

    p = gradient(u)
    tv = eval_TV(u, spec.norm_choice)
    pairing = h * h * float(np.sum(lam.gx * p.gx + lam.gy * p.gy))
    dual_max = float(np.max(_component_norm(lam, spec.norm_choice)))

    if theta is None:
        theta = default_theta(u, spec.norm_choice)
    if theta <= 0.0:
        # u constant: no active set; keep thresholds positive per contract
        theta = np.finfo(float).tiny

    if spec.norm_choice == "l2":
        s = np.hypot(p.gx, p.gy)
        active = s > theta
        sat = np.hypot(lam.gx, lam.gy) >= 1.0 - stol
        saturation = _fraction(sat, active)
        signs = dict(sign_pos_x=None, sign_neg_x=None, sign_pos_y=None, sign_neg_y=None)
        n_active = int(active.sum())
    else:
        ok_px = lam.gx >= 1.0 - stol
        ok_nx = lam.gx <= -(1.0 - stol)
        ok_py = lam.gy >= 1.0 - stol
        ok_ny = lam.gy <= -(1.0 - stol)
        a_px, a_nx = p.gx > theta, p.gx < -theta
        a_py, a_ny = p.gy > theta, p.gy < -theta
        signs = dict(
            sign_pos_x=_fraction(ok_px, a_px),
            sign_neg_x=_fraction(ok_nx, a_nx),
            sign_pos_y=_fraction(ok_py, a_py),
            sign_neg_y=_fraction(ok_ny, a_ny),
        )
        comp_active = np.concatenate([(np.abs(p.gx) > theta).ravel(), (np.abs(p.gy) > theta).ravel()])
        comp_ok = np.concatenate(
            [(lam.gx * np.sign(p.gx) >= 1.0 - stol).ravel(), (lam.gy * np.sign(p.gy) >= 1.0 - stol).ravel()]
        )
        saturation = _fraction(comp_ok, comp_active)
        n_active = int((np.abs(p.gx) > theta).sum() + (np.abs(p.gy) > theta).sum())
        active = (np.abs(p.gx) > theta) | (np.abs(p.gy) > theta)

    m = g.mx * g.my
    return Certificate(
        residual_abs=residual_abs,
        residual_rel=residual_rel,
        scale=scale,
        dual_max=dual_max,
        dual_overshoot=max(0.0, dual_max - 1.0),
        pairing_gap=abs(tv - pairing),
        tv_value=tv,
        saturation_fraction=saturation,
        active_cells=n_active,
        active_fraction=float(active.sum()) / m,
        theta=float(theta),
        stol=float(stol),
        norm_choice=spec.norm_choice,
        **signs,
    )


_DAMP_LADDER = (0.0, 1e-3, 1e-4, 1e-5, 1e-6)


def refine_dual(
    u: ControlField,
    spec: ProblemSpec,
    delta: float,
    lam0: GradField | None = None,
    state: StateSolution | None = None,
    gap_budget: float | None = None,
    rounds: int = 4,
) -> GradField:
    """Best admissible dual witness for u by constrained least squares.

    The dual is decomposed by role.  Cells whose gradient magnitude is
    large enough that rotating their dual would spend the pairing budget
    keep the Huber direction grad u / |grad u| and get one transverse
    unknown, whose pairing cost is quadratic and capped.  The remaining
    cells (a skirt threshold chosen so their worst-case pairing spend
    fits half of gap_budget, default delta |omega| + 1e-8) carry their
    full dual freedom.  Each least-squares pass runs a small ladder of
    Tikhonov damping values: undamped solutions can demand |lambda| far
    beyond the unit ball, which projection then ruins, while damping
    keeps corrections proportionate.  Cells that still land on the ball
    are pinned at their direction for the next pass (an active-set
    sweep), and the best measured residual over all passes wins.
    Under the linf convention the same sweep runs componentwise with
    box clipping in place of ball projection.
    """
    if spec.alpha <= 0.0:
        raise ValueError("refine_dual requires alpha > 0")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    g = u.grid
    m = g.mx * g.my
    h = g.h
    h2 = h * h
    state = state or solve_problem_state(u, spec)
    if lam0 is None:
        _, _, lam0 = eval_TV_smoothed(u, spec.norm_choice, delta)
    if gap_budget is None:
        gap_budget = delta * g.omega_area + 1e-8

    q = grad_F(u, spec, state).values.ravel()
    G = gradient_matrix(g)
    GT = G.T.tocsc()
    p = gradient(u)
    damp_scale = spec.alpha / h

    def residual_norm(lamvec: np.ndarray) -> float:
        return h * float(np.linalg.norm(q + spec.alpha * (GT @ lamvec)))

    if spec.norm_choice == "l2":
        s = np.hypot(p.gx, p.gy).ravel()
        # skirt: free every cell whose worst-case pairing spend 2 s h^2
        # fits, in ascending order of s, into half the budget
        order = np.argsort(s)
        cum = np.cumsum(2.0 * s[order] * h2)
        kfree = int(np.searchsorted(cum, 0.5 * gap_budget, side="right"))
        tau = max(s[order[kfree - 1]] if kfree > 0 else delta, delta)
        pinned = s > tau
        denom = np.maximum(s, delta)
        lx = lam0.gx.ravel().copy()
        ly = lam0.gy.ravel().copy()
        lx[pinned] = (p.gx.ravel() / denom)[pinned]
        ly[pinned] = (p.gy.ravel() / denom)[pinned]
        best = (residual_norm(np.concatenate([lx, ly])), lx.copy(), ly.copy())

        for _ in range(max(rounds, 1)):
            free = ~pinned
            fidx = np.where(free)[0]
            sidx = np.where(pinned)[0]
            nf, ns = fidx.size, sidx.size
            pn = np.hypot(lx[sidx], ly[sidx])
            ptx = np.where(pn > 0.0, lx[sidx] / np.maximum(pn, 1e-300), 1.0)
            pty = np.where(pn > 0.0, ly[sidx] / np.maximum(pn, 1e-300), 0.0)
            rows = np.concatenate([fidx, fidx + m, sidx, sidx + m])
            cols = np.concatenate(
                [np.arange(nf), nf + np.arange(nf), 2 * nf + np.arange(ns), 2 * nf + np.arange(ns)]
            )
            vals = np.concatenate([np.ones(nf), np.ones(nf), -pty, ptx])
            basis = sp.csr_matrix((vals, (rows, cols)), shape=(2 * m, 2 * nf + ns))
            A = spec.alpha * (GT @ basis)
            lp = np.zeros(2 * m)
            lp[sidx] = ptx
            lp[sidx + m] = pty
            x0 = np.concatenate([lx[fidx], ly[fidx], np.zeros(ns)])
            r0 = q + spec.alpha * (GT @ lp) + A @ x0
            spend = h2 * float(np.sum(s[sidx])) if ns else 0.0
            sig_cap = np.sqrt(0.25 * gap_budget / spend) if spend > 0.0 else 0.0

            round_best = None
            for c in _DAMP_LADDER:
                sol = lsmr(A, -r0, damp=c * damp_scale, atol=1e-14, btol=1e-14,
                           maxiter=40000, conlim=1e14)
                x = x0 + sol[0]
                nrm = np.hypot(x[:nf], x[nf : 2 * nf])
                shr = np.where(nrm > 1.0, 1.0 / np.maximum(nrm, 1.0), 1.0)
                sig = np.clip(x[2 * nf :], -sig_cap, sig_cap)
                rho = np.sqrt(np.maximum(0.0, 1.0 - sig * sig))
                LX, LY = np.zeros(m), np.zeros(m)
                LX[fidx] = x[:nf] * shr
                LY[fidx] = x[nf : 2 * nf] * shr
                LX[sidx] = rho * ptx - sig * pty
                LY[sidx] = rho * pty + sig * ptx
                rr = residual_norm(np.concatenate([LX, LY]))
                if round_best is None or rr < round_best[0]:
                    round_best = (rr, LX, LY, nrm)
            rr, lx, ly, nrm = round_best
            if rr < best[0]:
                best = (rr, lx.copy(), ly.copy())
            hits = np.zeros(m, bool)
            hits[fidx[nrm >= 1.0 - 1e-9]] = True
            if not hits.any():
                break
            pinned = pinned | hits
        _, lx, ly = best
        return GradField(g, lx.reshape(g.mx, g.my), ly.reshape(g.mx, g.my))

    # linf: componentwise box; the skirt frees the smallest |grad_j u|
    comp = np.concatenate([p.gx.ravel(), p.gy.ravel()])
    acomp = np.abs(comp)
    order = np.argsort(acomp)
    cum = np.cumsum(2.0 * acomp[order] * h2)
    kfree = int(np.searchsorted(cum, 0.5 * gap_budget, side="right"))
    tau = max(acomp[order[kfree - 1]] if kfree > 0 else delta, delta)
    pinned = acomp > tau
    lam = np.concatenate([lam0.gx.ravel(), lam0.gy.ravel()]).copy()
    lam[pinned] = np.sign(comp[pinned])
    best = (residual_norm(lam), lam.copy())

    for _ in range(max(rounds, 1)):
        free = ~pinned
        fidx = np.where(free)[0]
        nf = fidx.size
        if nf == 0:
            break
        basis = sp.csr_matrix((np.ones(nf), (fidx, np.arange(nf))), shape=(2 * m, nf))
        A = spec.alpha * (GT @ basis)
        lp = np.where(free, 0.0, lam)
        x0 = lam[fidx]
        r0 = q + spec.alpha * (GT @ lp) + A @ x0
        round_best = None
        for c in _DAMP_LADDER:
            sol = lsmr(A, -r0, damp=c * damp_scale, atol=1e-14, btol=1e-14,
                       maxiter=40000, conlim=1e14)
            x = np.clip(x0 + sol[0], -1.0, 1.0)
            cand = lp.copy()
            cand[fidx] = x
            rr = residual_norm(cand)
            if round_best is None or rr < round_best[0]:
                round_best = (rr, cand, x0 + sol[0])
        rr, lam, raw = round_best
        if rr < best[0]:
            best = (rr, lam.copy())
        hits = np.zeros(2 * m, bool)
        hits[fidx[np.abs(raw) >= 1.0 - 1e-9]] = True
        if not hits.any():
            break
        pinned = pinned | hits
    _, lam = best
    return GradField(g, lam[:m].reshape(g.mx, g.my), lam[m:].reshape(g.mx, g.my))


def _find(parent: np.ndarray, i: int) -> int:
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def _neighbor_pairs(mx: int, my: int):
    idx = np.arange(mx * my).reshape(mx, my)
    pairs_a = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    pairs_b = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    return pairs_a, pairs_b


def _default_qtol(vals: np.ndarray) -> float:
    # relative to the value range so the clustering is scale-free, with a
    # floor at 1 ppb of the field magnitude so a constant-to-rounding
    # field does not shatter into per-cell plateaus
    spread = 1e-3 * float(vals.max() - vals.min())
    floor = 1e-9 * (1.0 + float(np.abs(vals).max()))
    return max(spread, floor)


def plateau_labels(u: ControlField, quantization_tol: float | None = None) -> np.ndarray:
    """Plateau id per cell: union-find over value-close 4-neighbors.

    quantization_tol defaults to 1e-3 of the value range (with an
    absolute floor at rounding scale); a constant field is a single
    plateau.
    """
    g = u.grid
    vals = u.values
    if quantization_tol is None:
        quantization_tol = _default_qtol(vals)
    if quantization_tol < 0.0:
        raise ValueError("quantization_tol must be nonnegative")
    m = g.mx * g.my
    flat = vals.ravel()
    pairs_a, pairs_b = _neighbor_pairs(g.mx, g.my)
    close = np.abs(flat[pairs_a] - flat[pairs_b]) <= quantization_tol

    parent = np.arange(m)
    for a, b in zip(pairs_a[close], pairs_b[close]):
        ra, rb = _find(parent, int(a)), _find(parent, int(b))
        if ra != rb:
            parent[rb] = ra
    roots = np.array([_find(parent, i) for i in range(m)])
    return roots.reshape(g.mx, g.my)


def structure_report(u: ControlField, quantization_tol: float | None = None) -> StructureReport:
    """Plateau decomposition of u; see plateau_labels for the clustering."""
    g = u.grid
    if quantization_tol is None:
        quantization_tol = _default_qtol(u.values)
    roots = plateau_labels(u, quantization_tol).ravel()
    pairs_a, pairs_b = _neighbor_pairs(g.mx, g.my)
    m = g.mx * g.my

    h2 = g.h * g.h
    _, counts = np.unique(roots, return_counts=True)
    areas = np.sort(counts.astype(float))[::-1] * h2
    jumps = int(np.sum(roots[pairs_a] != roots[pairs_b]))

    theta = default_theta(u)
    if theta > 0.0:
        pgrad = gradient(u)
        active = float(np.sum(np.hypot(pgrad.gx, pgrad.gy) > theta)) / m
    else:
        active = 0.0
    return StructureReport(
        plateau_count=int(counts.size),
        plateau_areas=tuple(float(a) for a in areas),
        active_fraction=active,
        jump_length=g.h * jumps,
        quantization_tol=float(quantization_tol),
        domain_area=g.omega_area,
    )
