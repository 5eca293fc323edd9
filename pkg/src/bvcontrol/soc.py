"""Second-order condition probes at a candidate stationary control.

The continuum theory restricts curvature tests to critical cones:
directions along which the first-order growth F'(u)v + alpha G'(u; v)
is at most tau * ||z_v||.  Those cones are infinite-dimensional, so this
module samples them with three structured families (smoothed Gaussian
noise, plateau indicators, shifts along u itself) and evaluates the
quadratic forms directionwise.  Everything is reported, nothing proved:
empirical minima of F''(u)v^2 / ||z_v||^2 and /||v||^2 are desk-scale
evidence for the growth constants, and a direct objective scan
J(u + t v) - J(u) over small t checks local minimality the blunt way.

Under the l2 gradient norm the second-order necessary form carries an
extra nonnegative curvature term supported on the active set; it is
computed cellwise and vanishes exactly for directions whose gradient is
parallel to grad u (Cauchy-Schwarz equality).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .grid import ControlField, gradient, inner_product
from .objective import (
    ProblemSpec,
    active_set,
    default_theta,
    eval_J,
    grad_F,
    hess_F_bilinear,
    solve_problem_state,
    tv_directional_derivative,
)
from .state import StateSolution, solve_linearized
from .certificate import plateau_labels

__all__ = [
    "SOCConfig",
    "DirectionRecord",
    "SOCReport",
    "cone_functional",
    "sample_critical_directions",
    "necessary_condition_check",
    "curvature_term",
    "sufficient_condition_scan",
]


@dataclass(frozen=True)
class SOCConfig:
    """Sampling policy for cone probes.

    tau is the cone slack (directions count as critical when the cone
    functional is at most tau * ||z_v||); theta the active-set threshold
    (None: 1e-3 of the largest gradient); samples the number of random
    directions; modes selects the probe families.
    """

    tau: float = 1e-6
    theta: float | None = None
    samples: int = 8
    modes: tuple = ("random-smooth", "plateau-indicator", "gradient-aligned")
    tol: float = 1e-10

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")
        if self.theta is not None and not self.theta > 0.0:
            raise ValueError("theta must be positive when given")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        for mode in self.modes:
            if mode not in ("random-smooth", "plateau-indicator", "gradient-aligned"):
                raise ValueError(f"unknown probe mode {mode!r}")


@dataclass(frozen=True)
class DirectionRecord:
    """Per-direction measurements; None where an op did not fill a slot."""

    vid: str
    cone_value: float
    z_norm: float
    v_norm: float
    in_cone: bool
    strict: bool = False
    hess_value: float | None = None
    curvature: float | None = None
    quad_form: float | None = None
    kappa_hat: float | None = None
    growth_ok: bool | None = None

    def as_json(self) -> dict:
        doc = {"vid": self.vid, "cone_value": float(self.cone_value),
               "z_norm": float(self.z_norm), "v_norm": float(self.v_norm),
               "in_cone": bool(self.in_cone), "strict": bool(self.strict)}
        for key in ("hess_value", "curvature", "quad_form", "kappa_hat"):
            val = getattr(self, key)
            doc[key] = None if val is None else float(val)
        doc["growth_ok"] = None if self.growth_ok is None else bool(self.growth_ok)
        return doc


@dataclass(frozen=True)
class SOCReport:
    """Directionwise records plus empirical growth-constant minima.

    delta_state is min F''v^2 / ||z_v||^2 over cone members and
    delta_control is min F''v^2 / ||v||^2; both None when no member
    carries a Hessian value.  violations counts recorded quadratic
    forms below -tol among strict cone members.
    """

    records: tuple
    tau: float
    theta: float
    tol: float
    delta_state: float | None
    delta_control: float | None
    violations: int
    growth_all_ok: bool | None = None

    def as_json(self) -> dict:
        return {
            "tau": float(self.tau),
            "theta": float(self.theta),
            "tol": float(self.tol),
            "delta_state": None if self.delta_state is None else float(self.delta_state),
            "delta_control": None if self.delta_control is None else float(self.delta_control),
            "violations": int(self.violations),
            "growth_all_ok": None if self.growth_all_ok is None else bool(self.growth_all_ok),
            "records": [r.as_json() for r in self.records],
        }


def _theta_of(ubar: ControlField, spec: ProblemSpec, cfg: SOCConfig) -> float:
    theta = cfg.theta if cfg.theta is not None else default_theta(ubar, spec.norm_choice)
    if theta <= 0.0:
        theta = np.finfo(float).tiny
    return theta


def cone_functional(
    ubar: ControlField,
    v: ControlField,
    spec: ProblemSpec,
    theta: float,
    state: StateSolution | None = None,
    gradF: ControlField | None = None,
) -> float:
    """F'(ubar)v + alpha G'(ubar; v), the first-order growth along v."""
    if gradF is None:
        state = state or solve_problem_state(ubar, spec)
        gradF = grad_F(ubar, spec, state)
    lin = inner_product(gradF, v)
    return lin + spec.alpha * tv_directional_derivative(ubar, v, spec.norm_choice, theta)


def _normalized(v: np.ndarray, grid) -> ControlField | None:
    nrm = grid.h * float(np.linalg.norm(v))
    if nrm <= 0.0:
        return None
    return ControlField(grid, v / nrm)


def _candidates(ubar: ControlField, spec: ProblemSpec, cfg: SOCConfig, rng: np.random.Generator):
    g = ubar.grid
    if "random-smooth" in cfg.modes:
        for i in range(cfg.samples):
            noise = rng.standard_normal((g.mx, g.my))
            yield f"random-smooth-{i}", ndimage.gaussian_filter(noise, sigma=2.0)
    if "plateau-indicator" in cfg.modes:
        labels = plateau_labels(ubar)
        _, counts = np.unique(labels, return_counts=True)
        order = np.argsort(counts)[::-1]
        ids = np.unique(labels)[order]
        for i, lab in enumerate(ids[: cfg.samples]):
            mask = labels == lab
            if mask.sum() < 2:
                continue
            yield f"plateau-indicator-{i}", mask.astype(float)
    if "gradient-aligned" in cfg.modes:
        yield "gradient-aligned-0", ubar.values.copy()
        yield "gradient-aligned-1", ubar.values - float(ubar.values.mean())


def sample_critical_directions(
    ubar: ControlField,
    spec: ProblemSpec,
    cfg: SOCConfig,
    rng: np.random.Generator | None = None,
    state: StateSolution | None = None,
) -> list:
    """Normalized probe directions passing the cone test; may be empty."""
    rng = rng or np.random.default_rng(0)
    state = state or solve_problem_state(ubar, spec)
    gradF = grad_F(ubar, spec, state)
    theta = _theta_of(ubar, spec, cfg)
    members = []
    for vid, raw in _candidates(ubar, spec, cfg, rng):
        v = _normalized(raw, ubar.grid)
        if v is None:
            continue
        cf = cone_functional(ubar, v, spec, theta, gradF=gradF)
        z = solve_linearized(state.y, v, spec.f, operator=state.operator)
        z_norm = ubar.grid.h * float(np.linalg.norm(z.values))
        if cf <= cfg.tau * z_norm:
            members.append((vid, v))
    return members


def curvature_term(ubar: ControlField, v: ControlField, theta: float) -> float:
    """Extra l2-mode curvature: sum_A (|grad v|^2 - (hbar . grad v)^2) / |grad u|.

    Cauchy-Schwarz makes every summand nonnegative, and it vanishes when
    grad v is parallel to grad u cellwise.  Cells off the active set do
    not contribute.
    """
    if theta <= 0.0:
        raise ValueError("theta must be positive")
    dec = active_set(ubar, "l2", theta)
    p = gradient(v)
    h2 = ubar.grid.h ** 2
    dot = dec.hbar_x * p.gx + dec.hbar_y * p.gy
    num = p.gx * p.gx + p.gy * p.gy - dot * dot
    safe = np.where(dec.active, dec.grad_norm, 1.0)
    return h2 * float(np.sum(np.where(dec.active, np.maximum(num, 0.0) / safe, 0.0)))


def _with_ids(directions) -> list:
    out = []
    for i, item in enumerate(directions):
        if isinstance(item, ControlField):
            out.append((f"direction-{i}", item))
        else:
            vid, v = item
            out.append((str(vid), v))
    return out


def _base_records(ubar, directions, spec, cfg, state):
    """Cone data and quadratic forms shared by the two check ops."""
    gradF = grad_F(ubar, spec, state)
    theta = _theta_of(ubar, spec, cfg)
    records = []
    for vid, v in directions:
        cf = cone_functional(ubar, v, spec, theta, gradF=gradF)
        z = solve_linearized(state.y, v, spec.f, operator=state.operator)
        z_norm = ubar.grid.h * float(np.linalg.norm(z.values))
        v_norm = ubar.grid.h * float(np.linalg.norm(v.values))
        hess = hess_F_bilinear(ubar, v, v, spec, state)
        curv = curvature_term(ubar, v, theta) if spec.norm_choice == "l2" else None
        quad = hess + spec.alpha * curv if curv is not None else hess
        records.append(
            DirectionRecord(
                vid=vid,
                cone_value=cf,
                z_norm=z_norm,
                v_norm=v_norm,
                in_cone=cf <= cfg.tau * z_norm,
                strict=abs(cf) <= 1e-10 * max(1.0, z_norm),
                hess_value=hess,
                curvature=curv,
                quad_form=quad,
            )
        )
    return records, theta


def _summary(records, cfg, theta, growth_all_ok=None):
    members = [r for r in records if r.in_cone and r.hess_value is not None]
    d_state = min(
        (r.hess_value / (r.z_norm ** 2) for r in members if r.z_norm > 0.0), default=None
    )
    d_control = min(
        (r.hess_value / (r.v_norm ** 2) for r in members if r.v_norm > 0.0), default=None
    )
    violations = sum(
        1 for r in records if r.strict and r.quad_form is not None and r.quad_form < -cfg.tol
    )
    return SOCReport(
        records=tuple(records),
        tau=cfg.tau,
        theta=theta,
        tol=cfg.tol,
        delta_state=d_state,
        delta_control=d_control,
        violations=violations,
        growth_all_ok=growth_all_ok,
    )


def necessary_condition_check(
    ubar: ControlField,
    directions: list,
    spec: ProblemSpec,
    cfg: SOCConfig,
    state: StateSolution | None = None,
) -> SOCReport:
    """Quadratic forms over given directions; violations among strict members.

    directions may hold bare ControlFields or (vid, ControlField) pairs
    as produced by sample_critical_directions.
    """
    if not directions:
        raise ValueError("directions must be nonempty")
    state = state or solve_problem_state(ubar, spec)
    records, theta = _base_records(ubar, _with_ids(directions), spec, cfg, state)
    return _summary(records, cfg, theta)


def sufficient_condition_scan(
    ubar: ControlField,
    spec: ProblemSpec,
    cfg: SOCConfig,
    rng: np.random.Generator | None = None,
    state: StateSolution | None = None,
    t_grid: np.ndarray | None = None,
    growth_directions: int = 10,
) -> SOCReport:
    """Empirical growth constants plus a direct J(u + t v) >= J(u) scan.

    The scan fits J(u + t v) - J(u) = (kappa/2) t^2 per direction by
    least squares over t in [1e-3, 1e-1] and flags any objective drop
    beyond rounding.
    """
    rng = rng or np.random.default_rng(0)
    state = state or solve_problem_state(ubar, spec)
    directions = sample_critical_directions(ubar, spec, cfg, rng=rng, state=state)
    if not directions:
        records: list = []
        theta = _theta_of(ubar, spec, cfg)
        return _summary(records, cfg, theta, growth_all_ok=None)
    records, theta = _base_records(ubar, directions, spec, cfg, state)

    if t_grid is None:
        t_grid = np.logspace(-3.0, -1.0, 7)
    J0 = eval_J(ubar, spec, state)
    slack = 1e-12 * (1.0 + abs(J0))
    scanned = []
    all_ok = True
    for rec, (vid, v) in list(zip(records, directions))[:growth_directions]:
        gaps = []
        for t in t_grid:
            trial = ControlField(ubar.grid, ubar.values + t * v.values)
            gaps.append(eval_J(trial, spec, solve_problem_state(trial, spec, y0=state.y)) - J0)
        gaps_arr = np.asarray(gaps)
        ok = bool(np.all(gaps_arr >= -slack))
        t2 = t_grid ** 2
        kappa = 2.0 * float(np.dot(gaps_arr, t2) / np.dot(t2, t2))
        scanned.append(replace(rec, kappa_hat=kappa, growth_ok=ok))
        all_ok = all_ok and ok
    records = scanned + records[len(scanned):]
    return _summary(records, cfg, theta, growth_all_ok=all_ok)
