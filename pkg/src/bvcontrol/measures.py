"""Finite-support vector measures: norms, decompositions, subdifferentials.

Everything the TV machinery relies on is exercised here on point masses,
where the measure theory collapses to exact finite sums. A measure mu is a
list of atoms (2D location, R^2 weight) together with the choice of the
pointwise norm on weights:

    "l2"   atom mass |w|_2, total variation = sum of Euclidean weight norms
    "linf" test functions bounded in the max norm, so the total variation
           is the sum of the componentwise (Jordan) variations,
           ||mu|| = sum_j ||mu_j||, i.e. atom mass |w|_1

Subgradients of the norm are continuous vector fields lambda with
<lambda, mu> = ||mu|| and <lambda, nu> <= ||nu|| for every nu; membership is
checked through the pairing gap and a sampled dual-norm bound, and the
support conditions (saturation / Jordan sign pattern) are reported as
diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeasureError",
    "PointMassMeasure",
    "Decomposition",
    "MembershipReport",
    "tv_norm",
    "component_norms",
    "combine",
    "lebesgue_decompose",
    "directional_derivative",
    "subdiff_membership",
    "bump_field",
]

_NORM_CHOICES = ("l2", "linf")


class MeasureError(ValueError):
    """Invalid measure data."""


@dataclass(frozen=True, eq=False)
class PointMassMeasure:
    """Finite vector measure sum_i w_i delta_{x_i} with w_i in R^2."""

    points: np.ndarray
    weights: np.ndarray
    norm_choice: str = "l2"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        wts = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if pts.shape[1] != 2 or wts.shape[1] != 2 or pts.shape[0] != wts.shape[0]:
            raise MeasureError(
                f"need matching (k,2) points and weights, got {pts.shape} and {wts.shape}"
            )
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(wts))):
            raise MeasureError("non-finite atom data")
        if self.norm_choice not in _NORM_CHOICES:
            raise MeasureError(f"norm_choice must be one of {_NORM_CHOICES}")
        keys = {(float(x), float(y)) for x, y in pts}
        if len(keys) != pts.shape[0]:
            raise MeasureError("atom locations must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    def atom_masses(self) -> np.ndarray:
        """|mu|({x_i}) for each atom under the measure's norm choice."""
        if self.norm_choice == "l2":
            return np.linalg.norm(self.weights, axis=1)
        return np.abs(self.weights).sum(axis=1)


def tv_norm(mu: PointMassMeasure) -> float:
    """Total variation norm ||mu||; the sup over test functions is attained."""
    return float(mu.atom_masses().sum())


def component_norms(mu: PointMassMeasure) -> np.ndarray:
    """Componentwise variations (||mu_1||, ||mu_2||)."""
    return np.abs(mu.weights).sum(axis=0)


def _atom_index(mu: PointMassMeasure) -> dict:
    return {(float(x), float(y)): i for i, (x, y) in enumerate(mu.points)}


def combine(mu: PointMassMeasure, nu: PointMassMeasure, s: float = 1.0, t: float = 1.0) -> PointMassMeasure:
    """s*mu + t*nu, merging atoms at exactly matching locations."""
    if mu.norm_choice != nu.norm_choice:
        raise MeasureError("measures use different norm choices")
    index = _atom_index(mu)
    pts = [tuple(p) for p in mu.points]
    wts = list(s * mu.weights)
    for p, w in zip(nu.points, nu.weights):
        key = (float(p[0]), float(p[1]))
        if key in index:
            wts[index[key]] = wts[index[key]] + t * w
        else:
            pts.append(key)
            wts.append(t * w)
    return PointMassMeasure(np.array(pts), np.array(wts), mu.norm_choice)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Lebesgue decomposition nu = h_nu d|mu| + nu_s on shared atoms.

    shared_points/density/mu_mass describe the absolutely continuous part:
    nu_a has weight density(i) * mu_mass(i) at shared_points(i).
    """

    shared_points: np.ndarray
    density: np.ndarray
    mu_mass: np.ndarray
    absolutely_continuous: PointMassMeasure
    singular: PointMassMeasure


def lebesgue_decompose(nu: PointMassMeasure, mu: PointMassMeasure) -> Decomposition:
    """Split nu into its |mu|-absolutely-continuous and singular parts.

    An atom of nu is absolutely continuous iff its location carries
    |mu|-mass; there the density is h_nu = weight(nu) / |mu|({x}).
    Reconstruction nu_a + nu_s = nu is exact.
    """
    if mu.norm_choice != nu.norm_choice:
        raise MeasureError("measures use different norm choices")
    masses = mu.atom_masses()
    index = _atom_index(mu)
    ac_rows, sing_rows = [], []
    for i, p in enumerate(nu.points):
        j = index.get((float(p[0]), float(p[1])))
        if j is not None and masses[j] > 0.0:
            ac_rows.append((i, j))
        else:
            sing_rows.append(i)
    shared_points = nu.points[[i for i, _ in ac_rows]].reshape(-1, 2)
    mu_mass = np.array([masses[j] for _, j in ac_rows])
    density = nu.weights[[i for i, _ in ac_rows]].reshape(-1, 2)
    if len(ac_rows):
        density = density / mu_mass[:, None]
    ac = PointMassMeasure(
        shared_points if len(ac_rows) else np.zeros((0, 2)),
        nu.weights[[i for i, _ in ac_rows]].reshape(-1, 2),
        nu.norm_choice,
    )
    sing = PointMassMeasure(
        nu.points[sing_rows].reshape(-1, 2),
        nu.weights[sing_rows].reshape(-1, 2),
        nu.norm_choice,
    )
    return Decomposition(shared_points, density, mu_mass, ac, sing)


def directional_derivative(mu: PointMassMeasure, nu: PointMassMeasure) -> float:
    """One-sided derivative g'(mu; nu) of the TV norm, by the atom formulas.

    l2 choice: integral of h_nu against mu plus the norm of the singular
    part, which on atoms reads

        sum_{shared} (w_nu . w_mu) / |w_mu|_2 + sum_{disjoint} |w_nu|_2.

    linf choice: the same per component with sign(w_mu_j) as the density
    direction, singular where the component of mu vanishes.
    """
    if mu.norm_choice != nu.norm_choice:
        raise MeasureError("measures use different norm choices")
    index = _atom_index(mu)
    total = 0.0
    if mu.norm_choice == "l2":
        masses = mu.atom_masses()
        for p, w in zip(nu.points, nu.weights):
            j = index.get((float(p[0]), float(p[1])))
            if j is not None and masses[j] > 0.0:
                total += float(w @ mu.weights[j]) / masses[j]
            else:
                total += float(np.linalg.norm(w))
        return total
    for p, w in zip(nu.points, nu.weights):
        j = index.get((float(p[0]), float(p[1])))
        wj = mu.weights[j] if j is not None else np.zeros(2)
        for c in range(2):
            if wj[c] != 0.0:
                total += float(np.sign(wj[c]) * w[c])
            else:
                total += abs(float(w[c]))
    return total


@dataclass(frozen=True, eq=False)
class MembershipReport:
    """Diagnostics for lambda in subdiff(|| . ||)(mu).

    Membership itself is pairing_ok and dual_ok; the support fields report
    the structural consequences (saturation on atoms for l2, the Jordan
    sign pattern per component for linf) without gating membership.
    """

    norm_choice: str
    pairing: float
    tv: float
    gap: float
    pairing_ok: bool
    dual_sup: float
    dual_ok: bool
    is_member: bool
    atom_dual_norms: np.ndarray
    atom_saturated: np.ndarray | None
    component_sign_ok: np.ndarray | None
    component_sign_error: np.ndarray | None
    pairing_tol: float
    support_tol: float


def subdiff_membership(
    lam,
    mu: PointMassMeasure,
    domain: tuple = (0.0, 1.0, 0.0, 1.0),
    sample: int = 100,
    pairing_tol: float = 1e-9,
    support_tol: float = 1e-6,
) -> MembershipReport:
    """Check lambda against the two subdifferential relations.

    lam is a vectorized callable mapping (N, 2) points to (N, 2) values.
    The dual-norm bound is verified on the atoms plus a sample x sample
    interior lattice of the domain (finite surrogate of the sup over omega).
    """
    lam_atoms = _eval_field(lam, mu.points)
    pairing = float(np.sum(lam_atoms * mu.weights))
    tv = tv_norm(mu)
    gap = tv - pairing

    ax, bx, ay, by = domain
    xs = np.linspace(ax, bx, sample + 2)[1:-1]
    ys = np.linspace(ay, by, sample + 2)[1:-1]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    lattice = np.column_stack([X.ravel(), Y.ravel()])
    lam_lattice = _eval_field(lam, lattice)

    if mu.norm_choice == "l2":
        dual = lambda v: np.linalg.norm(v, axis=1)
    else:
        dual = lambda v: np.max(np.abs(v), axis=1)
    atom_dual = dual(lam_atoms)
    dual_sup = float(max(atom_dual.max(initial=0.0), dual(lam_lattice).max(initial=0.0)))

    pairing_ok = abs(gap) <= pairing_tol * max(1.0, tv)
    dual_ok = dual_sup <= 1.0 + pairing_tol

    atom_saturated = None
    component_sign_ok = None
    component_sign_error = None
    if mu.norm_choice == "l2":
        massed = mu.atom_masses() > 0.0
        atom_saturated = np.abs(atom_dual - 1.0) <= support_tol
        atom_saturated = atom_saturated | ~massed
    else:
        errs = np.zeros(2)
        oks = np.ones(2, dtype=bool)
        for c in range(2):
            pos = mu.weights[:, c] > 0.0
            neg = mu.weights[:, c] < 0.0
            err = 0.0
            if pos.any():
                err = max(err, float(np.max(np.abs(lam_atoms[pos, c] - 1.0))))
            if neg.any():
                err = max(err, float(np.max(np.abs(lam_atoms[neg, c] + 1.0))))
            errs[c] = err
            oks[c] = err <= support_tol
        component_sign_ok = oks
        component_sign_error = errs

    return MembershipReport(
        norm_choice=mu.norm_choice,
        pairing=pairing,
        tv=tv,
        gap=gap,
        pairing_ok=pairing_ok,
        dual_sup=dual_sup,
        dual_ok=dual_ok,
        is_member=pairing_ok and dual_ok,
        atom_dual_norms=atom_dual,
        atom_saturated=atom_saturated,
        component_sign_ok=component_sign_ok,
        component_sign_error=component_sign_error,
        pairing_tol=pairing_tol,
        support_tol=support_tol,
    )


def _eval_field(lam, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(lam(points), dtype=float)
    if vals.shape != points.shape:
        raise MeasureError(
            f"test field returned shape {vals.shape} for {points.shape} points"
        )
    if not np.all(np.isfinite(vals)):
        raise MeasureError("test field returned non-finite values")
    return vals


def bump_field(centers, values, radius: float):
    """Continuous vector field: quadratic bumps carrying given values.

    Each center contributes value * (1 - |x-c|/radius)^2 inside its radius;
    bumps vanish outside, so with radius below the distance of the centers
    to the domain boundary the field is admissible as a C0 test function.
    Useful for building subgradient candidates at prescribed atoms.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))

    def field(points):
        points = np.atleast_2d(points)
        out = np.zeros((points.shape[0], 2))
        for c, v in zip(centers, values):
            d = np.linalg.norm(points - c, axis=1)
            w = np.clip(1.0 - d / radius, 0.0, None) ** 2
            out += w[:, None] * v
        return out

    return field
