"""Semilinear elliptic state equation, linearized solves, adjoint solve.

The state equation on the unit square with homogeneous Dirichlet data is

    -Laplace(y) + f(x, y) = u chi_omega,   f(x, y) = c0(x) y + a y^3 + d0(x)

with c0 >= 0 and a >= 0, so f is monotone in y and the linearized operator
-Laplace_h + diag(f_y(y)) is symmetric positive definite. That one operator
backs all three linear solves at a state (linearized, second linearized,
adjoint), which is what makes the discrete adjoint identity exact.

Discretization: 5-point Laplacian on the interior nodes, mesh width
h = 1/(nx+1); controls enter through zero-extension off the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import ControlField, Grid, ScalarField, embed

__all__ = [
    "NonConvergence",
    "LinearSolveError",
    "NonlinearitySpec",
    "StateSolution",
    "EllipticOperator",
    "laplacian_matrix",
    "solve_state",
    "solve_state_difference",
    "solve_linearized",
    "solve_second_linearized",
    "solve_adjoint",
]

# Grids in scope stay small; beyond this many unknowns switch to CG.
_DIRECT_LIMIT = 1 << 16


class NonConvergence(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message: str, residual_norm: float, iterations: int):
        super().__init__(f"{message} (residual {residual_norm:.3e} after {iterations} iterations)")
        self.residual_norm = residual_norm
        self.iterations = iterations


class LinearSolveError(RuntimeError):
    """Inner linear solve (CG or factorization) broke down."""


def _coeff(value, grid: Grid, name: str) -> np.ndarray | float:
    """Resolve a coefficient given as scalar, array, or ScalarField."""
    if isinstance(value, ScalarField):
        if value.grid != grid:
            raise ValueError(f"{name} lives on a different grid")
        return value.values
    if np.isscalar(value):
        return float(value)
    arr = np.asarray(value, dtype=float)
    if arr.shape != (grid.nx, grid.ny):
        raise ValueError(f"{name} has shape {arr.shape}, expected {(grid.nx, grid.ny)}")
    return arr


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """f(x, y) = c0(x) y + a y^3 + d0(x) with c0 >= 0, a >= 0.

    The family keeps f monotone, covers the affine special case a = 0, and
    has a nontrivial second derivative f_yy = 6 a y for the curvature terms.
    c0 and d0 may be scalars, (nx, ny) arrays, or ScalarFields.
    """

    c0: object = 0.0
    a: float = 0.0
    d0: object = 0.0

    def __post_init__(self):
        if float(self.a) < 0.0:
            raise ValueError("cubic coefficient a must be nonnegative (monotonicity)")
        c0 = self.c0.values if isinstance(self.c0, ScalarField) else np.asarray(self.c0, dtype=float)
        if np.any(c0 < 0.0):
            raise ValueError("c0 must be nonnegative pointwise (monotonicity)")
        object.__setattr__(self, "a", float(self.a))

    @property
    def is_affine(self) -> bool:
        return self.a == 0.0

    def f(self, y: np.ndarray, grid: Grid) -> np.ndarray:
        c0 = _coeff(self.c0, grid, "c0")
        d0 = _coeff(self.d0, grid, "d0")
        return c0 * y + self.a * y ** 3 + d0 * np.ones_like(y)

    def fy(self, y: np.ndarray, grid: Grid) -> np.ndarray:
        c0 = _coeff(self.c0, grid, "c0")
        return c0 * np.ones_like(y) + 3.0 * self.a * y ** 2

    def fyy(self, y: np.ndarray, grid: Grid) -> np.ndarray:
        return 6.0 * self.a * y

    def f_difference(self, y: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
        """f(y + w) - f(y) without cancellation: every term is O(w).

        The constant d0 drops out exactly and the cubic expands to
        a w (3 y^2 + 3 y w + w^2), so the result keeps full relative
        accuracy even when ||w|| is far below the float resolution of y.
        """
        c0 = _coeff(self.c0, grid, "c0")
        return (c0 + self.a * (3.0 * y * y + 3.0 * y * w + w * w)) * w


@lru_cache(maxsize=32)
def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """-Laplace_h on C-order flattened interior values (SPD, 5-point)."""
    nx, ny, h = grid.nx, grid.ny, grid.h

    def tridiag(n):
        return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])

    A = sp.kron(tridiag(nx), sp.eye(ny)) + sp.kron(sp.eye(nx), tridiag(ny))
    return (A / h ** 2).tocsr()


class EllipticOperator:
    """-Laplace_h + diag(q) with q >= 0, plus solves against it.

    method "direct" uses a cached sparse LU; "cg" runs diagonally
    preconditioned conjugate gradients to 1e-12 relative; "auto" picks
    direct for small grids. The last relative residual is recorded.
    """

    def __init__(self, grid: Grid, q: np.ndarray, method: str = "auto"):
        q = np.asarray(q, dtype=float)
        if q.shape != (grid.nx, grid.ny):
            raise ValueError("coefficient shape mismatch")
        if np.any(q < 0.0):
            raise ValueError("operator coefficient must be nonnegative (SPD)")
        self.grid = grid
        self.matrix = (laplacian_matrix(grid) + sp.diags(q.ravel())).tocsr()
        if method == "auto":
            method = "direct" if grid.nx * grid.ny <= _DIRECT_LIMIT else "cg"
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver method {method!r}")
        self.method = method
        self._lu = None
        self._precond = None
        self.last_rel_residual = 0.0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (-Laplace_h + diag q) x = rhs for an (nx, ny) right side."""
        b = np.asarray(rhs, dtype=float).ravel()
        if self.method == "direct":
            if self._lu is None:
                self._lu = spla.splu(self.matrix.tocsc())
            x = self._lu.solve(b)
        else:
            if self._precond is None:
                inv_diag = 1.0 / self.matrix.diagonal()
                self._precond = spla.LinearOperator(
                    self.matrix.shape, matvec=lambda v: inv_diag * v
                )
            x, info = spla.cg(
                self.matrix, b, rtol=1e-12, atol=0.0, maxiter=10 * b.size, M=self._precond
            )
            if info != 0:
                raise LinearSolveError(f"CG failed to converge (info={info})")
        scale = np.linalg.norm(b)
        if scale > 0.0:
            self.last_rel_residual = float(
                np.linalg.norm(self.matrix @ x - b) / scale
            )
        else:
            self.last_rel_residual = float(np.linalg.norm(self.matrix @ x))
        return x.reshape(self.grid.nx, self.grid.ny)


@dataclass(frozen=True, eq=False)
class StateSolution:
    """Converged state y_u plus solver diagnostics.

    The operator field carries -Laplace_h + diag(f_y(y_u)), the single SPD
    operator shared by the linearized, second linearized, and adjoint
    solves at this state.
    """

    y: ScalarField
    newton_iters: int
    residual_norm: float
    operator: EllipticOperator = field(repr=False, default=None)


def _l2(grid: Grid, values: np.ndarray) -> float:
    return grid.h * float(np.linalg.norm(values))


def solve_state(
    u: ControlField,
    f: NonlinearitySpec,
    tol: float = 1e-11,
    y0: ScalarField | None = None,
    max_newton: int = 50,
    max_halvings: int = 30,
    method: str = "auto",
) -> StateSolution:
    """Damped Newton for -Laplace_h y + f(y) = u chi_omega.

    tol is the absolute L2(Omega) residual target. Damping halves the step
    until the residual strictly decreases, so accepted steps are monotone;
    monotone f makes full steps the common case. y0 warm-starts the
    iteration (homotopy callers rely on this).
    """
    grid = u.grid
    A = laplacian_matrix(grid)
    rhs = embed(u).values

    def residual(y):
        return (A @ y.ravel()).reshape(y.shape) + f.f(y, grid) - rhs

    y = np.zeros((grid.nx, grid.ny)) if y0 is None else np.array(y0.values, dtype=float)
    r = residual(y)
    rn = _l2(grid, r)
    iters = 0
    op = None
    while rn > tol and iters < max_newton:
        op = EllipticOperator(grid, f.fy(y, grid), method)
        delta = op.solve(-r)
        s = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            y_try = y + s * delta
            r_try = residual(y_try)
            rn_try = _l2(grid, r_try)
            if rn_try <= (1.0 - 1e-4 * s) * rn or rn_try <= tol:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            raise NonConvergence("Newton damping stalled", rn, iters)
        y, r, rn = y_try, r_try, rn_try
        iters += 1
    if rn > tol:
        raise NonConvergence("Newton did not reach tolerance", rn, iters)
    # Operator at the final iterate: the one shared by all adjoint and
    # linearized solves at this state.
    op = EllipticOperator(grid, f.fy(y, grid), method)
    return StateSolution(ScalarField(grid, y), iters, rn, op)


def solve_state_difference(
    base: StateSolution,
    du: ControlField,
    f: NonlinearitySpec,
    tol_rel: float = 1e-13,
    w0: np.ndarray | None = None,
    max_iter: int = 40,
) -> ScalarField:
    """Increment w = y(u + du) - y(u) from the difference equation.

    Subtracting the state equations at u + du and u leaves

        -Laplace_h w + [f(y + w) - f(y)] = du chi_omega,

    whose residual is built from f_difference, so it never subtracts two
    O(1) quantities; the computed w keeps relative accuracy at any
    magnitude.  Line searches rely on this: objective decrements far
    below the float resolution of J(u) stay trustworthy.

    Iterates reuse the base operator (frozen Jacobian) and rebuild it at
    y + w only when the contraction degrades; the residual target is
    relative to ||du chi_omega||.  Raises NonConvergence on stall.
    """
    grid = base.y.grid
    y = base.y.values
    A = laplacian_matrix(grid)
    rhs = embed(du).values
    scale = _l2(grid, rhs)
    if scale == 0.0:
        return ScalarField(grid, np.zeros_like(y))
    tol = tol_rel * scale

    def residual(w):
        return (A @ w.ravel()).reshape(w.shape) + f.f_difference(y, w, grid) - rhs

    w = np.zeros_like(y) if w0 is None else np.array(w0, dtype=float)
    op = base.operator
    if op is None:
        op = EllipticOperator(grid, f.fy(y, grid))
    r = residual(w)
    rn = _l2(grid, r)
    for _ in range(max_iter):
        if rn <= tol:
            return ScalarField(grid, w)
        w = w + op.solve(-r)
        r = residual(w)
        rn_new = _l2(grid, r)
        if rn_new > 0.25 * rn:
            op = EllipticOperator(grid, f.fy(y + w, grid))
        rn = rn_new
    if rn <= tol:
        return ScalarField(grid, w)
    raise NonConvergence("difference iteration did not reach tolerance", rn, max_iter)


def _operator_at(y_u: ScalarField, f: NonlinearitySpec, operator, method) -> EllipticOperator:
    if operator is not None:
        return operator
    return EllipticOperator(y_u.grid, f.fy(y_u.values, y_u.grid), method)


def solve_linearized(
    y_u: ScalarField,
    v: ControlField,
    f: NonlinearitySpec,
    operator: EllipticOperator | None = None,
    method: str = "auto",
) -> ScalarField:
    """z_v solving (-Laplace_h + diag f_y(y_u)) z = v chi_omega."""
    op = _operator_at(y_u, f, operator, method)
    return ScalarField(y_u.grid, op.solve(embed(v).values))


def solve_second_linearized(
    y_u: ScalarField,
    z_v: ScalarField,
    z_w: ScalarField,
    f: NonlinearitySpec,
    operator: EllipticOperator | None = None,
    method: str = "auto",
) -> ScalarField:
    """z_vw solving (-Laplace_h + diag f_y(y_u)) z = -f_yy(y_u) z_v z_w."""
    op = _operator_at(y_u, f, operator, method)
    rhs = -f.fyy(y_u.values, y_u.grid) * z_v.values * z_w.values
    return ScalarField(y_u.grid, op.solve(rhs))


def solve_adjoint(
    y_u: ScalarField,
    y_d: ScalarField,
    f: NonlinearitySpec,
    operator: EllipticOperator | None = None,
    method: str = "auto",
) -> ScalarField:
    """Adjoint state solving (-Laplace_h + diag f_y(y_u)) phi = y_u - y_d."""
    op = _operator_at(y_u, f, operator, method)
    return ScalarField(y_u.grid, op.solve(y_u.values - y_d.values))
