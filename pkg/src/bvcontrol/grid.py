"""Uniform interior grids on the unit square and difference operators.

The domain is [0,1]^2 with homogeneous Dirichlet boundary. Only interior
nodes are stored: node (i, j), 0-based, sits at ((i+1)h, (j+1)h) with
h = 1/(nx+1). The control region omega is an axis-aligned window snapped
outward to cell-interface lines, so omega is exactly a union of quadrature
cells of area h^2 and every reported area is a plain cell count times h^2.

The forward-difference gradient and the divergence are exact negative
adjoints of each other under the h^2-weighted inner products; nothing
downstream (duals, certificates, optimality residuals) holds without that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridError",
    "Grid",
    "ScalarField",
    "ControlField",
    "GradField",
    "build_grid",
    "gradient",
    "divergence",
    "inner_product",
    "norm",
    "mean",
    "centered",
    "embed",
    "restrict",
    "gradient_matrix",
]


class GridError(ValueError):
    """Invalid grid or control-window geometry."""


@dataclass(frozen=True)
class Grid:
    """Interior mesh of the unit square plus a node-resolved control window.

    Fields
    ------
    nx, ny : interior node counts per axis (square cells, so nx == ny).
    h : mesh width, 1/(nx+1).
    window : snapped control window (ax, bx, ay, by); lies on cell
        interfaces (k + 1/2) h, so omega is a union of whole cells.
    requested_window : the window as passed in, before snapping.
    ix0..iy1 : inclusive 0-based node index range of omega per axis.
    """

    nx: int
    ny: int
    h: float
    window: tuple[float, float, float, float]
    requested_window: tuple[float, float, float, float]
    ix0: int
    ix1: int
    iy0: int
    iy1: int

    @property
    def mx(self) -> int:
        return self.ix1 - self.ix0 + 1

    @property
    def my(self) -> int:
        return self.iy1 - self.iy0 + 1

    @property
    def n_omega(self) -> int:
        return self.mx * self.my

    @property
    def omega_area(self) -> float:
        return self.h * self.h * self.n_omega

    @property
    def omega_slice(self) -> tuple[slice, slice]:
        """Index slices extracting the omega block from an interior array."""
        return (slice(self.ix0, self.ix1 + 1), slice(self.iy0, self.iy1 + 1))

    def interior_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """1D node coordinates (xs, ys) of the interior mesh."""
        xs = self.h * np.arange(1, self.nx + 1)
        ys = self.h * np.arange(1, self.ny + 1)
        return xs, ys

    def omega_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """1D node coordinates (xs, ys) of the control window."""
        xs, ys = self.interior_coords()
        return xs[self.ix0 : self.ix1 + 1], ys[self.iy0 : self.iy1 + 1]

    def interior_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = self.interior_coords()
        return np.meshgrid(xs, ys, indexing="ij")

    def omega_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = self.omega_coords()
        return np.meshgrid(xs, ys, indexing="ij")


def _as_values(values, shape, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise GridError(f"{what} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on the interior of Omega, shape (nx, ny), axis 0 is x."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "values",
            _as_values(self.values, (self.grid.nx, self.grid.ny), "ScalarField.values"),
        )

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        X, Y = grid.interior_mesh()
        return cls(grid, fn(X, Y))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True, eq=False)
class ControlField:
    """Nodal control values on omega, shape (mx, my), axis 0 is x."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "values",
            _as_values(self.values, (self.grid.mx, self.grid.my), "ControlField.values"),
        )

    @classmethod
    def zeros(cls, grid: Grid) -> "ControlField":
        return cls(grid, np.zeros((grid.mx, grid.my)))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ControlField":
        return cls(grid, np.full((grid.mx, grid.my), float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ControlField":
        X, Y = grid.omega_mesh()
        return cls(grid, fn(X, Y))

    def with_values(self, values) -> "ControlField":
        return ControlField(self.grid, values)


@dataclass(frozen=True, eq=False)
class GradField:
    """Cellwise vector field on omega (components gx, gy), shape (mx, my)."""

    grid: Grid
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        shape = (self.grid.mx, self.grid.my)
        object.__setattr__(self, "gx", _as_values(self.gx, shape, "GradField.gx"))
        object.__setattr__(self, "gy", _as_values(self.gy, shape, "GradField.gy"))

    @classmethod
    def zeros(cls, grid: Grid) -> "GradField":
        shape = (grid.mx, grid.my)
        return cls(grid, np.zeros(shape), np.zeros(shape))


def build_grid(nx: int, ny: int, window=None) -> Grid:
    """Build the interior grid and snap the control window onto it.

    window is (ax, bx, ay, by), strictly inside (0,1)^2; None selects the
    full interior. Boundaries are snapped outward to the nearest cell
    interfaces; the pre-snap window is kept on the grid for reporting.
    Raises GridError if the window touches the boundary of the domain or
    contains no whole cell after snapping.
    """
    nx, ny = int(nx), int(ny)
    if nx < 3 or ny < 3:
        raise GridError("need at least 3 interior nodes per axis")
    if nx != ny:
        raise GridError("square cells require nx == ny")
    h = 1.0 / (nx + 1)

    if window is None:
        window = (0.5 * h, 1.0 - 0.5 * h, 0.5 * h, 1.0 - 0.5 * h)
    ax, bx, ay, by = (float(w) for w in window)
    for lo, hi in ((ax, bx), (ay, by)):
        if not (0.0 < lo < hi < 1.0):
            raise GridError(
                f"control window {window} must be strictly inside (0,1)^2 "
                "with positive extent per axis"
            )

    ix0, ix1, wx = _snap_axis(ax, bx, nx, h)
    iy0, iy1, wy = _snap_axis(ay, by, ny, h)
    return Grid(
        nx=nx,
        ny=ny,
        h=h,
        window=(wx[0], wx[1], wy[0], wy[1]),
        requested_window=(ax, bx, ay, by),
        ix0=ix0,
        ix1=ix1,
        iy0=iy0,
        iy1=iy1,
    )


def _snap_axis(lo: float, hi: float, n: int, h: float):
    # Cell interfaces sit at (k + 1/2) h, k = 0..n; node i owns the cell
    # between interfaces i and i+1. Snap lo down and hi up onto interfaces.
    k_lo = math.floor(lo / h - 0.5 + 1e-9)
    k_hi = math.ceil(hi / h - 0.5 - 1e-9)
    k_lo = min(max(k_lo, 0), n)
    k_hi = min(max(k_hi, 0), n)
    if k_hi <= k_lo:
        raise GridError(
            f"control window [{lo}, {hi}] contains no whole cell at h={h}"
        )
    return k_lo, k_hi - 1, ((k_lo + 0.5) * h, (k_hi + 0.5) * h)


def gradient(u: ControlField) -> GradField:
    """Forward-difference gradient on omega.

    The far edge of the window uses the one-sided zero row: no values from
    outside omega enter, and constants map to the exact zero field.
    """
    h = u.grid.h
    v = u.values
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    if v.shape[0] > 1:
        gx[:-1, :] = (v[1:, :] - v[:-1, :]) / h
    if v.shape[1] > 1:
        gy[:, :-1] = (v[:, 1:] - v[:, :-1]) / h
    return GradField(u.grid, gx, gy)


def divergence(p: GradField) -> ControlField:
    """Discrete divergence, the exact negative adjoint of gradient.

    <gradient(u), p> = -<u, divergence(p)> holds to rounding for all u, p.
    The far-edge slots of p are dead inputs of the adjoint (gradient never
    writes them) and are masked out.
    """
    h = p.grid.h
    px = p.gx.copy()
    py = p.gy.copy()
    px[-1, :] = 0.0
    py[:, -1] = 0.0
    d = px / h
    d[1:, :] -= px[:-1, :] / h
    d += py / h
    d[:, 1:] -= py[:, :-1] / h
    return ControlField(p.grid, d)


def inner_product(a, b) -> float:
    """h^2-weighted inner product; both arguments must live on one region."""
    if a.grid is not b.grid and a.grid != b.grid:
        raise GridError("fields live on different grids")
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        return float(a.grid.h ** 2 * np.vdot(a.values, b.values))
    if isinstance(a, ControlField) and isinstance(b, ControlField):
        return float(a.grid.h ** 2 * np.vdot(a.values, b.values))
    if isinstance(a, GradField) and isinstance(b, GradField):
        return float(a.grid.h ** 2 * (np.vdot(a.gx, b.gx) + np.vdot(a.gy, b.gy)))
    raise GridError(
        f"cannot pair {type(a).__name__} with {type(b).__name__}"
    )


def norm(a) -> float:
    """Discrete L^2 norm induced by inner_product."""
    return math.sqrt(max(inner_product(a, a), 0.0))


def mean(u: ControlField) -> float:
    """Mean value of the control over omega: integral / |omega|."""
    return float(np.mean(u.values))


def centered(u: ControlField) -> ControlField:
    """u minus its omega-mean (the BV-seminorm-friendly split u = u_hat + a_u)."""
    return ControlField(u.grid, u.values - mean(u))


def embed(u: ControlField) -> ScalarField:
    """Extend a control by zero to the whole interior (u * chi_omega)."""
    full = np.zeros((u.grid.nx, u.grid.ny))
    full[u.grid.omega_slice] = u.values
    return ScalarField(u.grid, full)


def restrict(s: ScalarField) -> ControlField:
    """Restrict an interior field to the omega window."""
    return ControlField(s.grid, s.values[s.grid.omega_slice])


@lru_cache(maxsize=32)
def gradient_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of `gradient` on C-order flattened omega values.

    Returns the (2m, m) matrix stacking the x rows on top of the y rows,
    m = mx * my. Used to assemble quadratic forms in gradients; the
    slicing implementations above stay the fast path.
    """
    mx, my, h = grid.mx, grid.my, grid.h
    m = mx * my
    eye_x = sp.eye(mx, format="csr")
    eye_y = sp.eye(my, format="csr")
    dx = sp.diags([-np.ones(mx), np.ones(mx - 1)], [0, 1], shape=(mx, mx)) / h
    dx = dx.tolil()
    dx[-1, :] = 0.0
    dy = sp.diags([-np.ones(my), np.ones(my - 1)], [0, 1], shape=(my, my)) / h
    dy = dy.tolil()
    dy[-1, :] = 0.0
    gx = sp.kron(dx.tocsr(), eye_y, format="csr")
    gy = sp.kron(eye_x, dy.tocsr(), format="csr")
    return sp.vstack([gx, gy], format="csr")
