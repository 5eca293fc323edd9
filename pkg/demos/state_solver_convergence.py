"""
Manufactured-solution order check for the state solver
======================================================

Pick y*(x, y) = sin(pi x) sin(pi y), push it through the operator
-Lap y + y + y^3 to get the forcing that makes it exact, then solve
from that forcing on a sequence of grids. The 5-point stencil is
second order: each halving of h should divide the nodal error by 4.
"""

import numpy as np

from bvcontrol.grid import ControlField, build_grid
from bvcontrol.state import NonlinearitySpec, solve_state

CUBIC = NonlinearitySpec(c0=1.0, a=1.0)


def forcing(X, Y):
    ystar = np.sin(np.pi * X) * np.sin(np.pi * Y)
    return (2.0 * np.pi ** 2 + 1.0) * ystar + ystar ** 3


def main():
    print(f"{'n':>5} {'h':>10} {'max error':>12} {'ratio':>7} {'newton iters':>13}")
    prev = None
    for n in (15, 31, 63, 127):
        g = build_grid(n, n)
        u = ControlField.from_function(g, forcing)
        # the residual floor scales with ||Lap_h|| ~ 4/h^2, so a fixed
        # 1e-12 target is unreachable on the finest grid
        sol = solve_state(u, CUBIC, tol=1e-11)
        X, Y = g.interior_mesh()
        err = np.max(np.abs(sol.y.values - np.sin(np.pi * X) * np.sin(np.pi * Y)))
        ratio = "" if prev is None else f"{prev / err:7.3f}"
        print(f"{n:>5} {g.h:>10.6f} {err:>12.4e} {ratio:>7} {sol.newton_iters:>13}")
        prev = err

    print()
    print("ratios near 4 confirm O(h^2); Newton converges in a handful of")
    print("steps because the cubic term is monotone and the warm start is")
    print("already in the attraction basin")


if __name__ == "__main__":
    main()
