"""Config-driven batch interface: solve, verify, soc, and sweep runs.

A run is described by an INI file (flat key = value entries grouped in
sections) naming the grid, the problem weights, the target, and the
homotopy schedule.  Each mode writes machine-readable artifacts into the
output directory: CSV field tables with full round-trip precision, JSON
reports with stable sorted keys and a single timestamp, and P5 PGM
rasters for quick visual inspection.  Exit codes: 0 success, 1 config
error, 2 solver nonconvergence.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from configparser import ConfigParser, Error as ConfigParserError

from .grid import ControlField, GradField, Grid, ScalarField, build_grid, gradient
from .objective import ProblemSpec, eval_F, eval_J, eval_TV, solve_problem_state
from .certificate import check_first_order, refine_dual, structure_report
from .soc import SOCConfig, sufficient_condition_scan
from .solver import two_phase_solve
from .state import NonConvergence, NonlinearitySpec, solve_adjoint

__all__ = ["ConfigError", "RunConfig", "load_config", "run", "main"]


class ConfigError(ValueError):
    """Unusable run configuration; message carries file and line context."""


@dataclass(frozen=True)
class RunConfig:
    """Parsed run description: problem, schedule, probes, and sweep lists."""

    nx: int = 64
    ny: int = 64
    window: tuple = (0.125, 0.875, 0.125, 0.875)
    alpha: float = 1e-3
    beta: float = 0.0
    gamma: float = 1e-4
    norm_choice: str = "l2"
    c0: float = 1.0
    a: float = 1.0
    d0: float = 0.0
    state_tol: float = 1e-11
    target_kind: str = "two-bumps"
    target_path: str = ""
    amplitude: float = 0.7
    sharpness: float = 25.0
    center1: tuple = (0.35, 0.4)
    center2: tuple = (0.7, 0.65)
    weight2: float = -0.8
    taper: str = "bubble"
    eps0: float = 1e-1
    delta0: float = 1e-1
    shrink: float = 0.5
    burnin: int = 18
    stages: int = 10
    grad_tol: float = 1e-8
    max_inner: int = 400
    soc_tau: float = 1e-6
    soc_theta: float | None = None
    soc_samples: int = 8
    growth_directions: int = 5
    cert_stol: float = 1e-6
    sweep_alphas: tuple = ()
    sweep_norms: tuple = ("l2",)


def _line_of(text: str, key: str) -> str:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.IGNORECASE)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return f"line {lineno}"
    return "line ?"


class _Reader:
    """Typed option access with file/line context on errors."""

    def __init__(self, parser: ConfigParser, text: str, path: str):
        self.parser = parser
        self.text = text
        self.path = path

    def _fail(self, key: str, msg: str):
        raise ConfigError(f"{self.path}, {_line_of(self.text, key)}: {key} {msg}")

    def get(self, section: str, key: str, default):
        if not self.parser.has_option(section, key):
            return default
        return self.parser.get(section, key).strip()

    def number(self, section, key, default, kind=float, lo=None, hi=None, lo_open=None):
        raw = self.get(section, key, None)
        if raw is None:
            return default
        try:
            val = kind(raw)
        except ValueError:
            self._fail(key, f"must be a {kind.__name__}, got {raw!r}")
        if lo is not None and val < lo:
            self._fail(key, f"must be >= {lo}")
        if lo_open is not None and val <= lo_open:
            self._fail(key, f"must be > {lo_open}")
        if hi is not None and val > hi:
            self._fail(key, f"must be <= {hi}")
        return val

    def choice(self, section, key, default, options):
        raw = self.get(section, key, None)
        if raw is None:
            return default
        if raw not in options:
            self._fail(key, f"must be one of {options}")
        return raw

    def floats(self, section, key, default, count=None):
        raw = self.get(section, key, None)
        if raw is None:
            return default
        try:
            vals = tuple(float(tok) for tok in raw.replace(",", " ").split())
        except ValueError:
            self._fail(key, f"must be a list of numbers, got {raw!r}")
        if count is not None and len(vals) != count:
            self._fail(key, f"needs exactly {count} numbers")
        return vals


def load_config(path: str) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text()
    parser = ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except ConfigParserError as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    r = _Reader(parser, text, str(path))

    kind = r.get("target", "kind", "two-bumps")
    target_path = ""
    if kind.startswith("csv:"):
        kind, target_path = "csv", kind[4:].strip()
    elif kind == "csv":
        target_path = r.get("target", "path", "")
        if not target_path:
            r._fail("kind", "of csv needs a path (kind = csv:FILE or path =)")
    elif kind != "two-bumps":
        r._fail("kind", "must be two-bumps or csv:PATH")

    cfg = RunConfig(
        nx=r.number("grid", "nx", 64, int, lo=4),
        ny=r.number("grid", "ny", 64, int, lo=4),
        window=r.floats("grid", "window", (0.125, 0.875, 0.125, 0.875), count=4),
        alpha=r.number("problem", "alpha", 1e-3, float, lo=0.0),
        beta=r.number("problem", "beta", 0.0, float, lo=0.0),
        gamma=r.number("problem", "gamma", 1e-4, float, lo=0.0),
        norm_choice=r.choice("problem", "norm", "l2", ("l2", "linf")),
        c0=r.number("problem", "c0", 1.0, float),
        a=r.number("problem", "a", 1.0, float, lo=0.0),
        d0=r.number("problem", "d0", 0.0, float),
        state_tol=r.number("problem", "state_tol", 1e-11, float, lo_open=0.0),
        target_kind=kind,
        target_path=target_path,
        amplitude=r.number("target", "amplitude", 0.7, float),
        sharpness=r.number("target", "sharpness", 25.0, float, lo_open=0.0),
        center1=r.floats("target", "center1", (0.35, 0.4), count=2),
        center2=r.floats("target", "center2", (0.7, 0.65), count=2),
        weight2=r.number("target", "weight2", -0.8, float),
        taper=r.choice("target", "taper", "bubble", ("bubble", "none")),
        eps0=r.number("schedule", "eps0", 1e-1, float, lo_open=0.0),
        delta0=r.number("schedule", "delta0", 1e-1, float, lo_open=0.0),
        shrink=r.number("schedule", "shrink", 0.5, float, lo_open=0.0, hi=0.99),
        burnin=r.number("schedule", "burnin", 18, int, lo=0),
        stages=r.number("schedule", "stages", 10, int, lo=1),
        grad_tol=r.number("schedule", "grad_tol", 1e-8, float, lo_open=0.0),
        max_inner=r.number("schedule", "max_inner", 400, int, lo=1),
        soc_tau=r.number("soc", "tau", 1e-6, float, lo_open=0.0),
        soc_theta=r.number("soc", "theta", None, float, lo_open=0.0),
        soc_samples=r.number("soc", "samples", 8, int, lo=1),
        growth_directions=r.number("soc", "growth_directions", 5, int, lo=1),
        cert_stol=r.number("certificate", "stol", 1e-6, float, lo_open=0.0),
        sweep_alphas=r.floats("sweep", "alphas", ()),
        sweep_norms=tuple(
            tok for tok in r.get("sweep", "norms", "l2").replace(",", " ").split()
        ),
    )
    for nrm in cfg.sweep_norms:
        if nrm not in ("l2", "linf"):
            raise ConfigError(f"{path}, {_line_of(text, 'norms')}: unknown norm {nrm!r}")
    return cfg


def _float_cell(v: float) -> str:
    return repr(float(v))


def write_field_csv(path: Path, header: tuple, X, Y, *value_arrays):
    cols = [X.ravel(), Y.ravel()] + [v.ravel() for v in value_arrays]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_float_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_control_csv(path: Path | str, grid: Grid) -> ControlField:
    """Reload a u.csv written by this tool onto its grid."""
    rows = Path(path).read_text().strip().splitlines()
    data = np.array([[float(tok) for tok in line.split(",")] for line in rows[1:]])
    if data.shape[0] != grid.n_omega:
        raise ConfigError(f"{path}: expected {grid.n_omega} rows, found {data.shape[0]}")
    X, Y = grid.omega_mesh()
    if not (np.allclose(data[:, 0], X.ravel(), atol=1e-12) and np.allclose(data[:, 1], Y.ravel(), atol=1e-12)):
        raise ConfigError(f"{path}: cell coordinates do not match the grid")
    return ControlField(grid, data[:, 2].reshape(grid.mx, grid.my))


def _read_target_csv(path: str, grid: Grid) -> ScalarField:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"target csv not found: {path}")
    rows = p.read_text().strip().splitlines()
    data = np.array([[float(tok) for tok in line.split(",")] for line in rows[1:]])
    n = grid.nx * grid.ny
    if data.shape[0] != n:
        raise ConfigError(f"{path}: expected {n} rows (full interior mesh), found {data.shape[0]}")
    X, Y = grid.interior_mesh()
    if not (np.allclose(data[:, 0], X.ravel(), atol=1e-12) and np.allclose(data[:, 1], Y.ravel(), atol=1e-12)):
        raise ConfigError(f"{path}: node coordinates do not match the grid")
    return ScalarField(grid, data[:, 2].reshape(grid.nx, grid.ny))


def build_problem(cfg: RunConfig, alpha=None, norm_choice=None) -> ProblemSpec:
    """Grid, target, and ProblemSpec from a RunConfig (sweep overrides)."""
    try:
        grid = build_grid(cfg.nx, cfg.ny, window=cfg.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.target_kind == "csv":
        y_d = _read_target_csv(cfg.target_path, grid)
    else:
        X, Y = grid.interior_mesh()
        k = cfg.sharpness
        b1 = np.exp(-k * ((X - cfg.center1[0]) ** 2 + (Y - cfg.center1[1]) ** 2))
        b2 = np.exp(-k * ((X - cfg.center2[0]) ** 2 + (Y - cfg.center2[1]) ** 2))
        taper = 16.0 * X * (1.0 - X) * Y * (1.0 - Y) if cfg.taper == "bubble" else 1.0
        y_d = ScalarField(grid, cfg.amplitude * taper * (b1 + cfg.weight2 * b2))
    try:
        return ProblemSpec(
            grid=grid,
            alpha=cfg.alpha if alpha is None else alpha,
            y_d=y_d,
            f=NonlinearitySpec(c0=cfg.c0, a=cfg.a, d0=cfg.d0),
            beta=cfg.beta,
            gamma=cfg.gamma,
            norm_choice=cfg.norm_choice if norm_choice is None else norm_choice,
            state_tol=cfg.state_tol,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def write_pgm(path: Path, values: np.ndarray):
    """P5 raster, min-max normalized; the scale sidecar records the window."""
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        bytes_ = np.round(255.0 * (values - lo) / (hi - lo)).astype(np.uint8)
    else:
        bytes_ = np.full(values.shape, 128, dtype=np.uint8)
    w, hgt = values.shape[1], values.shape[0]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {hgt}\n255\n".encode())
        fh.write(bytes_.tobytes())
    Path(str(path) + ".txt").write_text(f"min = {_float_cell(lo)}\nmax = {_float_cell(hi)}\n")


def emit_plotdata(u: ControlField, lam: GradField, outdir: Path):
    p = gradient(u)
    write_pgm(outdir / "u.pgm", u.values)
    write_pgm(outdir / "grad_u.pgm", np.hypot(p.gx, p.gy))
    write_pgm(outdir / "lambda.pgm", np.hypot(lam.gx, lam.gy))


def _json_dump(path: Path, doc: dict):
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _solve(cfg: RunConfig, alpha=None, norm_choice=None):
    spec = build_problem(cfg, alpha=alpha, norm_choice=norm_choice)
    report = two_phase_solve(
        spec,
        burnin=cfg.burnin,
        stages=cfg.stages,
        eps0=cfg.eps0,
        delta0=cfg.delta0,
        shrink=cfg.shrink,
        grad_tol=cfg.grad_tol,
        max_inner=cfg.max_inner,
    )
    return spec, report


def _report_doc(spec, report, cfg: RunConfig, seed: int) -> dict:
    state = solve_problem_state(report.u, spec, y0=report.y)
    return {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "converged": bool(report.stages[-1].converged),
        "all_stages_converged": bool(report.converged),
        "J": eval_J(report.u, spec, state),
        "F": eval_F(report.u, spec, state),
        "TV": eval_TV(report.u, spec.norm_choice),
        "alpha": spec.alpha,
        "beta": spec.beta,
        "gamma": spec.gamma,
        "norm_choice": spec.norm_choice,
        "grid": [spec.grid.nx, spec.grid.ny],
        "window": list(spec.grid.window),
        "delta_final": report.delta_final,
        "eps_terms_strictly_decreasing": bool(report.eps_terms_strictly_decreasing),
        "grad_norm_final": report.stages[-1].grad_norm,
        "stages": [
            {
                "stage": r.stage,
                "eps": r.eps,
                "delta": r.delta,
                "J": r.J,
                "J_eps": r.J_eps,
                "F": r.F,
                "TV": r.TV,
                "TV_smooth": r.TV_smooth,
                "eps_term": r.eps_term,
                "grad_norm": r.grad_norm,
                "inner_iters": r.inner_iters,
            }
            for r in report.stages
        ],
    }


def _certificate_doc(spec, report, cfg: RunConfig, seed: int):
    state = solve_problem_state(report.u, spec, y0=report.y)
    raw = check_first_order(report.u, report.lam, spec, stol=cfg.cert_stol, state=state)
    lam = refine_dual(report.u, spec, report.delta_final, lam0=report.lam, state=state)
    cert = check_first_order(report.u, lam, spec, stol=cfg.cert_stol, state=state)
    doc = cert.as_json()
    doc["residual_abs_unrefined"] = raw.residual_abs
    doc["residual_rel_unrefined"] = raw.residual_rel
    doc["delta_final"] = report.delta_final
    doc["pairing_budget"] = report.delta_final * spec.grid.omega_area + 1e-8
    doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    doc["seed"] = seed
    return doc, lam


def run(mode: str, cfg: RunConfig, outdir: Path, seed: int, quiet: bool) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    say = (lambda *a: None) if quiet else (lambda *a: print(*a))

    if mode == "sweep":
        alphas = cfg.sweep_alphas or (cfg.alpha,)
        lines = ["alpha,norm,J,F,TV,plateaus,residual_abs,residual_rel"]
        for nrm in cfg.sweep_norms:
            for alpha in alphas:
                spec, report = _solve(cfg, alpha=alpha, norm_choice=nrm)
                state = solve_problem_state(report.u, spec, y0=report.y)
                lam = refine_dual(report.u, spec, report.delta_final, lam0=report.lam, state=state)
                cert = check_first_order(report.u, lam, spec, stol=cfg.cert_stol, state=state)
                sr = structure_report(report.u)
                J_val = eval_J(report.u, spec, state)
                lines.append(
                    ",".join(
                        [_float_cell(alpha), nrm]
                        + [_float_cell(v) for v in (
                            J_val,
                            eval_F(report.u, spec, state),
                            eval_TV(report.u, nrm),
                        )]
                        + [str(sr.plateau_count), _float_cell(cert.residual_abs), _float_cell(cert.residual_rel)]
                    )
                )
                say(f"sweep alpha={alpha:g} norm={nrm}: J={J_val:.6e} plateaus={sr.plateau_count}")
        (outdir / "sweep.csv").write_text("\n".join(lines) + "\n")
        return 0

    spec, report = _solve(cfg)
    # the terminal polish stage being stationary (to tolerance or to float
    # noise) is the success condition; burn-in stages may cap out benignly
    ok = bool(report.stages[-1].converged)
    say(f"{mode}: converged={ok} J={report.stages[-1].J:.6e} "
        f"TV={report.stages[-1].TV:.6e} grad={report.stages[-1].grad_norm:.3e}")

    if mode == "solve":
        X, Y = spec.grid.omega_mesh()
        XI, YI = spec.grid.interior_mesh()
        state = solve_problem_state(report.u, spec, y0=report.y)
        phi = solve_adjoint(state.y, spec.y_d, spec.f, operator=state.operator)
        write_field_csv(outdir / "u.csv", ("x", "y", "u"), X, Y, report.u.values)
        write_field_csv(outdir / "y.csv", ("x", "y", "y"), XI, YI, state.y.values)
        write_field_csv(outdir / "phi.csv", ("x", "y", "phi"), XI, YI, phi.values)
        write_field_csv(
            outdir / "lambda.csv", ("x", "y", "lambda_x", "lambda_y"), X, Y,
            report.lam.gx, report.lam.gy,
        )
        _json_dump(outdir / "report.json", _report_doc(spec, report, cfg, seed))
        _json_dump(outdir / "structure.json", structure_report(report.u).as_json())
        emit_plotdata(report.u, report.lam, outdir)
        return 0 if ok else 2

    if mode == "verify":
        doc, lam = _certificate_doc(spec, report, cfg, seed)
        _json_dump(outdir / "certificate.json", doc)
        say(f"verify: residual_rel={doc['residual_rel']:.3e} overshoot={doc['dual_overshoot']:.1e}")
        return 0 if ok else 2

    if mode == "soc":
        rng = np.random.default_rng(seed)
        state = solve_problem_state(report.u, spec, y0=report.y)
        soc_cfg = SOCConfig(tau=cfg.soc_tau, theta=cfg.soc_theta, samples=cfg.soc_samples)
        soc_rep = sufficient_condition_scan(
            report.u, spec, soc_cfg, rng=rng, state=state,
            growth_directions=cfg.growth_directions,
        )
        doc = soc_rep.as_json()
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
        doc["seed"] = seed
        _json_dump(outdir / "soc.json", doc)
        say(f"soc: members={sum(1 for r in soc_rep.records if r.in_cone)} "
            f"violations={soc_rep.violations} growth_ok={soc_rep.growth_all_ok}")
        return 0 if ok else 2

    raise ConfigError(f"unknown mode {mode!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bvcontrol",
        description="Solve and verify TV-regularized elliptic control problems.",
    )
    parser.add_argument("mode", choices=("solve", "verify", "soc", "sweep"))
    parser.add_argument("--config", required=True, help="INI run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed for probe sampling")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        return run(args.mode, cfg, Path(args.out), args.seed, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
