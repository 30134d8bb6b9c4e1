"""Command-line front end: ``sh2d <command> ...``.

Commands
--------
simulate        integrate one or more configs, run the bound checks,
                and write a run directory per config
lyapunov        spin up onto the attractor, co-integrate a tangent
                bundle, and write exponents + a Kaplan-Yorke report
verify-bounds   re-check the bounds for an existing run directory
theory          print the closed-form radii, thresholds, and estimates
bench-nonlocal  time the nonlocal-term strategies and fit cost slopes

A run directory holds ``config.txt`` (the canonical echo of the resolved
configuration), ``series.csv``, ``snapshots/*.sh2d`` plus ``final.sh2d``,
``reports.txt``/``reports.json``, and ``manifest.json`` with sha256
digests of every output.  Exit codes: 0 success, 1 bound violation or
blow-up, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bench import STRATEGIES, fit_slopes, results_to_csv, run_bench
from .config import (
    Config,
    ConfigError,
    apply_overrides,
    build_grid,
    build_initial,
    build_params,
    build_stepper_config,
    parse_config_file,
    parse_kernel_spec,
    validate_for_lyapunov,
)
from .diagnostics import (
    BoundReport,
    check_dissipativity,
    check_h2_bound,
    check_lemma1,
    reports_to_json,
    reports_to_text,
)
from .dynamics import Variant
from .fields import read_snapshot, write_snapshot
from .lyapunov import evolve_tangent, exponents_and_ky, init_bundle, write_exponents_csv
from .stepper import BlowUpError, Trajectory, integrate
from .theory import (
    TheoryInputs,
    absorbing_radius,
    bound_constant_kernel,
    bound_local,
    bound_nonlocal,
    dimension_gap,
    poincare_lambda1,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _out_root(explicit: str | None) -> Path:
    return Path(explicit or os.environ.get("SH2D_OUT", "runs"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path: str, overrides: list[str]) -> Config:
    cfg = parse_config_file(path)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _run_checks(cfg: Config, traj: Trajectory) -> list[BoundReport]:
    reports: list[BoundReport] = []
    tol_rel = cfg["analysis.tol_rel"]
    if cfg["analysis.check_envelope"]:
        if traj.params.variant is Variant.NONLOCAL:
            b_floor = None  # taken from the kernel
        else:
            # For the cubic model, Cauchy-Schwarz gives ∫u⁴ >= ‖u‖⁴/|domain|,
            # so the same envelope holds with floor 1/(lx·ly).
            b_floor = 1.0 / (traj.grid.lx * traj.grid.ly)
        reports.append(check_lemma1(traj, b=b_floor, tol_rel=tol_rel))
    if cfg["analysis.check_h2"]:
        reports.append(check_h2_bound(traj, slack_rel=tol_rel))
    if cfg["analysis.check_dissipativity"]:
        reports.append(check_dissipativity(traj, slack_rel=tol_rel))
    return reports


def _write_manifest(run_dir: Path, files: list[Path]) -> None:
    manifest = {
        "outputs": {str(p.relative_to(run_dir)): _sha256(p) for p in sorted(files)},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _simulate_one(config_path: str, overrides: list[str], out_root: str) -> tuple[str, int, str]:
    """Worker for one config file; returns (run name, exit code, summary)."""
    name = Path(config_path).stem
    try:
        cfg = _load_config(config_path, overrides)
        grid = build_grid(cfg)
        params = build_params(cfg)
        step_cfg = build_stepper_config(cfg)
        u0 = build_initial(cfg, grid)
    except (ConfigError, OSError, ValueError) as exc:
        return name, EXIT_CONFIG, f"{name}: {exc}"

    run_dir = _out_root(out_root) / name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.canonical_text())

    blew_up = False
    try:
        traj = integrate(params, step_cfg, u0)
    except BlowUpError as exc:
        if exc.trajectory is None:
            return name, EXIT_VIOLATION, f"{name}: {exc}"
        traj = exc.trajectory
        blew_up = True

    written = [run_dir / "config.txt"]
    traj.write_series_csv(run_dir / "series.csv")
    written.append(run_dir / "series.csv")

    snap_dir = run_dir / "snapshots"
    if traj.snapshots:
        snap_dir.mkdir(exist_ok=True)
        for i, (t, f) in enumerate(zip(traj.snap_times, traj.snapshots)):
            p = snap_dir / f"snapshot_{i:04d}.sh2d"
            write_snapshot(f, t, p)
            written.append(p)
    write_snapshot(traj.final, float(traj.times[-1]), run_dir / "final.sh2d")
    written.append(run_dir / "final.sh2d")

    reports = _run_checks(cfg, traj)
    (run_dir / "reports.txt").write_text(reports_to_text(reports))
    (run_dir / "reports.json").write_text(reports_to_json(reports) + "\n")
    written += [run_dir / "reports.txt", run_dir / "reports.json"]
    _write_manifest(run_dir, written)

    violated = [r.bound_name for r in reports if not r.satisfied and not r.inconclusive]
    if blew_up:
        violated.insert(0, "finite_trajectory")
    code = EXIT_VIOLATION if violated else EXIT_OK
    status = "ok" if code == EXIT_OK else "VIOLATED " + ",".join(violated)
    return name, code, f"{name}: {status} (t_final={traj.times[-1]:g}, dir={run_dir})"


def cmd_simulate(args) -> int:
    jobs = [(path, args.set or [], args.out) for path in args.configs]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_simulate_one, *zip(*((j[0], j[1], j[2]) for j in jobs))))
    else:
        outcomes = [_simulate_one(*j) for j in jobs]
    code = EXIT_OK
    for _, c, message in outcomes:
        print(message)
        code = max(code, c)
    return code


def cmd_lyapunov(args) -> int:
    try:
        cfg = _load_config(args.config, args.set or [])
        validate_for_lyapunov(cfg)
        grid = build_grid(cfg)
        params = build_params(cfg)
        step_cfg = build_stepper_config(cfg)
        u0 = build_initial(cfg, grid)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run_dir = _out_root(args.out) / (Path(args.config).stem + "-lyapunov")
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.canonical_text())

    try:
        transient = integrate(params, step_cfg, u0)
        bundle = init_bundle(
            grid, cfg["lyapunov.m"], reorth_period=cfg["lyapunov.reorth_period"]
        )
        evo = evolve_tangent(
            params,
            step_cfg,
            transient.final,
            bundle,
            t_span=cfg["lyapunov.t_span"],
            trace_every=cfg["lyapunov.trace_every"],
        )
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION

    threshold = None
    if params.variant is Variant.NONLOCAL:
        inp = TheoryInputs(params.mu, params.kernel.a, params.kernel.b, cfg["theory.c"])
        threshold = bound_nonlocal(inp)[0]
    else:
        threshold = bound_local(params.mu, cfg["theory.c"])[0]
    trace_mean = float(np.mean(evo.trace_values)) if len(evo.trace_values) else None
    report = exponents_and_ky(
        evo.bundle, analytic_threshold=threshold, trace_mean=trace_mean
    )

    write_exponents_csv(run_dir / "exponents.csv", evo)
    payload = {
        "exponents": [float(v) for v in report.exponents],
        "ky_dimension": report.ky_dimension,
        "m_insufficient": report.m_insufficient,
        "T": report.T,
        "analytic_threshold": report.analytic_threshold,
        "trace_mean": report.trace_mean,
        "sum_exponents": float(np.sum(report.exponents)),
    }
    (run_dir / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    _write_manifest(
        run_dir, [run_dir / "config.txt", run_dir / "exponents.csv", run_dir / "report.json"]
    )
    for line in report.summary_lines():
        print(line)
    print(f"wrote {run_dir}")
    return EXIT_OK


def _read_series(path: Path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    return rows.reshape(1, -1) if rows.ndim == 1 else rows


def cmd_verify_bounds(args) -> int:
    run_dir = Path(args.run)
    try:
        cfg = parse_config_file(run_dir / "config.txt")
        grid = build_grid(cfg)
        params = build_params(cfg)
        step_cfg = build_stepper_config(cfg)
        rows = _read_series(run_dir / "series.csv")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    snap_times, snapshots = [], []
    snap_dir = run_dir / "snapshots"
    if snap_dir.is_dir():
        for p in sorted(snap_dir.glob("*.sh2d")):
            f, t = read_snapshot(p)
            snap_times.append(t)
            snapshots.append(f)
    final_path = run_dir / "final.sh2d"
    if final_path.exists():
        final, _ = read_snapshot(final_path)
    elif snapshots:
        final = snapshots[-1]
    else:
        print("error: no final.sh2d or snapshots to rebuild the end state", file=sys.stderr)
        return EXIT_CONFIG

    traj = Trajectory(
        grid=grid,
        params=params,
        cfg=step_cfg,
        times=rows[:, 0],
        l2=rows[:, 1],
        grad_l2=rows[:, 2],
        lap_l2=rows[:, 3],
        snap_times=snap_times,
        snapshots=snapshots,
        final=final,
    )
    reports = _run_checks(cfg, traj)
    sys.stdout.write(reports_to_text(reports))
    violated = [r for r in reports if not r.satisfied and not r.inconclusive]
    return EXIT_VIOLATION if violated else EXIT_OK


def cmd_theory(args) -> int:
    try:
        if args.config:
            cfg = _load_config(args.config, args.set or [])
            params = build_params(cfg)
            mu = params.mu
            if params.variant is Variant.NONLOCAL:
                a, b = params.kernel.a, params.kernel.b
            else:
                a = b = 1.0
            c = cfg["theory.c"]
            lx, ly = cfg["grid.lx"], cfg["grid.ly"]
        else:
            if args.mu is None:
                raise ConfigError("theory needs --mu (or --config)", source="<args>")
            mu, a, b, c = args.mu, args.a, args.b, args.c
            lx, ly = args.lx, args.ly
        inp = TheoryInputs(mu=mu, a=a, b=b, C=c)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    nl, eps_nl = bound_nonlocal(inp)
    loc, eps_loc = bound_local(mu, c)
    rows = [
        ("mu", mu),
        ("kernel_sup a", a),
        ("kernel_floor b", b),
        ("calibration C", c),
        ("absorbing_radius", absorbing_radius(mu, b)),
        ("poincare_lambda1", poincare_lambda1(lx, ly)),
        ("nonlocal_bound", nl),
        ("nonlocal_eps_opt", eps_nl),
        ("local_bound", loc),
        ("local_eps_opt", eps_loc),
        ("constant_kernel_bound", bound_constant_kernel(mu, c)),
        ("dimension_gap", dimension_gap(inp)),
    ]
    width = max(len(r[0]) for r in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value:.10g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        kernel = parse_kernel_spec(args.kernel)
        sizes = [int(s) for s in args.sizes.split(",") if s]
        strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
        for s in strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
        if any(n < 8 or n % 2 for n in sizes):
            raise ValueError(f"sizes must be even and >= 8, got {sizes}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    results = []
    for strategy in strategies:
        results += run_bench(kernel, strategy, sizes, repeats=args.repeats)
    print(f"{'strategy':<12} {'n':>5} {'median_ns':>14} {'max_dev':>12}")
    for r in results:
        dev = "skipped" if r.max_dev is None else f"{r.max_dev:.3e}"
        print(f"{r.strategy:<12} {r.n:>5} {r.median_ns:>14.0f} {dev:>12}")
    if len(sizes) >= 2:
        for strategy, slope in sorted(fit_slopes(results).items()):
            print(f"slope[{strategy}] = {slope:.3f}")
    if args.csv:
        Path(args.csv).write_text(results_to_csv(results))
        print(f"wrote {args.csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sh2d",
        description="Pattern-forming field simulations with a nonlocal cubic term.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate configs and check the bounds")
    p.add_argument("configs", nargs="+", help="configuration files")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", default=None, help="output root (default $SH2D_OUT or ./runs)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("lyapunov", help="tangent-bundle exponents and Kaplan-Yorke dimension")
    p.add_argument("config", help="configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_lyapunov)

    p = sub.add_parser("verify-bounds", help="re-check bounds for an existing run directory")
    p.add_argument("--run", required=True, help="run directory written by simulate")
    p.set_defaults(fn=cmd_verify_bounds)

    p = sub.add_parser("theory", help="closed-form radii and dimension estimates")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--lx", type=float, default=16.0 * math.pi)
    p.add_argument("--ly", type=float, default=16.0 * math.pi)
    p.set_defaults(fn=cmd_theory)

    p = sub.add_parser("bench-nonlocal", help="time the nonlocal-term strategies")
    p.add_argument("--kernel", default="gaussian_floor b=1 a=3 sigma=2")
    p.add_argument("--sizes", default="8,16,32")
    p.add_argument("--strategies", default=",".join(STRATEGIES))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--csv", default=None, help="also write results as CSV")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
