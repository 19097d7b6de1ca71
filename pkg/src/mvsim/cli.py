"""Command-line entry point ``mvsim``.

Subcommands
-----------
simulate      run a scenario file; write snapshots, diagnostics CSV and a manifest
diagnose      recompute diagnostics from stored snapshots
stability     run a base and a perturbed solution side by side; write the difference CSV
inequalities  sweep the inequality lab over sampled test functions
horizon       blow-up time of ``z' = c (1 + z^3)`` up to a cap
checkgrowth   check an elastic density against the growth conditions

Exit codes: 0 success, 1 validation or usage error, 2 solver failure,
3 property violation.  Human-readable messages go to standard error; one
JSON summary line goes to standard output.

Commands that write files take ``--out DIR`` (default
``$MVSIM_OUTPUT_DIR/<name>`` or ``./mvsim-output/<name>``).  A lockfile
keeps two runs from sharing a directory, and ``manifest.json`` lists every
file written with its sha256.  ``--threads N`` only sets the FFT worker
count; results do not depend on it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from mvsim import __version__
from mvsim.errors import (ConfigurationError, CounterexampleError, MVSimError, StepFailure,
                          StructuralError)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_PROPERTY = 3

OUTPUT_ENV = "MVSIM_OUTPUT_DIR"
LOCKFILE = ".mvsim.lock"
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad command line; reported with the usage text and exit code 1."""

    def __init__(self, message: str, usage: str):
        self.usage = usage
        super().__init__(message)


class PropertyViolation(Exception):
    """A checked property failed; exit code 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


# -- output directory -----------------------------------------------------------


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def default_output_dir(name: str) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or "mvsim-output") / name


class RunDirectory:
    """Output directory holding the lock; records written files for the manifest."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.outputs: list[Path] = []

    def file(self, name: str) -> Path:
        p = self.path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def manifest(self, record: dict) -> Path:
        entries = []
        for p in self.outputs:
            if p.exists():
                entries.append({"path": p.relative_to(self.path).as_posix(),
                                "bytes": p.stat().st_size, "sha256": sha256_file(p)})
        record = dict(record, outputs=entries)
        out = self.path / MANIFEST
        out.write_text(json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n")
        return out


@contextmanager
def locked_directory(path: Path):
    """Create ``path`` and hold ``LOCKFILE`` in it; fail if another run holds it."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / LOCKFILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigurationError(
            f"output directory {path} is in use (remove {lock} if no run is active)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield RunDirectory(path)
    finally:
        lock.unlink(missing_ok=True)


def verify_manifest(path: str | Path) -> list[str]:
    """Return the files whose size or checksum disagree with ``manifest.json``."""
    root = Path(path)
    record = json.loads((root / MANIFEST).read_text())
    bad = []
    for entry in record["outputs"]:
        p = root / entry["path"]
        if not p.exists() or p.stat().st_size != entry["bytes"] or sha256_file(p) != entry[
                "sha256"]:
            bad.append(entry["path"])
    return bad


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _kernels(name: str):
    from mvsim._backend import get_kernels

    return get_kernels(None if name == "auto" else name)


# -- subcommands ------------------------------------------------------------------


def cmd_simulate(args, report) -> int:
    from mvsim.config import load_scenario, write_scenario
    from mvsim.diagnostics import smallness_indicator
    from mvsim.solver import CoupledSolver
    from mvsim.state import max_change, unit_deviation, write_snapshot

    scenario = load_scenario(args.scenario)
    if args.T is not None:
        scenario = scenario.replace(T=args.T)
    out = Path(args.out) if args.out else default_output_dir(Path(args.scenario).stem)
    solver = CoupledSolver(scenario, kernels=_kernels(args.backend), workers=args.threads)
    start = _now()
    with locked_directory(out) as rd:
        write_scenario(rd.file("scenario.cfg"), scenario)
        initial = solver.initial_state()
        write_snapshot(rd.file("snapshots/initial.bin"), solver.grid, initial)

        def on_snapshot(n, st):
            write_snapshot(rd.file(f"snapshots/step_{n:08d}.bin"), solver.grid, st)

        record = {"command": "simulate", "version": __version__, "scenario": scenario.as_dict(),
                  "backend": solver.kernels.BACKEND, "threads": args.threads, "start": start}
        try:
            result = solver.run(state=initial.copy(), on_snapshot=on_snapshot)
        except StepFailure as exc:
            partial = exc.partial
            if partial is not None and partial.series is not None and len(partial.series):
                partial.series.write_csv(rd.file("diagnostics.csv"))
            rd.manifest(dict(record, end=_now(), exit_status=EXIT_SOLVER, error=str(exc)))
            report.update(status="solver_failure", t_fail=exc.t, out=str(out))
            raise
        result.series.smallness = smallness_indicator(scenario, initial)
        result.series.write_csv(rd.file("diagnostics.csv"))
        write_snapshot(rd.file("snapshots/final.bin"), solver.grid, result.state)
        cols = result.series.columns()
        summary = {
            "steps": len(result.infos),
            "t_final": float(result.state.t),
            "max_change": max_change(result.state, initial),
            "max_unit_error": float(max([unit_deviation(initial.M)]
                                        + [i.unit_error for i in result.infos])),
            "max_div_residual": float(np.max(cols["div_residual"])),
            "energy_initial": float(cols["energy"][0]),
            "energy_final": float(cols["energy"][-1]),
            "max_energy_residual": float(np.max(cols["energy_residual"])),
            "halvings": result.n_halvings,
        }
        rd.manifest(dict(record, end=_now(), exit_status=EXIT_OK, summary=summary))
    report.update(status="ok", out=str(out), **summary)
    print(f"simulate: {summary['steps']} steps to t={summary['t_final']:.6g}, "
          f"max change {summary['max_change']:.3e}, output in {out}", file=sys.stderr)
    return EXIT_OK


def _snapshot_paths(items) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.bin")))
        else:
            paths.append(p)
    if not paths:
        raise ConfigurationError("no snapshot files given")
    return paths


def cmd_diagnose(args, report) -> int:
    from mvsim.config import load_scenario
    from mvsim.diagnostics import COLUMNS, DiagnosticsSeries
    from mvsim.elastic import get_density
    from mvsim.grid import divergence
    from mvsim.scenario import Scenario
    from mvsim.solver import StepInfo
    from mvsim.state import norm_l2, read_snapshot, unit_deviation

    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    kappa = args.kappa if args.kappa is not None else scenario.kappa
    density = args.density or scenario.density
    states = []
    for p in _snapshot_paths(args.snapshots):
        try:
            states.append(read_snapshot(p))
        except OSError as exc:
            raise ConfigurationError(f"cannot read snapshot {p}: {exc.strerror}") from None
    grid = states[0][0]
    for g, _ in states:
        if g != grid:
            raise StructuralError(f"snapshots disagree on the grid: {g} vs {grid}")
    # a run directory holds initial.bin and step_00000000.bin at the same time
    unique = {}
    for _, st in sorted(states, key=lambda gs: gs[1].t):
        unique.setdefault(st.t, st)
    series = DiagnosticsSeries(grid, get_density(density), kappa, scenario.hext_sampler())
    prev = None
    for t, st in unique.items():
        info = StepInfo(0.0 if prev is None else t - prev, float("nan"), unit_deviation(st.M),
                        norm_l2(grid, divergence(grid, st.v)))
        series.append(st, info)
        prev = t
    # pre-projection drift is only known to the solver
    columns = tuple(c for c in COLUMNS if c != "m_drift")
    out = Path(args.out) if args.out else default_output_dir("diagnose")
    with locked_directory(out) as rd:
        series.write_csv(rd.file("diagnostics.csv"), columns)
        cols = series.columns()
        summary = {"rows": len(series), "t_first": float(cols["t"][0]),
                   "t_last": float(cols["t"][-1]), "energy_first": float(cols["energy"][0]),
                   "energy_last": float(cols["energy"][-1]),
                   "max_unit_error": float(np.max(cols["unit_error"]))}
        rd.manifest({"command": "diagnose", "version": __version__, "start": _now(),
                     "end": _now(), "exit_status": EXIT_OK, "kappa": kappa,
                     "density": density, "summary": summary})
    report.update(status="ok", out=str(out), **summary)
    print(f"diagnose: {len(series)} snapshots, output in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_stability(args, report) -> int:
    from mvsim.config import load_scenario, write_scenario
    from mvsim.uniqueness import stability_experiment

    scenario = load_scenario(args.scenario)
    if args.dt is not None:
        scenario = scenario.replace(dt=args.dt)
    T = args.T if args.T is not None else scenario.T
    out = Path(args.out) if args.out else default_output_dir(Path(args.scenario).stem
                                                             + "-stability")
    start = _now()
    with locked_directory(out) as rd:
        write_scenario(rd.file("scenario.cfg"), scenario.replace(T=T))
        record = {"command": "stability", "version": __version__, "start": start,
                  "eps": args.eps, "scenario": scenario.replace(T=T).as_dict(),
                  "threads": args.threads}
        try:
            series = stability_experiment(scenario, args.eps, T=T,
                                          kernels=_kernels(args.backend), workers=args.threads)
        except StepFailure as exc:
            if exc.partial is not None and len(exc.partial.t) > 1:
                exc.partial.write_csv(rd.file("difference.csv"))
            rd.manifest(dict(record, end=_now(), exit_status=EXIT_SOLVER, error=str(exc)))
            report.update(status="solver_failure", run=exc.run, t_fail=exc.t, out=str(out))
            raise
        c = series.fit_constant()
        series.write_csv(rd.file("difference.csv"), c)
        f = np.asarray(series.f)
        summary = {"steps": len(series.t) - 1, "f0": float(f[0]), "f_final": float(f[-1]),
                   "f_max": float(np.max(f)), "c_fit": c,
                   "int_h": float(series.int_h[-1]) if len(series.t) > 1 else 0.0}
        held = True
        if np.isfinite(c):
            summary["bound_ratio"] = series.bound_ratio(c)
            held = summary["bound_ratio"] <= 1.0 + 1e-12
        status = EXIT_OK if held else EXIT_PROPERTY
        rd.manifest(dict(record, end=_now(), exit_status=status, summary=summary))
    report.update(status="ok" if held else "bound_violated", out=str(out), **summary)
    if not held:
        raise PropertyViolation(
            f"difference exceeds f(0) exp(c int h) by a factor {summary['bound_ratio']:.6g}")
    print(f"stability: c_fit = {c:.6g}, f(T)/f(0) = "
          f"{summary['f_final'] / summary['f0'] if summary['f0'] else float('nan'):.6g}, "
          f"output in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_inequalities(args, report) -> int:
    from mvsim.inequalities import NAMES, TestFunctionFamily, sweep, write_report_csv

    names = args.names or list(NAMES)
    family = None
    if args.boundary:
        family = TestFunctionFamily(args.boundary, K=args.K, seed=args.seed)
    out = Path(args.out) if args.out else default_output_dir("inequalities")
    start = _now()
    with locked_directory(out) as rd:
        record = {"command": "inequalities", "version": __version__, "start": start,
                  "names": names, "resolutions": args.resolutions, "samples": args.samples,
                  "K": args.K, "seed": args.seed, "boundary": args.boundary}
        try:
            reports = sweep(names, args.resolutions, family=family, n_samples=args.samples,
                            K=args.K, seed=args.seed)
        except CounterexampleError as exc:
            rd.manifest(dict(record, end=_now(), exit_status=EXIT_PROPERTY, error=str(exc)))
            report.update(status="counterexample", error=str(exc))
            raise PropertyViolation(str(exc)) from None
        write_report_csv(rd.file("inequalities.csv"), reports)
        unstable = sorted({r.name for r in reports if not r.stable})
        status = EXIT_PROPERTY if unstable else EXIT_OK
        rd.manifest(dict(record, end=_now(), exit_status=status, unstable=unstable))
    for r in reports:
        print(r.summary(), file=sys.stderr)
    sup = {}
    for r in reports:
        sup.setdefault(r.name, {})[str(r.resolution)] = r.worst_ratio
    report.update(status="ok" if not unstable else "unstable", out=str(out), sup_ratio=sup,
                  unstable=unstable)
    if unstable:
        raise PropertyViolation(f"sup ratio drifts by 5% or more between resolutions: "
                                f"{', '.join(unstable)}")
    return EXIT_OK


def cmd_horizon(args, report) -> int:
    from mvsim.diagnostics import blowup_horizon

    if not args.c > 0:
        raise ConfigurationError(f"--c must be positive, got {args.c}")
    if not args.z0 >= 0:
        raise ConfigurationError(f"--z0 must be nonnegative, got {args.z0}")
    t = blowup_horizon(args.c, args.z0, args.cap)
    report.update(status="ok", c=args.c, z0=args.z0, cap=args.cap, horizon=t)
    print(f"horizon: z reaches {args.cap:g} at t = {t:.12g}", file=sys.stderr)
    return EXIT_OK


def cmd_checkgrowth(args, report) -> int:
    from mvsim.elastic import check_growth, get_density

    rep = check_growth(get_density(args.density), n_samples=args.samples, seed=args.seed)
    report.update(status="ok" if rep.passed else "violated", density=rep.density,
                  samples=rep.n_samples, ratios=rep.ratios, failures=rep.failures,
                  witnesses=rep.witnesses)
    print(rep.summary(), file=sys.stderr)
    if not rep.passed:
        raise PropertyViolation(f"{rep.density} violates {', '.join(rep.failures)}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvsim", description="2D magnetoviscoelastic flow simulator.")
    parser.add_argument("--version", action="version", version=f"mvsim {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(p, out=True, run=False):
        if out:
            p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV}/<name>)")
        if run:
            p.add_argument("--threads", type=_positive_int, default=1,
                           help="FFT worker threads (results do not depend on it)")
            p.add_argument("--backend", choices=("auto", "cython", "python"), default="auto",
                           help="kernel implementation")

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("--T", type=float, help="override the final time")
    common(p, run=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="recompute diagnostics from snapshots")
    p.add_argument("snapshots", nargs="+", help="snapshot files or directories of them")
    p.add_argument("--scenario", help="scenario file supplying kappa, density and H_ext")
    p.add_argument("--kappa", type=float, help="override kappa")
    p.add_argument("--density", help="override the elastic density")
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("stability", help="perturbed-versus-base difference experiment")
    p.add_argument("scenario", help="scenario file of the base solution")
    p.add_argument("--eps", type=float, default=1e-4, help="initial bump amplitude")
    p.add_argument("--T", type=float, help="override the final time")
    p.add_argument("--dt", type=float, help="override the time step")
    common(p, run=True)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("inequalities", help="sweep the inequality lab")
    p.add_argument("--names", nargs="+", help="inequalities to check (default: all)")
    p.add_argument("--resolutions", nargs="+", type=_positive_int, default=[64, 128])
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--K", type=_positive_int, default=8, help="maximal mode degree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boundary", choices=("dirichlet0", "neumann0", "free"),
                   help="force one boundary class (default: per inequality)")
    common(p)
    p.set_defaults(func=cmd_inequalities)

    p = sub.add_parser("horizon", help="blow-up time of z' = c (1 + z^3)")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--z0", type=float, default=0.0)
    p.add_argument("--cap", type=float, default=1e9)
    p.set_defaults(func=cmd_horizon)

    p = sub.add_parser("checkgrowth", help="check an elastic density's growth conditions")
    p.add_argument("density", help="density name (quad, gauss, quartic)")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_checkgrowth)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run the CLI and return the exit code."""
    parser = build_parser()
    report: dict = {}
    code = EXIT_OK
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command", parser.format_usage())
        report["command"] = args.command
        code = args.func(args, report)
    except UsageError as exc:
        print(exc.usage.rstrip(), file=sys.stderr)
        print(f"mvsim: error: {exc}", file=sys.stderr)
        report.update(status="usage_error", error=str(exc))
        code = EXIT_INVALID
    except PropertyViolation as exc:
        print(f"mvsim: property violated: {exc}", file=sys.stderr)
        report.setdefault("status", "violated")
        report.setdefault("error", str(exc))
        code = EXIT_PROPERTY
    except StepFailure as exc:
        print(f"mvsim: solver failure: {exc}", file=sys.stderr)
        report.update(status="solver_failure", error=str(exc))
        code = EXIT_SOLVER
    except (ConfigurationError, StructuralError) as exc:
        print(f"mvsim: invalid input: {exc}", file=sys.stderr)
        report.update(status="invalid", error=str(exc))
        code = EXIT_INVALID
    except MVSimError as exc:
        print(f"mvsim: solver failure: {exc}", file=sys.stderr)
        report.update(status="solver_failure", error=str(exc))
        code = EXIT_SOLVER
    report["exit_code"] = code
    print(json.dumps(report, sort_keys=True, default=_json_default))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
