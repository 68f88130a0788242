"""Command-line front end.

Subcommands: simulate, bloch, plucker, compare, classify,
export-generators, verify.  Every subcommand that produces data also
writes a machine-readable run report; exit codes are part of the
contract:

    0  success
    2  malformed configuration or bad arguments
    3  chart breakdown (partial outputs are still written)
    4  verification found a tolerance violation
    5  integrator failure (step-size underflow or norm overflow)

Config paths that do not exist locally are also tried against the
directory in $RICCATIFLOW_CONFIG_DIR.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bloch import MVector, m_from_z_so5, m_from_z_su4, propagate_bloch, stiefel_residuals
from .decompose import non_hermitian_propagate, propagate_decomposed, z_components
from .errors import (
    ChartBreakdownError,
    ConfigError,
    DivergenceError,
    RiccatiFlowError,
    StepSizeUnderflowError,
)
from .generators import PAIRS6, so6_commutator_table, so6_generator, su4_generator
from .oracle import compare_unitaries, propagate_direct
from .plucker import OMEGA, PluckerVector, plucker_from_unitary, propagate_plucker, symplectic_pairing
from .schedule import classify_subalgebra, load_config
from .stepper import IntegratorConfig
from .verify import DEFAULT_TOLERANCES, run_verification

CONFIG_DIR_ENV = "RICCATIFLOW_CONFIG_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BREAKDOWN = 3
EXIT_VERIFY = 4
EXIT_INTEGRATOR = 5


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def _resolve_config(path: str) -> str:
    if os.path.exists(path):
        return path
    base = os.environ.get(CONFIG_DIR_ENV)
    if base:
        alt = os.path.join(base, path)
        if os.path.exists(alt):
            return alt
    return path  # load_config reports the missing file


def _digest(path: str) -> str:
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError:
        return ""


class _JsonEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, complex):
            return [obj.real, obj.imag]
        if isinstance(obj, np.complexfloating):
            return [float(obj.real), float(obj.imag)]
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().default(obj)


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, cls=_JsonEncoder, indent=2)
        fh.write("\n")


def _write_report(args, payload: dict) -> None:
    path = getattr(args, "report", None)
    if path is None and getattr(args, "out", None):
        path = args.out + ".report.json"
    if path:
        _write_json(path, payload)


def _base_report(args, config_path: str | None, pipelines: list[str]) -> dict:
    return {
        "tool": f"riccatiflow {__version__}",
        "config": config_path,
        "config_digest": _digest(config_path) if config_path else None,
        "pipelines": pipelines,
        "started_unix": time.time(),
        "outputs": [args.out] if getattr(args, "out", None) else [],
    }


def _make_grid(total: float, t_final: float | None, dt: float | None) -> np.ndarray:
    tf = total if t_final is None else float(t_final)
    if tf <= 0 or tf > total * (1 + 1e-12) + 1e-12:
        raise ConfigError(f"--t-final {tf} outside the schedule span (0, {total}]")
    step = tf / 100.0 if dt is None else float(dt)
    if step <= 0:
        raise ConfigError("--output-grid must be positive")
    count = max(1, int(round(tf / step)))
    return np.linspace(0.0, tf, count + 1)


def _integrator(args) -> IntegratorConfig:
    return IntegratorConfig(rtol=args.rtol, atol=args.atol)


def _write_rows(path: str, fmt: str, header: list[str], rows: list[list[float]]) -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    else:
        _write_json(path, {"columns": header, "rows": rows})


# --------------------------------------------------------------------------
# simulate


def _record_rows(rec) -> tuple[list[str], list[list[float]]]:
    T, N = rec.times.size, rec.operators.shape[1]
    m, n = rec.chart.shape[1], rec.chart.shape[2]
    header = ["t"]
    for i in range(m):
        for j in range(n):
            header += [f"z{i+1}{j+1}_re", f"z{i+1}{j+1}_im"]
    if rec.w_dagger is not None:
        for i in range(n):
            for j in range(m):
                header += [f"w{i+1}{j+1}_re", f"w{i+1}{j+1}_im"]
    header.append("phi")
    header.append("interblock")
    if not rec.hermitian:
        header.append("interblock_im")
    for i in range(N):
        for j in range(N):
            header += [f"u{i+1}{j+1}_re", f"u{i+1}{j+1}_im"]
    header += ["unitarity_residual", "leg"]

    rows = []
    for k in range(T):
        row = [float(rec.times[k])]
        for i in range(m):
            for j in range(n):
                row += [rec.chart[k, i, j].real, rec.chart[k, i, j].imag]
        if rec.w_dagger is not None:
            for i in range(n):
                for j in range(m):
                    row += [rec.w_dagger[k, i, j].real, rec.w_dagger[k, i, j].imag]
        row.append(float(rec.phi[k]))
        row.append(float(rec.interblock_phase[k].real))
        if not rec.hermitian:
            row.append(float(rec.interblock_phase[k].imag))
        for i in range(N):
            for j in range(N):
                row += [rec.operators[k, i, j].real, rec.operators[k, i, j].imag]
        row += [float(rec.unitarity_residual[k]), float(rec.legs[k])]
        rows.append(row)
    return header, rows


def cmd_simulate(args) -> int:
    path = _resolve_config(args.config[0])
    schedule = load_config(path)
    grid = _make_grid(schedule.total_duration, args.t_final, args.output_grid)
    cfg = _integrator(args)
    report = _base_report(args, path, ["decomposed" if schedule.hermitian else "non_hermitian"])
    report["subalgebra"] = classify_subalgebra(schedule).value
    code = EXIT_OK
    try:
        if schedule.hermitian:
            rec = propagate_decomposed(
                schedule, args.split, grid, cfg,
                chart_recovery=args.chart_recovery, z_max=args.z_max, z_switch=args.z_switch,
            )
        else:
            rec = non_hermitian_propagate(schedule, args.split, grid, cfg, z_max=args.z_max)
    except ChartBreakdownError as exc:
        print(f"chart breakdown: {exc}", file=sys.stderr)
        rec = exc.record
        report["breakdown"] = {"time": exc.time, "message": str(exc)}
        code = EXIT_BREAKDOWN
    except (StepSizeUnderflowError, DivergenceError) as exc:
        report["failure"] = str(exc)
        _write_report(args, report)
        print(f"integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR

    if rec is not None and rec.times.size:
        if args.out:
            header, rows = _record_rows(rec)
            _write_rows(args.out, args.format, header, rows)
        report["points"] = int(rec.times.size)
        report["max_unitarity_residual"] = rec.max_unitarity_residual
        report["max_chart_norm"] = float(rec.chart_norm.max()) if rec.chart_norm.size else 0.0
        report["breakdown_events"] = rec.breakdown_events
    _write_report(args, report)
    return code


# --------------------------------------------------------------------------
# bloch


def _read_table(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, data


def cmd_bloch(args) -> int:
    if bool(args.from_z) == bool(args.config):
        raise ConfigError("bloch needs exactly one of --config or --from-z")
    if args.from_z:
        header, data = _read_table(args.from_z)
        col = {name: k for k, name in enumerate(header)}
        needed = [f"z{i}{j}_{p}" for i in (1, 2) for j in (1, 2) for p in ("re", "im")]
        if any(n not in col for n in needed) or "phi" not in col:
            raise ConfigError(f"{args.from_z}: not a chart trajectory file (missing z/phi columns)")
        times = data[:, col["t"]]
        rows, header_out = [], None
        for k in range(data.shape[0]):
            zmat = np.array(
                [
                    [
                        data[k, col[f"z{i}{j}_re"]] + 1j * data[k, col[f"z{i}{j}_im"]]
                        for j in (1, 2)
                    ]
                    for i in (1, 2)
                ]
            )
            comp = z_components(zmat)
            if args.variant == "so5":
                m = m_from_z_so5(comp.real)
            else:
                m = m_from_z_su4(comp, float(data[k, col["phi"]]))
            header_out, row = _m_row(float(times[k]), m)
            rows.append(row)
        _write_rows(args.out, args.format, header_out, rows)
        report = _base_report(args, None, ["bloch"])
        report["source"] = args.from_z
        _write_report(args, report)
        return EXIT_OK

    path = _resolve_config(args.config[0])
    schedule = load_config(path)
    tag = classify_subalgebra(schedule)
    variant = args.variant
    if variant == "auto":
        variant = "so5" if tag.value == "SO5" else "su4"
    m0 = MVector.sphere_origin() if variant == "so5" else MVector.chart_origin()
    grid = _make_grid(schedule.total_duration, args.t_final, args.output_grid)
    traj = propagate_bloch(schedule, m0, grid, _integrator(args))
    rows, header_out = [], None
    for k in range(grid.size):
        header_out, row = _m_row(float(grid[k]), MVector(traj.values[k]))
        rows.append(row)
    _write_rows(args.out, args.format, header_out, rows)
    report = _base_report(args, path, ["bloch"])
    report["subalgebra"] = tag.value
    report["variant"] = variant
    _write_report(args, report)
    return EXIT_OK


def _m_row(t: float, m: MVector) -> tuple[list[str], list[float]]:
    if m.is_sphere:
        header = ["t"] + [f"m{k+1}" for k in range(5)] + ["r1", "r2"]
        r1 = abs(float(np.sum(m.components**2)) - 1.0)
        return header, [t, *[float(x) for x in m.components], r1, 0.0]
    header = ["t"]
    for k in range(6):
        header += [f"m{k+1}_re", f"m{k+1}_im"]
    header += ["r1", "r2"]
    r1, r2 = stiefel_residuals(m)
    row = [t]
    for x in m.components:
        row += [x.real, x.imag]
    row += [r1, r2]
    return header, row


# --------------------------------------------------------------------------
# plucker


def cmd_plucker(args) -> int:
    if bool(args.from_u) == bool(args.config):
        raise ConfigError("plucker needs exactly one of --config or --from-u")
    rows = []
    header = ["t"]
    slots = ["12", "13", "14", "23", "24", "34"]
    for s in slots:
        header += [f"p{s}_re", f"p{s}_im"]
    header += ["quadric_residual", "norm_residual", "pairing_re", "pairing_im"]

    if args.from_u:
        table_header, data = _read_table(args.from_u)
        col = {name: k for k, name in enumerate(table_header)}
        N = 4
        needed = [f"u{i}{j}_re" for i in range(1, N + 1) for j in range(1, N + 1)]
        if any(nm not in col for nm in needed):
            raise ConfigError(f"{args.from_u}: not an operator trajectory file (missing u columns)")
        P0 = None
        for k in range(data.shape[0]):
            U = np.array(
                [
                    [
                        data[k, col[f"u{i}{j}_re"]] + 1j * data[k, col[f"u{i}{j}_im"]]
                        for j in range(1, N + 1)
                    ]
                    for i in range(1, N + 1)
                ]
            )
            P = plucker_from_unitary(U)
            if P0 is None:
                P0 = P
            rows.append(_p_row(float(data[k, col["t"]]), P, P0))
        _write_rows(args.out, args.format, header, rows)
        report = _base_report(args, None, ["plucker"])
        report["source"] = args.from_u
        _write_report(args, report)
        return EXIT_OK

    path = _resolve_config(args.config[0])
    schedule = load_config(path)
    grid = _make_grid(schedule.total_duration, args.t_final, args.output_grid)
    P0 = PluckerVector.origin()
    traj = propagate_plucker(schedule, P0, grid, _integrator(args))
    for k in range(grid.size):
        rows.append(_p_row(float(grid[k]), PluckerVector(traj.values[k]), P0))
    _write_rows(args.out, args.format, header, rows)
    report = _base_report(args, path, ["plucker"])
    report["subalgebra"] = classify_subalgebra(schedule).value
    _write_report(args, report)
    return EXIT_OK


def _p_row(t: float, P: PluckerVector, P0: PluckerVector) -> list[float]:
    pairing = symplectic_pairing(P, P0)
    row = [t]
    for x in P.components:
        row += [x.real, x.imag]
    row += [P.quadric_residual(), P.norm_residual(), pairing.real, pairing.imag]
    return row


# --------------------------------------------------------------------------
# compare / classify / export / verify


def cmd_compare(args) -> int:
    path = _resolve_config(args.config[0])
    schedule = load_config(path)
    grid = _make_grid(schedule.total_duration, args.t_final, args.output_grid)
    cfg = _integrator(args)
    report = _base_report(args, path, ["decomposed", "oracle"])
    report["subalgebra"] = classify_subalgebra(schedule).value
    try:
        if schedule.hermitian:
            rec = propagate_decomposed(schedule, args.split, grid, cfg,
                                       chart_recovery=args.chart_recovery)
        else:
            rec = non_hermitian_propagate(schedule, args.split, grid, cfg)
    except ChartBreakdownError as exc:
        report["breakdown"] = {"time": exc.time, "message": str(exc)}
        _write_report(args, report)
        print(json.dumps(report, cls=_JsonEncoder, indent=2))
        return EXIT_BREAKDOWN
    orc = propagate_direct(schedule, grid)
    frob = phins = 0.0
    for k in range(grid.size):
        f, p = compare_unitaries(rec.operators[k], orc.operators[k])
        frob, phins = max(frob, f), max(phins, p)
    report.update(
        {
            "max_frobenius": frob,
            "max_phase_insensitive": phins,
            "constraint_drifts": {"unitarity": rec.max_unitarity_residual},
            "breakdown_events": rec.breakdown_events,
            "points": int(grid.size),
        }
    )
    _write_report(args, report)
    print(json.dumps(report, cls=_JsonEncoder, indent=2))
    return EXIT_OK


def cmd_classify(args) -> int:
    path = _resolve_config(args.config[0])
    schedule = load_config(path)
    tag = classify_subalgebra(schedule)
    print(tag.value)
    report = _base_report(args, path, ["classify"])
    report["subalgebra"] = tag.value
    _write_report(args, report)
    return EXIT_OK


def cmd_export_generators(args) -> int:
    def enc(mat: np.ndarray):
        return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(mat, complex)]

    basis = {f"{a}{b}": enc(su4_generator(a, b)) for a, b in PAIRS6}
    rotations = {f"{a}{b}": np.asarray(so6_generator(a, b).matrix).tolist() for a, b in PAIRS6}
    table = {
        f"{a[0]}{a[1]},{b[0]}{b[1]}": {f"{p[0]}{p[1]}": c for p, c in terms.items()}
        for (a, b), terms in so6_commutator_table().items()
        if terms
    }
    payload = {
        "pair_order": [f"{a}{b}" for a, b in PAIRS6],
        "generators_4x4": basis,
        "rotation_generators_6x6": rotations,
        "commutator_table": table,
        "convention": "H = sum_{mu<nu} F[mu,nu] * generators_4x4[munu]; complex entries as [re, im]",
    }
    if args.out:
        _write_json(args.out, payload)
    else:
        print(json.dumps(payload, cls=_JsonEncoder, indent=2))
    _write_report(args, _base_report(args, None, ["export-generators"]))
    return EXIT_OK


def _parse_tolerances(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        name, _, value = item.partition("=")
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(
                f"unknown tolerance {name!r}; known: {', '.join(sorted(DEFAULT_TOLERANCES))}"
            )
        out[name] = float(value)
    return out


def cmd_verify(args) -> int:
    path = _resolve_config(args.config[0])
    schedule = load_config(path)
    overrides = _parse_tolerances(args.tol)
    cfg = _integrator(args)
    report = _base_report(args, path, [])
    try:
        checks, info = run_verification(
            schedule, split=args.split, tolerances=overrides, cfg=cfg,
            chart_recovery=args.chart_recovery,
        )
    except ChartBreakdownError as exc:
        report["breakdown"] = {"time": exc.time, "message": str(exc)}
        _write_report(args, report)
        print(f"chart breakdown during verification: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    report.update(info)
    report["checks"] = [
        {"name": c.name, "residual": c.residual, "tolerance": c.tolerance, "passed": c.passed}
        for c in checks
    ]
    ok = all(c.passed for c in checks)
    report["passed"] = ok
    _write_report(args, report)
    width = max(len(c.name) for c in checks)
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark}  {c.name:<{width}}  {c.residual:.3e}  (tol {c.tolerance:.1e})")
    return EXIT_OK if ok else EXIT_VERIFY


# --------------------------------------------------------------------------
# argument plumbing


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", nargs="+", required=config_required,
                   help="schedule configuration file(s), JSON")
    p.add_argument("--split", type=int, default=2, help="lower block size n (default 2)")
    p.add_argument("--t-final", type=float, default=None, dest="t_final")
    p.add_argument("--output-grid", type=float, default=None, dest="output_grid",
                   help="output sample spacing (default span/100)")
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--chart-recovery", choices=("abort", "switch"), default="abort",
                   dest="chart_recovery")
    p.add_argument("--out", default=None, help="output data path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--report", default=None, help="run-report JSON path")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for multiple configs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riccatiflow",
                                 description="Evolution operators via coset-chart flow")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="propagate a schedule through the decomposition engine")
    _add_common(p)
    p.add_argument("--z-max", type=float, default=1e6, dest="z_max")
    p.add_argument("--z-switch", type=float, default=4.0, dest="z_switch")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bloch", help="rotation-vector trajectories")
    _add_common(p, config_required=False)
    p.add_argument("--variant", choices=("auto", "so5", "su4"), default="auto")
    p.add_argument("--from-z", default=None, dest="from_z",
                   help="map a recorded chart trajectory instead of propagating")
    p.set_defaults(func=cmd_bloch)

    p = sub.add_parser("plucker", help="plane-coordinate trajectories")
    _add_common(p, config_required=False)
    p.add_argument("--from-u", default=None, dest="from_u",
                   help="extract from a recorded operator trajectory")
    p.set_defaults(func=cmd_plucker)

    p = sub.add_parser("compare", help="decomposition vs direct integration")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("classify", help="print the symmetry class of a schedule")
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("export-generators", help="emit generator tables as JSON")
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_export_generators)

    p = sub.add_parser("verify", help="run the invariant suite on a config")
    _add_common(p)
    p.add_argument("--tol", action="append", default=[],
                   help="override a tolerance, NAME=VALUE (repeatable)")
    p.set_defaults(func=cmd_verify)

    return ap


def _run_one(args) -> int:
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepSizeUnderflowError, DivergenceError) as exc:
        print(f"integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    except ChartBreakdownError as exc:
        print(f"chart breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except RiccatiFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _batch_worker(payload) -> int:
    argv, config = payload
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config = [config]
    stem = os.path.splitext(os.path.basename(config))[0]
    ext = "csv" if args.format == "csv" else "json"
    if args.out:
        args.out = os.path.join(args.out, f"{stem}.{ext}")
    if args.report is None and args.out:
        args.report = args.out + ".report.json"
    return _run_one(args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configs = getattr(args, "config", None)
    if configs is not None and len(configs) > 1:
        if not args.out or not os.path.isdir(args.out):
            print("--out must name an existing directory when running multiple configs",
                  file=sys.stderr)
            return EXIT_CONFIG
        base_argv = list(argv) if argv is not None else sys.argv[1:]
        # strip config values; the worker re-inserts its own
        payloads = [(base_argv, c) for c in configs]
        codes = []
        with concurrent.futures.ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            for code in pool.map(_batch_worker, payloads):
                codes.append(code)
        return max(codes) if codes else EXIT_OK
    return _run_one(args)


if __name__ == "__main__":
    sys.exit(main())
