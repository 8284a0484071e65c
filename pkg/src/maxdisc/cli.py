"""Command-line entry point.

Exit status: 0 success, 1 invalid input, 2 failure during computation,
3 a verification verdict of FAIL.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, load_config
from .errors import MaxDiscError, SimulationError, UnknownSubcommand, ValidationError
from .extremes import mesh_bound
from .limits import HTable, LimitSpec, limit_cdf_many
from .model import check_horizon
from .pickands import EXTRAPOLATION_LAMBDAS, build_H_table, simulate_windows
from .sampler import MeshSpec, VectorSampler, write_path_dump
from .verify import (
    ExperimentReport,
    SweepReport,
    convergence_sweep,
    default_workers,
    pickands_constants,
    run_experiment,
    simulate_maxima,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_FAIL = 0, 1, 2, 3
MAX_DUMP_POINTS = 1 << 22


def fmt(v) -> str:
    """Machine-file number: 17 significant digits."""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "invalid choice" in message or "required: command" in message:
            raise UnknownSubcommand(message)
        raise ValidationError(message)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _point_label(vec) -> str:
    vals = {float(v) for v in vec}
    if len(vals) == 1:
        return fmt(vals.pop())
    return ";".join(fmt(v) for v in vec)


def emit_plotdata(report, out_dir) -> list:
    """Plot-ready CSVs; the first line of each names the columns."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(report, SweepReport):
        path = out_dir / "plot_sweep.csv"
        with open(path, "w", newline="") as fh:
            fh.write("# sup-distance against ln T; columns: log_T, sup_distance, stderr\n")
            w = csv.writer(fh)
            w.writerow(["log_T", "sup_distance", "stderr"])
            for lt, d, s in zip(report.log_T, report.sup_distance, report.sup_stderr):
                w.writerow([fmt(lt), fmt(d), fmt(s)])
        written.append(path)
        reports = report.reports
    else:
        reports = [report]
    for rep in reports:
        suffix = "" if len(reports) == 1 else f"_lnT{rep.log_T:g}"
        path = out_dir / f"plot_cdf{suffix}.csv"
        with open(path, "w", newline="") as fh:
            fh.write("# empirical vs limit CDF; columns: x, y, empirical, stderr, theoretical\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "empirical", "stderr", "theoretical"])
            for p in rep.points:
                w.writerow([_point_label(p.x), _point_label(p.y), fmt(p.empirical), fmt(p.stderr), fmt(p.theoretical)])
        written.append(path)
    return written


def _write_report_csv(report: ExperimentReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "empirical", "stderr", "theoretical", "theory_error", "z"])
        for p in report.points:
            w.writerow([_point_label(p.x), _point_label(p.y), fmt(p.empirical), fmt(p.stderr), fmt(p.theoretical),
                        fmt(p.theory_error), fmt(p.z)])


def write_samples_csv(sample, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "k", "m_cont", "m_grid", "x_hat", "y_hat"])
        reps, p = sample.m_cont.shape
        for r in range(reps):
            for k in range(p):
                w.writerow([r, k, fmt(sample.m_cont[r, k]), fmt(sample.m_grid[r, k]), fmt(sample.x_hat[r, k]),
                            fmt(sample.y_hat[r, k])])


def _manifest(out_dir: Path, raw_cfg, seed, started, outputs, command) -> Path:
    path = out_dir / "manifest.json"
    finished = _now()
    _write_json(
        path,
        {
            "command": command,
            "config_hash": config_hash(raw_cfg) if raw_cfg is not None else None,
            "master_seed": seed,
            "tool_version": __version__,
            "started": started,
            "finished": finished,
            "outputs": sorted(str(Path(p).name) for p in outputs) + ["manifest.json"],
        },
    )
    return path


# --------------------------------------------------------------------------
# subcommands


def cmd_model_check(args) -> int:
    cfg, raw = load_config(args.config)
    model = cfg.model
    grid = cfg.grid()
    horizons = list(cfg.log_T_ladder or [cfg.log_T])
    for lt in horizons:
        check_horizon(model, math.exp(lt))
    summary = model.describe()
    summary["grid"] = {"regime": grid.regime.value, "D": grid.D if math.isfinite(grid.D) else "inf"}
    summary["log_T"] = horizons
    summary["deltas"] = [grid.delta(math.exp(lt)) for lt in horizons]
    summary["config_hash"] = config_hash(raw)
    print(f"model OK: p={model.p}, latent rank {model.latent_rank}, grid {grid.regime.value}")
    for k, c in enumerate(model.components):
        print(f"  component {k}: alpha={c.alpha:.6g} C={c.c:.6g} r_kk={c.r_diag:.6g}")
    for lt, dl in zip(horizons, summary["deltas"]):
        print(f"  ln T={lt:.6g}: delta={dl:.6g} max|rho|={np.max(np.abs(model.r_cross)) / lt:.6g}")
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = _now()
    cfg, raw = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.model
    grid = cfg.grid()
    T = math.exp(cfg.log_T if cfg.log_T is not None else cfg.log_T_ladder[0])
    check_horizon(model, T)
    sim = simulate_maxima(cfg, model, grid, T, cfg.workers or default_workers())
    sample = sim.sample
    outputs = [out / "samples.csv"]
    write_samples_csv(sample, outputs[0])
    if args.dump_paths:
        h = min(mesh_bound(T, c, cfg.mesh_factor) for c in model.components)
        mesh = MeshSpec.for_horizon(T, h)
        if mesh.n > MAX_DUMP_POINTS:
            raise ValidationError(f"path dump needs {mesh.n} mesh points, limit is {MAX_DUMP_POINTS}")
        vs = VectorSampler(model, T, mesh)
        ens = [vs.sample(cfg.seed, r) for r in range(args.dump_paths)]
        outputs.append(out / "paths.bin")
        write_path_dump(outputs[-1], ens)
    _manifest(out, raw, cfg.seed, started, outputs, "simulate")
    print(f"wrote {cfg.replications} replications to {outputs[0]}")
    return EXIT_OK


def cmd_pickands(args) -> int:
    started = _now()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = default_workers()
    lambdas = EXTRAPOLATION_LAMBDAS if args.extrapolate else (args.lam,)
    ws = simulate_windows(args.alpha, args.d, lambdas, args.reps, args.seed, args.mesh, args.method, None, workers)
    pc = build_H_table(args.alpha, args.d, samples=ws)
    hxy = pc.table(0.0, 0.0)
    result = {
        "alpha": args.alpha,
        "d": args.d,
        "H_alpha": pc.H_alpha.to_dict(),
        "H_d_alpha": pc.H_d.to_dict(),
        "H_xy_at_0_0": hxy,
        "value": pc.H_d.value,
        "stderr": pc.H_d.stderr,
    }
    outputs = [out / "pickands.json"]
    _write_json(outputs[0], result)
    if args.table:
        outputs.append(out / "H_table.csv")
        pc.table.write_csv(outputs[-1])
    _manifest(out, None, args.seed, started, outputs, "pickands")
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    started = _now()
    cfg, raw = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(cfg, args.regime, keep_sample=args.samples)
    outputs = [out / "report.json", out / "report.csv"]
    _write_json(outputs[0], report.to_dict())
    _write_report_csv(report, outputs[1])
    if args.samples:
        outputs.append(out / "samples.csv")
        write_samples_csv(report.sample, outputs[-1])
    outputs += emit_plotdata(report, out)
    _manifest(out, raw, cfg.seed, started, outputs, f"verify {args.regime}")
    print(f"{'x':>12} {'y':>12} {'empirical':>12} {'stderr':>12} {'limit':>12} {'z':>10}")
    for p in report.points:
        print(f"{_point_label(p.x):>12.12} {_point_label(p.y):>12.12} {p.empirical:12.6g} {p.stderr:12.6g} "
              f"{p.theoretical:12.6g} {p.z:10.4g}")
    print(f"sup-distance {report.sup_distance:.6g}  worst |z| {report.worst_z:.6g}  verdict {report.verdict}")
    return EXIT_OK if report.verdict == "PASS" else EXIT_FAIL


def cmd_sweep(args) -> int:
    started = _now()
    cfg, raw = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = convergence_sweep(cfg, args.limit)
    outputs = [out / "sweep.json"]
    _write_json(outputs[0], report.to_dict())
    outputs += emit_plotdata(report, out)
    _manifest(out, raw, cfg.seed, started, outputs, "sweep")
    for lt, d, s in zip(report.log_T, report.sup_distance, report.sup_stderr):
        print(f"ln T = {lt:6.3g}  sup-distance {d:.6g}  stderr {s:.6g}")
    print(f"verdict {report.verdict}")
    return EXIT_OK if report.verdict == "PASS" else EXIT_FAIL


def _vector_arg(text: str, p: int) -> np.ndarray:
    vals = [float(v) for v in text.split(",")]
    if len(vals) == 1:
        vals = vals * p
    if len(vals) != p:
        raise ValidationError(f"expected 1 or {p} comma-separated values, got {text!r}")
    return np.array(vals)


def cmd_limits_eval(args) -> int:
    cfg, _ = load_config(args.config)
    model = cfg.model
    regime = args.regime or cfg.grid().regime.value
    kw = {}
    if regime == "pickands":
        grid = cfg.grid()
        if args.table:
            tables = [HTable.read_csv(args.table)] * model.p
        else:
            tables = [
                pickands_constants(c.alpha, grid.D * c.c ** (1 / c.alpha), cfg.pickands, default_workers()).table
                for c in model.components
            ]
        kw = dict(H_alpha=[t.H_alpha for t in tables], H_d_alpha=[t.H_d for t in tables], H_xy=tables)
    spec = LimitSpec.from_model(model, regime, **kw)
    xs = [_vector_arg(t, model.p) for t in args.x]
    ys = [_vector_arg(t, model.p) for t in (args.y or ["inf"])]
    X = np.array([x for x in xs for _ in ys])
    Y = np.array([y for _ in xs for y in ys])
    vals, errs = limit_cdf_many(spec, X, Y, n_nodes=args.nodes)
    w = csv.writer(sys.stdout)
    w.writerow(["x", "y", "value", "error_estimate"])
    for x, y, v, e in zip(X, Y, vals, errs):
        w.writerow([_point_label(x), _point_label(y), fmt(v), fmt(e)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for output files (default ./out)")
    ap = _Parser(prog="maxdisc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--out-dir", default="./out", help="directory for output files (default ./out)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("model", help="model commands")
    msub = m.add_subparsers(dest="model_command", required=True, parser_class=_Parser)
    mc = msub.add_parser("check", help="validate a config and print the model summary", parents=[common])
    mc.add_argument("config")
    mc.add_argument("--json", action="store_true", help="also print the summary as JSON")
    mc.set_defaults(func=cmd_model_check)

    s = sub.add_parser("simulate", help="simulate normalised maxima into samples.csv", parents=[common])
    s.add_argument("config")
    s.add_argument("--dump-paths", type=int, default=0, metavar="N",
                   help="also dump the first N replications' paths to paths.bin")
    s.set_defaults(func=cmd_simulate)

    pk = sub.add_parser("pickands", help="estimate Pickands-type constants", parents=[common])
    pk.add_argument("--alpha", type=float, required=True)
    pk.add_argument("--d", type=float, required=True)
    pk.add_argument("--lambda", dest="lam", type=float, default=64.0)
    pk.add_argument("--reps", type=int, default=20000)
    pk.add_argument("--seed", type=int, default=0)
    pk.add_argument("--mesh", type=float, default=None)
    pk.add_argument("--method", choices=("tilted", "direct"), default="tilted")
    pk.add_argument("--extrapolate", action="store_true", help="extrapolate from lambda = 16, 32, 64")
    pk.add_argument("--table", action="store_true", help="write the H^(x,y) lattice to H_table.csv")
    pk.set_defaults(func=cmd_pickands)

    v = sub.add_parser("verify", help="compare simulated maxima with a limit law", parents=[common])
    v.add_argument("regime", choices=("sparse", "pickands", "dense", "corollary"))
    v.add_argument("config")
    v.add_argument("--samples", action="store_true", help="also write samples.csv")
    v.set_defaults(func=cmd_verify)

    sw = sub.add_parser("sweep", help="sup-distance over a ladder of horizons", parents=[common])
    sw.add_argument("config")
    sw.add_argument("--limit", choices=("sparse", "pickands", "dense", "corollary"), default=None)
    sw.set_defaults(func=cmd_sweep)

    li = sub.add_parser("limits", help="limit distribution commands")
    lsub = li.add_subparsers(dest="limits_command", required=True, parser_class=_Parser)
    le = lsub.add_parser("eval", help="evaluate the limit CDF", parents=[common])
    le.add_argument("config")
    le.add_argument("--x", nargs="+", required=True, help="values; a,b,... gives one per component")
    le.add_argument("--y", nargs="+", default=None)
    le.add_argument("--regime", choices=("sparse", "pickands", "dense", "corollary"), default=None)
    le.add_argument("--table", default=None, help="H^(x,y) table CSV for the Pickands regime")
    le.add_argument("--nodes", type=int, default=64)
    le.set_defaults(func=cmd_limits_eval)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, MaxDiscError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
