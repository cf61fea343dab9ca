"""Command-line front end: solve, loadflow, compare, check and oracle.

Exit codes: 0 success, 1 bad input, 2 solver failure, 3 load-flow
non-convergence. Errors are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import conic
from .builder import DEFAULT_DELTA, SVR_MODES, BuildOptions, LiftedPoint, rbopf_residuals
from .errors import NonConvergence, SolverFailure, SvrOpfError, UnsupportedMode, ZeroVoltage
from .netmodel import Network, load_feeder, parse_feeder, to_dict
from .recovery import evaluate, optimize, tap_grid_search
from .svrgain import tap_to_ratio

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_LOADFLOW = 0, 1, 2, 3
SVR_TYPES = ("wye", "closed_delta", "open_delta")
COMPARE_COLUMNS = ["feeder", "svr_type", "mode", "c", "c_breve", "gap_pct", "vmin", "vmax",
                   "v_unb", "delta_sep", "eig_ratio", "time_s", "taps"]


@dataclass
class RunConfig:
    feeder: Path
    mode: str = "mbopf"
    objective: str = "import"
    deltas: dict[int, float] = field(default_factory=dict)
    delta_all: float | None = None
    svr_type: str | None = None
    gang: bool = False
    backend: str | None = None
    tol: float = conic.DEFAULT_TOL
    seed: int = 0

    def __post_init__(self):
        if not Path(self.feeder).is_file():
            raise FileNotFoundError(f"feeder file not found: {self.feeder}")
        for d in [*self.deltas.values(), self.delta_all]:
            if d is not None and not 0.0 < d <= 30.0:
                raise ValueError(f"delta {d} outside (0, 30] degrees")


# ---------------------------------------------------------------- helpers

def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _backend(args) -> str | None:
    """Flag, then ``SVROPF_SOLVER``, then ``solver.backend`` from ``--config``."""
    if getattr(args, "backend", None):
        return args.backend
    if os.environ.get("SVROPF_SOLVER"):
        return os.environ["SVROPF_SOLVER"]
    return _read_config(getattr(args, "config", None)).get("solver", {}).get("backend")


def _parse_deltas(items) -> tuple[float | None, dict[int, float]]:
    """``--delta 5`` applies to every regulator, ``--delta 13=7.5`` to one edge."""
    every, per = None, {}
    for item in items or []:
        if "=" in item:
            k, v = item.split("=", 1)
            per[int(k)] = float(v)
        else:
            every = float(item)
    return every, per


def retype(net: Network, svr_type: str) -> Network:
    """Same feeder with every regulator switched to ``svr_type``."""
    doc = to_dict(net)
    for s in doc["svrs"]:
        if s["type"] != svr_type:
            s["type"] = svr_type
            s.pop("r_bounds", None)
            s["delta_deg"] = DEFAULT_DELTA[svr_type]
    return parse_feeder(doc)


def _load(cfg: RunConfig) -> Network:
    net = load_feeder(cfg.feeder)
    if cfg.svr_type:
        net = retype(net, cfg.svr_type)
    return net


def _options(net: Network, cfg: RunConfig) -> BuildOptions:
    off = len(net.lines)
    deltas = dict(cfg.deltas)
    gang = {}
    for j in range(len(net.svrs)):
        if cfg.delta_all is not None:
            deltas.setdefault(off + j, cfg.delta_all)
        if cfg.gang:
            gang[off + j] = True
    return BuildOptions(svr_mode=cfg.mode, objective=cfg.objective, deltas=deltas, gang=gang)


def _config(args, **over) -> RunConfig:
    every, per = _parse_deltas(getattr(args, "delta", None))
    kw = dict(feeder=Path(args.feeder), deltas=per, delta_all=every,
              mode=getattr(args, "mode", "mbopf"), objective=getattr(args, "objective", "import"),
              svr_type=getattr(args, "svr_type", None), gang=getattr(args, "gang", False),
              backend=_backend(args), tol=getattr(args, "tol", conic.DEFAULT_TOL),
              seed=getattr(args, "seed", 0))
    kw.update(over)
    return RunConfig(**kw)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _emit(obj, path: str | None):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def voltages_csv(net: Network, voltages: dict[int, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bus", "name", "phase", "magnitude", "angle_deg"])
    for m, bus in net.buses.items():
        for p, v in zip(bus.phases, voltages[m]):
            w.writerow([m, bus.name or "", "abc"[p], f"{abs(v):.10f}", f"{np.degrees(np.angle(v)):.8f}"])
    return buf.getvalue()


def _parse_taps(net: Network, items) -> dict[int, np.ndarray]:
    """``EDGE=t1,t2,t3`` or a bare ``t`` applied to every adjustable phase."""
    off = len(net.lines)
    ratios = {}
    for item in items or []:
        if "=" in item:
            k, v = item.split("=", 1)
            targets = [int(k)]
        else:
            v, targets = item, [off + j for j in range(len(net.svrs))]
        taps = [int(t) for t in v.split(",")]
        for k in targets:
            spec = net.edges[k].spec
            if len(taps) == 1:
                taps_k = [taps[0] if p in spec.free_phases else 0 for p in range(spec.size)]
            else:
                taps_k = taps
            ratios[k] = np.array([tap_to_ratio(t, spec.variant) for t in taps_k])
    return ratios


# ---------------------------------------------------------------- subcommands

def cmd_solve(args) -> int:
    cfg = _config(args)
    net = _load(cfg)
    res = optimize(net, _options(net, cfg), backend=cfg.backend, tol=cfg.tol)
    rep = res.report()
    rep["feeder"] = net.name
    _emit(rep, args.out)
    if args.voltages_csv:
        Path(args.voltages_csv).write_text(voltages_csv(net, res.point.voltages), encoding="utf-8")
    if args.save_solution:
        save_solution(args.save_solution, res.relaxation)
    return EXIT_OK


def cmd_loadflow(args) -> int:
    cfg = _config(args)
    net = _load(cfg)
    point = evaluate(net, _parse_taps(net, args.taps))
    rep = point.report()
    rep["feeder"] = net.name
    rep["metrics"] = point.metrics.as_dict()
    _emit(rep, args.out)
    if args.voltages_csv:
        Path(args.voltages_csv).write_text(voltages_csv(net, point.voltages), encoding="utf-8")
    return EXIT_OK


def compare_rows(feeder: Path, modes, svr_types, cfg_kw: dict, workers: int | None = None) -> list[dict]:
    """One row per (SVR type, mode); unsupported combinations are skipped.

    A ``None`` SVR type keeps the connections stored in the feeder file.
    """
    jobs = [(t, m) for t in svr_types for m in modes]

    def run(job):
        t, m = job
        cfg = RunConfig(feeder=feeder, mode=m, svr_type=t, **cfg_kw)
        net = _load(cfg)
        try:
            res = optimize(net, _options(net, cfg), backend=cfg.backend, tol=cfg.tol, quantized=False)
        except UnsupportedMode:
            return None
        p = res.point
        kind = "/".join(sorted({e.spec.svr_type for e in net.svrs}))
        return {
            "feeder": net.name, "svr_type": kind, "mode": m,
            "c": res.relaxation.objective, "c_breve": p.objective_feasible, "gap_pct": p.gap_percent,
            "vmin": p.metrics.v_min, "vmax": p.metrics.v_max, "v_unb": p.metrics.unbalance,
            "delta_sep": p.metrics.phase_separation, "eig_ratio": p.eig_ratio_avg, "time_s": p.runtime_s,
            "taps": ";".join(",".join(str(t) for t in ts) for ts in p.taps.values()),
        }

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(run, jobs))
    return [r for r in rows if r is not None]


def cmd_compare(args) -> int:
    every, per = _parse_deltas(args.delta)
    types = args.svr_types or [None]
    kw = dict(deltas=per, delta_all=every, gang=args.gang, backend=_backend(args), tol=args.tol)
    rows = compare_rows(Path(args.feeder), args.modes, types, kw)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def save_solution(path, rsol) -> None:
    """Store lifted blocks of a relaxation solution in an ``.npz`` archive."""
    arrays = {"objective": np.array(rsol.objective)}
    for key in ("V", "I", "S", "Sp", "r", "s", "sg"):
        for k, v in getattr(rsol, key).items():
            arrays[f"{key}_{k}"] = np.asarray(v)
    np.savez(path, **arrays)


def load_solution(path) -> LiftedPoint:
    data = np.load(path)
    groups: dict[str, dict[int, np.ndarray]] = {k: {} for k in ("V", "I", "S", "Sp", "r", "s", "sg")}
    for name in data.files:
        if name == "objective":
            continue
        key, idx = name.rsplit("_", 1)
        groups[key][int(idx)] = data[name]
    point = LiftedPoint(groups["V"], groups["I"], groups["S"], groups["Sp"], groups["r"], groups["s"] or None)
    point.sg = groups["sg"]
    return point


def cmd_check(args) -> int:
    net = load_feeder(args.feeder)
    res = rbopf_residuals(net, load_solution(args.solution))
    res["eig_ratio"] = {str(k): v for k, v in res["eig_ratio"].items()}
    _emit(res, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    net = load_feeder(args.feeder)
    if args.svr_type:
        net = retype(net, args.svr_type)
    res = tap_grid_search(net, tap_step=args.tap_step, gang=args.gang, workers=args.workers)
    _emit({
        "feeder": net.name,
        "best_cost": res.best_cost,
        "best_taps": None if res.best_taps is None else {str(k): v for k, v in res.best_taps.items()},
        "evaluated": res.evaluated,
        "feasible": res.feasible,
        "failures": res.failures,
        "tap_step": args.tap_step,
        "gang": args.gang,
    }, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svropf", description="Regulator tap optimization on unbalanced radial feeders.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solver=True):
        p.add_argument("--feeder", required=True, help="feeder JSON file")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        if solver:
            p.add_argument("--delta", action="append", metavar="DEG|EDGE=DEG",
                           help="phase-separation bound in degrees (repeatable)")
            p.add_argument("--gang", action="store_true", help="force gang operation of every regulator")
            p.add_argument("--backend", choices=conic.BACKENDS, help="conic solver backend")
            p.add_argument("--tol", type=float, default=conic.DEFAULT_TOL, help="solver tolerance")
            p.add_argument("--config", help="JSON file; key solver.backend picks the backend")

    p = sub.add_parser("solve", help="relax, solve, recover taps and certify with a load flow")
    common(p)
    p.add_argument("--mode", choices=SVR_MODES, default="mbopf")
    p.add_argument("--objective", choices=("import", "import_plus_dg"), default="import")
    p.add_argument("--svr-type", choices=SVR_TYPES, help="override every regulator's connection")
    p.add_argument("--voltages-csv", help="write recovered bus voltages as CSV")
    p.add_argument("--save-solution", help="store the lifted relaxation solution (.npz)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("loadflow", help="load flow at fixed taps")
    common(p, solver=False)
    p.add_argument("--taps", action="append", metavar="T|EDGE=T1,T2,T3", help="tap positions (default 0)")
    p.add_argument("--svr-type", choices=SVR_TYPES)
    p.add_argument("--voltages-csv")
    p.set_defaults(func=cmd_loadflow)

    p = sub.add_parser("compare", help="table of objective, gap and voltage metrics across modes")
    common(p)
    p.add_argument("--modes", nargs="+", choices=SVR_MODES, default=list(SVR_MODES))
    p.add_argument("--svr-types", nargs="+", choices=SVR_TYPES)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", help="residuals of the exact lifted equations for a saved solution")
    common(p, solver=False)
    p.add_argument("--solution", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="exhaustive tap grid search by load flow")
    common(p, solver=False)
    p.add_argument("--tap-step", type=int, default=1)
    p.add_argument("--gang", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--svr-type", choices=SVR_TYPES)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_oracle)
    return ap


def _fail(code: int, exc: BaseException, **extra) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    print(json.dumps(err, default=_json_default), file=sys.stderr)
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2, which is reserved for solver failures here
        if exc.code in (0, None):
            return EXIT_OK
        return _fail(EXIT_INPUT, ValueError("invalid command line"))
    try:
        return args.func(args)
    except SolverFailure as exc:
        diag = {k: v for k, v in exc.diagnostics.items() if isinstance(v, (str, int, float)) and
                not (isinstance(v, float) and not math.isfinite(v))}
        return _fail(EXIT_SOLVER, exc, status=exc.status, diagnostics=diag)
    except (NonConvergence, ZeroVoltage) as exc:
        return _fail(EXIT_LOADFLOW, exc)
    except (SvrOpfError, ValueError, OSError, KeyError) as exc:
        return _fail(EXIT_INPUT, exc)


def main() -> None:
    sys.exit(run())
