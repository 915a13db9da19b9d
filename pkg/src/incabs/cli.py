"""Command-line front end: ``incabs {abstract,verify,bench,plot-data,mesh-info}``.

Exit codes: 0 success, 1 configuration or input error, 2 a verification
check failed, 3 a run was aborted by the active-point memory cap.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import _kernels
from .abstraction import (
    FinalAbstraction,
    load_abstraction,
    plan_increments,
    run_incremental,
    run_onestep,
    save_abstraction,
)
from .errors import BadSlice, ConfigError, IncabsError, MemoryBudgetExceeded
from .funcs.builtins import SWARM_X_BOUNDS
from .funcs.spec import FunctionSpec
from .lp import write_mps
from .mesh import UniformMesh, interpolation_radius, mesh_diameter, region_vertices
from .runconfig import RunConfig, from_dict, load_config
from .verify import (
    SUBOPTIMALITY_TOL,
    TABLE_COLUMNS,
    MethodComparison,
    VerificationReport,
    _result,
    check_continuous_sandwich,
    check_dominance,
    check_grid_sandwich,
    format_table,
)

NO_TIME_COLUMNS = tuple(c for c in TABLE_COLUMNS if c != "seconds")

log = logging.getLogger("incabs")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_CAP = 0, 1, 2, 3


# ---------------------------------------------------------------- plot data


def parse_slice(text: str | None, spec: FunctionSpec) -> dict[int, float]:
    """``"x1=0,u0=0.5"`` -> {input dimension: value}."""
    fixed: dict[int, float] = {}
    if not text:
        return fixed
    for part in text.split(","):
        match = re.fullmatch(r"\s*([xu])(\d+)\s*=\s*(\S+)\s*", part)
        if not match:
            raise BadSlice(f"cannot read slice term {part!r}; expected e.g. x1=0")
        kind, index, value = match.group(1), int(match.group(2)), match.group(3)
        limit = spec.n if kind == "x" else spec.m
        if index >= limit:
            raise BadSlice(f"{kind}{index} does not exist (function has {limit} {kind}-variables)")
        dim = index if kind == "x" else spec.n + index
        if dim in fixed:
            raise BadSlice(f"{kind}{index} is fixed twice")
        try:
            fixed[dim] = float(value)
        except ValueError:
            raise BadSlice(f"slice value {value!r} is not a number") from None
    if len(fixed) >= spec.n + spec.m:
        raise BadSlice("the slice fixes every dimension; leave one or two free")
    return fixed


def _slice_points(mesh: UniformMesh, fixed: dict[int, float]) -> tuple[np.ndarray, list[int]]:
    free = [i for i in range(mesh.dim) if i not in fixed]
    if len(free) not in (1, 2):
        raise BadSlice(f"slice must leave 1 or 2 free dimensions, leaves {len(free)}")
    axes = []
    for i in range(mesh.dim):
        values = mesh.axis_values(i)
        if i in fixed:
            k = int(np.argmin(np.abs(values - fixed[i])))
            if abs(values[k] - fixed[i]) > 1e-9 * max(1.0, abs(fixed[i])) + 1e-12:
                raise BadSlice(f"{fixed[i]} is not a grid value along dimension {i}")
            axes.append(np.array([k]))
        else:
            axes.append(np.arange(mesh.points_per_dim[i]))
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mesh.dim)
    return idx, free


def emit_plot_data(
    abstraction: FinalAbstraction,
    spec: FunctionSpec,
    mesh: UniformMesh,
    fixed: dict[int, float],
    path,
    increments=(),
) -> int:
    """Write f and the plane values along a 1D/2D grid slice as CSV; returns the row count.

    Per-increment columns are left empty outside that increment's region.
    """
    idx, free = _slice_points(mesh, fixed)
    for k in increments:
        if not 1 <= k <= abstraction.kappa:
            raise BadSlice(f"increment {k} outside 1..{abstraction.kappa}")
    P = mesh.positions(idx)
    names = [f"x{i}" if i < spec.n else f"u{i - spec.n}" for i in free]
    outs = range(spec.n_out)
    header = names + [f"f{j}" for j in outs]
    header += [f"{side}_f{j}" for j in outs for side in ("upper", "lower")]
    columns = [P[:, free], spec.evaluate_many(P)]
    planes = abstraction.planes
    columns.append(np.stack([planes.upper(P), planes.lower(P)], axis=2).reshape(len(P), -1))
    for k in increments:
        entry = abstraction.log[k - 1]
        header += [f"{side}_k{k}_f{j}" for j in outs for side in ("upper", "lower")]
        block = np.stack([entry.planes.upper(P), entry.planes.lower(P)], axis=2).reshape(len(P), -1)
        block[~entry.region.contains_many(idx)] = np.nan
        columns.append(block)
    table = np.concatenate(columns, axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in table:
            writer.writerow(["" if math.isnan(v) else format(v, ".17g") for v in row])
    return len(table)


# ---------------------------------------------------------------- running


def _lp_dumper(directory: Path | None, method: str):
    if directory is None:
        return None
    directory.mkdir(parents=True, exist_ok=True)
    return lambda k, program: write_mps(program, directory / f"{method}_k{k:04d}.mps")


def run_method(cfg: RunConfig, spec, mesh, method: str, dump_lp: Path | None = None) -> FinalAbstraction:
    if method == "onestep":
        return run_onestep(
            mesh, spec, memory_cap=cfg.memory_cap, output_mode=cfg.output_mode, coupling=cfg.coupling,
            on_program=_lp_dumper(dump_lp, method),
        )
    return run_incremental(mesh, spec, cfg.abstraction_config(mesh), on_program=_lp_dumper(dump_lp, method))


def verify_results(cfg: RunConfig, spec, mesh, results: dict[str, FinalAbstraction]) -> VerificationReport:
    report = VerificationReport(cfg.name, results=dict(results))
    for method, result in results.items():
        grid = check_grid_sandwich(result, mesh, spec, subset=cfg.grid_subset, seed=cfg.seed)
        grid.check_id = f"grid_sandwich[{method}]"
        report.checks.append(grid)
        if method == "incremental":
            report.checks.append(check_dominance(result.log, mesh))
        if cfg.continuous_samples and result.smoothness_constant is not None:
            cont = check_continuous_sandwich(result, spec, mesh.domain, cfg.continuous_samples, cfg.seed)
            cont.check_id = f"continuous_sandwich[{method}]"
            report.checks.append(cont)
    if "incremental" in results and "onestep" in results:
        gap = results["onestep"].final_theta - results["incremental"].final_theta
        report.checks.append(_result("suboptimality", gap, None, SUBOPTIMALITY_TOL, "theta_onestep - theta_incremental"))
    inc, one = results.get("incremental"), results.get("onestep")
    if inc is not None and "onestep" in cfg.methods:
        report.method_comparison = MethodComparison(
            theta_incremental=inc.final_theta,
            theta_onestep=None if one is None else one.final_theta,
            kappa=inc.kappa,
            peak_incremental=inc.peak_active_points,
            peak_onestep=None if one is None else one.peak_active_points,
            elapsed_incremental=inc.elapsed,
            elapsed_onestep=None if one is None else one.elapsed,
        )
    return report


def _metrics(method: str, result: FinalAbstraction | None) -> dict:
    if result is None:
        return {"method": method, "status": "N/A (memory cap)"}
    return {
        "method": method,
        "status": "ok",
        "theta": result.final_theta,
        "kappa": result.kappa,
        "sigma": result.sigma,
        "peak_points": result.peak_active_points,
        "elapsed_s": result.elapsed,
    }


def _metrics_line(m: dict) -> str:
    if m["status"] != "ok":
        return f"{m['method']}: {m['status']}"
    return (
        f"{m['method']}: theta={m['theta']:.10g} kappa={m['kappa']} sigma={m['sigma']:.6g} "
        f"peak_points={m['peak_points']} elapsed={m['elapsed_s']:.3f}s"
    )


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _table_rows(cfg: RunConfig, metrics: list[dict], timings: bool) -> list[tuple]:
    rows = []
    for m in metrics:
        budget = "all" if m["method"] == "onestep" else cfg.budget
        row = (cfg.name, m["method"], budget, m.get("kappa"), m.get("theta"), m.get("peak_points"))
        if timings:
            row += (m.get("elapsed_s"),)
        rows.append(row + (cfg.reference.get(m["method"]),))
    return rows


def output_gaps(result: FinalAbstraction, mesh: UniformMesh) -> list[float]:
    """Largest gap of each output component over the mesh corners."""
    corners = mesh.positions(region_vertices(mesh.full_box))
    planes = result.raw_planes
    return (planes.upper(corners) - planes.lower(corners)).max(axis=0).tolist()


def run_case(cfg: RunConfig, dump_lp: Path | None = None) -> tuple[int, list[dict], VerificationReport]:
    """Run, verify and write the artifacts of one configuration.

    Artifacts hold no wall-clock data, so identical configs give
    byte-identical files; timings are only in the returned metrics.
    """
    spec, mesh = cfg.build()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, FinalAbstraction] = {}
    metrics = []
    capped = False
    for method in cfg.methods:
        try:
            result = run_method(cfg, spec, mesh, method, dump_lp)
        except MemoryBudgetExceeded as exc:
            log.warning("%s aborted: %s", method, exc)
            capped = True
            metrics.append(_metrics(method, None))
            continue
        results[method] = result
        m = _metrics(method, result)
        if spec.n_out > 1:
            m["output_gaps"] = output_gaps(result, mesh)
        metrics.append(m)
        save_abstraction(result, out_dir / f"abstraction_{method}.json")
        if cfg.plot_slice is not None:
            fixed = parse_slice(cfg.plot_slice, spec)
            incs = [k for k in (cfg.plot_increments or []) if k <= result.kappa]
            emit_plot_data(result, spec, mesh, fixed, out_dir / f"plot_{method}.csv", incs)

    report = verify_results(cfg, spec, mesh, results)
    doc = report.to_dict()
    doc["methods"] = [{k: v for k, v in m.items() if k != "elapsed_s"} for m in metrics]
    doc["reference"] = cfg.reference
    _write_json(out_dir / "report.json", doc)
    text = format_table(_table_rows(cfg, metrics, timings=False), NO_TIME_COLUMNS)
    (out_dir / "report.txt").write_text(text + "\n\n" + report.summary() + "\n", encoding="utf-8")
    if capped:
        status = EXIT_CAP
    else:
        status = EXIT_OK if report.passed else EXIT_CHECK
    return status, metrics, report


def execute(cfg: RunConfig, dump_lp: Path | None = None, out=None) -> int:
    """Run one configuration, print its metrics lines and return the exit status."""
    out = out if out is not None else sys.stdout
    status, metrics, report = run_case(cfg, dump_lp)
    for m in metrics:
        print(_metrics_line(m), file=out)
    print(report.summary(), file=out)
    return status


# ---------------------------------------------------------------- benchmark suites


def _rastrigin_case(name, d, ppd, budget, memory_cap=None, method="both", reference=None, **extra) -> dict:
    doc = {
        "name": name,
        "function": {"builtin": "rastrigin", "params": {"d": d}},
        "points_per_dim": ppd,
        "method": method,
        "budget": budget,
        "memory_cap": memory_cap,
        "reference": reference or {},
        "verify": {"grid_subset": 100_000, "continuous_samples": 0},
    }
    doc.update(extra)
    return doc


def bench_suite(name: str, include_large: bool = False) -> list[dict]:
    if name == "table1":
        return [
            _rastrigin_case("rastrigin2d_s50", 2, 51, 50, reference={"incremental": 300.4, "onestep": 80.23}),
            _rastrigin_case("rastrigin2d_s500", 2, 51, 500, reference={"incremental": 112.4, "onestep": 80.23}),
        ]
    if name == "table2":
        paper = {1: 55.8, 3: 167.5, 5: 279.2, 7: 390.9, 9: 867.1, 11: 1659.2, 12: 1637.8}
        dims = [1, 3, 5, 7, 9] + ([11, 12] if include_large else [])
        return [
            _rastrigin_case(f"rastrigin{d}d", d, 5, 100_000, memory_cap=100_000,
                            reference={"incremental": paper[d], "onestep": paper[d] if d <= 7 else None})
            for d in dims
        ]
    if name == "table3":
        paper = {3: "x 0.1118 / y 0.8798 / heading 2.9157", 5: "x 0.1397 / y 1.2437 / heading 25.5508"}
        agents = [3] + ([5] if include_large and len(SWARM_X_BOUNDS) >= 5 else [])
        return [
            {
                "name": f"swarm{N}",
                "function": {"builtin": "swarm_rendezvous", "params": {"N": N}},
                "points_per_dim": 3,
                "method": "both",
                "budget": 100_000,
                "memory_cap": 100_000,
                "reference": {"incremental": paper[N], "onestep": paper[N] if N == 3 else None},
                "verify": {"grid_subset": 100_000, "continuous_samples": 0},
            }
            for N in agents
        ]
    if name == "heuristics":
        base = dict(d=1, ppd=250, budget=40, method="incremental")
        return [
            _rastrigin_case("corner_start", **base),
            _rastrigin_case("center_start", **base, heuristics={"start_region": "center"}),
            _rastrigin_case("warm_start_x0.5", **base, heuristics={"warm_start": [[0.5]]}),
        ]
    raise ConfigError(f"unknown suite {name!r}; choose table1, table2, table3 or heuristics")


def run_bench(suite: str, out_root: Path, workers: int = 1, include_large: bool = False, seed: int = 0, out=None) -> int:
    """Run every case of ``suite`` (cases in parallel threads) and print the comparison table."""
    out = out if out is not None else sys.stdout
    cases = [from_dict({**doc, "out_dir": str(out_root / doc["name"]), "seed": seed}) for doc in bench_suite(suite, include_large)]
    out_root.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(run_case, cases))
    timed, untimed, summary, extra = [], [], {}, []
    for cfg, (status, metrics, report) in zip(cases, outcomes):
        timed += _table_rows(cfg, metrics, timings=True)
        untimed += _table_rows(cfg, metrics, timings=False)
        summary[cfg.name] = {"status": status, "passed": report.passed,
                             "methods": [{k: v for k, v in m.items() if k != "elapsed_s"} for m in metrics]}
        for m in metrics:
            if "output_gaps" in m and cfg.function.get("builtin") == "swarm_rendezvous":
                gaps = np.asarray(m["output_gaps"]).reshape(-1, 3).max(axis=0)
                extra.append(f"{cfg.name} {m['method']}: largest per-state gap x={gaps[0]:.6g} "
                             f"y={gaps[1]:.6g} heading={gaps[2]:.6g}")
    text = format_table(untimed, NO_TIME_COLUMNS) + ("\n\n" + "\n".join(extra) if extra else "")
    (out_root / f"{suite}.txt").write_text(text + "\n", encoding="utf-8")
    _write_json(out_root / f"{suite}.json", summary)
    print(format_table(timed), file=out)
    if extra:
        print("\n".join(extra), file=out)
    statuses = [status for status, _, _ in outcomes]
    return EXIT_CHECK if EXIT_CHECK in statuses else EXIT_OK


# ---------------------------------------------------------------- mesh info


def mesh_info(cfg: RunConfig, out=None) -> int:
    out = out if out is not None else sys.stdout
    spec, mesh = cfg.build()
    d = mesh.dim
    lines = [
        f"dimensions: {d} (n={spec.n}, m={spec.m}, outputs={spec.n_out})",
        f"points per dimension: {list(mesh.points_per_dim)}",
        f"grid points s_max: {mesh.s_max}",
        f"spacing: {[float(s) for s in mesh.spacing]}",
        f"cell diagonal: {mesh_diameter(mesh):.6g}",
        f"interpolation radius: {interpolation_radius(d, mesh_diameter(mesh)):.6g}",
    ]
    if cfg.budget is not None:
        plan = plan_increments(mesh.s_max, cfg.budget, min(2**d, cfg.budget - 1), d)
        lines.append(f"budget: {cfg.budget}; planned increments (box corners carried): {plan.kappa}; "
                     f"bounds: [{plan.bounds[0]}, {plan.bounds[1]}]")
    print("\n".join(lines), file=out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--budget", type=int, help="maximum sample points per increment")
    p.add_argument("--method", choices=("onestep", "incremental", "both"))
    p.add_argument("--memory-cap", type=int, help="abort runs that hold more active points")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--plot-slice", help='grid slice for plot CSVs, e.g. "x1=0"')


def _overrides(args) -> dict:
    return {
        "budget": args.budget,
        "method": args.method,
        "memory_cap": args.memory_cap,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "plot_slice": args.plot_slice,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incabs", description="Incremental affine abstraction of nonlinear vector fields")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", help="compute abstractions, verify them and write artifacts")
    p.add_argument("config")
    _add_overrides(p)
    p.add_argument("--dump-lp", metavar="DIR", help="write every assembled LP as an MPS file")

    p = sub.add_parser("verify", help="re-check a saved abstraction against its configuration")
    p.add_argument("config")
    p.add_argument("abstraction")
    _add_overrides(p)

    p = sub.add_parser("bench", help="run a benchmark suite and print its table")
    p.add_argument("suite", choices=("table1", "table2", "table3", "heuristics"))
    p.add_argument("--out-dir", default="bench_out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--include-large", action="store_true", help="also run the very large cases")

    p = sub.add_parser("plot-data", help="write f and plane values along a grid slice as CSV")
    p.add_argument("config")
    p.add_argument("abstraction")
    p.add_argument("--plot-slice", default="")
    p.add_argument("--increments", default="", help="comma-separated increments to overlay, e.g. 1,3,5,7")
    p.add_argument("--output", required=True)

    p = sub.add_parser("mesh-info", help="describe the mesh and planned increments of a configuration")
    p.add_argument("config")
    p.add_argument("--budget", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log.info("kernel backend: %s", _kernels.BACKEND)
    try:
        if args.command == "abstract":
            cfg = load_config(args.config, **_overrides(args))
            return execute(cfg, Path(args.dump_lp) if args.dump_lp else None)
        if args.command == "verify":
            cfg = load_config(args.config, **_overrides(args))
            spec, mesh = cfg.build()
            result = load_abstraction(args.abstraction)
            if tuple(result.points_per_dim) != mesh.points_per_dim or result.domain != mesh.domain:
                raise ConfigError("abstraction was computed on a different mesh than the configuration describes")
            report = verify_results(cfg, spec, mesh, {result.method: result})
            print(report.summary())
            return EXIT_OK if report.passed else EXIT_CHECK
        if args.command == "bench":
            return run_bench(args.suite, Path(args.out_dir), args.workers, args.include_large, args.seed)
        if args.command == "plot-data":
            cfg = load_config(args.config)
            spec, mesh = cfg.build()
            result = load_abstraction(args.abstraction)
            incs = [int(k) for k in args.increments.split(",") if k.strip()]
            rows = emit_plot_data(result, spec, mesh, parse_slice(args.plot_slice, spec), args.output, incs)
            print(f"wrote {rows} rows to {args.output}")
            return EXIT_OK
        if args.command == "mesh-info":
            return mesh_info(load_config(args.config, budget=args.budget))
    except (ConfigError, BadSlice) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncabsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
