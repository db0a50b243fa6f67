"""Command-line driver and file formats.

Input files are Bertini-style section blocks::

    CONFIG
      seed: 7;
      max_retries: 2;
    END;

    INPUT
      variable z;
      parameter x, y;
      function f;
      f = x^6 + y^6 + z^6 - 1;
    END;

    MESH
      x range -1.5 1.5 21;
      y range -1.5 1.5 21;
    END;

CONFIG accepts every TrackerConfig field plus the sweep settings ``seed``,
``workers``, ``max_retries``, ``batch_size``, ``buffer_mb``,
``verify_step1``, ``dedup_tol``, ``real_tol``, an inline start point
``p0: re im re im ...;`` and ``param_file: <path>;`` as the alternative to
a MESH section (exactly one of the two must be present).  Command-line
flags override CONFIG values.  ``%`` and ``#`` start comments.

A run directory receives::

    collected.dat       merged results, one record per parameter point
    step1.json          the generic-solve artifact (reusable via --reuse-step1)
    solutions.json      full machine-readable dump
    failure_report.txt  failed/retried/degenerate points
    timing_summary.txt  per-point wall-clock records
    real_counts.csv     grid export (mesh runs with --export-csv)

Exit codes: 0 success, 2 when any point is Unresolved, 1 on fatal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from paramsweep.datafile import (
    CollectedHeader,
    PointRecord,
    read_collected,
)
from paramsweep.mesh import (
    Fixed,
    MeshSpec,
    PointList,
    Range,
    generate_mesh,
    index_to_multi,
    load_param_file,
)
from paramsweep.paramhom import (
    FaultInjection,
    PointStatus,
    Step1Result,
    SweepResult,
    Step1Empty,
    step1,
    verify_step1,
)
from paramsweep.poly import ParamSystem, ParseError, parse_system
from paramsweep.scheduler import DEFAULT_BUFFER_THRESHOLD, run_parallel
from paramsweep.tracker import (
    ClassifiedSolutions,
    DEFAULT_DEDUP_TOL,
    DEFAULT_REAL_TOL,
    TrackerConfig,
)

__all__ = [
    "InputFile",
    "parse_input_file",
    "export_real_count_grid",
    "export_solutions_json",
    "write_failure_report",
    "main",
]

log = logging.getLogger("paramsweep")

_TRACKER_FIELDS = {f.name for f in fields(TrackerConfig)}
_SWEEP_KEYS = {
    "seed",
    "workers",
    "max_retries",
    "batch_size",
    "buffer_mb",
    "verify_step1",
    "dedup_tol",
    "real_tol",
    "p0",
    "param_file",
}


class InputError(ValueError):
    """Bad input file or configuration."""


@dataclass(frozen=True)
class InputFile:
    system: ParamSystem
    config: dict
    mesh: MeshSpec | None
    param_file: str | None
    p0: np.ndarray | None


def _strip_comment(line: str) -> str:
    for marker in ("%", "#"):
        idx = line.find(marker)
        if idx >= 0:
            line = line[:idx]
    return line


def _split_sections(text: str) -> dict[str, tuple[int, list[str]]]:
    """Map section name -> (1-based first body line, body lines)."""
    sections: dict[str, tuple[int, list[str]]] = {}
    current: str | None = None
    body: list[str] = []
    start = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if current is None:
            if not line:
                continue
            name = line.rstrip(";").strip()
            if name.upper() in ("CONFIG", "INPUT", "MESH"):
                current = name.upper()
                body = []
                start = lineno + 1
            else:
                raise InputError(
                    f"line {lineno}: expected CONFIG, INPUT, or MESH section, "
                    f"got {line!r}"
                )
        else:
            if line.rstrip(";").strip().upper() == "END":
                if current in sections:
                    raise InputError(f"line {lineno}: duplicate {current} section")
                sections[current] = (start, body)
                current = None
            else:
                body.append(raw)
    if current is not None:
        raise InputError(f"section {current} is missing its END;")
    return sections


def _parse_config_body(start: int, lines: list[str]) -> dict:
    config = {}
    for off, raw in enumerate(lines):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        lineno = start + off
        if not line.endswith(";"):
            raise InputError(f"line {lineno}: config entry must end with ';'")
        line = line[:-1].strip()
        if ":" not in line:
            raise InputError(f"line {lineno}: expected 'key: value;'")
        key, value = line.split(":", 1)
        key = key.strip().lower()
        if key not in _TRACKER_FIELDS and key not in _SWEEP_KEYS:
            raise InputError(f"line {lineno}: unknown config key {key!r}")
        config[key] = value.strip()
    return config


def _parse_mesh_body(
    start: int, lines: list[str], param_names: tuple[str, ...]
) -> MeshSpec:
    axes: dict[str, Fixed | Range] = {}
    for off, raw in enumerate(lines):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        lineno = start + off
        if not line.endswith(";"):
            raise InputError(f"line {lineno}: mesh entry must end with ';'")
        toks = line[:-1].split()
        if len(toks) < 3:
            raise InputError(f"line {lineno}: expected '<param> range|fixed ...'")
        name, kind = toks[0], toks[1].lower()
        if name not in param_names:
            raise InputError(f"line {lineno}: unknown parameter {name!r}")
        if name in axes:
            raise InputError(f"line {lineno}: parameter {name!r} listed twice")
        try:
            if kind == "range":
                if len(toks) != 5:
                    raise InputError(
                        f"line {lineno}: range needs '<min> <max> <count>'"
                    )
                axes[name] = Range(float(toks[2]), float(toks[3]), int(toks[4]))
            elif kind == "fixed":
                if len(toks) not in (3, 4):
                    raise InputError(f"line {lineno}: fixed needs '<re> [<im>]'")
                im = float(toks[3]) if len(toks) == 4 else 0.0
                axes[name] = Fixed(complex(float(toks[2]), im))
            else:
                raise InputError(f"line {lineno}: expected 'range' or 'fixed'")
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    missing = [n for n in param_names if n not in axes]
    if missing:
        raise InputError(f"MESH section does not cover parameter {missing[0]!r}")
    return MeshSpec(tuple(axes[n] for n in param_names))


def parse_input_file(text: str) -> InputFile:
    sections = _split_sections(text)
    if "INPUT" not in sections:
        raise InputError("input file has no INPUT section")
    start, body = sections["INPUT"]
    # pad so parse errors report absolute file positions
    system = parse_system("\n" * (start - 1) + "\n".join(body))

    config = {}
    if "CONFIG" in sections:
        config = _parse_config_body(*sections["CONFIG"])

    p0 = None
    if "p0" in config:
        vals = [float(t) for t in config.pop("p0").split()]
        if len(vals) != 2 * system.n_params:
            raise InputError(
                f"p0 needs {2 * system.n_params} numbers (re/im per parameter), "
                f"got {len(vals)}"
            )
        p0 = np.array(vals[0::2]) + 1j * np.array(vals[1::2])

    param_file = config.pop("param_file", None)
    mesh = None
    if "MESH" in sections:
        mesh_start, mesh_body = sections["MESH"]
        mesh = _parse_mesh_body(mesh_start, mesh_body, system.param_names)

    if (mesh is None) == (param_file is None):
        raise InputError(
            "exactly one of a MESH section or 'param_file:' must be given"
        )
    return InputFile(system=system, config=config, mesh=mesh,
                     param_file=param_file, p0=p0)


def _build_tracker_config(config: dict, args) -> TrackerConfig:
    kwargs = {}
    for key, value in config.items():
        if key not in _TRACKER_FIELDS:
            continue
        current = getattr(TrackerConfig, key)
        if isinstance(current, bool):
            kwargs[key] = value.strip() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    for flag, key in (
        ("max_norm", "max_norm"),
        ("min_step", "min_step"),
        ("newton_tol", "newton_tol"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            kwargs[key] = val
    try:
        return TrackerConfig(**kwargs)
    except ValueError as exc:
        raise InputError(f"bad tracker configuration: {exc}") from exc


def _sweep_setting(config: dict, args, key: str, cast, default):
    cli_val = getattr(args, key, None)
    if cli_val is not None:
        return cli_val
    if key in config:
        return cast(config[key])
    return default


# ---------------------------------------------------------------------------
# Step 1 artifact
# ---------------------------------------------------------------------------


def _pairs(vec) -> list[list[float]]:
    return [[float(c.real), float(c.imag)] for c in vec]


def _unpairs(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs])


def save_step1(path, r1: Step1Result) -> None:
    doc = {
        "version": 1,
        "n_params": len(r1.p0),
        "p0": _pairs(r1.p0),
        "gamma": [r1.gamma.real, r1.gamma.imag],
        "seed": r1.seed,
        "paths_tracked": r1.paths_tracked_step1,
        "suspected_crossings": [list(p) for p in r1.suspected_crossings],
        "solutions": [
            {
                "coords": _pairs(pt),
                "real": bool(rf),
                "residual": float(res),
                "multiplicity": int(mult),
            }
            for pt, rf, res, mult in zip(
                r1.solutions.distinct,
                r1.solutions.real_flags,
                r1.solutions.residuals,
                r1.solutions.multiplicities,
            )
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_step1(path, sysm: ParamSystem) -> Step1Result:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != 1:
        raise InputError(f"{path}: unsupported step1 artifact version")
    if doc["n_params"] != sysm.n_params:
        raise InputError(
            f"{path}: artifact has {doc['n_params']} parameters, "
            f"system has {sysm.n_params}"
        )
    sols = doc["solutions"]
    real_flags = tuple(bool(s["real"]) for s in sols)
    classified = ClassifiedSolutions(
        distinct=tuple(_unpairs(s["coords"]) for s in sols),
        singular_flags=tuple(False for _ in sols),
        real_flags=real_flags,
        residuals=tuple(float(s["residual"]) for s in sols),
        multiplicities=tuple(int(s["multiplicity"]) for s in sols),
        n_real=sum(real_flags),
    )
    return Step1Result(
        p0=_unpairs(doc["p0"]),
        solutions=classified,
        paths_tracked_step1=int(doc["paths_tracked"]),
        seed=doc["seed"],
        gamma=complex(doc["gamma"][0], doc["gamma"][1]),
        suspected_crossings=tuple(tuple(p) for p in doc["suspected_crossings"]),
    )


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def export_real_count_grid(
    header: CollectedHeader,
    records: list[PointRecord],
    mesh: MeshSpec,
    axes: tuple[int, ...] | None = None,
) -> str:
    """CSV of real-solution counts over the mesh, one row per grid point."""
    if header.source != "mesh":
        raise InputError("collected data came from a point file; no grid shape")
    if mesh.size != len(records):
        raise InputError(
            f"mesh has {mesh.size} points but collected data has {len(records)}"
        )
    if axes is None:
        axes = tuple(
            j for j, ax in enumerate(mesh.axes) if isinstance(ax, Range)
        ) or tuple(range(mesh.n_params))
    names = header.param_names or tuple(f"p{j}" for j in range(mesh.n_params))
    out = [",".join([names[j] for j in axes] + ["n_solutions", "n_real", "status"])]
    for idx, rec in enumerate(sorted(records, key=lambda r: r.index)):
        index_to_multi(mesh, idx)  # bounds check: record count matches grid
        coords = [repr(float(rec.params[j].real)) for j in axes]
        n_real = sum(1 for s in rec.solutions if s.real)
        out.append(
            ",".join(coords + [str(len(rec.solutions)), str(n_real), rec.status])
        )
    return "\n".join(out) + "\n"


def export_solutions_json(header: CollectedHeader, records: list[PointRecord]) -> str:
    """Full dump: every point, every solution as [re, im] arrays."""
    doc = {
        "version": 1,
        "n_vars": header.n_vars,
        "n_params": header.n_params,
        "n_points": header.n_points,
        "step1_paths": header.step1_paths,
        "seed": header.seed,
        "max_retries": header.max_retries,
        "source": header.source,
        "param_names": list(header.param_names),
        "p0": _pairs(header.p0),
        "points": [
            {
                "index": rec.index,
                "params": _pairs(rec.params),
                "status": rec.status,
                "retries": rec.retries,
                "path_failures": rec.failures,
                "diverged": rec.diverged,
                "note": rec.note,
                "solutions": [
                    {
                        "coords": _pairs(s.coords),
                        "singular": s.singular,
                        "real": s.real,
                        "multiplicity": s.multiplicity,
                        "residual": None if np.isinf(s.residual) else s.residual,
                    }
                    for s in rec.solutions
                ],
            }
            for rec in sorted(records, key=lambda r: r.index)
        ],
    }
    return json.dumps(doc, indent=1)


def _fmt_point(p: np.ndarray) -> str:
    return "(" + ", ".join(f"{c.real:g}{c.imag:+g}j" for c in p) + ")"


def write_failure_report(sweep: SweepResult) -> str:
    """Human-readable summary of failed, retried, and degenerate points."""
    unresolved = [pr for pr in sweep.point_results if pr.status is PointStatus.UNRESOLVED]
    retried = [
        pr for pr in sweep.point_results
        if pr.retries_used > 0 and pr.status is not PointStatus.UNRESOLVED
    ]
    diverged = [
        pr for pr in sweep.point_results
        if pr.diverged_paths > 0 and pr.status is not PointStatus.UNRESOLVED
    ]
    singular = [
        pr for pr in sweep.point_results if any(pr.solutions.singular_flags)
    ]
    n_failed = len(unresolved) + len(retried)
    lines = [f"{n_failed} failed points "
             f"({len(unresolved)} unresolved, {len(retried)} resolved by retry)"]

    def describe(pr):
        kinds = ", ".join(f"{k}:{n}" for k, n in pr.failure_kinds) or "none"
        entry = (
            f"  point {pr.index} at {_fmt_point(pr.p)}: status={pr.status.value}, "
            f"failures={pr.path_failures} [{kinds}], diverged={pr.diverged_paths}, "
            f"retries_used={pr.retries_used}"
        )
        if pr.note:
            entry += f"\n    note: {pr.note}"
        return entry

    if unresolved:
        lines.append("")
        lines.append("unresolved points:")
        lines.extend(describe(pr) for pr in unresolved)
    if retried:
        lines.append("")
        lines.append("points resolved after retries:")
        lines.extend(describe(pr) for pr in retried)
    if diverged:
        lines.append("")
        lines.append("points with divergent paths (fewer finite solutions; "
                      "not retried):")
        lines.extend(describe(pr) for pr in diverged)
    if singular:
        lines.append("")
        lines.append("points with singular endpoints (degenerate targets; "
                      "not retried):")
        for pr in singular:
            n_sing = sum(pr.solutions.singular_flags)
            lines.append(
                f"  point {pr.index} at {_fmt_point(pr.p)}: {n_sing} singular "
                f"of {len(pr.solutions)} solutions, status={pr.status.value}"
            )
    return "\n".join(lines) + "\n"


def write_timing_summary(sweep: SweepResult) -> str:
    lines = ["index track_seconds serialize_seconds"]
    for rec in sweep.timings:
        lines.append(f"{rec.index} {rec.track_seconds:.6f} {rec.serialize_seconds:.6f}")
    total_track = sum(r.track_seconds for r in sweep.timings)
    total_ser = sum(r.serialize_seconds for r in sweep.timings)
    lines.append(f"# totals: points={len(sweep.timings)} "
                 f"track={total_track:.3f}s serialize={total_ser:.3f}s")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as f:
        return f.read()


def _load_points(inp: InputFile, base_dir: str) -> PointList:
    if inp.mesh is not None:
        return generate_mesh(inp.mesh)
    path = inp.param_file
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    with open(path) as f:
        return load_param_file(f.read(), n_params=inp.system.n_params)


def cmd_solve(args) -> int:
    text = _read_text(args.input)
    inp = parse_input_file(text)
    sysm = inp.system
    base_dir = os.path.dirname(os.path.abspath(args.input)) if args.input != "-" else "."

    cfg = _build_tracker_config(inp.config, args)
    seed = _sweep_setting(inp.config, args, "seed", int, 0)
    workers = _sweep_setting(inp.config, args, "workers", int, 1)
    max_retries = _sweep_setting(inp.config, args, "max_retries", int, 2)
    batch_size = _sweep_setting(inp.config, args, "batch_size", int, None)
    buffer_mb = _sweep_setting(inp.config, args, "buffer_mb", float, None)
    dedup_tol = _sweep_setting(inp.config, args, "dedup_tol", float, DEFAULT_DEDUP_TOL)
    real_tol = _sweep_setting(inp.config, args, "real_tol", float, DEFAULT_REAL_TOL)
    do_verify = args.verify_step1 or inp.config.get("verify_step1", "0") in (
        "1", "true", "yes", "on",
    )
    buffer_threshold = (
        DEFAULT_BUFFER_THRESHOLD if buffer_mb is None else int(buffer_mb * 2**20)
    )

    out_dir = args.out or os.environ.get("SWEEP_OUT_DIR")
    if out_dir is None:
        stem = "sweep" if args.input == "-" else os.path.splitext(
            os.path.basename(args.input)
        )[0]
        out_dir = stem + "_run"
    os.makedirs(out_dir, exist_ok=True)

    rng = np.random.default_rng(seed)

    p0_override = inp.p0
    if args.p0 is not None:
        pts = load_param_file(_read_text(args.p0), n_params=sysm.n_params)
        p0_override = pts.points[0]

    if args.reuse_step1:
        r1 = load_step1(os.path.join(args.reuse_step1, "step1.json"), sysm)
        log.info("step1: reusing %d solutions from %s", r1.n_solutions, args.reuse_step1)
    else:
        r1 = step1(sysm, cfg, rng, p0_override=p0_override, seed=seed,
                   dedup_tol=dedup_tol, real_tol=real_tol)
        log.info("step1: %d solutions from %d paths", r1.n_solutions,
                 r1.paths_tracked_step1)
    save_step1(os.path.join(out_dir, "step1.json"), r1)

    if do_verify:
        if verify_step1(sysm, cfg, r1, rng):
            log.info("step1: %d solutions, verified", r1.n_solutions)
        else:
            log.error("step1 verification failed: solution counts differ; "
                      "re-run with a different seed or supply p0")
            return 1

    if args.step1_only:
        log.info("step1 artifact written to %s", out_dir)
        return 0

    points = _load_points(inp, base_dir)
    fault = None
    if args.inject_failure_at:
        fault = FaultInjection(
            frozenset(int(t) for t in args.inject_failure_at.split(","))
        )

    sweep = run_parallel(
        sysm, r1, list(points.points), cfg, max_retries, workers, rng,
        batch_size=batch_size, buffer_threshold=buffer_threshold,
        out_dir=out_dir, dedup_tol=dedup_tol, real_tol=real_tol,
        fault_injection=fault, source=points.source,
    )

    header, records = read_collected(os.path.join(out_dir, "collected.dat"))
    with open(os.path.join(out_dir, "solutions.json"), "w") as f:
        f.write(export_solutions_json(header, records))
    with open(os.path.join(out_dir, "failure_report.txt"), "w") as f:
        f.write(write_failure_report(sweep))
    with open(os.path.join(out_dir, "timing_summary.txt"), "w") as f:
        f.write(write_timing_summary(sweep))
    if args.export_csv:
        if inp.mesh is None:
            log.error("--export-csv requires a MESH run")
            return 1
        with open(os.path.join(out_dir, "real_counts.csv"), "w") as f:
            f.write(export_real_count_grid(header, records, inp.mesh))

    n_unresolved = len(sweep.unresolved_indices)
    log.info(
        "sweep finished: %d points, %d paths tracked, %d unresolved",
        len(sweep.point_results), sweep.total_paths_tracked, n_unresolved,
    )
    return 2 if n_unresolved else 0


def cmd_export(args) -> int:
    inp = parse_input_file(_read_text(args.input))
    header, records = read_collected(os.path.join(args.run_dir, "collected.dat"))
    if args.csv:
        if inp.mesh is None:
            log.error("CSV export requires a MESH-based input file")
            return 1
        with open(args.csv, "w") as f:
            f.write(export_real_count_grid(header, records, inp.mesh))
    if args.json:
        with open(args.json, "w") as f:
            f.write(export_solutions_json(header, records))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paramsweep",
        description="Solve a parameterized polynomial system at many "
        "parameter points via parameter homotopy continuation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run the two-step sweep")
    solve.add_argument("input", help="input file path, or '-' for stdin")
    solve.add_argument("--out", help="output directory "
                       "(default: $SWEEP_OUT_DIR or <input>_run)")
    solve.add_argument("--workers", type=int, help="worker processes (default 1)")
    solve.add_argument("--seed", type=int, help="master RNG seed (default 0)")
    solve.add_argument("--max-retries", type=int, dest="max_retries",
                       help="retry rounds from fresh start points (default 2)")
    solve.add_argument("--max-norm", type=float, dest="max_norm",
                       help="divergence threshold on |z|_inf")
    solve.add_argument("--min-step", type=float, dest="min_step",
                       help="smallest allowed t step")
    solve.add_argument("--newton-tol", type=float, dest="newton_tol",
                       help="Newton convergence tolerance")
    solve.add_argument("--buffer-mb", type=float, dest="buffer_mb",
                       help="result buffer threshold in MB (default 64)")
    solve.add_argument("--batch-size", type=int, dest="batch_size",
                       help="points per work batch")
    solve.add_argument("--p0", help="file with one start parameter point "
                       "(re/im pairs on one line)")
    solve.add_argument("--verify-step1", action="store_true",
                       help="re-run the generic solve and compare counts")
    solve.add_argument("--step1-only", action="store_true",
                       help="stop after writing step1.json")
    solve.add_argument("--reuse-step1", metavar="DIR",
                       help="load step1.json from a previous run directory")
    solve.add_argument("--export-csv", action="store_true",
                       help="also write real_counts.csv (mesh runs)")
    solve.add_argument("--inject-failure-at", metavar="I,J,...",
                       help="testing hook: force one path failure on the "
                       "first attempt at these point indices")
    solve.set_defaults(func=cmd_solve)

    export = sub.add_parser("export", help="re-export a finished run")
    export.add_argument("input", help="the input file used for the run")
    export.add_argument("run_dir", help="run directory with collected.dat")
    export.add_argument("--csv", help="write real-count grid CSV here")
    export.add_argument("--json", help="write solutions JSON here")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ParseError, Step1Empty, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
