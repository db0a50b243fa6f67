"""Line-oriented text format for sweep records.

One format serves both the per-worker spill files and the final collected
data file.  Floats are written with ``repr``, so reading a file back
reproduces every value exactly.

Record layout (one parameter point per record)::

    P <index> <round> <status> <retries> <failures> <diverged> <kinds> <nsols> <re im ...>
    S <singular> <real> <multiplicity> <residual> <re im ...>     (x nsols)
    D <index> <free-text note>                                    (optional)

``kinds`` is ``-`` or comma-joined ``name:count`` pairs.  The ``nsols``
count lets the reader detect and drop a record truncated by a crashed
writer.  The collected file carries a ``#`` header block in front.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from paramsweep.paramhom import PointResult, PointStatus
from paramsweep.tracker import ClassifiedSolutions

__all__ = [
    "SolutionRecord",
    "PointRecord",
    "serialize_record",
    "parse_records",
    "record_from_point_result",
    "point_result_from_record",
    "write_collected",
    "read_collected",
]

FORMAT_HEADER = "# paramsweep collected v1"


@dataclass(frozen=True)
class SolutionRecord:
    coords: np.ndarray
    singular: bool
    real: bool
    multiplicity: int
    residual: float


@dataclass(frozen=True)
class PointRecord:
    index: int
    round: int
    status: str
    retries: int
    failures: int
    diverged: int
    kinds: tuple[tuple[str, int], ...]
    params: np.ndarray
    solutions: tuple[SolutionRecord, ...]
    note: str = ""


def _floats(vec: np.ndarray) -> str:
    return " ".join(f"{float(c.real)!r} {float(c.imag)!r}" for c in vec)


def _complexes(tokens: list[str]) -> np.ndarray:
    vals = [float(t) for t in tokens]
    return np.array(vals[0::2]) + 1j * np.array(vals[1::2])


def _kinds_str(kinds) -> str:
    if not kinds:
        return "-"
    return ",".join(f"{name}:{count}" for name, count in kinds)


def _parse_kinds(tok: str) -> tuple[tuple[str, int], ...]:
    if tok == "-":
        return ()
    out = []
    for part in tok.split(","):
        name, count = part.rsplit(":", 1)
        out.append((name, int(count)))
    return tuple(out)


def serialize_record(rec: PointRecord) -> str:
    lines = [
        f"P {rec.index} {rec.round} {rec.status} {rec.retries} {rec.failures} "
        f"{rec.diverged} {_kinds_str(rec.kinds)} {len(rec.solutions)} "
        f"{_floats(rec.params)}"
    ]
    for s in rec.solutions:
        lines.append(
            f"S {int(s.singular)} {int(s.real)} {s.multiplicity} "
            f"{float(s.residual)!r} {_floats(s.coords)}"
        )
    if rec.note:
        lines.append(f"D {rec.index} {rec.note}")
    return "\n".join(lines) + "\n"


def parse_records(text: str, tolerate_truncation: bool = False) -> list[PointRecord]:
    """Parse concatenated records; optionally drop a truncated tail."""
    records: list[PointRecord] = []
    lines = text.splitlines()
    i = 0

    def bad(msg, lineno):
        return ValueError(f"line {lineno + 1}: {msg}")

    while i < len(lines):
        line = lines[i].strip()
        if not line or line.startswith("#"):
            i += 1
            continue
        if line.startswith("D "):
            _, idx_tok, note = line.split(" ", 2)
            idx = int(idx_tok)
            for k, rec in enumerate(records):
                if rec.index == idx:
                    records[k] = replace(rec, note=note)
            i += 1
            continue
        if not line.startswith("P "):
            raise bad(f"expected record line, got {line[:40]!r}", i)
        toks = line.split()
        try:
            index, rnd = int(toks[1]), int(toks[2])
            status = toks[3]
            retries, failures, diverged = int(toks[4]), int(toks[5]), int(toks[6])
            kinds = _parse_kinds(toks[7])
            nsols = int(toks[8])
            params = _complexes(toks[9:])
        except (IndexError, ValueError) as exc:
            if tolerate_truncation and i + 1 >= len(lines):
                break
            raise bad(f"malformed point record: {exc}", i) from exc
        sols = []
        truncated = False
        for k in range(nsols):
            j = i + 1 + k
            if j >= len(lines) or not lines[j].startswith("S "):
                truncated = True
                break
            stoks = lines[j].split()
            try:
                sols.append(
                    SolutionRecord(
                        coords=_complexes(stoks[5:]),
                        singular=bool(int(stoks[1])),
                        real=bool(int(stoks[2])),
                        multiplicity=int(stoks[3]),
                        residual=float(stoks[4]),
                    )
                )
            except (IndexError, ValueError) as exc:
                if tolerate_truncation and j + 1 >= len(lines):
                    truncated = True
                    break
                raise bad(f"malformed solution record: {exc}", j) from exc
        if truncated:
            if tolerate_truncation:
                break
            raise bad(f"record for point {index} is truncated", i)
        records.append(
            PointRecord(
                index=index,
                round=rnd,
                status=status,
                retries=retries,
                failures=failures,
                diverged=diverged,
                kinds=kinds,
                params=params,
                solutions=tuple(sols),
            )
        )
        i += 1 + nsols
    return records


def record_from_point_result(pr: PointResult, round_no: int = 0) -> PointRecord:
    sols = tuple(
        SolutionRecord(
            coords=np.asarray(c, dtype=complex),
            singular=s,
            real=r,
            multiplicity=m,
            residual=res,
        )
        for c, s, r, m, res in zip(
            pr.solutions.distinct,
            pr.solutions.singular_flags,
            pr.solutions.real_flags,
            pr.solutions.multiplicities,
            pr.solutions.residuals,
        )
    )
    return PointRecord(
        index=pr.index,
        round=round_no,
        status=pr.status.value,
        retries=pr.retries_used,
        failures=pr.path_failures,
        diverged=pr.diverged_paths,
        kinds=pr.failure_kinds,
        params=pr.p,
        solutions=sols,
        note=pr.note,
    )


def point_result_from_record(rec: PointRecord) -> PointResult:
    real_flags = tuple(s.real for s in rec.solutions)
    cls = ClassifiedSolutions(
        distinct=tuple(s.coords for s in rec.solutions),
        singular_flags=tuple(s.singular for s in rec.solutions),
        real_flags=real_flags,
        residuals=tuple(s.residual for s in rec.solutions),
        multiplicities=tuple(s.multiplicity for s in rec.solutions),
        n_real=sum(real_flags),
    )
    return PointResult(
        index=rec.index,
        p=rec.params,
        solutions=cls,
        status=PointStatus(rec.status),
        retries_used=rec.retries,
        path_failures=rec.failures,
        diverged_paths=rec.diverged,
        failure_kinds=rec.kinds,
        note=rec.note,
    )


@dataclass(frozen=True)
class CollectedHeader:
    n_vars: int
    n_params: int
    n_points: int
    step1_paths: int
    seed: int | None
    max_retries: int
    p0: np.ndarray
    source: str = "mesh"  # "mesh" or "file"
    param_names: tuple[str, ...] = ()


def write_collected(path, header: CollectedHeader, records) -> None:
    names = header.param_names or tuple(
        f"p{i}" for i in range(header.n_params)
    )
    with open(path, "w") as f:
        f.write(FORMAT_HEADER + "\n")
        f.write(
            f"# nvars={header.n_vars} nparams={header.n_params} "
            f"npoints={header.n_points} step1_paths={header.step1_paths} "
            f"seed={'none' if header.seed is None else header.seed} "
            f"max_retries={header.max_retries} source={header.source}\n"
        )
        f.write(f"# params {' '.join(names)}\n")
        f.write(f"# p0 {_floats(header.p0)}\n")
        for rec in records:
            f.write(serialize_record(rec))


def read_collected(path) -> tuple[CollectedHeader, list[PointRecord]]:
    with open(path) as f:
        text = f.read()
    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError("not a collected data file (bad or missing header)")
    fields = dict(tok.split("=", 1) for tok in lines[1][2:].split())
    param_names = tuple(lines[2].split()[2:])
    p0 = _complexes(lines[3].split()[2:])
    header = CollectedHeader(
        n_vars=int(fields["nvars"]),
        n_params=int(fields["nparams"]),
        n_points=int(fields["npoints"]),
        step1_paths=int(fields["step1_paths"]),
        seed=None if fields["seed"] == "none" else int(fields["seed"]),
        max_retries=int(fields["max_retries"]),
        p0=p0,
        source=fields.get("source", "mesh"),
        param_names=param_names,
    )
    records = parse_records("\n".join(lines[4:]))
    if len(records) != header.n_points:
        raise ValueError(
            f"collected file holds {len(records)} records, header says "
            f"{header.n_points}"
        )
    return header, records
