"""Head-worker parallel execution of the Step 2 sweep.

A single coordinator hands batches of parameter points to worker
processes on demand (a worker asks for more by reporting its finished
batch), broadcasts each round's start context to every worker, and sends
kill messages once the queue drains.  Workers solve their batch points
via ``step2_single``, serialize each result record, and append it to an
in-memory buffer that is flushed to a per-worker spill file
``step2_worker<k>.part`` whenever it exceeds the configured threshold
(64 MB by default).  After the sweep the coordinator merges the spill
files into the collected data file and deletes them.

A crashed worker's in-flight batch is requeued once to a replacement
worker; if it crashes again, its points are marked Unresolved with a
diagnostic note.  All random draws happen at the coordinator, so the
solution sets are independent of worker count and scheduling order.

``workers=1`` runs the same batch/buffer/spill code path in-process and
serves as the deterministic serial baseline.
"""

from __future__ import annotations

import glob
import multiprocessing as mp
import os
import queue as queue_mod
import tempfile
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from paramsweep.datafile import (
    CollectedHeader,
    PointRecord,
    SolutionRecord,
    parse_records,
    record_from_point_result,
    serialize_record,
    write_collected,
)
from paramsweep.paramhom import (
    FaultInjection,
    Step1Result,
    Step2Outcome,
    SweepResult,
    TimingRecord,
    _Attempt,
    step2_single,
    sweep_with_runner,
)
from paramsweep.poly import ParamSystem
from paramsweep.tracker import DEFAULT_DEDUP_TOL, DEFAULT_REAL_TOL, TrackerConfig

__all__ = [
    "WorkBatch",
    "ResultBuffer",
    "flush_buffer",
    "default_batch_size",
    "run_parallel",
    "TimingRecord",
]

DEFAULT_BUFFER_THRESHOLD = 64 * 2**20  # bytes
COLLECTED_NAME = "collected.dat"
PARTIAL_MARKER = "PARTIAL_OUTPUT"

_blas_limiter = None


def _limit_blas_threads() -> None:
    """Pin BLAS pools to one thread in sweep processes.

    The tracker's solves are tiny (N x N for small N), where BLAS
    threading only adds contention; process-level parallelism owns the
    cores instead.  Best effort: a missing threadpoolctl changes nothing.
    """
    global _blas_limiter
    if _blas_limiter is not None:
        return
    try:
        from threadpoolctl import threadpool_limits

        _blas_limiter = threadpool_limits(limits=1)
    except Exception:  # pragma: no cover - absent or exotic BLAS
        _blas_limiter = False


@dataclass(frozen=True)
class WorkBatch:
    round_no: int
    indices: tuple[int, ...]
    points: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.indices:
            raise ValueError("empty work batch")
        if len(self.indices) != len(self.points):
            raise ValueError("batch indices and points differ in length")


@dataclass
class ResultBuffer:
    threshold: int = DEFAULT_BUFFER_THRESHOLD
    pending: list[bytes] = field(default_factory=list)
    nbytes: int = 0

    def append(self, data: bytes) -> bool:
        """Queue serialized data; True when the threshold is reached."""
        self.pending.append(data)
        self.nbytes += len(data)
        return self.nbytes >= self.threshold


def flush_buffer(buf: ResultBuffer, sink) -> None:
    """Append all pending bytes to sink in one write, then reset."""
    if not buf.pending:
        return
    sink.write(b"".join(buf.pending))
    sink.flush()
    buf.pending.clear()
    buf.nbytes = 0


def default_batch_size(n_points: int, workers: int) -> int:
    return max(1, n_points // (8 * workers))


def _attempt_record(
    idx: int, round_no: int, target: np.ndarray, outcome: Step2Outcome
) -> PointRecord:
    sols = tuple(
        SolutionRecord(coords=c, singular=s, real=r, multiplicity=m, residual=res)
        for c, s, r, m, res in zip(
            outcome.solutions.distinct,
            outcome.solutions.singular_flags,
            outcome.solutions.real_flags,
            outcome.solutions.multiplicities,
            outcome.solutions.residuals,
        )
    )
    return PointRecord(
        index=idx,
        round=round_no,
        status="attempt",
        retries=0,
        failures=outcome.failures,
        diverged=outcome.diverged,
        kinds=outcome.failure_kinds,
        params=np.asarray(target, dtype=complex),
        solutions=sols,
    )


def _solve_and_spill(
    sysm: ParamSystem,
    cfg: TrackerConfig,
    dedup_tol: float,
    real_tol: float,
    fault: FaultInjection | None,
    round_no: int,
    idx: int,
    target: np.ndarray,
    from_point: np.ndarray,
    starts,
    buf: ResultBuffer,
    sink,
) -> tuple[Step2Outcome, float, float]:
    inject = fault is not None and round_no == 0 and idx in fault.indices
    t0 = time.perf_counter()
    outcome = step2_single(
        sysm,
        from_point,
        starts,
        target,
        cfg,
        dedup_tol,
        real_tol,
        force_first_failure=inject,
    )
    t_track = time.perf_counter() - t0
    t0 = time.perf_counter()
    data = serialize_record(_attempt_record(idx, round_no, target, outcome)).encode()
    if buf.append(data):
        flush_buffer(buf, sink)
    t_ser = time.perf_counter() - t0
    return outcome, t_track, t_ser


def _worker_main(
    wid: int,
    sysm: ParamSystem,
    cfg: TrackerConfig,
    dedup_tol: float,
    real_tol: float,
    fault: FaultInjection | None,
    crash_indices: frozenset,
    part_path: str,
    buffer_threshold: int,
    inbox,
    outbox,
):
    _limit_blas_threads()
    buf = ResultBuffer(threshold=buffer_threshold)
    from_point = None
    starts = None
    with open(part_path, "ab") as sink:
        while True:
            msg = inbox.get()
            kind = msg[0]
            if kind == "kill":
                flush_buffer(buf, sink)
                outbox.put(("bye", wid))
                return
            if kind == "round":
                _, _round_no, from_point, starts = msg
                continue
            batch: WorkBatch = msg[1]
            payload = []
            for idx, target in zip(batch.indices, batch.points):
                if batch.round_no == 0 and idx in crash_indices:
                    os._exit(13)  # test hook: simulated worker crash
                try:
                    outcome, t_track, t_ser = _solve_and_spill(
                        sysm, cfg, dedup_tol, real_tol, fault,
                        batch.round_no, idx, target, from_point, starts, buf, sink,
                    )
                except OSError as exc:
                    outbox.put(("fatal", wid, f"spill write failed: {exc}"))
                    os._exit(3)
                payload.append((idx, outcome, t_track, t_ser))
            outbox.put(("done", wid, batch.round_no, payload))


class _InlinePool:
    """Single-worker path: same batching, buffering, and spill files."""

    def __init__(self, sysm, cfg, dedup_tol, real_tol, fault, part_dir,
                 buffer_threshold, batch_size, points):
        _limit_blas_threads()
        self._solve_args = (sysm, cfg, dedup_tol, real_tol, fault)
        self._points = points
        self._batch_size = batch_size
        self._buf = ResultBuffer(threshold=buffer_threshold)
        self._sink = open(os.path.join(part_dir, "step2_worker0.part"), "ab")

    def run_round(self, round_no, indices, from_point, from_solutions) -> dict:
        starts = list(from_solutions.distinct)
        size = self._batch_size or default_batch_size(len(indices), 1)
        results: dict[int, _Attempt] = {}
        indices = list(indices)
        for lo in range(0, len(indices), size):
            for idx in indices[lo : lo + size]:
                outcome, t_track, t_ser = _solve_and_spill(
                    *self._solve_args, round_no, idx, self._points[idx],
                    from_point, starts, self._buf, self._sink,
                )
                results[idx] = _Attempt(outcome, t_track, t_ser)
        return results

    def shutdown(self):
        if self._sink.closed:
            return
        try:
            flush_buffer(self._buf, self._sink)
        finally:
            self._sink.close()


class _ProcessPool:
    """Coordinator side of the head-worker protocol."""

    def __init__(self, sysm, cfg, dedup_tol, real_tol, fault, crash_indices,
                 n_workers, part_dir, buffer_threshold, batch_size, points):
        methods = mp.get_all_start_methods()
        self._ctx = mp.get_context("fork" if "fork" in methods else "spawn")
        self._worker_args = (sysm, cfg, dedup_tol, real_tol, fault, crash_indices)
        self._part_dir = part_dir
        self._buffer_threshold = buffer_threshold
        self._batch_size = batch_size
        self._points = points
        self._n_target = n_workers
        self._outbox = self._ctx.Queue()
        self._workers: dict[int, tuple] = {}  # wid -> (process, inbox)
        self._next_wid = 0
        for _ in range(n_workers):
            self._spawn()

    def _spawn(self) -> int:
        wid = self._next_wid
        self._next_wid += 1
        inbox = self._ctx.Queue()
        part = os.path.join(self._part_dir, f"step2_worker{wid}.part")
        proc = self._ctx.Process(
            target=_worker_main,
            args=(wid, *self._worker_args, part, self._buffer_threshold,
                  inbox, self._outbox),
            daemon=True,
        )
        proc.start()
        self._workers[wid] = (proc, inbox)
        return wid

    def run_round(self, round_no, indices, from_point, from_solutions) -> dict:
        starts = list(from_solutions.distinct)
        context = ("round", round_no, from_point, starts)
        for _, inbox in self._workers.values():
            inbox.put(context)

        size = self._batch_size or default_batch_size(len(indices), self._n_target)
        indices = list(indices)
        batches: deque[WorkBatch] = deque(
            WorkBatch(
                round_no,
                tuple(indices[lo : lo + size]),
                tuple(self._points[i] for i in indices[lo : lo + size]),
            )
            for lo in range(0, len(indices), size)
        )
        dispatch_counts: dict[tuple, int] = {}
        in_flight: dict[int, WorkBatch] = {}
        results: dict[int, _Attempt] = {}
        idle = list(self._workers)

        def dispatch():
            while idle and batches:
                wid = idle.pop()
                batch = batches.popleft()
                dispatch_counts[batch.indices] = dispatch_counts.get(batch.indices, 0) + 1
                in_flight[wid] = batch
                self._workers[wid][1].put(("batch", batch))

        def reap_crashes():
            for wid in list(in_flight):
                proc, _ = self._workers[wid]
                if proc.is_alive():
                    continue
                batch = in_flight.pop(wid)
                del self._workers[wid]
                if wid in idle:
                    idle.remove(wid)
                if dispatch_counts[batch.indices] > 1:
                    diag = (
                        f"worker crashed twice while solving this batch "
                        f"(exit code {proc.exitcode})"
                    )
                    for idx in batch.indices:
                        results[idx] = _Attempt(diag, 0.0, 0.0)
                else:
                    batches.appendleft(batch)
                new_wid = self._spawn()
                self._workers[new_wid][1].put(context)
                idle.append(new_wid)

        dispatch()
        while in_flight or batches:
            try:
                msg = self._outbox.get(timeout=0.25)
            except queue_mod.Empty:
                reap_crashes()
                dispatch()
                continue
            kind = msg[0]
            if kind == "done":
                _, wid, _rnd, payload = msg
                for idx, outcome, t_track, t_ser in payload:
                    results[idx] = _Attempt(outcome, t_track, t_ser)
                if wid in in_flight:
                    del in_flight[wid]
                idle.append(wid)
                dispatch()
            elif kind == "fatal":
                _, wid, message = msg
                raise RuntimeError(f"worker {wid}: {message}")
            # "bye" messages are ignored here (shutdown drains workers)
        return results

    def shutdown(self):
        for _, inbox in self._workers.values():
            try:
                inbox.put(("kill",))
            except (OSError, ValueError):
                pass
        deadline = time.monotonic() + 10.0
        for proc, _ in self._workers.values():
            proc.join(timeout=max(0.1, deadline - time.monotonic()))
            if proc.is_alive():
                proc.terminate()
                proc.join(timeout=2.0)


def _merge_part_files(
    out_dir: str,
    sysm: ParamSystem,
    r1: Step1Result,
    max_retries: int,
    sweep: SweepResult,
    collected_name: str,
    source: str,
) -> str:
    """Fold the spill files into one collected data file, newest round wins."""
    parts = sorted(glob.glob(os.path.join(out_dir, "step2_worker*.part")))
    latest: dict[int, PointRecord] = {}
    for path in parts:
        with open(path) as f:
            for rec in parse_records(f.read(), tolerate_truncation=True):
                cur = latest.get(rec.index)
                if cur is None or rec.round > cur.round:
                    latest[rec.index] = rec
    final = []
    for pr in sweep.point_results:
        spill = latest.get(pr.index)
        if spill is not None and not pr.note:
            if len(spill.solutions) != len(pr.solutions.distinct):
                raise RuntimeError(
                    f"spill file and in-memory results disagree at point {pr.index}"
                )
        final.append(record_from_point_result(pr, round_no=spill.round if spill else 0))
    header = CollectedHeader(
        n_vars=sysm.n_vars,
        n_params=sysm.n_params,
        n_points=len(sweep.point_results),
        step1_paths=r1.paths_tracked_step1,
        seed=r1.seed,
        max_retries=max_retries,
        p0=r1.p0,
        source=source,
        param_names=sysm.param_names,
    )
    out_path = os.path.join(out_dir, collected_name)
    write_collected(out_path, header, final)
    for path in parts:
        os.remove(path)
    return out_path


def run_parallel(
    sysm: ParamSystem,
    r1: Step1Result,
    points,
    cfg: TrackerConfig,
    max_retries: int,
    workers: int,
    rng: np.random.Generator,
    batch_size: int | None = None,
    buffer_threshold: int = DEFAULT_BUFFER_THRESHOLD,
    out_dir: str | None = None,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
    real_tol: float = DEFAULT_REAL_TOL,
    fault_injection: FaultInjection | None = None,
    crash_injection: frozenset = frozenset(),
    source: str = "mesh",
) -> SweepResult:
    """Parallel sweep with the same semantics (and results) as run_sweep.

    When ``out_dir`` is given, the per-worker spill files are merged there
    into ``collected.dat`` and removed.  ``crash_injection`` (test hook)
    simulates a worker crash at the given point indices and requires
    ``workers >= 2``.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    if crash_injection and workers < 2:
        raise ValueError("crash injection requires at least two workers")
    points = [np.asarray(p, dtype=complex) for p in points]

    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="paramsweep_")
        part_dir = tmp.name
    else:
        os.makedirs(out_dir, exist_ok=True)
        part_dir = str(out_dir)

    if workers == 1:
        pool = _InlinePool(
            sysm, cfg, dedup_tol, real_tol, fault_injection,
            part_dir, buffer_threshold, batch_size, points,
        )
    else:
        pool = _ProcessPool(
            sysm, cfg, dedup_tol, real_tol, fault_injection, crash_injection,
            workers, part_dir, buffer_threshold, batch_size, points,
        )
    try:
        sweep = sweep_with_runner(
            sysm, r1, points, cfg, max_retries, rng, pool.run_round,
            dedup_tol, real_tol,
        )
        pool.shutdown()  # includes each worker's final drain flush
        if out_dir is not None:
            _merge_part_files(
                out_dir, sysm, r1, max_retries, sweep, COLLECTED_NAME, source
            )
    except Exception as exc:
        if out_dir is not None:
            marker = os.path.join(part_dir, PARTIAL_MARKER)
            with open(marker, "w") as f:
                f.write(f"sweep aborted: {exc}\n")
        try:
            pool.shutdown()
        except Exception:
            pass
        if tmp is not None:
            tmp.cleanup()
        raise
    if tmp is not None:
        tmp.cleanup()
    return sweep
