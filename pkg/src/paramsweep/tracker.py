"""Predictor-corrector path tracking from t=1 to t=0.

Euler (tangent) prediction followed by Newton correction, with adaptive
step length: the step halves whenever correction fails and grows after a
run of consecutive successes.  Tracking truncates at a small t_final and
the endpoint is then sharpened by a few Newton iterations on the target
system itself.  There is no endgame: genuinely singular endpoints are
flagged, not refined.

All failure modes are encoded in the returned status, never raised:

* ``DIVERGED``      -- the iterate's inf-norm exceeded ``max_norm``
* ``MIN_STEP``      -- the step length fell below ``min_step``
* ``NEWTON_FAILURE``-- the sharpened endpoint failed the residual test
* ``MAX_STEPS``     -- attempt budget exhausted

Tracking is a pure function of its inputs: identical inputs and config
give bit-for-bit identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from paramsweep.poly import InstantiatedSystem
from paramsweep.startsys import Homotopy

__all__ = [
    "TrackerConfig",
    "PathStatus",
    "PathResult",
    "CorrectionResult",
    "ClassifiedSolutions",
    "euler_predict",
    "newton_correct",
    "track_path",
    "track_many",
    "crossing_check",
    "classify_endpoints",
]

# condition estimate above which an endpoint counts as singular
SINGULAR_CONDITION = 1e12

DEFAULT_DEDUP_TOL = 1e-6
DEFAULT_REAL_TOL = 1e-6


@dataclass(frozen=True)
class TrackerConfig:
    initial_step: float = 0.1
    min_step: float = 1e-12
    max_step: float = 0.1
    newton_tol: float = 1e-10
    max_newton_iters: int = 3
    max_norm: float = 1e5
    max_steps: int = 10_000
    t_final: float = 1e-8
    endgame_boundary: float = 0.1
    sharpen_iters: int = 5
    step_increase_factor: float = 2.0
    step_decrease_factor: float = 0.5
    consecutive_successes_to_grow: int = 5
    # treat diverged paths as retry-worthy failures (off: divergence is a
    # legitimate geometric outcome, reported but not retried)
    divergence_is_failure: bool = False
    # record the homotopy residual after every accepted step (test builds)
    check_residuals: bool = False

    def __post_init__(self):
        if not (0 < self.min_step <= self.initial_step <= self.max_step < 1):
            raise ValueError("need 0 < min_step <= initial_step <= max_step < 1")
        if self.newton_tol <= 0 or self.max_norm <= 0:
            raise ValueError("newton_tol and max_norm must be positive")
        if not (0 < self.t_final < self.endgame_boundary < 1):
            raise ValueError("need 0 < t_final < endgame_boundary < 1")


class PathStatus(Enum):
    SUCCESS = "success"
    DIVERGED = "diverged"
    MIN_STEP = "min_step"
    NEWTON_FAILURE = "newton_failure"
    MAX_STEPS = "max_steps"


#: statuses that mark a parameter point as failed (candidates for retry);
#: DIVERGED is excluded by default since it usually reflects genuine
#: geometry (fewer finite solutions at the target).
HARD_FAILURES = (PathStatus.MIN_STEP, PathStatus.NEWTON_FAILURE, PathStatus.MAX_STEPS)


@dataclass(frozen=True)
class PathResult:
    status: PathStatus
    endpoint: np.ndarray | None
    steps_taken: int
    t_at_failure: float | None
    final_residual: float
    condition_estimate: float
    sharpen_converged: bool = False
    boundary_point: np.ndarray | None = None
    max_residual_after_correct: float = 0.0

    @property
    def success(self) -> bool:
        return self.status is PathStatus.SUCCESS


class CorrectionResult(tuple):
    """(point, converged, iterations, step_norm) from Newton correction."""

    __slots__ = ()

    def __new__(cls, point, converged, iterations, step_norm):
        return super().__new__(cls, (point, converged, iterations, step_norm))

    point = property(lambda self: self[0])
    converged = property(lambda self: self[1])
    iterations = property(lambda self: self[2])
    step_norm = property(lambda self: self[3])


def _inf_norm(v: np.ndarray) -> float:
    if v.size == 1:
        return abs(complex(v[0]))
    return float(np.max(np.abs(v))) if v.size else 0.0


def _solve(jac: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # scalar shortcut: LAPACK dispatch overhead dominates 1x1 solves
    if jac.shape[0] == 1:
        d = complex(jac[0, 0])
        if d == 0:
            raise np.linalg.LinAlgError("singular 1x1 system")
        try:
            return np.array([complex(rhs[0]) / d])
        except OverflowError as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc
    return np.linalg.solve(jac, rhs)


def _condition_estimate(jac: np.ndarray) -> float:
    try:
        inv = np.linalg.inv(jac)
    except np.linalg.LinAlgError:
        return np.inf
    c = float(
        np.max(np.sum(np.abs(jac), axis=1)) * np.max(np.sum(np.abs(inv), axis=1))
    )
    return c if np.isfinite(c) else np.inf


def euler_predict(h: Homotopy, z: np.ndarray, t: float, dt: float) -> np.ndarray:
    """Tangent step: z + dz with J_z dz = -(dH/dt) * dt.

    Raises ``numpy.linalg.LinAlgError`` on a singular Jacobian; the caller
    shrinks the step.
    """
    if dt == 0:
        return np.array(z, dtype=complex)
    dh_dt, jac = h.tangent_data(z, t)
    return z + _solve(jac, -dh_dt * dt)


def newton_correct(
    sys_at_t: InstantiatedSystem, z: np.ndarray, cfg: TrackerConfig
) -> CorrectionResult:
    """Newton iteration until the update norm drops below newton_tol.

    A point whose residual is already below tolerance is returned
    unchanged with zero iterations.
    """
    z = np.array(z, dtype=complex)
    f, jac = sys_at_t.eval_and_jac(z)
    if _inf_norm(f) < cfg.newton_tol:
        return CorrectionResult(z, True, 0, 0.0)
    step_norm = np.inf
    for i in range(1, cfg.max_newton_iters + 1):
        try:
            delta = _solve(jac, -f)
        except np.linalg.LinAlgError:
            return CorrectionResult(z, False, i - 1, step_norm)
        z_new = z + delta
        if not np.all(np.isfinite(z_new)):
            return CorrectionResult(z, False, i, np.inf)
        z = z_new
        step_norm = _inf_norm(delta)
        if step_norm < cfg.newton_tol:
            return CorrectionResult(z, True, i, step_norm)
        if i < cfg.max_newton_iters:
            f, jac = sys_at_t.eval_and_jac(z)
    return CorrectionResult(z, False, cfg.max_newton_iters, step_norm)


def _sharpen(
    target: InstantiatedSystem, z: np.ndarray, cfg: TrackerConfig
) -> tuple[np.ndarray, bool]:
    """Final Newton polish on the target system; never raises."""
    converged = False
    for _ in range(cfg.sharpen_iters):
        f, jac = target.eval_and_jac(z)
        if _inf_norm(f) == 0.0:
            converged = True
            break
        try:
            delta = _solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        z_new = z + delta
        if not np.all(np.isfinite(z_new)):
            break
        z = z_new
        if _inf_norm(delta) < cfg.newton_tol:
            converged = True
            break
    return z, converged


def track_path(h: Homotopy, start: np.ndarray, cfg: TrackerConfig) -> PathResult:
    """Track one solution of H(., 1) = 0 to t = 0."""
    z = np.array(start, dtype=complex)
    t = 1.0
    dt = cfg.initial_step
    steps = 0
    attempts = 0
    streak = 0
    boundary_point = None
    max_resid = 0.0

    def fail(status: PathStatus, t_now: float) -> PathResult:
        return PathResult(
            status=status,
            endpoint=None,
            steps_taken=steps,
            t_at_failure=t_now,
            final_residual=np.inf,
            condition_estimate=np.inf,
            boundary_point=boundary_point,
            max_residual_after_correct=max_resid,
        )

    while t > cfg.t_final:
        if attempts >= cfg.max_steps:
            return fail(PathStatus.MAX_STEPS, t)
        attempts += 1

        # clamp so the path lands exactly on the endgame boundary (for
        # crossing checks) and exactly on t_final (loop exit); the
        # boundary check comes first so a large step cannot jump past it
        t_next = t - dt
        if t > cfg.endgame_boundary and t_next < cfg.endgame_boundary:
            t_next = cfg.endgame_boundary
        elif t_next < cfg.t_final:
            t_next = cfg.t_final

        ok = False
        try:
            predicted = euler_predict(h, z, t, t_next - t)
        except np.linalg.LinAlgError:
            predicted = None
        if predicted is not None and np.all(np.isfinite(predicted)):
            corr = newton_correct(h.at(t_next), predicted, cfg)
            ok = corr.converged

        if not ok:
            streak = 0
            dt = dt * cfg.step_decrease_factor
            if dt < cfg.min_step:
                return fail(PathStatus.MIN_STEP, t)
            continue

        z = corr.point
        t = t_next
        steps += 1
        streak += 1

        z_norm = _inf_norm(z)
        if not np.isfinite(z_norm) or z_norm > cfg.max_norm:
            return fail(PathStatus.DIVERGED, t)
        if cfg.check_residuals:
            max_resid = max(max_resid, _inf_norm(h.evaluate(z, t)))
        if t == cfg.endgame_boundary:
            boundary_point = z.copy()
        if streak >= cfg.consecutive_successes_to_grow:
            dt = min(dt * cfg.step_increase_factor, cfg.max_step)
            streak = 0

    target = h.at(0.0)
    z, sharpen_converged = _sharpen(target, z, cfg)
    residual = _inf_norm(target.evaluate(z))
    if not (np.all(np.isfinite(z)) and residual < 10 * cfg.newton_tol):
        return fail(PathStatus.NEWTON_FAILURE, cfg.t_final)
    return PathResult(
        status=PathStatus.SUCCESS,
        endpoint=z,
        steps_taken=steps,
        t_at_failure=None,
        final_residual=residual,
        condition_estimate=_condition_estimate(target.jacobian(z)),
        sharpen_converged=sharpen_converged,
        boundary_point=boundary_point,
        max_residual_after_correct=max_resid,
    )


def track_many(h: Homotopy, starts, cfg: TrackerConfig) -> list[PathResult]:
    return [track_path(h, s, cfg) for s in starts]


def crossing_check(points, tol: float) -> list[tuple[int, int]]:
    """Index pairs closer than tol in the inf-norm (suspected crossings)."""
    pairs = []
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            if _inf_norm(np.asarray(points[i]) - np.asarray(points[j])) < tol:
                pairs.append((i, j))
    return pairs


@dataclass(frozen=True)
class ClassifiedSolutions:
    """Deduplicated endpoints with singularity/reality flags."""

    distinct: tuple[np.ndarray, ...]
    singular_flags: tuple[bool, ...]
    real_flags: tuple[bool, ...]
    residuals: tuple[float, ...]
    multiplicities: tuple[int, ...]
    n_real: int = field(default=0)

    def __len__(self) -> int:
        return len(self.distinct)


def classify_endpoints(
    results,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
    real_tol: float = DEFAULT_REAL_TOL,
) -> ClassifiedSolutions:
    """Merge successful endpoints and flag each survivor.

    Endpoints within ``dedup_tol`` (inf-norm) collapse to the
    smallest-residual representative.  A survivor is singular if its
    condition estimate exceeds ``SINGULAR_CONDITION``, if more than one
    path landed on it, or if endpoint sharpening failed to converge
    (covers multiple roots, whose Jacobian-based condition stays finite
    in low dimensions).  It is real when every coordinate's imaginary
    part is below ``real_tol``.
    """
    good = [r for r in results if r.status is PathStatus.SUCCESS]
    n = len(good)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            di = _inf_norm(good[i].endpoint - good[j].endpoint)
            if di < dedup_tol:
                parent[find(i)] = find(j)

    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)

    points, singular, real, residuals, mults = [], [], [], [], []
    for members in sorted(clusters.values(), key=lambda ms: ms[0]):
        rep = min(members, key=lambda i: good[i].final_residual)
        r = good[rep]
        is_singular = (
            len(members) > 1
            or r.condition_estimate > SINGULAR_CONDITION
            or not r.sharpen_converged
        )
        points.append(r.endpoint)
        singular.append(is_singular)
        real.append(bool(np.max(np.abs(r.endpoint.imag)) < real_tol))
        residuals.append(r.final_residual)
        mults.append(len(members))

    return ClassifiedSolutions(
        distinct=tuple(points),
        singular_flags=tuple(singular),
        real_flags=tuple(real),
        residuals=tuple(residuals),
        multiplicities=tuple(mults),
        n_real=sum(real),
    )
