"""Order-preserving parallel execution of independent grid points.

Results always come back in input order regardless of completion order;
one failing point is recorded (index + reason) without aborting the rest.
Workers are pinned to single-threaded BLAS so that serial and parallel
runs of the same sweep produce bit-identical numbers.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    import contextlib

    def threadpool_limits(*_a, **_k):
        return contextlib.nullcontext()


@dataclass
class SweepResult:
    """Outcome of one sweep: per-point results (None where failed)."""

    results: list
    failures: list = field(default_factory=list)  # (index, reason)
    seconds: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_point(args):
    worker, index, point = args
    t0 = time.perf_counter()
    try:
        with threadpool_limits(limits=1):
            value = worker(point)
        return index, value, None, time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - contained per point
        return index, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def sweep_grid(points, worker, jobs: int = 1) -> SweepResult:
    """Apply a pure `worker` to every point, `jobs`-way parallel.

    The worker must be a module-level callable (picklable) taking one grid
    point.  Exceptions are captured per point; successful results keep
    their input positions.
    """
    points = list(points)
    tasks = [(worker, i, p) for i, p in enumerate(points)]
    out = [None] * len(points)
    seconds = [0.0] * len(points)
    failures = []
    if jobs <= 1:
        completed = map(_run_point, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        completed = pool.map(_run_point, tasks)
    try:
        for index, value, error, dt in completed:
            seconds[index] = dt
            if error is None:
                out[index] = value
            else:
                failures.append((index, error))
    finally:
        if jobs > 1:
            pool.shutdown()
    failures.sort()
    return SweepResult(results=out, failures=failures, seconds=seconds)
