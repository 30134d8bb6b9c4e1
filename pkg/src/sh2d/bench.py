"""Timing harness for the nonlocal-term evaluation strategies.

Three ways to evaluate u * (G convolved with u²) on an n × n grid:

* ``direct`` — rebuild the full pairwise kernel tensor and contract it
  against the field, every call.  This is the O(n⁴) baseline; its cost
  grows with slope ~4 in log-log against the grid side.
* ``circular`` — the cached-transform path on the torus metric.
* ``zero_padded`` — the cached-transform path on the doubled grid with
  the Euclidean metric.

Each transform result is cross-checked against the direct contraction on
the same input while n is small enough for that to be affordable; beyond
``oracle_limit`` the deviation column reads ``skipped``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import BC, Grid
from .kernels import ConvMode, Kernel, convolve_signed

__all__ = [
    "BenchResult",
    "direct_convolution",
    "run_bench",
    "fit_slopes",
    "results_to_csv",
    "STRATEGIES",
]

STRATEGIES = ("direct", "circular", "zero_padded")
DEFAULT_ORACLE_LIMIT = 48


@dataclass(frozen=True)
class BenchResult:
    strategy: str
    n: int
    median_ns: float
    max_dev: float | None  # None above the oracle limit

    def csv_row(self) -> str:
        dev = "skipped" if self.max_dev is None else f"{self.max_dev:.6e}"
        return f"{self.strategy},{self.n},{self.median_ns:.0f},{dev}"


def direct_convolution(kernel: Kernel, v: np.ndarray, grid: Grid, mode: ConvMode) -> np.ndarray:
    """Quadrature sum over every source point, with the kernel tensor
    rebuilt on each call (deliberately unmemoized)."""
    x, y = grid.coords()
    dx = np.abs(x[:, None] - x[None, :])
    dy = np.abs(y[:, None] - y[None, :])
    if mode is ConvMode.CIRCULAR:
        dx = np.minimum(dx, grid.lx - dx)
        dy = np.minimum(dy, grid.ly - dy)
    dist = np.sqrt(dx[:, :, None, None] ** 2 + dy[None, None, :, :] ** 2)
    # dist axes: (i_target, k_source, j_target, l_source)
    weights = kernel.profile(dist) * grid.cell_area
    return np.einsum("ikjl,kl->ij", weights, v)


def _strategy_fn(strategy: str, kernel: Kernel, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    if strategy == "direct":
        return lambda v: direct_convolution(kernel, v, grid, ConvMode.CIRCULAR)
    if strategy == "circular":
        return lambda v: convolve_signed(kernel, v, grid, ConvMode.CIRCULAR)
    if strategy == "zero_padded":
        return lambda v: convolve_signed(kernel, v, grid, ConvMode.ZERO_PADDED)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


def _median_time_ns(fn: Callable[[], object], repeats: int) -> float:
    fn()  # warm-up: builds any cached transforms
    t0 = time.perf_counter_ns()
    fn()
    probe = time.perf_counter_ns() - t0
    inner = max(1, int(2.0e6 / max(probe, 1)))  # ~2 ms per timed sample
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter_ns() - t0) / inner)
    return float(np.median(samples))


def run_bench(
    kernel: Kernel,
    strategy: str,
    sizes: Sequence[int],
    domain: float = 16.0 * np.pi,
    repeats: int = 5,
    seed: int = 7,
    oracle_limit: int = DEFAULT_ORACLE_LIMIT,
) -> list[BenchResult]:
    """Time one strategy across grid sides ``sizes`` on a square domain."""
    results = []
    for n in sizes:
        grid = Grid(n, n, domain, domain, BC.PERIODIC)
        rng = np.random.default_rng(seed + n)
        v = rng.random((n, n)) + 0.1  # nonnegative, like the squared field it stands for
        fn = _strategy_fn(strategy, kernel, grid)
        median_ns = _median_time_ns(lambda: fn(v), repeats)
        if n <= oracle_limit:
            metric = ConvMode.ZERO_PADDED if strategy == "zero_padded" else ConvMode.CIRCULAR
            oracle = direct_convolution(kernel, v, grid, metric)
            max_dev = float(np.max(np.abs(fn(v) - oracle)))
        else:
            max_dev = None
        results.append(BenchResult(strategy=strategy, n=n, median_ns=median_ns, max_dev=max_dev))
    return results


def fit_slopes(results: Sequence[BenchResult]) -> dict[str, float]:
    """Least-squares slope of log(median time) against log(grid side),
    per strategy.  Needs at least two sizes each."""
    slopes: dict[str, float] = {}
    for strategy in {r.strategy for r in results}:
        pts = sorted((r.n, r.median_ns) for r in results if r.strategy == strategy)
        if len(pts) < 2:
            raise ValueError(f"need >= 2 sizes to fit a slope for {strategy!r}")
        ln = np.log([p[0] for p in pts])
        lt = np.log([p[1] for p in pts])
        slopes[strategy] = float(np.polyfit(ln, lt, 1)[0])
    return slopes


def results_to_csv(results: Sequence[BenchResult]) -> str:
    return "\n".join(["strategy,n,median_ns,max_dev"] + [r.csv_row() for r in results]) + "\n"
