"""
Percentile bootstrap intervals with reproducible, order-independent resampling.

Replicate ``b`` draws its resample from its own stream ``split_rng(seed, b)``,
so the multiset of replicate estimates (and hence every interval) does not
depend on the order in which replicates run or on how many worker processes
share them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import DataError, Dataset, ReferencePoint, RoleSpec
from .estimators import DecompositionEstimate, ModelPlan, estimate
from .glm import EstimationError

WORKERS_ENV = "CAUSALDECOMP_WORKERS"
UNRELIABLE_FRACTION = 0.1

# Failures a single resample may legitimately hit (separation, singular
# designs, a missing reference level); anything else is a bug and propagates.
REPLICATE_ERRORS = (EstimationError, DataError, np.linalg.LinAlgError, ZeroDivisionError)


@dataclass(frozen=True)
class BootstrapConfig:
    """Number of replicates, seed, resampling scheme and confidence level."""

    replicates: int = 1000
    seed: int = 0
    stratified: bool = True
    ci_level: float = 0.95

    def __post_init__(self):
        if int(self.replicates) < 2:
            raise ValueError("at least 2 bootstrap replicates are required")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        lo, hi = percentile_indices(self.replicates, self.ci_level)
        if lo > hi:
            raise ValueError(f"ci_level {self.ci_level} is not representable with "
                             f"{self.replicates} replicates")

    def to_dict(self) -> dict:
        return {"replicates": int(self.replicates), "seed": int(self.seed),
                "stratified": bool(self.stratified), "ci_level": float(self.ci_level)}


@dataclass(frozen=True)
class IntervalEstimate:
    """Point estimate with percentile intervals for tau, delta and zeta."""

    point: DecompositionEstimate
    tau_ci: tuple[float, float]
    delta_ci: tuple[float, float]
    zeta_ci: tuple[float, float]
    n_failed_replicates: int
    config: BootstrapConfig
    extra_ci: dict = field(default_factory=dict)

    @property
    def unreliable(self) -> bool:
        return self.n_failed_replicates >= UNRELIABLE_FRACTION * self.config.replicates

    def to_dict(self) -> dict:
        out = self.point.to_dict()
        out.update({
            "tau_ci": list(self.tau_ci),
            "delta_ci": list(self.delta_ci),
            "zeta_ci": list(self.zeta_ci),
            "bootstrap": self.config.to_dict(),
            "n_failed_replicates": self.n_failed_replicates,
            "unreliable": self.unreliable,
        })
        if self.extra_ci:
            out["details_ci"] = {k: list(v) for k, v in self.extra_ci.items()}
        return out


def split_rng(seed: int, stream) -> np.random.Generator:
    """Independent generator for ``stream`` (an int or tuple of ints) under ``seed``."""
    key = tuple(stream) if isinstance(stream, (tuple, list)) else (int(stream),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def percentile_indices(n: int, level: float) -> tuple[int, int]:
    """1-based order statistics ``(ceil(a n), floor((1 - a) n))`` with ``a = (1 - level) / 2``.

    A relative guard of 1e-9 keeps products such as ``0.025 * 1000`` from
    being pushed across an integer by rounding.
    """
    alpha = (1.0 - level) / 2.0
    lo = math.ceil(alpha * n - 1e-9)
    hi = math.floor((1.0 - alpha) * n + 1e-9)
    return max(lo, 1), min(hi, n)


def percentile_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Percentile interval of ``values`` using :func:`percentile_indices`."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values to take percentiles of")
    lo, hi = percentile_indices(v.size, level)
    return float(v[lo - 1]), float(v[hi - 1])


def resample_index(rng: np.random.Generator, groups: Sequence[np.ndarray] | None,
                   n: int) -> np.ndarray:
    """Row indices of one resample, drawn within each group when ``groups`` is given."""
    if groups is None:
        return rng.integers(0, n, n)
    return np.concatenate([g[rng.integers(0, g.size, g.size)] for g in groups])


def resolve_workers(n_jobs: int | None) -> int:
    """Worker count: explicit ``n_jobs``, else the environment override, else 1."""
    if n_jobs is None:
        n_jobs = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if n_jobs < 0:
        n_jobs = os.cpu_count() or 1
    return max(1, n_jobs)


def _replicate_chunk(data: Dataset, groups, fn: Callable, seed: int, stream_prefix: tuple,
                     start: int, stop: int, width: int) -> np.ndarray:
    out = np.full((stop - start, width), np.nan)
    for b in range(start, stop):
        idx = resample_index(split_rng(seed, stream_prefix + (b,)), groups, data.n_rows)
        try:
            out[b - start] = fn(data.take(idx))
        except REPLICATE_ERRORS:
            pass
    return out


def bootstrap_replicates(data: Dataset, fn: Callable[[Dataset], Sequence[float]], width: int,
                         config: BootstrapConfig, exposure: str | None = None,
                         n_jobs: int | None = None, stream_prefix: tuple = ()) -> np.ndarray:
    """Evaluate ``fn`` on ``config.replicates`` resamples.

    Returns a ``(B, width)`` array whose row ``b`` depends only on
    ``(config.seed, stream_prefix, b)``; rows of failed replicates are NaN.
    ``fn`` must be picklable when ``n_jobs > 1``.
    """
    groups = None
    if config.stratified:
        if exposure is None:
            raise ValueError("stratified resampling needs the exposure column")
        r = data[exposure]
        groups = [np.flatnonzero(r == 0), np.flatnonzero(r == 1)]
    B = int(config.replicates)
    workers = min(resolve_workers(n_jobs), B)
    if workers == 1:
        return _replicate_chunk(data, groups, fn, config.seed, stream_prefix, 0, B, width)
    bounds = np.linspace(0, B, workers + 1).astype(int)
    with ProcessPoolExecutor(workers) as pool:
        futures = [pool.submit(_replicate_chunk, data, groups, fn, config.seed, stream_prefix,
                               int(a), int(b), width) for a, b in zip(bounds[:-1], bounds[1:])]
        return np.vstack([f.result() for f in futures])


class _EstimateFn:
    """Picklable ``data -> (tau, delta, zeta, *details)`` wrapper around an estimator."""

    def __init__(self, estimator, spec, ref, plan, kwargs, detail_keys=()):
        self.estimator = estimator
        self.spec = spec
        self.ref = ref
        self.plan = plan
        self.kwargs = kwargs
        self.detail_keys = tuple(detail_keys)

    def __call__(self, data):
        est = estimate(self.estimator, data, self.spec, self.ref, self.plan, **self.kwargs)
        return [est.tau, est.delta, est.zeta] + [est.details[k] for k in self.detail_keys]


def bootstrap_ci(data: Dataset, spec: RoleSpec, estimator, ref: ReferencePoint | None = None,
                 plan: ModelPlan | None = None, config: BootstrapConfig | None = None,
                 n_jobs: int | None = None, **estimator_kwargs) -> IntervalEstimate:
    """Percentile bootstrap intervals for one estimator.

    A ``ref`` of ``None`` means the reference point is data-derived and is
    recomputed on every resample; an explicit ``ref`` is held fixed.
    Replicates that fail numerically are excluded and counted. Estimator 2
    also reports intervals for both remaining-disparity variants in
    ``extra_ci``.
    """
    config = config or BootstrapConfig()
    point = estimate(estimator, data, spec, ref, plan, **estimator_kwargs)
    detail_keys = [k for k in ("zeta_original", "zeta_alternative") if k in point.details]
    fn = _EstimateFn(estimator, spec, ref, plan, estimator_kwargs, detail_keys)
    reps = bootstrap_replicates(data, fn, 3 + len(detail_keys), config, spec.exposure, n_jobs)
    ok = np.all(np.isfinite(reps), axis=1)
    n_failed = int((~ok).sum())
    if n_failed == len(reps):
        raise EstimationError("every bootstrap replicate failed")
    good = reps[ok]
    cis = [percentile_interval(good[:, j], config.ci_level) for j in range(good.shape[1])]
    extra = dict(zip(detail_keys, cis[3:]))
    return IntervalEstimate(point, cis[0], cis[1], cis[2], n_failed, config, extra)
