"""
Monte Carlo harness: synthetic data, scenario calibration, true effects and
performance metrics (bias, RMSE, percentile-bootstrap coverage).

Data-generating process for one row::

    R ~ Bernoulli(0.5)
    X ~ N(50 if R = 1 else 48, 12^2) truncated to (25, 75);  C = 1 + I(X >= 50)
    S = a0 + a1 R + a2 C + e_s
    M = b0 + b1 R + b2 C + b3 S + e_m                  (continuous mediator)
    M ~ Bernoulli(expit(b0 + b1 R + b2 C + b3 S))      (binary mediator)
    Y = c0 + c1 R + c2 S + c3 M + c4 R M + c5 C + e_y

with independent standard-normal errors. Effects are evaluated at the
reference level ``C = reference_c``.

Random streams are keyed by ``(seed, purpose, ...)`` through
:func:`~causaldecomp.bootstrap.split_rng`: ``(0, m)`` generates replicate
``m``, ``(1, m, b)`` draws its ``b``-th bootstrap resample and ``(2,)`` the
oracle population. Results therefore do not depend on scheduling.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, ndtr, ndtri

from .bootstrap import (REPLICATE_ERRORS, BootstrapConfig, percentile_interval, resample_index,
                        resolve_workers, split_rng)
from .dataset import BINARY, CONTINUOUS, Dataset, ReferencePoint, RoleSpec
from .estimators import (ALTERNATIVE, ORIGINAL, EstimatorId, check_availability, default_plan,
                         estimate)

COVARIATE_SD = 12.0
COVARIATE_BOUNDS = (25.0, 75.0)
COVARIATE_MEANS = {1: 50.0, 0: 48.0}
COVARIATE_CUT = 50.0
CALIBRATION_BRACKET = (-10.0, 10.0)
DEFAULT_ORACLE_N = 1_000_000
GAUSS_HERMITE_NODES = 80

STREAM_DATA = 0
STREAM_BOOTSTRAP = 1
STREAM_ORACLE = 2

METRICS_COLUMNS = ["estimator", "target", "n", "ratio", "bias", "rmse", "coverage", "M", "B",
                   "mediator"]


class CalibrationError(RuntimeError):
    """No coefficient inside the search bracket attains the calibration target."""


@dataclass(frozen=True)
class Coefficients:
    """Structural coefficients of the S, M and Y equations."""

    a0: float = 1.0
    a1: float = -0.30
    a2: float = 0.05
    b0: float = 1.2
    b1: float = 0.477
    b2: float = 0.03
    b3: float = -0.15
    c0: float = 8.0
    c1: float = -1.048
    c2: float = 0.40
    c3: float = -0.900
    c4: float = 0.52
    c5: float = -0.02

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v):
                raise ValueError(f"coefficient {f.name} must be finite")
            object.__setattr__(self, f.name, v)

    @classmethod
    def binary_default(cls) -> "Coefficients":
        """Defaults for a binary mediator: logit intercept -1 keeps P(M=1) away from 1."""
        return cls(b0=-1.0, b1=1.993, c1=-0.709, c3=-0.913)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``target_delta`` is the disparity reduction the calibration aims for
    (``None``: keep the current one); ``target_ratio`` and
    ``target_reduction`` are the ratio ``r`` and the fraction
    ``delta / tau``.
    """

    mediator_kind: str = CONTINUOUS
    n: int = 1000
    target_ratio: float = 1.0
    coefficients: Coefficients = field(default_factory=Coefficients)
    seed: int = 0
    target_reduction: float = 0.30
    target_delta: float | None = None
    reference_c: float = 1.0
    oracle_n: int = DEFAULT_ORACLE_N

    def __post_init__(self):
        if self.mediator_kind not in (CONTINUOUS, BINARY):
            raise ValueError("mediator_kind must be 'continuous' or 'binary'")
        if int(self.n) < 20:
            raise ValueError("n must be at least 20")
        if not self.target_ratio > 0:
            raise ValueError("target_ratio must be positive")
        if self.reference_c not in (1.0, 2.0):
            raise ValueError("reference_c must be a level of the dichotomised covariate (1 or 2)")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if isinstance(self.coefficients, dict):
            object.__setattr__(self, "coefficients", Coefficients(**self.coefficients))
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def default(cls, mediator_kind: str = CONTINUOUS, **kwargs) -> "ScenarioConfig":
        coef = Coefficients.binary_default() if mediator_kind == BINARY else Coefficients()
        return cls(mediator_kind=mediator_kind, coefficients=kwargs.pop("coefficients", coef),
                   **kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["coefficients"] = asdict(self.coefficients)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        kind = d.get("mediator_kind", CONTINUOUS)
        base = Coefficients.binary_default() if kind == BINARY else Coefficients()
        d["coefficients"] = replace(base, **d.get("coefficients", {}))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    @property
    def role_spec(self) -> RoleSpec:
        return RoleSpec("R", "Y", [("M", self.mediator_kind)], ["S"], ["C"])

    @property
    def reference(self) -> ReferencePoint:
        return ReferencePoint({"C": self.reference_c})


@dataclass(frozen=True)
class TrueEffects:
    delta_true: float
    zeta_true: float
    tau_true: float
    method: str = "analytic"

    @property
    def reduction_fraction(self) -> float:
        return self.delta_true / self.tau_true

    def to_dict(self) -> dict:
        return {"delta_true": self.delta_true, "zeta_true": self.zeta_true,
                "tau_true": self.tau_true, "reduction_fraction": self.reduction_fraction,
                "method": self.method}


# --------------------------------------------------------------------------- data


def truncated_normal(rng: np.random.Generator, mean, sd: float, low: float, high: float,
                     size: int) -> np.ndarray:
    """Inverse-CDF draws from ``N(mean, sd^2)`` truncated to ``(low, high)``.

    Exactly one uniform is consumed per draw, so the stream position never
    depends on the values drawn.
    """
    mean = np.asarray(mean, dtype=float)
    a = ndtr((low - mean) / sd)
    b = ndtr((high - mean) / sd)
    u = rng.random(size)
    x = mean + sd * ndtri(a + u * (b - a))
    return np.clip(x, low, high)


def truncated_normal_mean(mean: float, sd: float, low: float, high: float) -> float:
    """Closed-form mean of the truncated normal."""
    alpha = (low - mean) / sd
    beta = (high - mean) / sd
    z = ndtr(beta) - ndtr(alpha)
    phi = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    return mean + sd * (phi(alpha) - phi(beta)) / z


def _draw(rng: np.random.Generator, config: ScenarioConfig, n: int):
    k = config.coefficients
    r = (rng.random(n) < 0.5).astype(float)
    x = truncated_normal(rng, np.where(r == 1, COVARIATE_MEANS[1], COVARIATE_MEANS[0]),
                         COVARIATE_SD, *COVARIATE_BOUNDS, size=n)
    c = np.where(x >= COVARIATE_CUT, 2.0, 1.0)
    s = k.a0 + k.a1 * r + k.a2 * c + rng.standard_normal(n)
    lin = k.b0 + k.b1 * r + k.b2 * c + k.b3 * s
    if config.mediator_kind == CONTINUOUS:
        m = lin + rng.standard_normal(n)
    else:
        m = (rng.random(n) < expit(lin)).astype(float)
    e_y = rng.standard_normal(n)
    return r, c, s, m, e_y


def _outcome_mean(k: Coefficients, r, s, m, c):
    return k.c0 + k.c1 * r + k.c2 * s + k.c3 * m + k.c4 * r * m + k.c5 * c


def generate_scenario_data(config: ScenarioConfig, replicate_index: int) -> Dataset:
    """Replicate ``replicate_index`` of the scenario: columns R, C, S, M, Y."""
    rng = split_rng(config.seed, (STREAM_DATA, int(replicate_index)))
    r, c, s, m, e_y = _draw(rng, config, config.n)
    y = _outcome_mean(config.coefficients, r, s, m, c) + e_y
    return Dataset.from_columns({"R": r, "C": c, "S": s, "M": m, "Y": y}, validate=False)


# ------------------------------------------------------------------ ratio and truth


@functools.lru_cache(maxsize=1)
def _hermite():
    x, w = np.polynomial.hermite.hermgauss(GAUSS_HERMITE_NODES)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def mediator_mean(config: ScenarioConfig, r: float, coefficients: Coefficients | None = None
                  ) -> float:
    """``E[M | R=r, C=c]`` with the intermediate confounder integrated out."""
    k = coefficients or config.coefficients
    c = config.reference_c
    mean_s = k.a0 + k.a1 * r + k.a2 * c
    lin = k.b0 + k.b1 * r + k.b2 * c
    if config.mediator_kind == CONTINUOUS:
        return lin + k.b3 * mean_s
    z, w = _hermite()
    return float(w @ expit(lin + k.b3 * (mean_s + z)))


def mediator_gap(config: ScenarioConfig, coefficients: Coefficients | None = None) -> float:
    """Signed ``E[M|R=1,c] - E[M|R=0,c]``."""
    return mediator_mean(config, 1.0, coefficients) - mediator_mean(config, 0.0, coefficients)


def compute_ratio(config: ScenarioConfig) -> float:
    """Exposure-mediator over mediator-outcome association, ``|gap in M| / |c3 + c4|``."""
    k = config.coefficients
    denom = abs(k.c3 + k.c4)
    if denom < 1e-12:
        raise ValueError("ratio undefined: c3 + c4 is zero")
    return abs(mediator_gap(config)) / denom


def _analytic_truth(config: ScenarioConfig) -> TrueEffects:
    k = config.coefficients
    m1 = mediator_mean(config, 1.0)
    m0 = mediator_mean(config, 0.0)
    delta = (k.c3 + k.c4) * (m1 - m0)
    tau = k.c1 + k.c2 * k.a1 + (k.c3 + k.c4) * m1 - k.c3 * m0
    method = "analytic" if config.mediator_kind == CONTINUOUS else "quadrature"
    return TrueEffects(delta, tau - delta, tau, method)


@functools.lru_cache(maxsize=4)
def _population(kind, a, b, seed, oracle_n, reference_c):
    """S and M of the oracle population at ``C = c``, split by exposure."""
    cfg = ScenarioConfig(mediator_kind=kind, seed=seed, oracle_n=oracle_n,
                         reference_c=reference_c,
                         coefficients=Coefficients(*a, *b))
    rng = split_rng(seed, (STREAM_ORACLE,))
    r, c, s, m, _ = _draw(rng, cfg, oracle_n)
    keep = c == reference_c
    g1 = keep & (r == 1)
    g0 = keep & (r == 0)
    if not g1.any() or not g0.any():
        raise ValueError("oracle population has an empty group at the reference level")
    return (float(s[g1].mean()), float(m[g1].mean()), float(s[g0].mean()),
            float(m[g0].mean()))


def _population_truth(config: ScenarioConfig) -> TrueEffects:
    k = config.coefficients
    s1, m1, s0, m0 = _population(config.mediator_kind, (k.a0, k.a1, k.a2),
                                    (k.b0, k.b1, k.b2, k.b3), int(config.seed),
                                    int(config.oracle_n), float(config.reference_c))
    c = config.reference_c
    # E[Y|R=r,c] averages the structural mean over the population rows; it is
    # linear in (S, M), so group means of S and M suffice.
    e1 = _outcome_mean(k, 1.0, s1, m1, c)
    e0 = _outcome_mean(k, 0.0, s0, m0, c)
    e_cf = k.c0 + k.c1 + k.c2 * s1 + (k.c3 + k.c4) * m0 + k.c5 * c
    return TrueEffects(e1 - e_cf, e_cf - e0, e1 - e0, "population")


def true_effects(config: ScenarioConfig, oracle_n: int | None = None,
                 method: str | None = None) -> TrueEffects:
    """True ``delta``, ``zeta`` and ``tau`` at ``C = reference_c``.

    ``method="analytic"`` composes the structural equations (with
    Gauss-Hermite integration over S for a binary mediator);
    ``method="population"`` evaluates the identified functional on an
    ``oracle_n``-row population drawn from the scenario. The default is
    analytic for a continuous mediator and population for a binary one.
    """
    if oracle_n is not None:
        config = replace(config, oracle_n=int(oracle_n))
    if method is None:
        method = "analytic" if config.mediator_kind == CONTINUOUS else "population"
    if method == "analytic":
        return _analytic_truth(config)
    if method == "population":
        return _population_truth(config)
    raise ValueError("method must be 'analytic' or 'population'")


# -------------------------------------------------------------------- calibration


def _root(fn, what: str) -> float:
    lo, hi = CALIBRATION_BRACKET
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise CalibrationError(f"no root for {what} within [{lo:g}, {hi:g}]")
    return float(brentq(fn, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))


def calibrate_scenario(base: ScenarioConfig, target_ratio: float | None = None,
                       target_reduction: float | None = None,
                       target_delta: float | None = None) -> ScenarioConfig:
    """Adjust ``b1``, ``c3`` and ``c1`` to hit a ratio, a reduction fraction and ``delta``.

    Because ``delta = (c3 + c4) * gap`` and ``r = |gap| / |c3 + c4|``, the
    targets fix ``|gap| = sqrt(r |delta|)`` and ``c3 + c4 = delta / gap``.
    ``b1`` is found by bisection on the mediator gap, ``c3`` in closed form
    and ``c1`` by bisection on ``delta - target_reduction * tau``. Signs of
    the gap and of ``delta`` are kept from the base configuration. All three
    coefficients must lie in ``[-10, 10]``.
    """
    target_ratio = base.target_ratio if target_ratio is None else float(target_ratio)
    target_reduction = (base.target_reduction if target_reduction is None
                        else float(target_reduction))
    if target_delta is None:
        target_delta = base.target_delta
    if target_delta is None:
        target_delta = _analytic_truth(base).delta_true
    if target_ratio <= 0:
        raise ValueError("target_ratio must be positive")
    if target_delta == 0:
        raise CalibrationError("cannot calibrate a scenario without mediation (delta = 0)")

    k = base.coefficients
    sign = 1.0 if mediator_gap(base) >= 0 else -1.0
    gap = sign * math.sqrt(target_ratio * abs(target_delta))
    b1 = _root(lambda v: mediator_gap(base, replace(k, b1=v)) - gap, "b1 (mediator gap)")
    k = replace(k, b1=b1)
    c3 = target_delta / gap - k.c4
    if not CALIBRATION_BRACKET[0] <= c3 <= CALIBRATION_BRACKET[1]:
        raise CalibrationError(f"c3 = {c3:g} falls outside the calibration bracket")
    k = replace(k, c3=c3)
    cfg = replace(base, coefficients=k, target_ratio=target_ratio,
                  target_reduction=target_reduction, target_delta=float(target_delta))

    def excess(c1):
        t = true_effects(replace(cfg, coefficients=replace(k, c1=c1)))
        return t.delta_true - target_reduction * t.tau_true

    c1 = _root(excess, "c1 (reduction fraction)")
    return replace(cfg, coefficients=replace(k, c1=c1))


# Published anchors: the true disparity reduction per mediator kind and ratio.
PUBLISHED_RATIOS = (0.3, 0.5, 1.0, 2.0, 3.0)
PUBLISHED_SAMPLE_SIZES = (100, 500, 1000)
PUBLISHED_DELTAS = {
    CONTINUOUS: {0.3: -0.263, 0.5: -0.262, 1.0: -0.263, 2.0: -0.263, 3.0: -0.263},
    BINARY: {0.3: -0.283, 0.5: -0.297, 1.0: -0.311, 2.0: -0.053, 3.0: -0.044},
}


def published_grid(mediator_kinds: Sequence[str] = (CONTINUOUS, BINARY),
                   sample_sizes: Sequence[int] = PUBLISHED_SAMPLE_SIZES,
                   ratios: Sequence[float] = PUBLISHED_RATIOS, seed: int = 0,
                   target_reduction: float = 0.30, **overrides) -> list[ScenarioConfig]:
    """Uncalibrated configurations of the published scenario grid."""
    out = []
    for kind in mediator_kinds:
        for n in sample_sizes:
            for r in ratios:
                delta = PUBLISHED_DELTAS[kind].get(float(r), PUBLISHED_DELTAS[kind][1.0])
                out.append(ScenarioConfig.default(kind, n=n, target_ratio=float(r), seed=seed,
                                                  target_reduction=target_reduction,
                                                  target_delta=delta, **overrides))
    return out


# --------------------------------------------------------------------- simulation


def estimator_label(item) -> str:
    est, variant = _split_item(item)
    return est.value if variant is None else f"{est.value}[{variant}]"


def _split_item(item):
    if isinstance(item, (tuple, list)):
        est, variant = item
        return EstimatorId.parse(est), variant
    if isinstance(item, str) and "[" in item:
        est, variant = item.rstrip("]").split("[")
        return EstimatorId.parse(est), variant
    return EstimatorId.parse(item), None


def default_estimators(mediator_kind: str) -> list:
    """Every estimator applicable to the mediator kind; both remaining variants of 2 for binary."""
    if mediator_kind == CONTINUOUS:
        return [EstimatorId.DIFF_IN_COEFFS, (EstimatorId.PRODUCT_OF_COEFFS, ORIGINAL),
                EstimatorId.SINGLE_IMPUTATION, EstimatorId.MULTI_IMPUTATION]
    return [(EstimatorId.PRODUCT_OF_COEFFS, ALTERNATIVE), (EstimatorId.PRODUCT_OF_COEFFS, ORIGINAL),
            EstimatorId.RMPW, EstimatorId.SINGLE_IMPUTATION, EstimatorId.MULTI_IMPUTATION]


@dataclass(frozen=True)
class MetricRow:
    estimator: str
    target: str
    n: int
    ratio: float
    bias: float
    rmse: float
    coverage: float
    M: int
    B: int
    mediator: str
    n_failed: int = 0


@dataclass
class MetricsReport:
    """Bias, RMSE and coverage per (estimator, target) for one scenario."""

    config: ScenarioConfig
    truth: TrueEffects
    rows: list[MetricRow]
    skipped: dict[str, str] = field(default_factory=dict)
    estimates: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def cell(self, estimator, target: str) -> MetricRow:
        label = estimator if isinstance(estimator, str) and "[" in estimator \
            else estimator_label(estimator)
        for row in self.rows:
            if row.estimator == label and row.target == target:
                return row
        raise KeyError(f"no metrics for {label!r} / {target!r}")

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "truth": self.truth.to_dict(),
            "realized_ratio": compute_ratio(self.config),
            "metrics": [asdict(r) for r in self.rows],
            "skipped": dict(self.skipped),
        }


def aggregate_metrics(truth: float, estimates, lower=None, upper=None) -> tuple[float, float, float]:
    """``(bias, rmse, coverage)`` with ``bias = mean(truth - estimate)``.

    Coverage counts intervals with ``lower <= truth <= upper`` and is NaN
    when no intervals are given.
    """
    est = np.asarray(estimates, dtype=float)
    err = truth - est
    bias = float(err.mean())
    rmse = float(math.sqrt(np.mean(err * err)))
    if lower is None:
        return bias, rmse, float("nan")
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    coverage = float(np.mean((lo <= truth) & (truth <= hi)))
    return bias, rmse, coverage


def _values(est, variant):
    if variant == ORIGINAL:
        zeta = est.details.get("zeta_original", est.zeta)
    elif variant == ALTERNATIVE:
        zeta = est.details["zeta_alternative"]
    else:
        zeta = est.zeta
    return est.delta, zeta


EstimateFn = Callable[..., object]


# Per-replicate result slots.
POINT_DELTA, POINT_ZETA, DELTA_LO, DELTA_HI, ZETA_LO, ZETA_HI, N_FAILED = range(7)


def _replicate_block(config: ScenarioConfig, items: list, boot: BootstrapConfig | None,
                     start: int, stop: int, estimate_fn: EstimateFn | None) -> np.ndarray:
    """Results for replicates ``[start, stop)``, shape ``(stop - start, n_items, 7)``.

    Every bootstrap resample is shared by all requested estimators. A failed
    full-sample fit leaves NaN point estimates; failed resamples are dropped
    from the interval and counted.
    """
    fn = estimate_fn or estimate
    spec = config.role_spec
    ref = config.reference
    splits = [_split_item(i) for i in items]
    estimators = sorted({e for e, _ in splits}, key=lambda e: e.number)
    plans = {e: default_plan(spec, e) for e in estimators}
    out = np.full((stop - start, len(items), 7), np.nan)

    def evaluate(data, dest):
        for e in estimators:
            try:
                est = fn(e, data, spec, ref, plans[e])
            except REPLICATE_ERRORS:
                continue
            for j, (e2, variant) in enumerate(splits):
                if e2 == e:
                    dest[j] = _values(est, variant)

    for m in range(start, stop):
        data = generate_scenario_data(config, m)
        row = out[m - start]
        evaluate(data, row[:, POINT_DELTA:POINT_ZETA + 1])
        if boot is None:
            continue
        r = data["R"]
        groups = [np.flatnonzero(r == 0), np.flatnonzero(r == 1)] if boot.stratified else None
        reps = np.full((boot.replicates, len(items), 2), np.nan)
        for b in range(boot.replicates):
            rng = split_rng(boot.seed, (STREAM_BOOTSTRAP, m, b))
            evaluate(data.take(resample_index(rng, groups, data.n_rows)), reps[b])
        for j in range(len(items)):
            ok = np.all(np.isfinite(reps[:, j]), axis=1)
            row[j, N_FAILED] = float((~ok).sum())
            if ok.any():
                row[j, DELTA_LO:DELTA_HI + 1] = percentile_interval(reps[ok, j, 0], boot.ci_level)
                row[j, ZETA_LO:ZETA_HI + 1] = percentile_interval(reps[ok, j, 1], boot.ci_level)
    return out


def run_simulation(config: ScenarioConfig, estimators: Sequence | None = None, M: int = 200,
                   boot: BootstrapConfig | None = None, n_jobs: int | None = None,
                   truth: TrueEffects | None = None,
                   estimate_fn: EstimateFn | None = None) -> MetricsReport:
    """Bias, RMSE and bootstrap coverage of each estimator over ``M`` replicates.

    Parameters
    ----------
    config : ScenarioConfig
        Scenario, normally the output of :func:`calibrate_scenario`.
    estimators : sequence, optional
        Estimator ids, names or ``(id, remaining_variant)`` pairs; defaults to
        :func:`default_estimators`. Unavailable ones are skipped and listed in
        ``MetricsReport.skipped``.
    M : int
        Number of simulated datasets.
    boot : BootstrapConfig, optional
        Bootstrap settings for the coverage metric; ``None`` skips the
        bootstrap and reports NaN coverage.
    n_jobs : int, optional
        Worker processes (``-1`` for all CPUs, default from the
        ``CAUSALDECOMP_WORKERS`` environment variable, else 1). The result is
        identical for every value.
    truth : TrueEffects, optional
        Precomputed true effects; computed with :func:`true_effects` if absent.
    estimate_fn : callable, optional
        Replacement for :func:`~causaldecomp.estimators.estimate` with the
        same signature ``(estimator, data, spec, ref, plan)``; a test hook.

    Returns
    -------
    MetricsReport
        Point estimates use the full simulated sample.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    truth = truth or true_effects(config)
    items = list(estimators) if estimators is not None else default_estimators(
        config.mediator_kind)
    spec = config.role_spec
    skipped = {}
    kept = []
    for item in items:
        est, _ = _split_item(item)
        status = check_availability(spec, default_plan(spec, est))[est]
        if status.available:
            kept.append(_split_item(item))
        else:
            skipped[estimator_label(item)] = ", ".join(status.reasons)
    workers = min(resolve_workers(n_jobs), M)
    if not kept:
        results = np.zeros((M, 0, 7))
    elif workers == 1:
        results = _replicate_block(config, kept, boot, 0, M, estimate_fn)
    else:
        bounds = np.linspace(0, M, workers + 1).astype(int)
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_replicate_block, config, kept, boot, int(a), int(b),
                                   estimate_fn) for a, b in zip(bounds[:-1], bounds[1:])]
            results = np.concatenate([f.result() for f in futures], axis=0)

    B = 0 if boot is None else int(boot.replicates)
    rows = []
    estimates = {}
    for j, item in enumerate(kept):
        label = estimator_label(item)
        res = results[:, j]
        estimates[label] = res
        for target, col, lo, hi, true in (("delta", POINT_DELTA, DELTA_LO, DELTA_HI,
                                           truth.delta_true),
                                          ("zeta", POINT_ZETA, ZETA_LO, ZETA_HI,
                                           truth.zeta_true)):
            ok = np.isfinite(res[:, col])
            n_failed = int((~ok).sum())
            if not ok.any():
                bias = rmse = coverage = float("nan")
            elif boot is None:
                bias, rmse, coverage = aggregate_metrics(true, res[ok, col])
            else:
                bias, rmse, _ = aggregate_metrics(true, res[ok, col])
                # a replicate with no usable interval counts as not covering
                lo_v = np.where(np.isfinite(res[ok, lo]), res[ok, lo], np.inf)
                hi_v = np.where(np.isfinite(res[ok, hi]), res[ok, hi], -np.inf)
                coverage = aggregate_metrics(true, res[ok, col], lo_v, hi_v)[2]
            rows.append(MetricRow(label, target, config.n, config.target_ratio, bias, rmse,
                                  coverage, M, B, config.mediator_kind, n_failed))
    return MetricsReport(config, truth, rows, skipped, estimates)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_metrics_csv(reports: Sequence[MetricsReport], path, provenance: str = "") -> None:
    """One line per (scenario, estimator, target); floats in shortest round-trip form.

    ``provenance`` is written first as ``#`` comment lines.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in provenance.splitlines():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for rep in reports:
            for row in rep.rows:
                writer.writerow([_fmt(getattr(row, c)) for c in METRICS_COLUMNS])


def read_metrics_csv(path) -> list[dict]:
    """Rows of a metrics CSV with numeric fields converted; ``#`` lines are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    for row in rows:
        for k in ("ratio", "bias", "rmse", "coverage"):
            row[k] = float(row[k])
        for k in ("n", "M", "B"):
            row[k] = int(row[k])
    return rows
