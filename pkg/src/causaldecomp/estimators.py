"""
Estimators of disparity reduction and disparity remaining.

All estimators share one signature, ``estimate_*(data, spec, ref=None,
plan=None, ...)``, take *raw* data and centre the baseline covariates at the
reference point themselves (the sample means / modal levels when ``ref`` is
omitted). Every estimate reports

* ``tau``   -- initial disparity ``E[Y|R=1,c] - E[Y|R=0,c]``,
* ``delta`` -- disparity reduction, the part of ``tau`` removed when the
  comparison group's mediator distribution is set to the reference group's,
* ``zeta``  -- disparity remaining after that intervention.

Estimators:

1. ``diff_in_coeffs``    -- nested linear outcome regressions.
2. ``product_of_coeffs`` -- mediator-model gap times the mediator effect in
   the comparison group, with an exposure-by-mediator interaction.
3. ``rmpw``              -- ratio-of-mediator-probability weighting.
4. ``single_imputation`` -- impute the counterfactual mediator from a mediator
   model and average the outcome model over the comparison group.
5. ``multi_imputation``  -- impute intermediate confounders from confounder
   models and average the outcome model over the reference group.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.special import expit

from .dataset import (BINARY, CONTINUOUS, Dataset, ReferencePoint, RoleSpec, SchemaError,
                      ValidationError, center_covariates, covariate_columns, default_reference)
from .glm import WEIGHT_CLAMP, EstimationError, design_matrix, irls, wls


class EstimatorId(str, enum.Enum):
    DIFF_IN_COEFFS = "diff_in_coeffs"
    PRODUCT_OF_COEFFS = "product_of_coeffs"
    RMPW = "rmpw"
    SINGLE_IMPUTATION = "single_imputation"
    MULTI_IMPUTATION = "multi_imputation"

    @property
    def number(self) -> int:
        return list(EstimatorId).index(self) + 1

    @classmethod
    def parse(cls, value) -> "EstimatorId":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "_")
        if text.isdigit() and 1 <= int(text) <= 5:
            return list(cls)[int(text) - 1]
        return cls(text)

    def __str__(self):
        return self.value


ORIGINAL = "original"
ALTERNATIVE = "alternative"

# Reasons an estimator is unavailable.
CATEGORICAL_MEDIATOR = "categorical mediator"
CONTINUOUS_MEDIATOR = "continuous mediator"
CATEGORICAL_OUTCOME = "categorical outcome"
MULTIPLE_MEDIATORS = "multiple mediators"
EXPOSURE_MEDIATOR_INTERACTION = "exposure-mediator interaction"
OTHER_NONLINEARITY = "other nonlinearity"


class AvailabilityError(ValueError):
    """The estimator cannot be applied to this role specification / model plan."""

    def __init__(self, estimator, reasons):
        self.estimator = EstimatorId.parse(estimator)
        self.reasons = tuple(reasons)
        super().__init__(f"{self.estimator.value} is unavailable: {', '.join(self.reasons)}")


class UnsupportedPlanError(AvailabilityError):
    """The model plan is outside what an imputation estimator evaluates exactly."""


class DegenerateEstimateError(EstimationError):
    """A quantity needed by the estimator is undefined for these data."""


def _pair(p) -> tuple[str, str]:
    if isinstance(p, str):
        a, b = p.split(":")
        return (a.strip(), b.strip())
    a, b = p
    return (a, b)


@dataclass(frozen=True)
class ModelPlan:
    """Pairwise interaction terms added to the main-effect models.

    ``outcome_interactions`` enter the outcome model, ``mediator_interactions``
    the mediator model(s) and ``confounder_interactions`` the intermediate
    confounder models. Pairs are written ``("R", "M")`` or ``"R:M"`` using
    role column names; a categorical covariate expands to its indicators.
    """

    outcome_interactions: tuple = ()
    mediator_interactions: tuple = ()
    confounder_interactions: tuple = ()

    def __post_init__(self):
        for name in ("outcome_interactions", "mediator_interactions", "confounder_interactions"):
            object.__setattr__(self, name, tuple(_pair(p) for p in getattr(self, name)))

    @classmethod
    def exposure_mediator(cls, spec: RoleSpec) -> "ModelPlan":
        """Outcome model with an exposure-by-mediator term for every mediator."""
        return cls(outcome_interactions=tuple((spec.exposure, m.name) for m in spec.mediators))

    def all_interactions(self):
        return self.outcome_interactions + self.mediator_interactions + self.confounder_interactions

    def nonlinearities(self, spec: RoleSpec) -> set[str]:
        mediators = {m.name for m in spec.mediators}
        kinds = set()
        for a, b in self.all_interactions():
            if {a, b} & {spec.exposure} and {a, b} & mediators and a != b:
                kinds.add(EXPOSURE_MEDIATOR_INTERACTION)
            else:
                kinds.add(OTHER_NONLINEARITY)
        return kinds

    def to_dict(self) -> dict:
        return {k: [list(p) for p in getattr(self, k)]
                for k in ("outcome_interactions", "mediator_interactions", "confounder_interactions")}


def default_plan(spec: RoleSpec, estimator) -> ModelPlan:
    """Exposure-by-mediator terms for estimators 2, 4 and 5; none otherwise."""
    estimator = EstimatorId.parse(estimator)
    if estimator in (EstimatorId.DIFF_IN_COEFFS, EstimatorId.RMPW):
        return ModelPlan()
    return ModelPlan.exposure_mediator(spec)


@dataclass(frozen=True)
class Availability:
    available: bool
    reasons: tuple[str, ...] = ()


class AvailabilityReport(dict):
    """Mapping ``EstimatorId -> Availability``."""

    @property
    def available(self) -> list[EstimatorId]:
        return [k for k, v in self.items() if v.available]

    def __str__(self):
        lines = []
        for k, v in self.items():
            state = "available" if v.available else "unavailable (" + ", ".join(v.reasons) + ")"
            lines.append(f"{k.number} {k.value}: {state}")
        return "\n".join(lines)


def check_availability(spec: RoleSpec, plan: ModelPlan | None = None) -> AvailabilityReport:
    """Which estimators apply to these variable types, mediator count and model terms."""
    plan = plan or ModelPlan()
    binary_mediator = any(m.kind != CONTINUOUS for m in spec.mediators)
    continuous_mediator = any(m.kind == CONTINUOUS for m in spec.mediators)
    binary_outcome = spec.outcome.kind != CONTINUOUS
    multiple = len(spec.mediators) > 1
    nonlinear = plan.nonlinearities(spec)

    rules = {
        EstimatorId.DIFF_IN_COEFFS: dict(mediator={CONTINUOUS}, outcome=False, multiple=False,
                                         nonlinear=set()),
        EstimatorId.PRODUCT_OF_COEFFS: dict(mediator={CONTINUOUS, BINARY}, outcome=False,
                                            multiple=False,
                                            nonlinear={EXPOSURE_MEDIATOR_INTERACTION}),
        EstimatorId.RMPW: dict(mediator={BINARY}, outcome=True, multiple=False,
                               nonlinear={EXPOSURE_MEDIATOR_INTERACTION, OTHER_NONLINEARITY}),
        EstimatorId.SINGLE_IMPUTATION: dict(mediator={CONTINUOUS, BINARY}, outcome=True,
                                            multiple=False,
                                            nonlinear={EXPOSURE_MEDIATOR_INTERACTION,
                                                       OTHER_NONLINEARITY}),
        EstimatorId.MULTI_IMPUTATION: dict(mediator={CONTINUOUS, BINARY}, outcome=True,
                                           multiple=True,
                                           nonlinear={EXPOSURE_MEDIATOR_INTERACTION,
                                                      OTHER_NONLINEARITY}),
    }
    report = AvailabilityReport()
    for est, rule in rules.items():
        reasons = []
        if binary_mediator and BINARY not in rule["mediator"]:
            reasons.append(CATEGORICAL_MEDIATOR)
        if continuous_mediator and CONTINUOUS not in rule["mediator"]:
            reasons.append(CONTINUOUS_MEDIATOR)
        if binary_outcome and not rule["outcome"]:
            reasons.append(CATEGORICAL_OUTCOME)
        if multiple and not rule["multiple"]:
            reasons.append(MULTIPLE_MEDIATORS)
        for kind in (EXPOSURE_MEDIATOR_INTERACTION, OTHER_NONLINEARITY):
            if kind in nonlinear and kind not in rule["nonlinear"]:
                reasons.append(kind)
        report[est] = Availability(not reasons, tuple(reasons))
    return report


def _require(estimator: EstimatorId, spec: RoleSpec, plan: ModelPlan):
    status = check_availability(spec, plan)[estimator]
    if not status.available:
        raise AvailabilityError(estimator, status.reasons)


@dataclass(frozen=True)
class DecompositionEstimate:
    tau: float
    delta: float
    zeta: float
    estimator: EstimatorId
    reference: ReferencePoint | None = None
    remaining_variant: str | None = None
    marginal: bool = False
    details: Mapping[str, float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "details", MappingProxyType(dict(self.details)))

    def __reduce__(self):
        return (DecompositionEstimate, (self.tau, self.delta, self.zeta, self.estimator,
                                        self.reference, self.remaining_variant, self.marginal,
                                        dict(self.details), self.warnings))

    @property
    def percent_reduction(self) -> float:
        return 100.0 * self.delta / self.tau if self.tau != 0 else float("nan")

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator.value,
            "tau": self.tau,
            "delta": self.delta,
            "zeta": self.zeta,
            "percent_reduction": self.percent_reduction,
            "remaining_variant": self.remaining_variant,
            "marginal": self.marginal,
            "reference": None if self.reference is None else self.reference.to_dict(),
            "details": dict(self.details),
            "warnings": list(self.warnings),
        }


def percent_reduction(estimate: DecompositionEstimate) -> float:
    """``100 * delta / tau``."""
    if estimate.tau == 0:
        raise ZeroDivisionError("percent reduction is undefined when the initial disparity is 0")
    return 100.0 * estimate.delta / estimate.tau


class _Frame:
    """Covariate-centred columns and group masks for one estimator call."""

    def __init__(self, data: Dataset, spec: RoleSpec, ref: ReferencePoint | None):
        if ref is None:
            ref = default_reference(data, spec)
        self.ref = ref
        self.spec = spec
        self.data = center_covariates(data, spec, ref)
        self.cols = self.data.columns
        self.n = data.n_rows
        self.r = self.cols[spec.exposure]
        self.g1 = self.r == 1
        self.g0 = ~self.g1
        self.n1 = int(self.g1.sum())
        if self.n1 == 0 or self.n1 == self.n:
            raise ValidationError("both exposure groups must be non-empty")
        self.y = self.cols[spec.outcome.name]
        self.cov = covariate_columns(self.data, spec, drop_constant=True)
        self._cov_expansion = {v.name: covariate_columns(self.data, _only(spec, v))
                               for v in spec.baseline_covariates}

    def expand(self, pairs) -> list[tuple[str, str]]:
        """Concrete column pairs for role-level interaction pairs."""
        out = []
        for a, b in pairs:
            for ca in self._cov_expansion.get(a, [a]):
                for cb in self._cov_expansion.get(b, [b]):
                    if ca not in self.cols or cb not in self.cols:
                        raise SchemaError(f"interaction {a}:{b} names an unknown column")
                    out.append((ca, cb))
        return out

    def X(self, terms, rows=None, overrides=None) -> np.ndarray:
        """Design for ``rows``; array overrides are given per selected row."""
        cols = self.cols
        n = self.n
        if rows is not None:
            cols = _RowView(cols, rows)
            n = int(rows.sum()) if rows.dtype == bool else len(rows)
        return design_matrix(cols, terms, n, overrides)

    def fit(self, response, terms, rows=None, kind=CONTINUOUS, weights=None):
        X = self.X(terms, rows)
        y = response if rows is None else response[rows]
        labels = ["(Intercept)"] + [t if isinstance(t, str) else ":".join(t) for t in terms]
        if kind == CONTINUOUS:
            return wls(X, y, weights, labels)
        if y.min() == y.max():
            from .glm import SeparationError
            raise SeparationError("binary response has a single class")
        return irls(X, y, labels)[0]

    def intercept(self, response, rows, weights=None) -> float:
        """Mean of ``response`` among ``rows`` at the reference point (``response ~ C``)."""
        return float(self.fit(response, self.cov, rows, CONTINUOUS, weights)[0])


class _RowView(Mapping):
    def __init__(self, cols, rows):
        self._cols = cols
        self._rows = rows

    def __getitem__(self, k):
        return self._cols[k][self._rows]

    def __iter__(self):
        return iter(self._cols)

    def __len__(self):
        return len(self._cols)


def _only(spec: RoleSpec, v) -> RoleSpec:
    return RoleSpec(spec.exposure, spec.outcome, spec.mediators, spec.intermediate_confounders,
                    (v,))


def _predict(coef, X, kind):
    eta = X @ coef
    return eta if kind == CONTINUOUS else expit(eta)


def _confounder_names(spec):
    return [v.name for v in spec.intermediate_confounders]


def initial_disparity(data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None) -> float:
    """Exposure coefficient of the linear fit ``Y ~ R + C`` at the reference point."""
    f = _Frame(data, spec, ref)
    return float(f.fit(f.y, [spec.exposure] + f.cov)[1])


def estimate_diff_in_coeffs(data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None,
                            plan: ModelPlan | None = None) -> DecompositionEstimate:
    """Difference-in-coefficients estimator from three nested outcome regressions.

    Fits ``Y ~ R + C`` (phi), ``Y ~ R + S + C`` (gamma) and
    ``Y ~ R + S + M + C`` (theta). With a single intermediate confounder,

        delta = gamma_R - theta_R + (1 - theta_S / gamma_S) * (phi_R - gamma_R)
        zeta  = theta_R + (theta_S / gamma_S) * (phi_R - gamma_R)

    With several confounders the ratio is replaced by the exposure
    coefficients ``kappa_j`` of ``S_j ~ R + C``, which reduces to the same
    expressions for one confounder because ``phi_R - gamma_R = kappa *
    gamma_S`` holds exactly for least squares.
    """
    plan = plan or ModelPlan()
    _require(EstimatorId.DIFF_IN_COEFFS, spec, plan)
    f = _Frame(data, spec, ref)
    R, M = spec.exposure, spec.mediator.name
    S = _confounder_names(spec)
    phi = f.fit(f.y, [R] + f.cov)
    gamma = f.fit(f.y, [R] + S + f.cov)
    theta = f.fit(f.y, [R] + S + [M] + f.cov)
    phi1, gamma1, theta1 = phi[1], gamma[1], theta[1]
    if not S:
        delta = phi1 - theta1
        zeta = theta1
        details = {}
    elif len(S) == 1:
        gamma2, theta2 = gamma[2], theta[2]
        if abs(gamma2) < 1e-10:
            raise DegenerateEstimateError(
                "confounder has no outcome association; correction term undefined")
        ratio = theta2 / gamma2
        delta = gamma1 - theta1 + (1.0 - ratio) * (phi1 - gamma1)
        zeta = theta1 + ratio * (phi1 - gamma1)
        details = {"confounder_share": ratio}
    else:
        kappa = np.array([f.fit(f.cols[s], [R] + f.cov)[1] for s in S])
        gamma2 = gamma[2:2 + len(S)]
        theta2 = theta[2:2 + len(S)]
        delta = gamma1 - theta1 + float(kappa @ (gamma2 - theta2))
        zeta = theta1 + float(kappa @ theta2)
        details = {}
    details.update(phi_R=phi1, gamma_R=gamma1, theta_R=theta1)
    return DecompositionEstimate(float(phi1), float(delta), float(zeta),
                                 EstimatorId.DIFF_IN_COEFFS, f.ref, details=details)


def _group_gap(f: _Frame, response, kind, extra_terms=()):
    """Fit ``response ~ R + C (+ extra)`` and return (level at R=0, gap R=1 minus R=0) at c."""
    R = f.spec.exposure
    terms = [R] + f.cov + list(extra_terms)
    coef = f.fit(response, terms, kind=kind)
    if kind == CONTINUOUS and not extra_terms:
        return float(coef[0]), float(coef[1])
    base = np.zeros(len(terms) + 1)
    base[0] = 1.0
    treated = base.copy()
    treated[1] = 1.0
    # interaction terms evaluated at c (all covariates zero) and R in {0, 1}
    for j, t in enumerate(terms, start=1):
        if isinstance(t, tuple) and R in t:
            other = t[1] if t[0] == R else t[0]
            if other == R:
                treated[j] = 1.0
    lvl0 = float(base @ coef)
    lvl1 = float(treated @ coef)
    if kind != CONTINUOUS:
        lvl0, lvl1 = float(expit(lvl0)), float(expit(lvl1))
    return lvl0, lvl1 - lvl0


def estimate_product_of_coeffs(data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None,
                               plan: ModelPlan | None = None,
                               remaining_variant: str | None = None) -> DecompositionEstimate:
    """Product-of-coefficients estimator.

    Mediator model ``M ~ R + C`` (logistic for a binary mediator, whose
    coefficients are converted to the probability scale at ``c``) and outcome
    model ``Y ~ R + S + M + R:M + C``::

        delta            = alpha_1 * (beta_M + beta_RM)
        zeta (original)  = phi_R - delta
        zeta (alternative) = beta_R + beta_S . kappa + beta_RM * alpha_0

    where ``kappa`` holds the exposure gaps of the intermediate confounders
    from ``S ~ R + C``. The alternative remaining disparity is reported by
    default for a binary mediator, the original one for a continuous mediator;
    both are kept in ``details``.
    """
    plan = plan or default_plan(spec, EstimatorId.PRODUCT_OF_COEFFS)
    _require(EstimatorId.PRODUCT_OF_COEFFS, spec, plan)
    if plan.mediator_interactions or plan.confounder_interactions:
        raise AvailabilityError(EstimatorId.PRODUCT_OF_COEFFS, [OTHER_NONLINEARITY])
    f = _Frame(data, spec, ref)
    R = spec.exposure
    med = spec.mediator
    M = med.name
    S = _confounder_names(spec)
    if remaining_variant is None:
        remaining_variant = ALTERNATIVE if med.kind != CONTINUOUS else ORIGINAL
    if remaining_variant not in (ORIGINAL, ALTERNATIVE):
        raise ValueError(f"remaining_variant must be {ORIGINAL!r} or {ALTERNATIVE!r}")

    alpha0, alpha1 = _group_gap(f, f.cols[M], CONTINUOUS if med.kind == CONTINUOUS else BINARY)
    beta = f.fit(f.y, [R] + S + [M, (R, M)] + f.cov)
    beta1 = beta[1]
    beta2 = beta[2:2 + len(S)]
    beta3 = beta[2 + len(S)]
    beta4 = beta[3 + len(S)]
    phi1 = float(f.fit(f.y, [R] + f.cov)[1])

    delta = float(alpha1 * (beta3 + beta4))
    zeta_original = phi1 - delta
    kappa = np.array([_group_gap(f, f.cols[v.name], v.kind)[1]
                      for v in spec.intermediate_confounders])
    zeta_alternative = float(beta1 + (beta2 @ kappa if S else 0.0) + beta4 * alpha0)
    zeta = zeta_original if remaining_variant == ORIGINAL else zeta_alternative
    details = {"alpha0": alpha0, "alpha1": alpha1, "beta_R": float(beta1),
               "beta_M": float(beta3), "beta_RM": float(beta4),
               "zeta_original": zeta_original, "zeta_alternative": zeta_alternative}
    for name, k in zip(S, kappa):
        details[f"kappa[{name}]"] = float(k)
    return DecompositionEstimate(phi1, delta, float(zeta), EstimatorId.PRODUCT_OF_COEFFS, f.ref,
                                 remaining_variant, details=details)


def estimate_rmpw(data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None,
                  plan: ModelPlan | None = None) -> DecompositionEstimate:
    """Ratio-of-mediator-probability weighting for a single binary mediator.

    ``P(M|R=0,C)`` is fitted on the reference group and ``P(M|R=1,S,C)`` on
    the comparison group; each comparison-group row gets weight
    ``P(M_i|R=0,C_i) / P(M_i|R=1,S_i,C_i)`` evaluated at its observed
    mediator. The weighted intercept of ``Y ~ C`` in the comparison group is
    the counterfactual mean. Weights are not truncated or normalised; a
    denominator below 1e-12 adds a warning to the estimate.
    """
    plan = plan or ModelPlan()
    _require(EstimatorId.RMPW, spec, plan)
    f = _Frame(data, spec, ref)
    R = spec.exposure
    M = spec.mediator.name
    S = _confounder_names(spec)
    extra = [t for t in f.expand(plan.mediator_interactions)
             if R not in (t if isinstance(t, tuple) else (t,))]
    m = f.cols[M]
    terms0 = f.cov + extra
    terms0 = [t for t in terms0 if not _mentions(t, S)]
    terms1 = S + f.cov + extra
    coef0 = f.fit(m, terms0, f.g0, BINARY)
    coef1 = f.fit(m, terms1, f.g1, BINARY)
    p0 = expit(f.X(terms0, f.g1) @ coef0)
    p1 = expit(f.X(terms1, f.g1) @ coef1)
    m1 = m[f.g1]
    num = np.where(m1 == 1, p0, 1.0 - p0)
    den = np.where(m1 == 1, p1, 1.0 - p1)
    warnings = ()
    if den.min() < WEIGHT_CLAMP:
        warnings = (f"extreme weights: {int((den < WEIGHT_CLAMP).sum())} mediator probabilities "
                    f"below {WEIGHT_CLAMP:g} in the comparison-group model",)
    w = np.clip(num, WEIGHT_CLAMP, 1.0) / np.clip(den, WEIGHT_CLAMP, 1.0)
    e1 = f.intercept(f.y, f.g1)
    e0 = f.intercept(f.y, f.g0)
    ew = f.intercept(f.y, f.g1, weights=w)
    details = {"E[Y|R=1,c]": e1, "E[Y|R=0,c]": e0, "E[WY|R=1,c]": ew,
               "max_weight": float(w.max()), "mean_weight": float(w.mean())}
    return DecompositionEstimate(e1 - e0, e1 - ew, ew - e0, EstimatorId.RMPW, f.ref,
                                 details=details, warnings=warnings)


def _mentions(term, names) -> bool:
    parts = (term,) if isinstance(term, str) else term
    return any(p in names for p in parts)


def _check_imputation_plan(estimator, spec, outcome_terms, imputed):
    """Reject outcome models that are not linear in a continuous imputed variable."""
    cont = [v.name for v in imputed if v.kind == CONTINUOUS]
    if not cont:
        return
    if spec.outcome.kind != CONTINUOUS:
        raise UnsupportedPlanError(
            estimator, [f"logistic outcome model is nonlinear in continuous {cont[0]!r}"])
    for t in outcome_terms:
        if isinstance(t, tuple) and t[0] == t[1] and t[0] in cont:
            raise UnsupportedPlanError(
                estimator, [f"outcome model is nonlinear in continuous {t[0]!r}"])


def _outcome_terms(f: _Frame, spec: RoleSpec, plan: ModelPlan):
    R = spec.exposure
    main = [R] + _confounder_names(spec) + [m.name for m in spec.mediators] + f.cov
    return main + f.expand(plan.outcome_interactions)


def _single_imputation_parts(f: _Frame, spec: RoleSpec, plan: ModelPlan):
    """Fitted models and the counterfactual / factual imputations for the R=1 rows."""
    R = spec.exposure
    med = spec.mediator
    M = med.name
    med_terms = [R] + f.cov + f.expand(plan.mediator_interactions)
    out_terms = _outcome_terms(f, spec, plan)
    _check_imputation_plan(EstimatorId.SINGLE_IMPUTATION, spec, out_terms, [med])
    med_kind = CONTINUOUS if med.kind == CONTINUOUS else BINARY
    out_kind = CONTINUOUS if spec.outcome.kind == CONTINUOUS else BINARY
    a = f.fit(f.cols[M], med_terms, kind=med_kind)
    b = f.fit(f.y, out_terms, kind=out_kind)

    def impute(rows, r_med, r_out):
        med_pred = _predict(a, f.X(med_terms, rows, {R: float(r_med)}), med_kind)
        if med_kind == CONTINUOUS:
            return _predict(b, f.X(out_terms, rows, {R: float(r_out), M: med_pred}), out_kind)
        mu1 = _predict(b, f.X(out_terms, rows, {R: float(r_out), M: 1.0}), out_kind)
        mu0 = _predict(b, f.X(out_terms, rows, {R: float(r_out), M: 0.0}), out_kind)
        return med_pred * mu1 + (1.0 - med_pred) * mu0

    return impute


def estimate_single_imputation(data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None,
                               plan: ModelPlan | None = None,
                               factual: str = "observed") -> DecompositionEstimate:
    """Single-mediator imputation estimator, conditional on ``C = c``.

    A mediator model ``p(M | R, C)`` is fitted on all rows and an outcome
    model ``mu(R, S, M, C)`` with the plan's interactions. For every
    comparison-group row the exposure is set to 0 in the mediator model and
    the outcome model is averaged over the resulting mediator distribution
    (predicted mean for a continuous mediator, two-point sum for a binary
    one). Regressing these imputed outcomes on the centred covariates within
    the comparison group gives ``E[Y(G)|R=1,c]`` as the intercept.

    ``factual="observed"`` (default) takes ``E[Y|R=r,c]`` from the
    group-wise regressions of the observed outcome; ``factual="imputed"``
    evaluates them through the same fitted models, which is the full plug-in
    of the identification formula.
    """
    plan = plan or default_plan(spec, EstimatorId.SINGLE_IMPUTATION)
    _require(EstimatorId.SINGLE_IMPUTATION, spec, plan)
    f = _Frame(data, spec, ref)
    impute = _single_imputation_parts(f, spec, plan)
    cf = impute(f.g1, 0, 1)
    e_cf = f.intercept(_scatter(cf, f.g1, f.n), f.g1)
    if factual == "observed":
        e1 = f.intercept(f.y, f.g1)
        e0 = f.intercept(f.y, f.g0)
    elif factual == "imputed":
        e1 = f.intercept(_scatter(impute(f.g1, 1, 1), f.g1, f.n), f.g1)
        e0 = f.intercept(_scatter(impute(f.g0, 0, 0), f.g0, f.n), f.g0)
    else:
        raise ValueError("factual must be 'observed' or 'imputed'")
    details = {"E[Y|R=1,c]": e1, "E[Y|R=0,c]": e0, "E[Y(G)|R=1,c]": e_cf}
    return DecompositionEstimate(e1 - e0, e1 - e_cf, e_cf - e0, EstimatorId.SINGLE_IMPUTATION,
                                 f.ref, details=details)


def _scatter(values, rows, n):
    out = np.zeros(n)
    out[rows] = values
    return out


def estimate_single_imputation_marginal(data: Dataset, spec: RoleSpec,
                                        plan: ModelPlan | None = None,
                                        covariates: str = "overall") -> DecompositionEstimate:
    """Single-mediator imputation averaged over the covariate distribution.

    Imputed outcomes use each row's own covariates. With
    ``covariates="overall"`` (default) comparison-group rows are reweighted
    by ``P(R=1) / P(R=1|C_i)`` (reference-group rows by ``P(R=0) /
    P(R=0|C_i)``, from a logistic exposure model) so that all three means are
    standardised to the covariate distribution of the whole sample.
    ``covariates="comparison"`` uses plain group means instead, i.e. the
    comparison group's own covariate distribution.
    """
    plan = plan or default_plan(spec, EstimatorId.SINGLE_IMPUTATION)
    _require(EstimatorId.SINGLE_IMPUTATION, spec, plan)
    f = _Frame(data, spec, None)
    impute = _single_imputation_parts(f, spec, plan)
    cf = impute(f.g1, 0, 1)
    y1, y0 = f.y[f.g1], f.y[f.g0]
    if covariates == "comparison" or not f.cov:
        w1 = np.ones(f.n1)
        w0 = np.ones(f.n - f.n1)
    elif covariates == "overall":
        g = f.fit(f.r, f.cov, kind=BINARY)
        ps = expit(f.X(f.cov) @ g)
        p1 = f.n1 / f.n
        w1 = p1 / ps[f.g1]
        w0 = (1.0 - p1) / (1.0 - ps[f.g0])
    else:
        raise ValueError("covariates must be 'overall' or 'comparison'")
    e1 = float(w1 @ y1 / w1.sum())
    e_cf = float(w1 @ cf / w1.sum())
    e0 = float(w0 @ y0 / w0.sum())
    details = {"E[Y|R=1]": e1, "E[Y|R=0]": e0, "E[Y(G)|R=1]": e_cf}
    return DecompositionEstimate(e1 - e0, e1 - e_cf, e_cf - e0, EstimatorId.SINGLE_IMPUTATION,
                                 None, marginal=True, details=details)


def estimate_multi_imputation(data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None,
                              plan: ModelPlan | None = None) -> DecompositionEstimate:
    """Multiple-mediator imputation estimator.

    Each intermediate confounder is modelled on ``(R, C)`` separately. For
    every reference-group row the confounders are imputed with the exposure
    set to 1 (predicted mean if continuous; binary confounders are summed
    over their two values with the predicted probabilities), the observed
    mediators are kept, and the outcome model is evaluated at ``R = 1``. The
    intercept of these imputed outcomes regressed on the centred covariates
    within the reference group is ``E[Y(G)|R=1,c]``.
    """
    plan = plan or default_plan(spec, EstimatorId.MULTI_IMPUTATION)
    _require(EstimatorId.MULTI_IMPUTATION, spec, plan)
    f = _Frame(data, spec, ref)
    R = spec.exposure
    out_terms = _outcome_terms(f, spec, plan)
    confs = spec.intermediate_confounders
    _check_imputation_plan(EstimatorId.MULTI_IMPUTATION, spec, out_terms, confs)
    out_kind = CONTINUOUS if spec.outcome.kind == CONTINUOUS else BINARY
    b = f.fit(f.y, out_terms, kind=out_kind)
    conf_terms = [R] + f.cov + f.expand(plan.confounder_interactions)

    rows = f.g0
    means = {}
    probs = {}
    for v in confs:
        kind = CONTINUOUS if v.kind == CONTINUOUS else BINARY
        coef = f.fit(f.cols[v.name], conf_terms, kind=kind)
        pred = _predict(coef, f.X(conf_terms, rows, {R: 1.0}), kind)
        if kind == CONTINUOUS:
            means[v.name] = pred
        else:
            probs[v.name] = pred
    n0 = f.n - f.n1
    cf = np.zeros(n0)
    binary_names = list(probs)
    for combo in itertools.product((0.0, 1.0), repeat=len(binary_names)):
        weight = np.ones(n0)
        overrides = {R: 1.0}
        overrides.update(means)
        for name, value in zip(binary_names, combo):
            p = probs[name]
            weight = weight * (p if value == 1.0 else 1.0 - p)
            overrides[name] = value
        cf += weight * _predict(b, f.X(out_terms, rows, overrides), out_kind)
    e_cf = f.intercept(_scatter(cf, rows, f.n), rows)
    e1 = f.intercept(f.y, f.g1)
    e0 = f.intercept(f.y, f.g0)
    details = {"E[Y|R=1,c]": e1, "E[Y|R=0,c]": e0, "E[Y(G)|R=1,c]": e_cf}
    return DecompositionEstimate(e1 - e0, e1 - e_cf, e_cf - e0, EstimatorId.MULTI_IMPUTATION,
                                 f.ref, details=details)


ESTIMATORS = {
    EstimatorId.DIFF_IN_COEFFS: estimate_diff_in_coeffs,
    EstimatorId.PRODUCT_OF_COEFFS: estimate_product_of_coeffs,
    EstimatorId.RMPW: estimate_rmpw,
    EstimatorId.SINGLE_IMPUTATION: estimate_single_imputation,
    EstimatorId.MULTI_IMPUTATION: estimate_multi_imputation,
}


def estimate(estimator, data: Dataset, spec: RoleSpec, ref: ReferencePoint | None = None,
             plan: ModelPlan | None = None, **kwargs) -> DecompositionEstimate:
    """Dispatch to the estimator named by ``estimator`` (id, name or number 1-5)."""
    return ESTIMATORS[EstimatorId.parse(estimator)](data, spec, ref, plan, **kwargs)
