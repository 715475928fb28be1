"""
Weighted least squares and logistic regression.

Both fitters work on a dense design matrix with an intercept column first.
Linear fits solve the normal equations through a Cholesky factorisation of
the equilibrated cross-product matrix; a pivot below ``1e-10`` of the largest
diagonal entry is reported as a singular design. Logistic fits use
iteratively reweighted least squares (Newton's method) started at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs
from scipy.special import expit

from .dataset import Dataset

LINEAR = "linear"
LOGISTIC = "logistic"
INTERCEPT = "(Intercept)"

PIVOT_TOL = 1e-10
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
SEPARATION_BOUND = 15.0
WEIGHT_CLAMP = 1e-12

Term = Union[str, tuple]


class EstimationError(RuntimeError):
    """Base class for numerical failures while fitting or estimating."""


class SingularDesignError(EstimationError):
    def __init__(self, message, terms=()):
        super().__init__(message)
        self.terms = tuple(terms)


class SeparationError(EstimationError):
    """Coefficients diverge: the classes are (quasi-)completely separated."""


class ConvergenceError(EstimationError):
    def __init__(self, message, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


def term_label(term: Term) -> str:
    if isinstance(term, str):
        return term
    return ":".join(term)


def term_parts(term: Term) -> tuple[str, ...]:
    if isinstance(term, str):
        return tuple(term.split(":")) if ":" in term else (term,)
    return tuple(term)


@dataclass(frozen=True)
class ModelFormula:
    """Response plus an ordered list of main effects and pairwise interactions.

    Interactions are written as ``("R", "M")`` or ``"R:M"``. The intercept is
    always included.
    """

    response: str
    terms: tuple = ()
    include_intercept: bool = True

    def __post_init__(self):
        terms = tuple(term_parts(t) if not isinstance(t, str) or ":" in t else t
                      for t in self.terms)
        labels = [term_label(t) for t in terms]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate terms in formula: {labels}")
        if not self.include_intercept:
            raise ValueError("formulas always carry an intercept")
        object.__setattr__(self, "terms", terms)

    @property
    def labels(self) -> list[str]:
        return [INTERCEPT] + [term_label(t) for t in self.terms]


@dataclass(frozen=True, eq=False)
class FittedModel:
    family: str
    labels: tuple[str, ...]
    coef: np.ndarray
    residual_variance: float = float("nan")
    converged: bool = True
    n_used: int = 0
    n_iter: int = 0
    formula: ModelFormula | None = field(default=None, repr=False)

    @property
    def coefficients(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.labels, self.coef)}

    def __getitem__(self, label: str) -> float:
        return float(self.coef[self.labels.index(label)])

    def linear_predictor(self, row: Mapping[str, float]) -> float:
        total = 0.0
        for label, b in zip(self.labels, self.coef):
            if label == INTERCEPT:
                total += b
                continue
            value = 1.0
            for part in label.split(":"):
                if part not in row:
                    raise ValueError(f"row lacks a value for {part!r} (term {label!r})")
                value *= float(row[part])
            total += b * value
        return total


def design_matrix(columns: Mapping[str, np.ndarray], terms: Sequence[Term], n: int,
                  overrides: Mapping[str, object] | None = None) -> np.ndarray:
    """Stack an intercept and the requested terms into an ``n x (k+1)`` matrix.

    ``overrides`` replaces columns by other arrays or scalars, which is how
    counterfactual predictions (``R`` forced to 0 or 1, imputed mediators)
    are formed without copying the dataset.
    """
    X = np.empty((n, len(terms) + 1))
    X[:, 0] = 1.0
    for j, term in enumerate(terms, start=1):
        parts = (term,) if isinstance(term, str) else term
        col = None
        for p in parts:
            if overrides is not None and p in overrides:
                v = overrides[p]
            else:
                v = columns[p]
            col = v if col is None else col * v
        X[:, j] = col
    return X


def _cholesky_solve(A: np.ndarray, b: np.ndarray, labels=None) -> np.ndarray:
    d = A.diagonal()
    zero = d <= 0
    if zero.any():
        bad = [labels[i] for i in np.flatnonzero(zero)] if labels else list(np.flatnonzero(zero))
        raise SingularDesignError(f"singular design: zero columns {bad}", bad)
    s = 1.0 / np.sqrt(d)
    As = A * s[:, None] * s[None, :]
    L, info = dpotrf(As, lower=1, clean=0)
    piv = L.diagonal() ** 2
    if info != 0 or piv.min() < PIVOT_TOL:
        k = info - 1 if info > 0 else int(np.argmin(piv))
        bad = [labels[k]] if labels else [k]
        raise SingularDesignError(
            f"singular design: term {bad[0]!r} is collinear with earlier terms", bad)
    x, _ = dpotrs(L, b * s, lower=1)
    return x * s


def wls(X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None, labels=None) -> np.ndarray:
    """Coefficients minimising ``sum w (y - X b)^2``."""
    if w is None:
        A = X.T @ X
        b = X.T @ y
    else:
        Xw = X * w[:, None]
        A = Xw.T @ X
        b = Xw.T @ y
    return _cholesky_solve(A, b, labels)


def irls(X: np.ndarray, y: np.ndarray, labels=None, tol: float = IRLS_TOL,
         max_iter: int = IRLS_MAX_ITER, bound: float = SEPARATION_BOUND):
    """Logistic maximum likelihood by Newton-Raphson. Returns ``(coef, n_iter)``."""
    beta = np.zeros(X.shape[1])
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        w = np.clip(p * (1.0 - p), WEIGHT_CLAMP, None)
        A = (X * w[:, None]).T @ X
        step = _cholesky_solve(A, X.T @ (y - p), labels)
        beta = beta + step
        if np.abs(beta).max() > bound:
            raise SeparationError(
                f"coefficient magnitude exceeded {bound:g}: complete or quasi-complete separation")
        if np.abs(step).max() < tol:
            return beta, it
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", beta)


def _response(data: Dataset, formula: ModelFormula) -> np.ndarray:
    return np.asarray(data[formula.response], dtype=float)


def fit_linear(data: Dataset, formula: ModelFormula, weights=None) -> FittedModel:
    """Ordinary or weighted least squares fit of ``formula`` on ``data``."""
    X = design_matrix(data.columns, formula.terms, data.n_rows)
    y = _response(data, formula)
    labels = formula.labels
    w = None
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (data.n_rows,):
            raise ValueError(f"weights must have length {data.n_rows}")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not np.any(w > 0):
            raise ValueError("weights are all zero")
    coef = wls(X, y, w, labels)
    resid = y - X @ coef
    if w is None:
        n_used = data.n_rows
        rss = float(resid @ resid)
    else:
        n_used = int(np.count_nonzero(w))
        rss = float((w * resid) @ resid)
    dof = n_used - X.shape[1]
    sigma2 = rss / dof if dof > 0 else 0.0
    return FittedModel(LINEAR, tuple(labels), coef, sigma2, True, n_used, 1, formula)


def fit_logistic(data: Dataset, formula: ModelFormula, tol: float = IRLS_TOL,
                 max_iter: int = IRLS_MAX_ITER, bound: float = SEPARATION_BOUND) -> FittedModel:
    """Bernoulli-logit maximum likelihood fit via IRLS.

    Raises :class:`SeparationError` when any coefficient leaves
    ``[-bound, bound]`` and :class:`ConvergenceError` (carrying the last
    iterate) after ``max_iter`` iterations.
    """
    y = _response(data, formula)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"response {formula.response!r} must be coded 0/1")
    if y.min() == y.max():
        raise SeparationError(f"response {formula.response!r} has a single class")
    X = design_matrix(data.columns, formula.terms, data.n_rows)
    coef, it = irls(X, y, formula.labels, tol, max_iter, bound)
    return FittedModel(LOGISTIC, tuple(formula.labels), coef, float("nan"), True,
                       data.n_rows, it, formula)


_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def predict_mean(model: FittedModel, row: Mapping[str, float]) -> float:
    """Linear-model prediction ``b0 + sum b_k x_k`` with interactions as products."""
    if model.family != LINEAR:
        raise ValueError("predict_mean needs a linear model; use predict_prob")
    return model.linear_predictor(row)


def predict_prob(model: FittedModel, row: Mapping[str, float]) -> float:
    """Logistic-model probability, kept strictly inside (0, 1)."""
    if model.family != LOGISTIC:
        raise ValueError("predict_prob needs a logistic model")
    p = float(expit(model.linear_predictor(row)))
    return min(max(p, _P_LO), _P_HI)
