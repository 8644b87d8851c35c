"""Logistic regression by Newton's method, plus the evaluation metrics.

The optimizer minimizes the sum-form loss sum_i log(1 + exp(-y_i x_i'theta))
(optionally plus ridge/2 * ||theta||^2) with full Newton steps, a Cholesky
solve, and step halving. Labels are in {-1, +1} throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy import linalg
from scipy.special import rel_entr
from scipy.stats import rankdata

from . import errors
from ._io import atomic_write_text

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import Dataset

# Probabilities are clipped to [PROB_CLIP, 1 - PROB_CLIP] inside log_loss and
# the KL metrics so separable refits cannot produce infinities.
PROB_CLIP = 1e-12
# Unregularized fits whose parameter norm passes this are declared separable.
DIVERGENCE_GUARD = 1e6
MAX_HALVINGS = 30

Predictor = Callable[[np.ndarray], np.ndarray]


def sigmoid(z):
    """Stable logistic function 1 / (1 + exp(-z)).

    exp is only ever evaluated at non-positive arguments, so there is no
    overflow anywhere in the float range. NaN input propagates to NaN.
    """
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class LogisticModel:
    """Parameter vector of a logistic model.

    If includes_intercept is true, the last entry of theta multiplies an
    implicit constant-1 feature appended after the data columns.
    """

    theta: np.ndarray
    includes_intercept: bool = False

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size == 0:
            raise errors.DimensionMismatch("theta must be a non-empty 1-D vector")
        if not np.all(np.isfinite(theta)):
            raise ValueError("model parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n_features(self) -> int:
        """Number of data columns the model expects (intercept excluded)."""
        return self.theta.size - (1 if self.includes_intercept else 0)


@dataclass(frozen=True)
class FitOptions:
    ridge: float = 0.0
    max_iters: int = 100
    grad_tol: float = 1e-8
    include_intercept: bool = True

    def __post_init__(self):
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")


def design_matrix(features, include_intercept: bool) -> np.ndarray:
    """Feature matrix with the constant-1 column appended when requested."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise errors.DimensionMismatch(f"features must be 2-D, got shape {X.shape}")
    if include_intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return X


def penalized_loss(theta, X, y, ridge: float) -> float:
    """Sum-form logistic loss plus ridge/2 * ||theta||^2, evaluated stably."""
    theta = np.asarray(theta, dtype=float)
    z = X @ theta
    return float(np.logaddexp(0.0, -y * z).sum() + 0.5 * ridge * theta @ theta)


def loss_gradient(theta, X, y, ridge: float) -> np.ndarray:
    p = sigmoid(X @ np.asarray(theta, dtype=float))
    y01 = (np.asarray(y, dtype=float) + 1.0) / 2.0
    return X.T @ (p - y01) + ridge * np.asarray(theta, dtype=float)


def loss_hessian(theta, X, ridge: float) -> np.ndarray:
    p = sigmoid(X @ np.asarray(theta, dtype=float))
    w = p * (1.0 - p)
    H = X.T @ (X * w[:, None])
    if ridge:
        H = H + ridge * np.eye(X.shape[1])
    return H


def fit_logistic(data: "Dataset", opts: FitOptions = FitOptions(), *,
                 theta0=None, return_trace: bool = False):
    """Fit a logistic model by Newton iteration with step halving.

    Stops once the infinity norm of the penalized gradient is at or below
    opts.grad_tol. With ridge 0 the features must be full rank and the data
    must not be linearly separable, otherwise no finite unique optimum exists;
    rank deficiency raises SingularHessian and separability raises
    FitDiverged. When return_trace is true the per-iteration penalized loss
    values are returned alongside the model (the sequence never increases).
    """
    X = design_matrix(data.features, opts.include_intercept)
    y = np.asarray(data.labels, dtype=float)
    n, d = X.shape
    if opts.ridge == 0.0 and np.linalg.matrix_rank(X) < d:
        raise errors.SingularHessian(
            f"feature matrix has rank below {d} and no ridge is applied")

    if theta0 is None:
        theta = np.zeros(d)
    else:
        theta = np.array(theta0, dtype=float)
        if theta.shape != (d,):
            raise errors.DimensionMismatch(
                f"warm start has shape {theta.shape}, expected ({d},)")

    loss = penalized_loss(theta, X, y, opts.ridge)
    trace = [loss]
    converged = False
    for _ in range(opts.max_iters):
        if opts.ridge == 0.0 and np.linalg.norm(theta) > DIVERGENCE_GUARD:
            raise errors.FitDiverged(
                f"parameter norm exceeded {DIVERGENCE_GUARD:g}; data looks separable")
        grad = loss_gradient(theta, X, y, opts.ridge)
        if np.max(np.abs(grad)) <= opts.grad_tol:
            converged = True
            break
        H = loss_hessian(theta, X, opts.ridge)
        try:
            factor = linalg.cho_factor(H, check_finite=False)
        except np.linalg.LinAlgError:
            # Rank was verified above, so a non-PD Hessian means the Newton
            # weights collapsed on the way to an infinite optimum.
            raise errors.FitDiverged("Newton system collapsed; data looks separable")
        step = linalg.cho_solve(factor, -grad, check_finite=False)
        # grad' H^-1 grad / 2 is the decrease the full step achieves up to
        # higher-order terms. Once it sinks below the float resolution of the
        # loss value, a loss-based line search only sees rounding noise; take
        # the pure Newton step there (quadratic-convergence phase, true loss
        # drops by under one ulp) and keep the bookkeeping monotone.
        predicted = -0.5 * float(grad @ step)
        floor = 16.0 * np.finfo(float).eps * max(1.0, abs(loss))
        if predicted <= floor:
            theta = theta + step
            loss = min(penalized_loss(theta, X, y, opts.ridge), loss)
            trace.append(loss)
            continue
        scale = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            candidate = theta + scale * step
            if np.all(candidate == theta):
                break  # halved below float resolution: no progress this way
            candidate_loss = penalized_loss(candidate, X, y, opts.ridge)
            if candidate_loss <= loss:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break  # observable decrease expected but not found: stop and re-check
        theta, loss = candidate, candidate_loss
        trace.append(loss)

    if not converged:
        grad = loss_gradient(theta, X, y, opts.ridge)
        if np.max(np.abs(grad)) > opts.grad_tol:
            raise errors.NoConvergence(
                f"gradient norm {np.max(np.abs(grad)):.3e} above tolerance "
                f"{opts.grad_tol:g} after {opts.max_iters} iterations")

    if opts.ridge == 0.0:
        # The gradient can sink below any tolerance by sheer underflow when
        # the data is separable; a fitted direction that classifies every
        # training point strictly correctly proves there is no finite optimum.
        margins = y * (X @ theta)
        if np.any(theta) and np.min(margins) > 0:
            raise errors.FitDiverged(
                "fitted direction separates the training data; no finite optimum")

    model = LogisticModel(theta, opts.include_intercept)
    if return_trace:
        return model, trace
    return model


def predict_proba(model: LogisticModel, x):
    """Predicted probability of the +1 label, for one point or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = design_matrix(np.atleast_2d(x), model.includes_intercept)
    if X.shape[1] != model.theta.size:
        raise errors.DimensionMismatch(
            f"model has {model.theta.size} parameters but points have "
            f"{X.shape[1]} columns (intercept included)")
    p = sigmoid(X @ model.theta)
    if single:
        return float(p[0])
    return p


# ---------------------------------------------------------------------------
# metrics


def _as_prob_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise errors.LengthMismatch(f"{name} must be 1-D")
    if arr.size and (np.min(arr) < 0 or np.max(arr) > 1 or not np.all(np.isfinite(arr))):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def log_loss(probs, labels) -> float:
    """Mean negative log probability of the observed labels (labels in {-1,+1})."""
    p = _as_prob_array(probs, "probs")
    y = np.asarray(labels)
    if y.shape != p.shape:
        raise errors.LengthMismatch(
            f"probs has length {p.size} but labels has length {y.size}")
    p = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    observed = np.where(y == 1, p, 1.0 - p)
    return float(-np.log(observed).mean())


def auc(probs, labels) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) statistic.

    Equals P(score+ > score-) + 0.5 P(tie) over positive/negative pairs.
    """
    scores = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if y.shape != scores.shape:
        raise errors.LengthMismatch(
            f"probs has length {scores.size} but labels has length {y.size}")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise errors.SingleClass("need at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def bernoulli_kl(true_probs, pred_probs) -> np.ndarray:
    """Per-point KL divergence from true to predicted Bernoulli distributions."""
    p = _as_prob_array(true_probs, "true_probs")
    q = _as_prob_array(pred_probs, "pred_probs")
    if p.shape != q.shape:
        raise errors.LengthMismatch(
            f"true_probs has length {p.size} but pred_probs has length {q.size}")
    q = np.clip(q, PROB_CLIP, 1.0 - PROB_CLIP)
    return rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)


def mean_kl(true_probs, pred_probs) -> float:
    """Mean over points of the per-point Bernoulli KL divergence."""
    return float(bernoulli_kl(true_probs, pred_probs).mean())


# ---------------------------------------------------------------------------
# trainers


class TrainerHandle:
    """A deterministic training procedure usable by the resampling estimators.

    fit maps a Dataset to a predictor (feature matrix -> probabilities).
    Subclasses may additionally support warm starts, which the estimators use
    to start each refit from the base optimum, and ridge-escalation refits for
    resamples that turn out separable.
    """

    name = "trainer"

    def fit(self, data: "Dataset") -> Predictor:
        raise NotImplementedError

    def warm_fit(self, data: "Dataset", state):
        """Fit reusing an opaque warm-start state; returns (predictor, state)."""
        return self.fit(data), state

    def fit_with_extra_ridge(self, data: "Dataset", extra_ridge: float) -> Predictor:
        raise errors.RefitFallbackExhausted(
            f"trainer {self.name!r} has no ridge fallback")


class LogisticTrainer(TrainerHandle):
    """Logistic regression trainer around fit_logistic."""

    def __init__(self, opts: FitOptions = FitOptions()):
        self.opts = opts
        self.name = f"logistic(ridge={opts.ridge:g})"

    def _predictor(self, model: LogisticModel) -> Predictor:
        return lambda X: predict_proba(model, X)

    def fit(self, data: "Dataset") -> Predictor:
        return self._predictor(fit_logistic(data, self.opts))

    def warm_fit(self, data: "Dataset", state):
        model = fit_logistic(data, self.opts, theta0=state)
        return self._predictor(model), np.array(model.theta)

    def fit_with_extra_ridge(self, data: "Dataset", extra_ridge: float) -> Predictor:
        opts = replace(self.opts, ridge=self.opts.ridge + extra_ridge)
        return self._predictor(fit_logistic(data, opts))


class EchoTrainer(TrainerHandle):
    """Predicts the observed training label as a probability.

    The induced resampling variance is exactly p(1-p) per point, which makes
    this a closed-form oracle for the estimators. It can only predict at its
    own training points.
    """

    name = "echo"

    def fit(self, data: "Dataset") -> Predictor:
        labels01 = (np.asarray(data.labels, dtype=float) + 1.0) / 2.0
        train_features = data.features

        def predict(X):
            X = np.asarray(X, dtype=float)
            if X.shape != train_features.shape or not np.array_equal(X, train_features):
                raise errors.DimensionMismatch(
                    "echo trainer can only predict at its training points")
            return labels01.copy()

        return predict


class ConstantTrainer(TrainerHandle):
    """Ignores the labels and predicts a fixed probability everywhere."""

    def __init__(self, value: float = 0.5):
        if not 0.0 <= value <= 1.0:
            raise ValueError("constant prediction must lie in [0, 1]")
        self.value = float(value)
        self.name = f"constant({value:g})"

    def fit(self, data: "Dataset") -> Predictor:
        value = self.value
        return lambda X: np.full(np.atleast_2d(np.asarray(X)).shape[0], value)


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model: LogisticModel, feature_names) -> dict:
    names = list(feature_names)
    if len(names) != model.n_features:
        raise errors.DimensionMismatch(
            f"model expects {model.n_features} features, got {len(names)} names")
    return {
        "theta": [float(v) for v in model.theta],
        "includes_intercept": bool(model.includes_intercept),
        "feature_names": names,
    }


def save_model(path, model: LogisticModel, feature_names) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model, feature_names),
                                       indent=2, sort_keys=True) + "\n")


def load_model(path):
    """Read a model JSON file; returns (model, feature_names)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    model = LogisticModel(np.asarray(payload["theta"], dtype=float),
                          bool(payload["includes_intercept"]))
    return model, list(payload["feature_names"])
