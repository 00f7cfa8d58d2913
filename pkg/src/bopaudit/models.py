"""Small trainable models with analytic input gradients.

Every model maps an input row (``X`` for a generic model, ``[X, S]`` for a
personalized one) to a real score: a regression value or a class-1
probability. ``gradient`` returns the derivative of that score with respect
to the input, which is what the attribution code integrates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import AuditDataset, AuditError, ArityError, Task

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.5
    epochs: int = 1000
    hidden: int = 8
    l2: float = 0.0
    seed: int = 0
    max_halvings: int = 40

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.hidden < 1:
            raise ValueError("hidden width must be at least 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class PredictiveModel:
    arity: int
    personalized: bool
    task: Task
    baseline: np.ndarray = field(default=None, repr=False)

    kind = "abstract"

    def __post_init__(self):
        self.task = Task(self.task)
        if self.baseline is None:
            self.baseline = np.zeros(self.arity)
        self.baseline = np.asarray(self.baseline, dtype=np.float64)

    def _check(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.arity:
            raise ArityError(f"model expects {self.arity} inputs, got {X.shape[1]}")
        return X, single

    def predict(self, X) -> np.ndarray:
        X, single = self._check(X)
        out = self._predict(X)
        return out[0] if single else out

    def gradient(self, X) -> np.ndarray:
        X, single = self._check(X)
        g = self._gradient(X)
        return g[0] if single else g

    def _predict(self, X):
        raise NotImplementedError

    def _gradient(self, X):
        raise NotImplementedError(f"{self.kind} has no input gradient")

    def _params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "arity": self.arity,
            "personalized": self.personalized,
            "task": self.task.value,
            "baseline": self.baseline.tolist(),
        }
        for key, val in self._params().items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


@dataclass
class LinearRegressionModel(PredictiveModel):
    """``y = y_mean + y_std * (x @ weights + bias)``; the target scaling is kept from training."""

    weights: np.ndarray = None
    bias: float = 0.0
    y_mean: float = 0.0
    y_std: float = 1.0

    kind = "linear_regression"

    def __post_init__(self):
        super().__post_init__()
        self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def coef(self) -> np.ndarray:
        return self.y_std * self.weights

    @property
    def intercept(self) -> float:
        return self.y_mean + self.y_std * self.bias

    def _predict(self, X):
        return self.y_mean + self.y_std * (X @ self.weights + self.bias)

    def _gradient(self, X):
        return np.broadcast_to(self.coef, X.shape).copy()

    def _params(self):
        return {"weights": self.weights, "bias": self.bias, "y_mean": self.y_mean, "y_std": self.y_std}


@dataclass
class LogisticModel(PredictiveModel):
    weights: np.ndarray = None
    bias: float = 0.0

    kind = "logistic_regression"

    def __post_init__(self):
        super().__post_init__()
        self.weights = np.asarray(self.weights, dtype=np.float64)

    def _predict(self, X):
        return expit(X @ self.weights + self.bias)

    def _gradient(self, X):
        p = self._predict(X)
        return (p * (1.0 - p))[:, None] * self.weights[None, :]

    def _params(self):
        return {"weights": self.weights, "bias": self.bias}


@dataclass
class MLPModel(PredictiveModel):
    """One tanh hidden layer; sigmoid output for classification, affine for regression."""

    W1: np.ndarray = None
    b1: np.ndarray = None
    w2: np.ndarray = None
    b2: float = 0.0
    y_mean: float = 0.0
    y_std: float = 1.0

    kind = "mlp1"

    def __post_init__(self):
        super().__post_init__()
        self.W1 = np.asarray(self.W1, dtype=np.float64).reshape(self.arity, -1)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)

    def _raw(self, X):
        H = np.tanh(X @ self.W1 + self.b1)
        return H, H @ self.w2 + self.b2

    def _predict(self, X):
        _, z = self._raw(X)
        if self.task is Task.CLASSIFICATION:
            return expit(z)
        return self.y_mean + self.y_std * z

    def _gradient(self, X):
        H, z = self._raw(X)
        dz = ((1.0 - H ** 2) * self.w2) @ self.W1.T
        if self.task is Task.CLASSIFICATION:
            p = expit(z)
            return (p * (1.0 - p))[:, None] * dz
        return self.y_std * dz

    def _params(self):
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "y_mean": self.y_mean, "y_std": self.y_std}


@dataclass
class IndicatorModel(PredictiveModel):
    """Hard classifier ``1(x @ weights > 0)`` with a fixed feature ranking.

    Not differentiable, so attributions come from ``importance`` instead of
    integrated gradients.
    """

    weights: np.ndarray = None
    importance: np.ndarray = None

    kind = "indicator"

    def __post_init__(self):
        super().__post_init__()
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.importance = np.asarray(self.importance, dtype=np.float64)

    def _predict(self, X):
        return (X @ self.weights > 0).astype(np.float64)

    def _params(self):
        return {"weights": self.weights, "importance": self.importance}


_KINDS = {cls.kind: cls for cls in (LinearRegressionModel, LogisticModel, MLPModel, IndicatorModel)}


def model_from_dict(data: dict) -> PredictiveModel:
    data = dict(data)
    try:
        cls = _KINDS[data.pop("kind")]
    except KeyError as exc:
        raise AuditError(f"unknown model kind {exc}") from None
    return cls(**data)


def predict(model: PredictiveModel, x) -> np.ndarray:
    return model.predict(x)


def gradient(model: PredictiveModel, x) -> np.ndarray:
    return model.gradient(x)


# ---------------------------------------------------------------------------
# training


def _standardize_target(y):
    mean = float(np.mean(y))
    std = float(np.std(y))
    if std == 0:
        std = 1.0
    return (y - mean) / std, mean, std


def _default_baseline(train: AuditDataset, personalized: bool) -> np.ndarray:
    base = train.features.mean(axis=0)
    if personalized:
        base = np.concatenate([base, np.zeros(train.k)])
    return base


def fit_linear_regression(train: AuditDataset, personalized: bool, l2: float = 0.0) -> LinearRegressionModel:
    """Least squares (ridge when ``l2 > 0``) on standardized targets; the intercept is not penalized."""
    if train.task is not Task.REGRESSION:
        raise AuditError("linear regression needs a regression dataset")
    X = train.inputs(personalized)
    y, y_mean, y_std = _standardize_target(train.labels)
    A = np.hstack([X, np.ones((len(X), 1))])
    if l2 == 0:
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise AuditError("design matrix is rank deficient; set l2 > 0")
        theta, *_ = np.linalg.lstsq(A, y, rcond=None)
    else:
        penalty = l2 * len(X) * np.eye(A.shape[1])
        penalty[-1, -1] = 0.0
        theta = np.linalg.solve(A.T @ A + penalty, A.T @ y)
    return LinearRegressionModel(
        arity=X.shape[1], personalized=personalized, task=Task.REGRESSION,
        baseline=_default_baseline(train, personalized),
        weights=theta[:-1], bias=float(theta[-1]), y_mean=y_mean, y_std=y_std,
    )


def _descend(params: list[np.ndarray], loss_and_grad, cfg: TrainConfig) -> list[np.ndarray]:
    """Full-batch gradient descent; the step is halved whenever the loss would go up."""
    lr = cfg.lr
    loss, grads = loss_and_grad(params)
    if not np.isfinite(loss):
        raise TrainingError("initial loss is not finite")
    for epoch in range(cfg.epochs):
        for _ in range(cfg.max_halvings + 1):
            cand = [p - lr * g for p, g in zip(params, grads)]
            # overflow in a trial step only means the step is too long
            with np.errstate(over="ignore", invalid="ignore"):
                new_loss, new_grads = loss_and_grad(cand)
            if np.isfinite(new_loss) and new_loss <= loss:
                break
            lr *= 0.5
        else:
            if not np.isfinite(new_loss):
                raise TrainingError(f"loss diverged at epoch {epoch} after {cfg.max_halvings} step halvings")
            # no decreasing step exists at machine precision: already at the minimum
            log.debug("stopping at epoch %d, loss %.6g", epoch, loss)
            break
        params, loss, grads = cand, new_loss, new_grads
    return params


def _xent(z, y):
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def fit_logistic(train: AuditDataset, personalized: bool, cfg: TrainConfig = TrainConfig()) -> LogisticModel:
    if train.task is not Task.CLASSIFICATION:
        raise AuditError("logistic regression needs binary labels")
    X = train.inputs(personalized)
    y = train.labels
    n = len(X)

    def loss_and_grad(params):
        w, b = params
        z = X @ w + b[0]
        r = expit(z) - y
        loss = _xent(z, y) + 0.5 * cfg.l2 * float(w @ w)
        return loss, [X.T @ r / n + cfg.l2 * w, np.array([r.mean()])]

    w, b = _descend([np.zeros(X.shape[1]), np.zeros(1)], loss_and_grad, cfg)
    return LogisticModel(
        arity=X.shape[1], personalized=personalized, task=Task.CLASSIFICATION,
        baseline=_default_baseline(train, personalized), weights=w, bias=float(b[0]),
    )


def init_mlp(arity: int, cfg: TrainConfig) -> list[np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    W1 = rng.normal(0.0, 1.0 / np.sqrt(arity), size=(arity, cfg.hidden))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(cfg.hidden), size=cfg.hidden)
    return [W1, np.zeros(cfg.hidden), w2, np.zeros(1)]


def fit_mlp(train: AuditDataset, personalized: bool, cfg: TrainConfig = TrainConfig()) -> MLPModel:
    X = train.inputs(personalized)
    n = len(X)
    classification = train.task is Task.CLASSIFICATION
    if classification:
        y, y_mean, y_std = train.labels, 0.0, 1.0
    else:
        y, y_mean, y_std = _standardize_target(train.labels)

    def loss_and_grad(params):
        W1, b1, w2, b2 = params
        H = np.tanh(X @ W1 + b1)
        z = H @ w2 + b2[0]
        if classification:
            loss = _xent(z, y)
            dz = (expit(z) - y) / n
        else:
            loss = float(np.mean((z - y) ** 2))
            dz = 2.0 * (z - y) / n
        loss += 0.5 * cfg.l2 * (float(np.sum(W1 ** 2)) + float(w2 @ w2))
        dpre = np.outer(dz, w2) * (1.0 - H ** 2)
        grads = [X.T @ dpre + cfg.l2 * W1, dpre.sum(axis=0), H.T @ dz + cfg.l2 * w2, np.array([dz.sum()])]
        return loss, grads

    W1, b1, w2, b2 = _descend(init_mlp(X.shape[1], cfg), loss_and_grad, cfg)
    return MLPModel(
        arity=X.shape[1], personalized=personalized, task=train.task,
        baseline=_default_baseline(train, personalized),
        W1=W1, b1=b1, w2=w2, b2=float(b2[0]), y_mean=y_mean, y_std=y_std,
    )


def fit_model(kind: str, train: AuditDataset, personalized: bool, cfg: TrainConfig = TrainConfig()) -> PredictiveModel:
    if kind == LinearRegressionModel.kind or kind == "linear":
        return fit_linear_regression(train, personalized, cfg.l2)
    if kind == LogisticModel.kind or kind == "logistic":
        return fit_logistic(train, personalized, cfg)
    if kind == MLPModel.kind or kind == "mlp":
        return fit_mlp(train, personalized, cfg)
    raise AuditError(f"unknown model kind {kind!r}")
