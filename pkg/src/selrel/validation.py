"""Desk-scale validation of the relevance score against fine-tuning outcomes.

A Gaussian-cluster multiclass task with controllable cluster redundancy is
fit by a linear softmax classifier; per-example gradients are exact, so
one-step fine-tuning experiments are cheap. Prediction support compares the
log-likelihood of the model's own output after fine-tuning on a selection
versus a size-matched random set; prediction shift compares the induced
Jensen-Shannon divergences.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from ._checks import check_distribution
from ._rng import derive_seed
from .errors import TrainingError, UndefinedCorrelationError


@dataclass(frozen=True)
class ToyTask:
    """Sampling plan for the redundant-cluster classification task.

    Each class owns ``redundancy`` clusters; cluster centers are drawn with
    scale ``cluster_scale`` (or taken from ``means``), and examples scatter
    around their center with ``noise_scale`` (test points may use their own
    ``test_noise_scale``). Higher redundancy yields groups of near-duplicate
    training examples.
    """

    n_train: int
    n_test: int
    feature_dim: int
    n_classes: int
    redundancy: int = 1
    cluster_scale: float = 3.0
    noise_scale: float = 0.5
    test_noise_scale: float | None = None
    means: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be at least 2")
        if self.redundancy < 1:
            raise ValueError("redundancy must be at least 1")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be positive")


@dataclass(eq=False)
class ToyDataset:
    task: ToyTask
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    train_ids: list[str]
    test_ids: list[str]
    train_cluster: np.ndarray
    test_cluster: np.ndarray


@dataclass(eq=False)
class ToyModel:
    """Linear softmax classifier: weights are n_classes x (feature_dim + 1)."""

    weights: np.ndarray
    epochs: int
    lr: float
    loss_trace: list[float] = field(default_factory=list)

    def _augment(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.hstack([X, np.ones((X.shape[0], 1))])

    def logits(self, X) -> np.ndarray:
        return self._augment(X) @ self.weights.T

    def predict_log_proba(self, X) -> np.ndarray:
        z = self.logits(X)
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(self.predict_log_proba(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)


def make_toy_task(task: ToyTask) -> ToyDataset:
    """Draw the clustered dataset deterministically from the task seed."""
    rng = np.random.default_rng(task.seed)
    n_clusters = task.n_classes * task.redundancy
    if task.means is not None:
        means = np.asarray(task.means, dtype=np.float64)
        if means.shape != (n_clusters, task.feature_dim):
            raise ValueError(
                f"means must be {n_clusters}x{task.feature_dim}, got {means.shape}"
            )
    else:
        means = rng.normal(0.0, task.cluster_scale, size=(n_clusters, task.feature_dim))
    train_cluster = np.arange(task.n_train) % n_clusters
    test_cluster = np.arange(task.n_test) % n_clusters
    test_noise = (
        task.noise_scale if task.test_noise_scale is None else task.test_noise_scale
    )
    train_x = means[train_cluster] + task.noise_scale * rng.normal(
        size=(task.n_train, task.feature_dim)
    )
    test_x = means[test_cluster] + test_noise * rng.normal(
        size=(task.n_test, task.feature_dim)
    )
    return ToyDataset(
        task=task,
        train_x=train_x,
        train_y=train_cluster % task.n_classes,
        test_x=test_x,
        test_y=test_cluster % task.n_classes,
        train_ids=[f"tr{i:05d}" for i in range(task.n_train)],
        test_ids=[f"te{j:04d}" for j in range(task.n_test)],
        train_cluster=train_cluster,
        test_cluster=test_cluster,
    )


def _mean_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    z = Xa @ weights.T
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(X.shape[0]), y] -= 1.0
    return p.T @ Xa / X.shape[0]


def _mean_loss(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    z = Xa @ weights.T
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(X.shape[0]), y].mean())


def train_toy_model(dataset: ToyDataset, epochs: int, lr: float) -> ToyModel:
    """Full-batch gradient descent on mean cross-entropy from zero weights.

    The training loss decreases strictly for learning rates up to about 1.0
    on tasks with unit-scale features; divergence (non-finite loss) raises
    TrainingError. Deterministic given the dataset.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    X, y = dataset.train_x, dataset.train_y
    W = np.zeros((dataset.task.n_classes, dataset.task.feature_dim + 1))
    trace = [_mean_loss(W, X, y)]
    for _ in range(epochs):
        W = W - lr * _mean_gradient(W, X, y)
        loss = _mean_loss(W, X, y)
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged (loss {loss}) at lr {lr}")
        trace.append(loss)
    return ToyModel(weights=W, epochs=epochs, lr=lr, loss_trace=trace)


def per_example_gradient(model: ToyModel, example) -> np.ndarray:
    """Flattened cross-entropy gradient (p - onehot(y)) outer [x, 1]."""
    x, y = example
    x = np.asarray(x, dtype=np.float64)
    xa = np.concatenate([x, [1.0]])
    p = model.predict_proba(x[None, :])[0]
    p = p.copy()
    p[int(y)] -= 1.0
    return np.outer(p, xa).ravel()


def finetune_one_step(model: ToyModel, examples, lr: float) -> ToyModel:
    """One mean-gradient step on the batch; the input model is unmodified."""
    X, y = examples
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=int).ravel()
    if X.shape[0] == 0:
        raise ValueError("fine-tuning batch is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} examples but {y.shape[0]} labels")
    W = model.weights - lr * _mean_gradient(model.weights, X, y)
    return replace(model, weights=W, loss_trace=list(model.loss_trace))


def prediction_support(model: ToyModel, x, y_hat: int, S, R, lr: float) -> float:
    """Log-likelihood gain of the model's own output: fine-tune on S vs R.

    Both one-step fine-tunes start from the same weights; |R| must equal |S|
    and y_hat must be the model's argmax prediction for x.
    """
    XS, yS = S
    XR, yR = R
    if np.atleast_2d(XS).shape[0] != np.atleast_2d(XR).shape[0]:
        raise ValueError("S and R must have the same size")
    x = np.asarray(x, dtype=np.float64)
    predicted = int(model.predict(x[None, :])[0])
    if int(y_hat) != predicted:
        raise ValueError(
            f"y_hat {y_hat} is not the model's prediction {predicted} for x"
        )
    m_s = finetune_one_step(model, S, lr)
    m_r = finetune_one_step(model, R, lr)
    log_s = m_s.predict_log_proba(x[None, :])[0, predicted]
    log_r = m_r.predict_log_proba(x[None, :])[0, predicted]
    return float(log_s - log_r)


def prediction_shift(model: ToyModel, x, S, R, lr: float) -> float:
    """Ratio of JSDs induced by fine-tuning on S versus on R.

    Exactly 1 when S and R produce identical updates; the denominator is
    floored at 1e-15 when the random batch yields a null update.
    """
    XS, _ = S
    XR, _ = R
    if np.atleast_2d(XS).shape[0] != np.atleast_2d(XR).shape[0]:
        raise ValueError("S and R must have the same size")
    x = np.asarray(x, dtype=np.float64)
    p0 = model.predict_proba(x[None, :])[0]
    p_s = finetune_one_step(model, S, lr).predict_proba(x[None, :])[0]
    p_r = finetune_one_step(model, R, lr).predict_proba(x[None, :])[0]
    num = jsd(p0, p_s)
    den = jsd(p0, p_r)
    if num == den:
        return 1.0
    return num / max(den, 1e-15)


def jsd(p, q) -> float:
    """Jensen-Shannon divergence with base-2 logs; symmetric, in [0, 1]."""
    p = check_distribution("p", p)
    q = check_distribution("q", q)
    if p.shape != q.shape:
        raise ValueError("p and q must share a support")
    m = (p + q) / 2.0
    def kl(a):
        mask = a > 0
        return float((a[mask] * np.log2(a[mask] / m[mask])).sum())
    return max(0.0, (kl(p) + kl(q)) / 2.0)


def spearman(a, b) -> float:
    """Pearson correlation of average ranks; constant input is an error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError("inputs must be equal-length vectors")
    if a.shape[0] < 2:
        raise ValueError("need at least two observations")
    ra = rankdata(a)
    rb = rankdata(b)
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise UndefinedCorrelationError("rank correlation undefined for constant input")
    return float(np.corrcoef(ra, rb)[0, 1])


@dataclass(frozen=True)
class ValidationRecord:
    """Fine-tuning outcomes paired with the relevance score for one selection."""

    test_id: str
    estimator: str
    strategy: str
    k: int
    xi_sr_db: float
    xi_plus: float
    xi_jsd: float
    replicate_seed_base: int

    def __post_init__(self):
        if self.xi_jsd < 0:
            raise ValueError("xi_jsd must be non-negative")


def rule_based_estimate(xi_sr_db: float) -> int:
    """Predict fine-tuning success purely from the relevance score sign."""
    return 1 if xi_sr_db > 0.0 else 0


def accuracy_by_bins(records, bin_edges) -> list[dict]:
    """Accuracy of the 0 dB rule against sign(xi_plus), per dB bin.

    Bins are [e_i, e_{i+1}) with the last bin closed on the right; records
    outside the edges are ignored and empty bins are omitted from the table.
    """
    edges = [float(e) for e in bin_edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin_edges must be strictly increasing with >= 2 entries")
    table = []
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        last = i == len(edges) - 2
        hits = 0
        count = 0
        for rec in records:
            db = rec.xi_sr_db
            if (lo <= db < hi) or (last and db == hi):
                count += 1
                hits += rule_based_estimate(db) == (1 if rec.xi_plus > 0 else 0)
        if count:
            table.append({"lo": lo, "hi": hi, "count": count, "accuracy": hits / count})
    return table


def sanity_self_finetune(
    dataset: ToyDataset, model: ToyModel, n_trials: int, lr: float
) -> tuple[float, float]:
    """Fine-tune on the test instance itself versus one random example.

    Trial i uses test instance i modulo n_test with S = {(x, model's own
    prediction)} and a per-trial random singleton R. Returns the fractions of
    trials with xi_plus > 0 and with JSD(S) > JSD(R); ties count as failures.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    wins_support = 0
    wins_shift = 0
    for trial in range(n_trials):
        idx = trial % dataset.test_x.shape[0]
        x = dataset.test_x[idx]
        y_hat = int(model.predict(x[None, :])[0])
        S = (x[None, :], np.array([y_hat]))
        rng = np.random.default_rng(derive_seed(dataset.task.seed, "sanity", trial))
        j = int(rng.integers(dataset.train_x.shape[0]))
        R = (dataset.train_x[j][None, :], dataset.train_y[j : j + 1])
        if prediction_support(model, x, y_hat, S, R, lr) > 0:
            wins_support += 1
        if prediction_shift(model, x, S, R, lr) > 1.0:
            wins_shift += 1
    return wins_support / n_trials, wins_shift / n_trials
