"""Predictors mapping descriptor matrices to loudness curves.

Three model families share one training loop: a linear map, a
single-hidden-layer tanh network, and a bidirectional recurrent
network whose forward and backward hidden chains jointly predict each
time step.  Training is full-piece gradient descent with momentum (or
optionally adaptive per-parameter steps), validation-based early
stopping, and complete-sequence backpropagation through time for the
recurrent model.  The linear model additionally supports an exact
regularized least-squares solve used as an oracle in tests.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .basis import (BasisId, BasisMatrix, BasisStats, column_order_key,
                    compute_stats, is_impulse_feature, standardize)
from .util import fmt17

LOGGER = logging.getLogger(__name__)

MODEL_KINDS = ("lin", "ffnn", "birnn")
MODEL_FORMAT_HEADER = "dynalens-model v1"

_FIT_TOLERANCE = 1e-6


class DivergenceError(Exception):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, learning_rate: float):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(f"training diverged at epoch {epoch} "
                         f"(learning_rate={learning_rate})")


@dataclass
class LinParams:
    w: np.ndarray
    b: np.ndarray  # shape ()

    @property
    def n_inputs(self) -> int:
        return len(self.w)


@dataclass
class FFNNParams:
    W1: np.ndarray  # (H, K)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: np.ndarray  # shape ()

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W1.shape[0]


@dataclass
class RNNCell:
    Win: np.ndarray   # (H, K)
    Wrec: np.ndarray  # (H, H)
    b: np.ndarray     # (H,)


@dataclass
class BiRNNParams:
    fw: RNNCell
    bw: RNNCell
    v_f: np.ndarray  # (H,)
    v_b: np.ndarray  # (H,)
    c: np.ndarray    # shape ()

    @property
    def n_inputs(self) -> int:
        return self.fw.Win.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.fw.Win.shape[0]


@dataclass
class TrainConfig:
    """Hyperparameters shared by training and fine-tuning.

    Batches are whole pieces; the recurrent state always spans a full
    piece.  ``optimizer`` is "momentum" or "adam"; ``clip_norm`` bounds
    the global gradient norm of the recurrent model (None disables).
    ``exact_lin`` switches linear training to the closed-form
    regularized least-squares solution.
    """

    learning_rate: float = 0.02
    max_epochs: int = 300
    patience: int = 20
    l2_penalty: float = 1e-4
    seed: int = 0
    hidden_size: int = 20
    momentum: float = 0.9
    optimizer: str = "momentum"
    clip_norm: float | None = 5.0
    exact_lin: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainingLog:
    """Per-epoch losses; epoch 0 records the untrained state."""

    records: list = field(default_factory=list)  # (epoch, train, val)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def best_validation_loss(self) -> float:
        return min(r[2] for r in self.records)


@dataclass(eq=False)
class Vocabulary:
    """Column set fixed at training time, plus standardization stats.

    Prediction-time matrices are projected onto these columns: missing
    columns are zero-filled and unknown columns dropped with a warning.
    """

    columns: list
    stats: BasisStats

    def __post_init__(self):
        if [c for c in self.columns] != list(self.stats.columns):
            raise ValueError("vocabulary columns and stats columns differ")
        self._index = {c: j for j, c in enumerate(self.columns)}

    def __eq__(self, other):
        return (isinstance(other, Vocabulary)
                and self.columns == other.columns
                and np.array_equal(self.stats.means, other.stats.means)
                and np.array_equal(self.stats.stds, other.stats.stds))

    def project(self, matrix: BasisMatrix) -> np.ndarray:
        """Raw matrix data aligned to the vocabulary columns."""
        unknown = [c for c in matrix.columns if c not in self._index]
        if unknown:
            LOGGER.warning("dropping %d columns unknown to the vocabulary: %s",
                           len(unknown),
                           ", ".join(c.name for c in unknown[:5]))
        out = np.zeros((matrix.n_rows, len(self.columns)))
        for j, column in enumerate(matrix.columns):
            k = self._index.get(column)
            if k is not None:
                out[:, k] = matrix.data[:, j]
        return out

    def transform(self, matrix: BasisMatrix) -> np.ndarray:
        """Projected and standardized data (impulse columns unscaled)."""
        data = self.project(matrix)
        for j, column in enumerate(self.columns):
            if is_impulse_feature(column.feature):
                continue
            data[:, j] = (data[:, j] - self.stats.means[j]) / self.stats.stds[j]
        return data


@dataclass(eq=False)
class TrainedModel:
    """Bundle of parameters, vocabulary and the training setup."""

    kind: str
    params: object
    vocab: Vocabulary
    config: TrainConfig | None = None


# ---------------------------------------------------------------------------
# Forward passes

def _as_data(matrix) -> np.ndarray:
    if isinstance(matrix, BasisMatrix):
        return matrix.data
    return np.asarray(matrix, dtype=float)


def ffnn_forward(params: FFNNParams, X: np.ndarray):
    hidden = np.tanh(X @ params.W1.T + params.b1)
    return hidden, hidden @ params.w2 + float(params.b2)


def birnn_forward(params: BiRNNParams, X: np.ndarray):
    n, h = X.shape[0], params.hidden_size
    drive_f = X @ params.fw.Win.T
    drive_b = X @ params.bw.Win.T
    hf = np.empty((n, h))
    state = np.zeros(h)
    for t in range(n):
        state = np.tanh(drive_f[t] + params.fw.Wrec @ state + params.fw.b)
        hf[t] = state
    hb = np.empty((n, h))
    state = np.zeros(h)
    for t in range(n - 1, -1, -1):
        state = np.tanh(drive_b[t] + params.bw.Wrec @ state + params.bw.b)
        hb[t] = state
    y = hf @ params.v_f + hb @ params.v_b + float(params.c)
    return hf, hb, y


def predict(params, matrix) -> np.ndarray:
    """Evaluate a model on a matrix standardized onto its vocabulary."""
    X = _as_data(matrix)
    if X.shape[1] != params.n_inputs:
        raise ValueError(f"matrix has {X.shape[1]} columns but the model "
                         f"expects {params.n_inputs}")
    if isinstance(params, LinParams):
        return X @ params.w + float(params.b)
    if isinstance(params, FFNNParams):
        return ffnn_forward(params, X)[1]
    if isinstance(params, BiRNNParams):
        return birnn_forward(params, X)[2]
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def mse_loss(pred, target) -> float:
    """Mean squared error between curves of equal length."""
    pred = np.asarray(pred, dtype=float)
    values = getattr(target, "values", target)
    values = np.asarray(values, dtype=float)
    if pred.shape != values.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {values.shape}")
    return float(np.mean((pred - values) ** 2))


# ---------------------------------------------------------------------------
# Parameter plumbing

def _init_params(kind: str, n_inputs: int, hidden_size: int, rng):
    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    if kind == "lin":
        return LinParams(w=glorot((n_inputs,), n_inputs, 1), b=np.zeros(()))
    if kind == "ffnn":
        h = hidden_size
        return FFNNParams(W1=glorot((h, n_inputs), n_inputs, h),
                          b1=np.zeros(h),
                          w2=glorot((h,), h, 1),
                          b2=np.zeros(()))
    if kind == "birnn":
        h = hidden_size

        def cell():
            return RNNCell(Win=glorot((h, n_inputs), n_inputs, h),
                           Wrec=glorot((h, h), h, h),
                           b=np.zeros(h))

        return BiRNNParams(fw=cell(), bw=cell(),
                           v_f=glorot((h,), h, 1),
                           v_b=glorot((h,), h, 1),
                           c=np.zeros(()))
    raise ValueError(f"unknown model kind {kind!r}")


def _named_arrays(params):
    """Flat (name, array) view; arrays are the live parameter buffers."""
    if isinstance(params, LinParams):
        return [("w", params.w), ("b", params.b)]
    if isinstance(params, FFNNParams):
        return [("W1", params.W1), ("b1", params.b1),
                ("w2", params.w2), ("b2", params.b2)]
    if isinstance(params, BiRNNParams):
        return [("fw_Win", params.fw.Win), ("fw_Wrec", params.fw.Wrec),
                ("fw_b", params.fw.b),
                ("bw_Win", params.bw.Win), ("bw_Wrec", params.bw.Wrec),
                ("bw_b", params.bw.b),
                ("v_f", params.v_f), ("v_b", params.v_b), ("c", params.c)]
    raise TypeError(f"unknown parameter type {type(params).__name__}")


#: Which flat entries carry weights (regularized) rather than biases.
_L2_MASKS = {
    LinParams: (True, False),
    FFNNParams: (True, False, True, False),
    BiRNNParams: (True, True, False, True, True, False, True, True, False),
}


def clone_params(params):
    arrays = [a.copy() for _, a in _named_arrays(params)]
    if isinstance(params, LinParams):
        return LinParams(*arrays)
    if isinstance(params, FFNNParams):
        return FFNNParams(*arrays)
    return BiRNNParams(fw=RNNCell(*arrays[0:3]), bw=RNNCell(*arrays[3:6]),
                       v_f=arrays[6], v_b=arrays[7], c=arrays[8])


def model_kind(params) -> str:
    return {LinParams: "lin", FFNNParams: "ffnn",
            BiRNNParams: "birnn"}[type(params)]


# ---------------------------------------------------------------------------
# Gradients

def loss_and_gradients(params, X: np.ndarray, y: np.ndarray,
                       l2_penalty: float = 0.0):
    """Data MSE and gradients of MSE + l2 * ||weights||^2.

    Gradients are returned in the order of :func:`_named_arrays`.
    """
    n = len(y)
    if isinstance(params, LinParams):
        pred = X @ params.w + float(params.b)
        dy = (2.0 / n) * (pred - y)
        grads = [X.T @ dy + 2.0 * l2_penalty * params.w,
                 np.asarray(dy.sum())]
    elif isinstance(params, FFNNParams):
        hidden, pred = ffnn_forward(params, X)
        dy = (2.0 / n) * (pred - y)
        d_hidden = np.outer(dy, params.w2) * (1.0 - hidden * hidden)
        grads = [d_hidden.T @ X + 2.0 * l2_penalty * params.W1,
                 d_hidden.sum(axis=0),
                 hidden.T @ dy + 2.0 * l2_penalty * params.w2,
                 np.asarray(dy.sum())]
    elif isinstance(params, BiRNNParams):
        hf, hb, pred = birnn_forward(params, X)
        dy = (2.0 / n) * (pred - y)
        h = params.hidden_size

        d_win_f = np.zeros_like(params.fw.Win)
        d_wrec_f = np.zeros_like(params.fw.Wrec)
        d_b_f = np.zeros(h)
        delta_next = np.zeros(h)
        for t in range(len(y) - 1, -1, -1):
            grad_h = dy[t] * params.v_f + params.fw.Wrec.T @ delta_next
            delta = grad_h * (1.0 - hf[t] * hf[t])
            d_win_f += np.outer(delta, X[t])
            if t > 0:
                d_wrec_f += np.outer(delta, hf[t - 1])
            d_b_f += delta
            delta_next = delta

        d_win_b = np.zeros_like(params.bw.Win)
        d_wrec_b = np.zeros_like(params.bw.Wrec)
        d_b_b = np.zeros(h)
        delta_prev = np.zeros(h)
        for t in range(len(y)):
            grad_h = dy[t] * params.v_b + params.bw.Wrec.T @ delta_prev
            delta = grad_h * (1.0 - hb[t] * hb[t])
            d_win_b += np.outer(delta, X[t])
            if t < len(y) - 1:
                d_wrec_b += np.outer(delta, hb[t + 1])
            d_b_b += delta
            delta_prev = delta

        grads = [d_win_f + 2.0 * l2_penalty * params.fw.Win,
                 d_wrec_f + 2.0 * l2_penalty * params.fw.Wrec,
                 d_b_f,
                 d_win_b + 2.0 * l2_penalty * params.bw.Win,
                 d_wrec_b + 2.0 * l2_penalty * params.bw.Wrec,
                 d_b_b,
                 hf.T @ dy + 2.0 * l2_penalty * params.v_f,
                 hb.T @ dy + 2.0 * l2_penalty * params.v_b,
                 np.asarray(dy.sum())]
    else:
        raise TypeError(f"unknown parameter type {type(params).__name__}")
    return float(np.mean((pred - y) ** 2)), grads


def regularized_loss(params, X: np.ndarray, y: np.ndarray,
                     l2_penalty: float) -> float:
    """The objective the gradients above descend."""
    data = mse_loss(predict(params, X), y)
    mask = _L2_MASKS[type(params)]
    weights = sum(float(np.sum(a * a))
                  for (_, a), is_weight in zip(_named_arrays(params), mask)
                  if is_weight)
    return data + l2_penalty * weights


class _Optimizer:
    """Momentum gradient descent, or adaptive per-parameter steps."""

    def __init__(self, params, config: TrainConfig):
        arrays = [a for _, a in _named_arrays(params)]
        self.config = config
        self.velocity = [np.zeros_like(a) for a in arrays]
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.steps = 0

    def update(self, params, grads):
        arrays = [a for _, a in _named_arrays(params)]
        cfg = self.config
        if isinstance(params, BiRNNParams) and cfg.clip_norm:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > cfg.clip_norm:
                grads = [g * (cfg.clip_norm / norm) for g in grads]
        if cfg.optimizer == "adam":
            self.steps += 1
            beta1, beta2, eps = 0.9, 0.999, 1e-8
            for a, g, m, v in zip(arrays, grads, self.m, self.v):
                m *= beta1
                m += (1 - beta1) * g
                v *= beta2
                v += (1 - beta2) * g * g
                m_hat = m / (1 - beta1 ** self.steps)
                v_hat = v / (1 - beta2 ** self.steps)
                a[...] = a - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        else:
            for a, g, vel in zip(arrays, grads, self.velocity):
                vel *= cfg.momentum
                vel -= cfg.learning_rate * g
                a[...] = a + vel


# ---------------------------------------------------------------------------
# Training

def _pooled_mse(params, Xs, ys) -> float:
    total = 0.0
    count = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for X, y in zip(Xs, ys):
            residual = predict(params, X) - y
            total += float(np.sum(residual * residual))
            count += len(y)
    return total / count if count else float("nan")


def _solve_lin_exact(Xs, ys, l2_penalty: float) -> LinParams:
    X = np.vstack(Xs)
    y = np.concatenate(ys)
    n, k = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    penalty = np.diag([l2_penalty] * k + [0.0])
    lhs = A.T @ A / n + penalty
    rhs = A.T @ y / n
    if l2_penalty > 0:
        theta = np.linalg.solve(lhs, rhs)
    else:
        theta = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return LinParams(w=theta[:-1], b=np.asarray(theta[-1]))


def build_vocabulary(matrices) -> Vocabulary:
    """Vocabulary over the union of training columns with training stats."""
    columns = sorted({c for m in matrices for c in m.columns},
                     key=column_order_key)
    index_maps = []
    raw = []
    for m in matrices:
        local = {c: j for j, c in enumerate(m.columns)}
        block = np.zeros((m.n_rows, len(columns)))
        for k, c in enumerate(columns):
            if c in local:
                block[:, k] = m.data[:, local[c]]
        raw.append(block)
        index_maps.append(local)
    stats = compute_stats(np.vstack(raw), columns)
    return Vocabulary(columns=columns, stats=stats)


def train(kind: str, pieces, validation_pieces, config: TrainConfig):
    """Train one model on whole pieces with early stopping.

    Parameters
    ----------
    kind : str
        "lin", "ffnn" or "birnn".
    pieces, validation_pieces : list of (BasisMatrix, TargetCurve)
        Validation pieces steer early stopping only; their statistics
        never enter the vocabulary.
    config : TrainConfig

    Returns
    -------
    (params, Vocabulary, TrainingLog)
        Parameters restored to the epoch with the lowest validation
        loss.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if not pieces:
        raise ValueError("empty training set")

    vocab = build_vocabulary([m for m, _ in pieces])
    Xs = [vocab.transform(m) for m, _ in pieces]
    ys = [np.asarray(t.values, dtype=float) for _, t in pieces]
    for X, y in zip(Xs, ys):
        if len(X) != len(y):
            raise ValueError(f"piece has {len(X)} grid rows but "
                             f"{len(y)} target values")
    Xv = [vocab.transform(m) for m, _ in validation_pieces]
    yv = [np.asarray(t.values, dtype=float) for _, t in validation_pieces]

    rng = np.random.default_rng(config.seed)
    params = _init_params(kind, len(vocab.columns), config.hidden_size, rng)

    if kind == "lin" and config.exact_lin:
        params = _solve_lin_exact(Xs, ys, config.l2_penalty)
        train_loss = _pooled_mse(params, Xs, ys)
        val_loss = _pooled_mse(params, Xv, yv) if Xv else train_loss
        log = TrainingLog(records=[(0, train_loss, val_loss)],
                          stopped_epoch=0, best_epoch=0)
        return params, vocab, log

    optimizer = _Optimizer(params, config)
    train_loss = _pooled_mse(params, Xs, ys)
    val_loss = _pooled_mse(params, Xv, yv) if Xv else train_loss
    records = [(0, train_loss, val_loss)]
    best_val = val_loss
    best_epoch = 0
    best_params = clone_params(params)
    bad_epochs = 0
    stopped = 0

    for epoch in range(1, config.max_epochs + 1):
        for idx in rng.permutation(len(Xs)):
            _, grads = loss_and_gradients(params, Xs[idx], ys[idx],
                                          config.l2_penalty)
            optimizer.update(params, grads)
        train_loss = _pooled_mse(params, Xs, ys)
        val_loss = _pooled_mse(params, Xv, yv) if Xv else train_loss
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergenceError(epoch, config.learning_rate)
        records.append((epoch, train_loss, val_loss))
        stopped = epoch
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = clone_params(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    log = TrainingLog(records=records, stopped_epoch=stopped,
                      best_epoch=best_epoch)
    return best_params, vocab, log


def fit_to_performance(pretrained, piece, config: TrainConfig):
    """Fine-tune pretrained parameters to one performance.

    Runs whole-piece gradient descent from the given parameters and
    stops at ``max_epochs`` or when the fit MSE improves by less than
    1e-6 over a window of ``patience`` epochs.  ``max_epochs = 0``
    returns the pretrained parameters verbatim.
    """
    matrix, target = piece
    X = _as_data(matrix)
    y = np.asarray(getattr(target, "values", target), dtype=float)
    params = clone_params(pretrained)
    if config.max_epochs == 0:
        return params

    optimizer = _Optimizer(params, config)
    best_params = clone_params(params)
    best_loss = mse_loss(predict(params, X), y)
    stalled = 0
    for epoch in range(1, config.max_epochs + 1):
        _, grads = loss_and_gradients(params, X, y, config.l2_penalty)
        optimizer.update(params, grads)
        loss = mse_loss(predict(params, X), y)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, config.learning_rate)
        if loss < best_loss:
            stalled = 0 if best_loss - loss >= _FIT_TOLERANCE else stalled + 1
            best_loss = loss
            best_params = clone_params(params)
        else:
            stalled += 1
        if stalled >= config.patience:
            break
    return best_params


# ---------------------------------------------------------------------------
# Persistence

def _hidden_size_of(params) -> int:
    return getattr(params, "hidden_size", 0)


def dump_model(model: TrainedModel) -> str:
    """Serialize a model to the versioned text format.

    All numbers use 17 significant digits and the payload carries a
    content hash checked on load.
    """
    lines = [MODEL_FORMAT_HEADER,
             f"kind {model.kind}",
             f"hidden {_hidden_size_of(model.params)}"]
    if model.config is not None:
        for f in fields(model.config):
            value = getattr(model.config, f.name)
            if value is None:
                text = "none"
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = fmt17(value)
            else:
                text = str(value)
            lines.append(f"config {f.name} {text}")
    lines.append(f"columns {len(model.vocab.columns)}")
    stats = model.vocab.stats
    for column, mean, std in zip(model.vocab.columns, stats.means, stats.stds):
        lines.append(f"col {column.name} {fmt17(mean)} {fmt17(std)}")
    for name, array in _named_arrays(model.params):
        arr = np.atleast_2d(np.asarray(array, dtype=float))
        dims = " ".join(str(d) for d in np.asarray(array).shape)
        lines.append(f"array {name} {dims}".rstrip())
        for row in arr:
            lines.append(" ".join(fmt17(v) for v in row))
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return body + f"hash sha256:{digest}\n"


def parse_model(text: str) -> TrainedModel:
    lines = text.splitlines()
    if not lines or lines[0] != MODEL_FORMAT_HEADER:
        raise ValueError("not a model file (bad header)")
    if not lines[-1].startswith("hash sha256:"):
        raise ValueError("model file has no content hash")
    body = "\n".join(lines[:-1]) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if lines[-1] != f"hash sha256:{digest}":
        raise ValueError("model file corrupt: content hash mismatch")

    kind = ""
    config_items = {}
    columns = []
    means = []
    stds = []
    arrays = {}
    i = 1
    while i < len(lines) - 1:
        line = lines[i]
        if line.startswith("kind "):
            kind = line.split()[1]
        elif line.startswith("config "):
            _, name, value = line.split(None, 2)
            config_items[name] = value
        elif line.startswith("col "):
            name, mean, std = line[4:].rsplit(None, 2)
            columns.append(BasisId.parse(name))
            means.append(float(mean))
            stds.append(float(std))
        elif line.startswith("array "):
            parts = line.split()
            name = parts[1]
            dims = tuple(int(d) for d in parts[2:])
            n_lines = dims[0] if len(dims) == 2 else 1
            rows = [np.array([float(v) for v in lines[i + 1 + r].split()])
                    for r in range(n_lines)]
            value = np.vstack(rows) if len(dims) == 2 else rows[0]
            arrays[name] = value.reshape(dims)
            i += n_lines
        i += 1

    if kind not in MODEL_KINDS:
        raise ValueError(f"model file declares unknown kind {kind!r}")
    if kind == "lin":
        params = LinParams(w=arrays["w"], b=arrays["b"])
    elif kind == "ffnn":
        params = FFNNParams(W1=arrays["W1"], b1=arrays["b1"],
                            w2=arrays["w2"], b2=arrays["b2"])
    else:
        params = BiRNNParams(
            fw=RNNCell(arrays["fw_Win"], arrays["fw_Wrec"], arrays["fw_b"]),
            bw=RNNCell(arrays["bw_Win"], arrays["bw_Wrec"], arrays["bw_b"]),
            v_f=arrays["v_f"], v_b=arrays["v_b"], c=arrays["c"])

    config = None
    if config_items:
        kwargs = {}
        for f in fields(TrainConfig):
            if f.name not in config_items:
                continue
            raw = config_items[f.name]
            if raw == "none":
                kwargs[f.name] = None
            elif f.name in ("optimizer",):
                kwargs[f.name] = raw
            elif f.name in ("max_epochs", "patience", "seed", "hidden_size"):
                kwargs[f.name] = int(raw)
            elif f.name == "exact_lin":
                kwargs[f.name] = raw == "true"
            else:
                kwargs[f.name] = float(raw)
        config = TrainConfig(**kwargs)

    vocab = Vocabulary(columns=columns,
                       stats=BasisStats(columns=columns, means=np.array(means),
                                        stds=np.array(stds)))
    return TrainedModel(kind=kind, params=params, vocab=vocab, config=config)


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_model(model))


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def training_log_csv(log: TrainingLog) -> str:
    lines = [f"# stopped_epoch: {log.stopped_epoch}",
             f"# best_epoch: {log.best_epoch}",
             "epoch,train_loss,val_loss"]
    for epoch, train_loss, val_loss in log.records:
        lines.append(f"{epoch},{fmt17(train_loss)},{fmt17(val_loss)}")
    return "\n".join(lines) + "\n"
