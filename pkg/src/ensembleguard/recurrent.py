"""LSTM and GRU classifiers with hand-written backpropagation through time.

A tabular record is fed as a single timestep from a zero state; the
trainer and gradient check also accept ``(batch, steps, features)`` arrays.
The last hidden state passes through inverted dropout and a softmax head.

Parameter layout (``H`` hidden units, ``p`` inputs, ``C`` classes)::

    W (p, G*H)   input-to-gate weights
    U (H, G*H)   hidden-to-gate weights
    b (G*H,)     gate biases
    V (H, C)     output projection
    c (C,)       output bias

with gate blocks ``[i, f, g, o]`` for LSTM (G = 4) and ``[z, r, n]`` for
GRU (G = 3), where ``n = tanh(x W_n + (r * h) U_n + b_n)`` and
``h' = (1 - z) n + z h``.
"""
from __future__ import annotations

import ast
from dataclasses import asdict, dataclass, field

import numpy as np

from .weights import load_arrays, save_arrays

KINDS = ("LSTM", "GRU")
PARAM_NAMES = ("W", "U", "b", "V", "c")


@dataclass
class RecurrentConfig:
    kind: str = "LSTM"
    hidden: int = 128
    dropout_rate: float = 0.2
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        return self


@dataclass(eq=False)
class RecurrentModel:
    config: RecurrentConfig
    params: dict
    n_features: int
    n_classes: int

    @property
    def gates(self) -> int:
        return 4 if self.config.kind == "LSTM" else 3

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X, "eval")


@dataclass
class TrainTrace:
    losses: list = field(default_factory=list)
    train_accuracy: float = float("nan")


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def init_recurrent(config: RecurrentConfig, p: int, C: int) -> RecurrentModel:
    config.validate()
    if p < 1 or C < 2:
        raise ValueError("need p >= 1 and C >= 2")
    H = config.hidden
    G = 4 if config.kind == "LSTM" else 3
    rng = np.random.default_rng(config.seed)

    def uni(fan_in, shape):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    params = {"W": uni(p, (p, G * H)), "U": uni(H, (H, G * H)), "b": np.zeros(G * H),
              "V": uni(H, (H, C)), "c": np.zeros(C)}
    if config.kind == "LSTM":
        params["b"][H:2 * H] = 1.0
    return RecurrentModel(config, params, p, C)


def _as_sequence(X: np.ndarray, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, None, :]
    elif X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3 or X.shape[2] != p:
        raise ValueError(f"expected {p} features per step, got shape {X.shape}")
    return X


def _run(model: RecurrentModel, X: np.ndarray, keep=None):
    """Forward pass over a (B, T, p) batch; returns probabilities and a cache."""
    P = model.params
    W, U, b = P["W"], P["U"], P["b"]
    B, T, _ = X.shape
    H = model.config.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(T):
        x = X[:, t, :]
        if model.config.kind == "LSTM":
            a = x @ W + h @ U + b
            i = _sigmoid(a[:, :H])
            f = _sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = _sigmoid(a[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            steps.append((x, h, c, i, f, g, o, tc))
            c = c_new
        else:
            a = x @ W[:, :2 * H] + h @ U[:, :2 * H] + b[:2 * H]
            z = _sigmoid(a[:, :H])
            r = _sigmoid(a[:, H:])
            rh = r * h
            n = np.tanh(x @ W[:, 2 * H:] + rh @ U[:, 2 * H:] + b[2 * H:])
            h_new = (1.0 - z) * n + z * h
            steps.append((x, h, z, r, rh, n))
        h = h_new
    hd = h if keep is None else h * keep
    probs = _softmax(hd @ P["V"] + P["c"])
    return probs, (steps, h, hd, keep)


def forward(model: RecurrentModel, x, mode: str = "eval", rng=None) -> np.ndarray:
    """Class distribution for one record or a batch.

    ``mode="train"`` applies inverted dropout to the final hidden state
    using ``rng`` (a numpy Generator or seed).
    """
    single = np.ndim(x) == 1
    X = _as_sequence(x, model.n_features)
    keep = None
    if mode == "train":
        keep = _dropout_mask(np.random.default_rng(rng), X.shape[0], model.config)
    elif mode != "eval":
        raise ValueError("mode must be 'train' or 'eval'")
    probs, _ = _run(model, X, keep)
    return probs[0] if single else probs


def hidden_state(model: RecurrentModel, x, mode: str = "eval", rng=None) -> np.ndarray:
    """Final hidden activation after (optional) dropout, before the head."""
    X = _as_sequence(x, model.n_features)
    keep = None
    if mode == "train":
        keep = _dropout_mask(np.random.default_rng(rng), X.shape[0], model.config)
    _, (_, _, hd, _) = _run(model, X, keep)
    return hd[0] if np.ndim(x) == 1 else hd


def _dropout_mask(rng, B, config):
    q = 1.0 - config.dropout_rate
    if config.dropout_rate == 0.0:
        return None
    return (rng.random((B, config.hidden)) < q) / q


def _loss_and_grads(model: RecurrentModel, X: np.ndarray, y: np.ndarray, keep=None):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    P = model.params
    H = model.config.hidden
    B = X.shape[0]
    probs, (steps, h_last, hd, keep) = _run(model, X, keep)
    loss = -np.mean(np.log(np.maximum(probs[np.arange(B), y], 1e-300)))
    dz = probs.copy()
    dz[np.arange(B), y] -= 1.0
    dz /= B
    grads = {"V": hd.T @ dz, "c": dz.sum(axis=0)}
    dh = dz @ P["V"].T
    if keep is not None:
        dh *= keep
    dW = np.zeros_like(P["W"])
    dU = np.zeros_like(P["U"])
    db = np.zeros_like(P["b"])
    W, U = P["W"], P["U"]
    if model.config.kind == "LSTM":
        dc = np.zeros((B, H))
        for x, h_prev, c_prev, i, f, g, o, tc in reversed(steps):
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            da = np.concatenate([dc * g * i * (1.0 - i),
                                 dc * c_prev * f * (1.0 - f),
                                 dc * i * (1.0 - g * g),
                                 do * o * (1.0 - o)], axis=1)
            dW += x.T @ da
            dU += h_prev.T @ da
            db += da.sum(axis=0)
            dh = da @ U.T
            dc = dc * f
    else:
        for x, h_prev, z, r, rh, n in reversed(steps):
            dn = dh * (1.0 - z)
            dzg = dh * (h_prev - n)
            dh_prev = dh * z
            dan = dn * (1.0 - n * n)
            drh = dan @ U[:, 2 * H:].T
            daz = dzg * z * (1.0 - z)
            dar = drh * h_prev * r * (1.0 - r)
            dh_prev += drh * r
            dazr = np.concatenate([daz, dar], axis=1)
            dW[:, :2 * H] += x.T @ dazr
            dW[:, 2 * H:] += x.T @ dan
            dU[:, :2 * H] += h_prev.T @ dazr
            dU[:, 2 * H:] += rh.T @ dan
            db[:2 * H] += dazr.sum(axis=0)
            db[2 * H:] += dan.sum(axis=0)
            dh = dh_prev + dazr @ U[:, :2 * H].T
    grads.update(W=dW, U=dU, b=db)
    return float(loss), grads


def _xy(train, y):
    if y is None:
        return np.asarray(train.matrix, dtype=np.float64), np.asarray(train.labels, dtype=np.int64), train.n_classes
    return np.asarray(train, dtype=np.float64), np.asarray(y, dtype=np.int64), None


def train_recurrent(train, config: RecurrentConfig | None = None, y=None, *, n_classes=None):
    """Minibatch Adam on mean cross-entropy; returns ``(model, TrainTrace)``.

    Each epoch draws its shuffle and dropout masks from the substream
    ``(seed, epoch)``, so a fixed config reproduces the same trace.
    """
    config = (config or RecurrentConfig()).validate()
    X, y, c = _xy(train, y)
    if n_classes is None:
        n_classes = c if c is not None else int(y.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least two classes")
    Xs = _as_sequence(X, X.shape[-1])
    n = Xs.shape[0]
    if n < 1:
        raise ValueError("cannot train on zero records")
    model = init_recurrent(config, Xs.shape[2], n_classes)
    opt = Adam(model.params, config.learning_rate, config.beta1, config.beta2, config.eps)
    trace = TrainTrace()
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, epoch])
        perm = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            keep = _dropout_mask(rng, idx.size, config)
            loss, grads = _loss_and_grads(model, Xs[idx], y[idx], keep)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += loss * idx.size
            opt.step(model.params, grads)
        trace.losses.append(total / n)
    pred = predict(model, Xs)
    trace.train_accuracy = float(np.mean(pred == y))
    return model, trace


def predict(model: RecurrentModel, X, batch: int = 8192) -> np.ndarray:
    X = _as_sequence(X, model.n_features)
    out = [np.argmax(_run(model, X[s:s + batch])[0], axis=1) for s in range(0, X.shape[0], batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def predict_proba(model: RecurrentModel, X, batch: int = 8192) -> np.ndarray:
    X = _as_sequence(X, model.n_features)
    out = [_run(model, X[s:s + batch])[0] for s in range(0, X.shape[0], batch)]
    return np.concatenate(out) if out else np.zeros((0, model.n_classes))


def analytic_gradients(model: RecurrentModel, X, y):
    return _loss_and_grads(model, _as_sequence(X, model.n_features), np.asarray(y, dtype=np.int64))


def _batch_loss(model: RecurrentModel, X: np.ndarray, y: np.ndarray):
    """Dropout-free mean cross-entropy, kept in the parameters' precision."""
    probs, _ = _run(model, X)
    return -np.mean(np.log(np.maximum(probs[np.arange(X.shape[0]), y], 1e-300)))


def numeric_gradients(model: RecurrentModel, X, y, step: float = 1e-5,
                      dtype=np.longdouble) -> dict:
    """Central finite differences of the dropout-free batch loss.

    The loss is evaluated in ``dtype`` (extended precision by default) so the
    difference quotient is not swamped by float64 cancellation noise on tiny
    gradient entries.  Where the platform's long double is plain float64 this
    is an ordinary float64 check.
    """
    X = _as_sequence(X, model.n_features).astype(dtype)
    y = np.asarray(y, dtype=np.int64)
    work = RecurrentModel(model.config, {k: v.astype(dtype) for k, v in model.params.items()},
                          model.n_features, model.n_classes)
    h = dtype(step)
    out = {}
    for name in PARAM_NAMES:
        a = work.params[name]
        g = np.zeros(a.shape)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            lp = _batch_loss(work, X, y)
            flat[k] = old - h
            lm = _batch_loss(work, X, y)
            flat[k] = old
            gflat[k] = float((lp - lm) / (2 * h))
        out[name] = g
    return out


def relative_errors(analytic: dict, numeric: dict, floor: float = 1e-8) -> dict:
    """Per-array max of ``|a - n| / max(|a|, |n|, floor)``."""
    out = {}
    for k in analytic:
        a, n = analytic[k], numeric[k]
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        out[k] = float(np.max(np.abs(a - n) / den)) if a.size else 0.0
    return out


def gradient_check(model: RecurrentModel, batch, step: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference gradients.

    ``batch`` is ``(X, y)``; dropout is never applied here.
    """
    X, y = batch
    _, ga = analytic_gradients(model, X, y)
    gn = numeric_gradients(model, X, y, step)
    return max(relative_errors(ga, gn).values())


def save_recurrent(model: RecurrentModel, path) -> None:
    header = {"kind": model.config.kind, "p": model.n_features, "hidden": model.config.hidden,
              "C": model.n_classes}
    header.update({f"config.{k}": repr(v) for k, v in sorted(asdict(model.config).items())})
    save_arrays(path, header, {k: model.params[k] for k in PARAM_NAMES})


def load_recurrent(path) -> RecurrentModel:
    header, arrays = load_arrays(path)
    kw = {k[7:]: ast.literal_eval(v) for k, v in header.items() if k.startswith("config.")}
    config = RecurrentConfig(**kw)
    return RecurrentModel(config, {k: arrays[k].copy() for k in PARAM_NAMES},
                          int(header["p"]), int(header["C"]))
