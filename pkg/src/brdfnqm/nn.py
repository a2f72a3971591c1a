"""The quality-predictor MLP and its from-scratch training machinery.

Architecture: dense 3000->1024->716->501->1; every hidden dense layer is
followed by layer normalization, exact-erf GELU, and dropout (p = 0.2,
train mode only, inverted scaling). A sigmoid after the last layer
rescales the output into [jod_min, jod_max]. The whitening statistics and
JOD range live inside the model so inference is self-contained.

Everything runs on plain numpy arrays (float32 by default, float64 for
gradient-check shadow models); gradients are hand-derived reverse-mode.
"""

from __future__ import annotations

import copy
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import CheckpointError, PairingError
from .preprocess import WhiteningStats, transform_sampled, whiten
from .sampling import SampledBrdf, check_paired

INPUT_DIM = 3000
HIDDEN_WIDTHS = (1024, 716, 501)
LN_EPS = 1e-5
CHECKPOINT_MAGIC = "brdfnqm-checkpoint"
CHECKPOINT_VERSION = 1

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass
class MlpModel:
    weights: list[np.ndarray]          # per dense layer, shape (out, in)
    biases: list[np.ndarray]
    gammas: list[np.ndarray]           # layer-norm scale per hidden layer
    betas: list[np.ndarray]
    jod_min: float
    jod_max: float
    whitening: WhiteningStats
    seed: int
    dropout: float = 0.2

    def __post_init__(self):
        if len(self.weights) != len(self.gammas) + 1:
            raise ValueError("need one more dense layer than layer norms")
        if not self.jod_min < self.jod_max:
            raise ValueError("jod_min must be < jod_max")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def dtype(self):
        return self.weights[0].dtype

    def parameters(self):
        """Flat list of (group, name, array); group 0 is the input layer."""
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            g = 0 if i == 0 else 1
            out.append((g, f"w{i}", w))
            out.append((g, f"b{i}", b))
        for i, (ga, be) in enumerate(zip(self.gammas, self.betas)):
            out.append((1, f"gamma{i}", ga))
            out.append((1, f"beta{i}", be))
        return out


def param_count(model: MlpModel) -> int:
    return sum(arr.size for _, _, arr in model.parameters())


def init_model(
    seed: int,
    jod_min: float,
    jod_max: float,
    whitening: WhiteningStats,
    input_dim: int = INPUT_DIM,
    hidden: tuple[int, ...] = HIDDEN_WIDTHS,
    dtype=np.float32,
    dropout: float = 0.2,
) -> MlpModel:
    """Fan-in uniform weights, zero biases, identity layer norms."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    gammas = [np.ones(h, dtype=dtype) for h in hidden]
    betas = [np.zeros(h, dtype=dtype) for h in hidden]
    return MlpModel(
        weights=weights,
        biases=biases,
        gammas=gammas,
        betas=betas,
        jod_min=float(jod_min),
        jod_max=float(jod_max),
        whitening=whitening,
        seed=seed,
        dropout=dropout,
    )


def gelu(x):
    """Exact GELU: x * Phi(x) with the erf-based normal CDF."""
    x = np.asarray(x)
    return x * ndtr(x)


def _gelu_grad(x):
    return ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def forward(model: MlpModel, batch: np.ndarray, mode: str = "eval", rng=None, dropout_masks=None):
    """Run the network; returns (predictions (B, 1), cache for backward).

    Train mode needs either an rng to draw dropout masks or explicit masks
    (one boolean array per hidden layer, used by the gradient checker).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(batch, dtype=model.dtype)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"batch shape {x.shape} incompatible with input dim {model.input_dim}")
    keep = 1.0 - model.dropout
    cache = {"mode": mode, "inputs": [], "z": [], "xhat": [], "inv_std": [], "y": [], "masks": []}
    a = x
    n_hidden = len(model.gammas)
    for i in range(n_hidden):
        cache["inputs"].append(a)
        z = a @ model.weights[i].T + model.biases[i]
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LN_EPS)
        xhat = (z - mu) * inv_std
        y = model.gammas[i] * xhat + model.betas[i]
        a = gelu(y)
        if mode == "train" and model.dropout > 0.0:
            if dropout_masks is not None:
                mask = dropout_masks[i]
            elif rng is not None:
                mask = rng.random(a.shape) < keep
            else:
                raise ValueError("train mode requires an rng or explicit dropout masks")
            a = a * mask / keep
            cache["masks"].append(mask)
        else:
            cache["masks"].append(None)
        cache["z"].append(z)
        cache["xhat"].append(xhat)
        cache["inv_std"].append(inv_std)
        cache["y"].append(y)
    cache["inputs"].append(a)
    zf = a @ model.weights[-1].T + model.biases[-1]
    s = _sigmoid(zf)
    cache["s"] = s
    pred = model.jod_min + s * (model.jod_max - model.jod_min)
    return pred, cache


def logcosh_loss(pred: np.ndarray, target: np.ndarray):
    """Mean log(cosh(pred - target)) in overflow-safe form, plus d/dpred."""
    pred = np.asarray(pred)
    target = np.asarray(target).reshape(pred.shape)
    d = pred - target
    ad = np.abs(d)
    loss = float(np.mean(ad + np.log1p(np.exp(-2.0 * ad)) - np.log(2.0)))
    grad = np.tanh(d) / d.shape[0]
    return loss, grad


def backward(model: MlpModel, cache: dict, loss_grad: np.ndarray) -> dict:
    """Gradients of the loss w.r.t. every parameter, mirroring the model."""
    if cache.get("mode") != "train":
        raise ValueError("backward requires a cache from a train-mode forward pass")
    keep = 1.0 - model.dropout
    s = cache["s"]
    dzf = loss_grad * (model.jod_max - model.jod_min) * s * (1.0 - s)
    grads = {
        "weights": [None] * len(model.weights),
        "biases": [None] * len(model.biases),
        "gammas": [None] * len(model.gammas),
        "betas": [None] * len(model.betas),
    }
    a_last = cache["inputs"][-1]
    grads["weights"][-1] = dzf.T @ a_last
    grads["biases"][-1] = dzf.sum(axis=0)
    da = dzf @ model.weights[-1]
    for i in reversed(range(len(model.gammas))):
        mask = cache["masks"][i]
        if mask is not None:
            da = da * mask / keep
        y = cache["y"][i]
        dy = da * _gelu_grad(y)
        xhat = cache["xhat"][i]
        grads["gammas"][i] = (dy * xhat).sum(axis=0)
        grads["betas"][i] = dy.sum(axis=0)
        dxhat = dy * model.gammas[i]
        inv_std = cache["inv_std"][i]
        dz = inv_std * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        x_in = cache["inputs"][i]
        grads["weights"][i] = dz.T @ x_in
        grads["biases"][i] = dz.sum(axis=0)
        da = dz @ model.weights[i]
    return grads


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(model: MlpModel) -> AdamState:
    zeros = lambda arrs: [np.zeros_like(a, dtype=np.float64) for a in arrs]
    m = {k: zeros(getattr(model, k)) for k in ("weights", "biases", "gammas", "betas")}
    v = {k: zeros(getattr(model, k)) for k in ("weights", "biases", "gammas", "betas")}
    return AdamState(m=m, v=v)


def adam_step(
    model: MlpModel,
    grads: dict,
    state: AdamState,
    lr_input: float,
    lr_deep: float,
    weight_decay: float = 0.0,
) -> None:
    """In-place Adam update with coupled L2 decay and two learning-rate groups.

    The input dense layer (weights[0], biases[0]) uses lr_input; every other
    parameter, including all layer norms, uses lr_deep.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for key in ("weights", "biases", "gammas", "betas"):
        params = getattr(model, key)
        for i, p in enumerate(params):
            g = np.asarray(grads[key][i], dtype=np.float64)
            if weight_decay > 0.0:
                g = g + weight_decay * p
            m = state.m[key][i]
            v = state.v[key][i]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            lr = lr_input if (key in ("weights", "biases") and i == 0) else lr_deep
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            params[i] = (p - update).astype(p.dtype)


@dataclass
class PlateauScheduler:
    """Reduce both learning rates when validation loss stops improving."""

    lr_input: float
    lr_deep: float
    patience: int = 5
    factor: float = 0.1
    min_lr: float = 1e-6
    rel_threshold: float = 1e-4
    best: float = float("inf")
    bad_epochs: int = 0

    def step(self, val_loss: float) -> None:
        if val_loss < self.best * (1.0 - self.rel_threshold):
            self.best = val_loss
            self.bad_epochs = 0
            return
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.lr_input = max(self.lr_input * self.factor, self.min_lr)
            self.lr_deep = max(self.lr_deep * self.factor, self.min_lr)
            self.bad_epochs = 0


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 512
    lr_input: float = 1e-4
    lr_deep: float = 1e-3
    weight_decay: float = 1e-4
    patience: int = 5
    factor: float = 0.1
    min_lr: float = 1e-6
    rel_threshold: float = 1e-4
    shuffle_seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size) < 1 or min(self.lr_input, self.lr_deep) <= 0:
            raise ValueError("epochs/batch_size/learning rates must be positive")


def train(
    model: MlpModel,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
):
    """Seeded minibatch training; returns (best-validation model, history).

    History has one row per epoch: train/val loss and the two group LRs.
    """
    if len(x_train) == 0:
        raise ValueError("empty training set")
    y_train = np.asarray(y_train, dtype=model.dtype).reshape(-1, 1)
    y_val = np.asarray(y_val, dtype=model.dtype).reshape(-1, 1)
    state = adam_init(model)
    sched = PlateauScheduler(
        lr_input=cfg.lr_input,
        lr_deep=cfg.lr_deep,
        patience=cfg.patience,
        factor=cfg.factor,
        min_lr=cfg.min_lr,
        rel_threshold=cfg.rel_threshold,
    )
    history = []
    best_val = float("inf")
    best_params = None
    n = len(x_train)
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.shuffle_seed, epoch])
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            pred, cache = forward(model, x_train[idx], mode="train", rng=rng)
            loss, dpred = logcosh_loss(pred, y_train[idx])
            grads = backward(model, cache, dpred)
            adam_step(model, grads, state, sched.lr_input, sched.lr_deep, cfg.weight_decay)
            epoch_loss += loss * len(idx)
        train_loss = epoch_loss / n
        if len(x_val):
            val_pred, _ = forward(model, x_val, mode="eval")
            val_loss, _ = logcosh_loss(val_pred, y_val)
        else:
            val_loss = train_loss
        if val_loss < best_val:
            best_val = val_loss
            best_params = _snapshot(model)
        sched.step(val_loss)
        history.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "lr_input": sched.lr_input,
                "lr_deep": sched.lr_deep,
            }
        )
    if best_params is not None:
        _restore(model, best_params)
    return model, history


def _snapshot(model: MlpModel) -> dict:
    return {
        k: [a.copy() for a in getattr(model, k)]
        for k in ("weights", "biases", "gammas", "betas")
    }


def _restore(model: MlpModel, params: dict) -> None:
    for k, arrs in params.items():
        setattr(model, k, [a.copy() for a in arrs])


def pair_to_input(ref: SampledBrdf, dist: SampledBrdf, whitening: WhiteningStats) -> np.ndarray:
    """Clamp, transform, whiten, and concatenate a raw pair (reference first)."""
    check_paired(ref, dist)
    r = whiten(transform_sampled(ref), whitening)
    d = whiten(transform_sampled(dist), whitening)
    return np.concatenate([r.values.ravel(), d.values.ravel()])


def predict_jod(model: MlpModel, ref: SampledBrdf, dist: SampledBrdf) -> float:
    """Score one raw sampled pair with the embedded preprocessing."""
    x = pair_to_input(ref, dist, model.whitening)
    if x.shape[0] != model.input_dim:
        raise PairingError(
            f"pair produces input of length {x.shape[0]}, model expects {model.input_dim}"
        )
    pred, _ = forward(model, x[None, :], mode="eval")
    return float(pred[0, 0])


def save_checkpoint(model: MlpModel, path) -> None:
    """Text header + little-endian float32 blobs in fixed layer order.

    Blob order: per hidden layer W, b, gamma, beta; then the final W, b.
    """
    header = io.StringIO()
    header.write(f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n")
    header.write(f"input_dim {model.input_dim}\n")
    header.write("hidden " + " ".join(str(h) for h in model.hidden_widths) + "\n")
    header.write(f"jod_min {model.jod_min!r}\n")
    header.write(f"jod_max {model.jod_max!r}\n")
    header.write("whitening_mean " + " ".join(repr(float(v)) for v in model.whitening.mean) + "\n")
    header.write("whitening_std " + " ".join(repr(float(v)) for v in model.whitening.std) + "\n")
    header.write(f"seed {model.seed}\n")
    header.write(f"dropout {model.dropout!r}\n")
    blobs = []
    for i in range(len(model.gammas)):
        blobs += [model.weights[i], model.biases[i], model.gammas[i], model.betas[i]]
    blobs += [model.weights[-1], model.biases[-1]]
    payload = b"".join(np.ascontiguousarray(b, dtype="<f4").tobytes() for b in blobs)
    header.write(f"payload_bytes {len(payload)}\n")
    with open(str(path), "wb") as f:
        f.write(header.getvalue().encode("ascii"))
        f.write(b"\n")
        f.write(payload)


def load_checkpoint(path) -> MlpModel:
    with open(str(path), "rb") as f:
        data = f.read()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise CheckpointError("missing header/payload separator")
    try:
        lines = data[:sep].decode("ascii").splitlines()
        fields = {}
        magic = lines[0]
        for line in lines[1:]:
            key, _, rest = line.partition(" ")
            fields[key] = rest
        if magic != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
            raise CheckpointError(f"bad magic/version line {magic!r}")
        input_dim = int(fields["input_dim"])
        hidden = tuple(int(h) for h in fields["hidden"].split())
        jod_min = float(fields["jod_min"])
        jod_max = float(fields["jod_max"])
        whitening = WhiteningStats(
            mean=np.array([float(v) for v in fields["whitening_mean"].split()]),
            std=np.array([float(v) for v in fields["whitening_std"].split()]),
        )
        seed = int(fields["seed"])
        dropout = float(fields["dropout"])
        payload_bytes = int(fields["payload_bytes"])
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"malformed header: {exc}") from exc
    payload = data[sep + 2 :]
    if len(payload) != payload_bytes:
        raise CheckpointError(f"payload is {len(payload)} bytes, header says {payload_bytes}")
    dims = [input_dim, *hidden, 1]
    expected = sum(o * i + o for i, o in zip(dims[:-1], dims[1:])) + 2 * sum(hidden)
    if payload_bytes != 4 * expected:
        raise CheckpointError(f"payload holds {payload_bytes // 4} floats, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f4")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = flat[pos : pos + size].reshape(shape).copy()
        pos += size
        return out

    weights, biases, gammas, betas = [], [], [], []
    for i, h in enumerate(hidden):
        weights.append(take((h, dims[i])))
        biases.append(take((h,)))
        gammas.append(take((h,)))
        betas.append(take((h,)))
    weights.append(take((1, hidden[-1])))
    biases.append(take((1,)))
    return MlpModel(
        weights=weights,
        biases=biases,
        gammas=gammas,
        betas=betas,
        jod_min=jod_min,
        jod_max=jod_max,
        whitening=whitening,
        seed=seed,
        dropout=dropout,
    )
