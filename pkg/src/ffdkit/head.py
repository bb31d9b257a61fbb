"""Trainable classification head over frozen embeddings.

A small fully-connected network - GELU between hidden layers, sigmoid output -
trained with Adam on mean binary cross-entropy. Forward, backward and the
optimizer are implemented directly in numpy at double precision; gradients are
exact for the implemented forward pass and are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit, ndtr

from .errors import (
    EmptyInputError,
    FfdkitError,
    InvalidInputError,
    InvalidLabelError,
    InvalidParameterError,
    SchemaError,
    ShapeMismatchError,
)
from .metrics import ScoreSet, det_curve, eer

DEFAULT_HIDDEN_DIMS = (364, 182, 64)

# BCE log arguments are clamped to this range; probabilities themselves are not.
LOSS_CLAMP = 1e-7

HEAD_FORMAT_TAG = "ffdkit-head-v1"


def hidden_dims_for_depth(depth: int) -> tuple[int, ...]:
    """Hidden layout for a given depth: prefixes of (364, 182, 64); 0 = affine probe."""
    if not 0 <= depth <= len(DEFAULT_HIDDEN_DIMS):
        raise InvalidParameterError(
            f"depth must be in [0, {len(DEFAULT_HIDDEN_DIMS)}], got {depth}"
        )
    return DEFAULT_HIDDEN_DIMS[:depth]


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x) with Phi the standard normal CDF (no tanh approximation)."""
    x = np.asarray(x, dtype=np.float64)
    return x * ndtr(x)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return ndtr(x) + x * pdf


@dataclass
class MlpHead:
    """Weights/biases per layer; layer_dims = (input D, hidden..., 1)."""

    layer_dims: tuple
    weights: list = field(repr=False)  # weights[k]: (layer_dims[k], layer_dims[k+1])
    biases: list = field(repr=False)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_dims) - 2

    def parameters(self) -> list:
        """Flat parameter list, layer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpHead":
        return MlpHead(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_head(
    input_dim: int, hidden_dims: tuple = DEFAULT_HIDDEN_DIMS, seed: int = 0
) -> MlpHead:
    """Seeded init: weights uniform in +/-sqrt(6/(fan_in+fan_out)), biases zero."""
    if input_dim < 1:
        raise InvalidParameterError(f"input_dim must be >= 1, got {input_dim}")
    dims = (int(input_dim), *(int(h) for h in hidden_dims), 1)
    if any(d < 1 for d in dims):
        raise InvalidParameterError(f"all layer dims must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpHead(layer_dims=dims, weights=weights, biases=biases)


@dataclass
class ForwardCache:
    inputs: list = field(repr=False)  # activation entering each layer
    pre: list = field(repr=False)  # pre-activation of each layer
    probs: np.ndarray = field(repr=False)


def forward(head: MlpHead, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Probabilities in (0,1) for a (n, D) batch, plus the cache for backward."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != head.input_dim:
        raise ShapeMismatchError(
            f"batch shape {x.shape} incompatible with input dim {head.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("batch contains non-finite values")
    inputs, pre = [], []
    a = x
    last = len(head.weights) - 1
    for k, (w, b) in enumerate(zip(head.weights, head.biases)):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        a = expit(z) if k == last else gelu(z)
    # expit saturates to exactly 0/1 for |z| beyond ~37; nudge back inside (0,1).
    probs = np.clip(a[:, 0], np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg)
    return probs, ForwardCache(inputs=inputs, pre=pre, probs=probs)


def predict(head: MlpHead, batch: np.ndarray) -> np.ndarray:
    return forward(head, batch)[0]


@dataclass
class HeadGradients:
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probs, LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def backward(
    head: MlpHead, cache: ForwardCache, labels: np.ndarray
) -> tuple[HeadGradients, float]:
    """Mean-BCE loss and exact gradients for every weight and bias."""
    y = np.asarray(labels)
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidLabelError("labels must be 0 or 1")
    y = y.astype(np.float64)
    n = cache.probs.shape[0]
    if y.shape != (n,):
        raise ShapeMismatchError(f"labels shape {y.shape} does not match batch size {n}")
    loss = bce_loss(cache.probs, y)
    # Sigmoid + BCE collapse: dL/dz_out = (p - y)/n.
    delta = ((cache.probs - y) / n)[:, None]
    grad_w = [None] * len(head.weights)
    grad_b = [None] * len(head.biases)
    for k in range(len(head.weights) - 1, -1, -1):
        grad_w[k] = cache.inputs[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ head.weights[k].T) * gelu_grad(cache.pre[k - 1])
    return HeadGradients(weights=grad_w, biases=grad_b), loss


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default=None, repr=False)
    v: list = field(default=None, repr=False)


def init_adam(params: list, lr: float) -> AdamState:
    if lr <= 0:
        raise InvalidParameterError(f"learning rate must be positive, got {lr}")
    return AdamState(
        lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params]
    )


def adam_step(params: list, grads: list, state: AdamState) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeMismatchError("params/grads/state length mismatch")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(f"shape mismatch: {p.shape} vs {g.shape}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 256
    seed: int = 0
    depth_grid: tuple = (1, 2, 3)
    lr_grid: tuple = (1e-3, 1e-4)

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParameterError("epochs must be >= 1")
        if self.lr <= 0:
            raise InvalidParameterError("lr must be positive")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        if not self.depth_grid or not self.lr_grid:
            raise InvalidParameterError("grids must be nonempty")


@dataclass
class TrainResult:
    head: MlpHead
    history: list  # one dict per epoch: epoch, train_loss, val_eer
    best_epoch: int | None
    best_val_eer: float | None
    final_val_eer: float | None


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Batch partitions are derived from data content, not arrival order, so a
    # permuted training set trains identically under the same seed.
    keys = [(X[i].tobytes(), int(y[i]), i) for i in range(X.shape[0])]
    return np.array([i for _, _, i in sorted(keys, key=lambda k: k[:2])], dtype=np.int64)


def _val_eer(head: MlpHead, X_val: np.ndarray, y_val: np.ndarray) -> float:
    scores = predict(head, X_val)
    curve = det_curve(ScoreSet(scores=scores, labels=y_val))
    return eer(curve)[0]


def train(
    head: MlpHead,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray | None,
    y_val: np.ndarray | None,
    cfg: TrainConfig,
) -> TrainResult:
    """Mini-batch Adam for cfg.epochs; keeps the snapshot with best validation EER.

    With no/empty validation set the final-epoch parameters are returned and
    no model selection happens. Deterministic for a fixed config and seed.
    """
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train)
    if X.size == 0 or X.ndim != 2:
        raise EmptyInputError("empty training set")
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidLabelError("training labels must be 0 or 1")
    have_val = X_val is not None and np.asarray(X_val).size > 0
    if have_val:
        X_val = np.asarray(X_val, dtype=np.float64)
        y_val = np.asarray(y_val)

    head = head.copy()
    params = head.parameters()
    state = init_adam(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    canonical = _canonical_order(X, y)
    Xc, yc = X[canonical], y[canonical]
    n = Xc.shape[0]

    history = []
    best_epoch = None
    best_val = math.inf
    best_params = None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs, cache = forward(head, Xc[idx])
            grads, _ = backward(head, cache, yc[idx])
            adam_step(params, grads.parameters(), state)
        train_loss = bce_loss(predict(head, Xc), yc)
        entry = {"epoch": epoch, "train_loss": train_loss}
        if have_val:
            val_eer = _val_eer(head, X_val, y_val)
            entry["val_eer"] = val_eer
            if val_eer < best_val:
                best_val = val_eer
                best_epoch = epoch
                best_params = [p.copy() for p in params]
        history.append(entry)

    final_val = history[-1].get("val_eer") if have_val else None
    if best_params is not None:
        selected = head.copy()
        for p, snap in zip(selected.parameters(), best_params):
            p[...] = snap
    else:
        selected = head
    return TrainResult(
        head=selected,
        history=history,
        best_epoch=best_epoch,
        best_val_eer=None if math.isinf(best_val) else best_val,
        final_val_eer=final_val,
    )


@dataclass
class GridCell:
    depth: int
    lr: float
    seed: int
    val_eer: float
    best_epoch: int | None
    result: TrainResult = field(repr=False)


@dataclass
class GridSearchResult:
    best: GridCell
    cells: list


def grid_search(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    init_seed: int | None = None,
) -> GridSearchResult:
    """One training run per (depth, lr) cell; argmin of validation EER wins.

    Ties break toward fewer layers, then smaller learning rate. Every cell
    trains from its own deterministic seed, so cells are order-independent.
    """
    if np.asarray(X_val).size == 0:
        raise EmptyInputError("grid search needs a validation split to select on")
    input_dim = np.asarray(X_train).shape[1]
    cells = []
    for di, depth in enumerate(cfg.depth_grid):
        for li, lr in enumerate(cfg.lr_grid):
            cell_seed = (init_seed if init_seed is not None else cfg.seed) + 101 * di + li
            cell_cfg = replace(cfg, lr=lr, seed=cell_seed)
            head0 = init_head(input_dim, hidden_dims_for_depth(depth), seed=cell_seed)
            try:
                result = train(head0, X_train, y_train, X_val, y_val, cell_cfg)
            except FfdkitError as exc:
                raise type(exc)(f"grid cell depth={depth} lr={lr}: {exc}") from exc
            cells.append(
                GridCell(
                    depth=depth,
                    lr=lr,
                    seed=cell_seed,
                    val_eer=result.best_val_eer,
                    best_epoch=result.best_epoch,
                    result=result,
                )
            )
    best = min(cells, key=lambda c: (c.val_eer, c.depth, c.lr))
    return GridSearchResult(best=best, cells=cells)


def save_head(head: MlpHead, path: str | Path, meta: dict | None = None) -> None:
    """One file: JSON header line, then float32-le parameters in layer order."""
    header = {
        "format": HEAD_FORMAT_TAG,
        "layer_dims": list(head.layer_dims),
        "activation": "gelu",
        "output": "sigmoid",
        "dtype": "float32-le",
        "meta": meta or {},
    }
    blob = b"".join(p.astype("<f4").tobytes() for p in head.parameters())
    Path(path).write_bytes(json.dumps(header).encode() + b"\n" + blob)


def load_head(path: str | Path) -> tuple[MlpHead, dict]:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise SchemaError(f"missing header line in {path}")
    try:
        header = json.loads(raw[:newline])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"bad header in {path}: {exc}") from None
    if header.get("format") != HEAD_FORMAT_TAG:
        raise SchemaError(f"not a serialized head: {path}")
    dims = tuple(header["layer_dims"])
    blob = raw[newline + 1 :]
    expected = sum((a * b + b) for a, b in zip(dims[:-1], dims[1:])) * 4
    if len(blob) != expected:
        raise SchemaError(f"parameter blob is {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out].copy())
        offset += fan_out
    return MlpHead(layer_dims=dims, weights=weights, biases=biases), header.get("meta", {})
