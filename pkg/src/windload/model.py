"""Surface-pressure surrogate: message-passing encoder, optional reflection
symmetrization, feed-forward head, and the training loop.

The encoder is a stack of mean-aggregation message-passing layers with
residual connections, layer normalization, and a global skip from the input
projection. In ``equivariant`` mode the features and their spanwise
reflection pass through the same encoder and the two embeddings are
averaged, which makes predictions exactly invariant to reflection; in
``baseline`` mode the reflected branch is skipped.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import ConfigError, FormatError, NumericError, ShapeMismatchError
from .graph import SurfaceGraph, reflect_features

MODES = ("baseline", "equivariant")
TARGETS = ("cp_mean", "cp_std")
ACTIVATIONS = ("relu", "tanh", "identity")

CHECKPOINT_MAGIC = b"WMLM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    num_layers: int = 4
    activation: str = "relu"
    mode: str = "baseline"
    target: str = "cp_mean"
    seed: int = 0
    layer_norm: bool = True
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ConfigError("hidden_dim and num_layers must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}")

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "activation": self.activation,
            "mode": self.mode,
            "target": self.target,
            "seed": self.seed,
            "layer_norm": self.layer_norm,
            "ln_eps": self.ln_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 200
    patience: int = 20  # epochs without dev-RMSE improvement
    min_delta: float = 1e-4  # improvement below this does not reset patience

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "min_delta": self.min_delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class LayerParams:
    w_self: np.ndarray
    w_nbr: np.ndarray
    bias: np.ndarray
    ln_gain: np.ndarray
    ln_shift: np.ndarray


@dataclass
class ModelParams:
    """All learnable tensors, with the config that shaped them."""

    config: ModelConfig
    w_in: np.ndarray
    layers: list[LayerParams]
    head_w1: np.ndarray
    head_b1: np.ndarray
    head_w2: np.ndarray
    head_b2: np.ndarray

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in the fixed declaration order."""
        out = [("w_in", self.w_in)]
        for i, L in enumerate(self.layers):
            out += [
                (f"layers.{i}.w_self", L.w_self),
                (f"layers.{i}.w_nbr", L.w_nbr),
                (f"layers.{i}.bias", L.bias),
                (f"layers.{i}.ln_gain", L.ln_gain),
                (f"layers.{i}.ln_shift", L.ln_shift),
            ]
        out += [
            ("head_w1", self.head_w1),
            ("head_b1", self.head_b1),
            ("head_w2", self.head_w2),
            ("head_b2", self.head_b2),
        ]
        return out

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.named_tensors())

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            w_in=self.w_in.copy(),
            layers=[
                LayerParams(
                    L.w_self.copy(), L.w_nbr.copy(), L.bias.copy(),
                    L.ln_gain.copy(), L.ln_shift.copy(),
                )
                for L in self.layers
            ],
            head_w1=self.head_w1.copy(),
            head_b1=self.head_b1.copy(),
            head_w2=self.head_w2.copy(),
            head_b2=self.head_b2.copy(),
        )

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        for n, a in self.named_tensors():
            if n == name:
                a[...] = value
                return
        raise KeyError(name)


def init_params(config: ModelConfig) -> ModelParams:
    """Deterministic initialization: affine weights uniform in
    +-1/sqrt(fan_in), biases zero, layer-norm gain 1 and shift 0."""
    rng = np.random.default_rng(config.seed)
    H = config.hidden_dim

    def affine(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    w_in = affine(6, H)
    layers = []
    for _ in range(config.num_layers):
        layers.append(
            LayerParams(
                w_self=affine(H, H),
                w_nbr=affine(H, H),
                bias=np.zeros(H),
                ln_gain=np.ones(H),
                ln_shift=np.zeros(H),
            )
        )
    head_w1 = affine(H, H)
    head_w2 = affine(H, 1)
    return ModelParams(
        config=config,
        w_in=w_in,
        layers=layers,
        head_w1=head_w1,
        head_b1=np.zeros(H),
        head_w2=head_w2,
        head_b2=np.zeros(1),
    )


def aggregation_operator(graph: SurfaceGraph):
    """Row-normalized adjacency (mean over neighbors) and its transpose, as
    CSR matrices. Empty neighborhoods aggregate to the zero vector."""
    n = graph.node_count
    deg = graph.degree().astype(np.float64)
    inv = np.zeros(n)
    nz = deg > 0
    inv[nz] = 1.0 / deg[nz]
    data = np.repeat(inv, graph.degree())
    op = sp.csr_matrix((data, graph.neighbors, graph.offsets), shape=(n, n))
    return op, op.T.tocsr()


def _doubled_ops(ops):
    """Block-diagonal copies of the aggregation operator, for running the
    original and reflected feature branches as one stacked batch."""
    op, op_t = ops
    return (
        sp.block_diag([op, op], format="csr"),
        sp.block_diag([op_t, op_t], format="csr"),
    )


def _activation(name: str):
    if name == "relu":
        return ad.relu
    if name == "tanh":
        return ad.tanh
    return lambda t: t


def _tensor_dict(params: ModelParams) -> dict[str, ad.Tensor]:
    return {name: ad.Tensor(arr) for name, arr in params.named_tensors()}


def _sage_t(x, ops, pt, i, cfg):
    act = _activation(cfg.activation)
    op, op_t = ops
    m = ad.neighbor_mean(x, op, op_t)
    u = ad.affine_pair(
        x, m, pt[f"layers.{i}.w_self"], pt[f"layers.{i}.w_nbr"], pt[f"layers.{i}.bias"]
    )
    if cfg.layer_norm:
        u = ad.layer_norm(u, pt[f"layers.{i}.ln_gain"], pt[f"layers.{i}.ln_shift"], cfg.ln_eps)
    return ad.add(act(u), x)


def _encode_t(Xt, ops, pt, cfg):
    x0 = ad.matmul(Xt, pt["w_in"])
    x = x0
    for i in range(cfg.num_layers):
        x = _sage_t(x, ops, pt, i, cfg)
    return ad.add(x, x0)


def _embed_t(X, ops, pt, cfg, mode, ops2=None):
    if mode == "equivariant":
        # One stacked pass over (X; reflected X): row results of the shared
        # affine/normalization/aggregation ops are independent of the other
        # rows, so this equals running the two branches separately.
        X2 = np.vstack([X, reflect_features(X)])
        if ops2 is None:
            ops2 = _doubled_ops(ops)
        z2 = _encode_t(ad.Tensor(X2), ops2, pt, cfg)
        return ad.fold_mean(z2, X.shape[0])
    return _encode_t(ad.Tensor(X), ops, pt, cfg)


def _head_t(z, pt, cfg):
    act = _activation(cfg.activation)
    h = act(ad.affine(z, pt["head_w1"], pt["head_b1"]))
    y = ad.affine(h, pt["head_w2"], pt["head_b2"])
    return ad.reshape(y, (-1,))


def sage_layer(
    X_in: np.ndarray,
    graph: SurfaceGraph,
    layer: LayerParams,
    activation: str = "relu",
    use_layer_norm: bool = True,
    ln_eps: float = 1e-5,
) -> np.ndarray:
    """One message-passing layer on a plain array (forward only)."""
    if X_in.shape[0] != graph.node_count:
        raise ShapeMismatchError("row count must match graph node count")
    pt = {
        "layers.0.w_self": ad.Tensor(layer.w_self),
        "layers.0.w_nbr": ad.Tensor(layer.w_nbr),
        "layers.0.bias": ad.Tensor(layer.bias),
        "layers.0.ln_gain": ad.Tensor(layer.ln_gain),
        "layers.0.ln_shift": ad.Tensor(layer.ln_shift),
    }
    cfg = ModelConfig(
        hidden_dim=layer.w_self.shape[0],
        num_layers=1,
        activation=activation,
        layer_norm=use_layer_norm,
        ln_eps=ln_eps,
    )
    return _sage_t(ad.Tensor(X_in), aggregation_operator(graph), pt, 0, cfg).data


def encode(graph: SurfaceGraph, X: np.ndarray, params: ModelParams) -> np.ndarray:
    """Input projection, message-passing stack, global skip."""
    ops = aggregation_operator(graph)
    return _encode_t(ad.Tensor(X), ops, _tensor_dict(params), params.config).data


def symmetrize_encode(graph: SurfaceGraph, X: np.ndarray, params: ModelParams) -> np.ndarray:
    """Average of the encodings of the features and their reflection."""
    ops = aggregation_operator(graph)
    return _embed_t(X, ops, _tensor_dict(params), params.config, "equivariant").data


def forward(
    graph: SurfaceGraph, X: np.ndarray, params: ModelParams, mode: str | None = None
) -> np.ndarray:
    """Per-node predictions; mode defaults to the params' own config."""
    mode = params.config.mode if mode is None else mode
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    ops = aggregation_operator(graph)
    pt = _tensor_dict(params)
    return _head_t(_embed_t(X, ops, pt, params.config, mode), pt, params.config).data


def loss_and_gradients(
    graph: SurfaceGraph,
    X: np.ndarray,
    targets: np.ndarray,
    params: ModelParams,
    mode: str | None = None,
    _ops=None,
    _ops2=None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over nodes and its gradient for every tensor."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (graph.node_count,):
        raise ShapeMismatchError("targets length must equal node count")
    mode = params.config.mode if mode is None else mode
    ops = aggregation_operator(graph) if _ops is None else _ops
    pt = _tensor_dict(params)
    pred = _head_t(_embed_t(X, ops, pt, params.config, mode, ops2=_ops2), pt, params.config)
    loss = ad.mse(pred, targets)
    if not np.isfinite(loss.data):
        raise NumericError("non-finite training loss")
    ad.backward(loss)
    grads = {
        name: (pt[name].grad if pt[name].grad is not None else np.zeros_like(arr))
        for name, arr in params.named_tensors()
    }
    return float(loss.data), grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam_state(params: ModelParams) -> AdamState:
    return AdamState(
        m={n: np.zeros_like(a) for n, a in params.named_tensors()},
        v={n: np.zeros_like(a) for n, a in params.named_tensors()},
    )


def adam_step(
    params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, tc: TrainConfig
) -> tuple[ModelParams, AdamState]:
    """Standard bias-corrected moment update, in place."""
    state.t += 1
    b1, b2 = tc.beta1, tc.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, arr in params.named_tensors():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= tc.learning_rate * (m / c1) / (np.sqrt(v / c2) + tc.eps)
    return params, state


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    dev_rmse: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_rmse: float = float("inf")

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "dev_rmse": self.dev_rmse,
            "best_epoch": self.best_epoch,
            "best_dev_rmse": self.best_dev_rmse,
            "epochs_run": self.epochs_run,
        }


def _prepare(cases, target: str, mode: str):
    prepped = []
    for c in cases:
        g = c.graph
        ops = aggregation_operator(g)
        ops2 = _doubled_ops(ops) if mode == "equivariant" else None
        prepped.append((g, g.features, ops, ops2, c.labels.target(target)))
    return prepped


def pooled_rmse(params: ModelParams, prepped, mode: str) -> float:
    sse = 0.0
    count = 0
    for g, X, ops, ops2, y in prepped:
        pt = _tensor_dict(params)
        pred = _head_t(_embed_t(X, ops, pt, params.config, mode, ops2=ops2), pt, params.config).data
        r = pred - y
        sse += float(r @ r)
        count += len(r)
    return float(np.sqrt(sse / count))


def train(train_cases, dev_cases, config: ModelConfig, tc: TrainConfig):
    """Per-case Adam steps over seeded-shuffled epochs with dev-RMSE early
    stopping; returns the best-dev parameters and the epoch history.

    Cases must expose ``.graph`` (SurfaceGraph) and ``.labels`` (CpLabels).
    Training sees only the stored features; reflections enter solely through
    the equivariant encoder's feature symmetrization.
    """
    if not train_cases or not dev_cases:
        raise ConfigError("train and dev splits must be non-empty")
    params = init_params(config)
    state = init_adam_state(params)
    prep_train = _prepare(train_cases, config.target, config.mode)
    prep_dev = _prepare(dev_cases, config.target, config.mode)

    history = TrainHistory()
    best = params.copy()
    waited = 0
    for epoch in range(1, tc.max_epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, epoch)))
        losses = []
        for i in rng.permutation(len(prep_train)):
            g, X, ops, ops2, y = prep_train[i]
            try:
                loss, grads = loss_and_gradients(
                    g, X, y, params, config.mode, _ops=ops, _ops2=ops2
                )
            except NumericError as e:
                raise NumericError(f"diverged at epoch {epoch}: {e}") from e
            adam_step(params, grads, state, tc)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        dev_rmse = pooled_rmse(params, prep_dev, config.mode)
        if not np.isfinite(dev_rmse):
            raise NumericError(f"non-finite dev RMSE at epoch {epoch}")
        history.train_loss.append(train_loss)
        history.dev_rmse.append(dev_rmse)
        if dev_rmse < history.best_dev_rmse - tc.min_delta:
            history.best_dev_rmse = dev_rmse
            history.best_epoch = epoch
            best = params.copy()
            waited = 0
        else:
            waited += 1
        if waited >= tc.patience:
            break
    return best, history


# ---------------------------------------------------------------------------
# Checkpoints: magic, version, length-prefixed config JSON, then tensors in
# declaration order as little-endian float64 with shape headers.
# ---------------------------------------------------------------------------


def save_checkpoint(params: ModelParams, config: ModelConfig, path) -> None:
    if config != params.config:
        raise ConfigError("checkpoint config must match the params' config")
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in params.named_tensors():
            a = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes())


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<I", raw, 8)
    try:
        config = ModelConfig.from_dict(json.loads(raw[12 : 12 + blob_len].decode()))
    except (ValueError, TypeError) as e:
        raise FormatError(f"{path}: bad config blob: {e}") from e
    off = 12 + blob_len

    reference = init_params(config)
    tensors = {}
    for name, ref in reference.named_tensors():
        if off + 4 > len(raw):
            raise FormatError(f"{path}: truncated before tensor {name}")
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        if ndim > 8 or off + 4 * ndim > len(raw):
            raise FormatError(f"{path}: bad shape header for {name}")
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        if tuple(shape) != ref.shape:
            raise ConfigError(
                f"{path}: tensor {name} has shape {tuple(shape)}, config implies {ref.shape}"
            )
        n = int(np.prod(shape)) if ndim else 1
        if off + 8 * n > len(raw):
            raise FormatError(f"{path}: truncated tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    if off != len(raw):
        raise FormatError(f"{path}: trailing bytes after tensors")

    params = reference
    for name, _ in params.named_tensors():
        params.set_tensor(name, tensors[name])
    return params, config
