"""1D convolutional text classifier with max-over-time pooling and hand-derived gradients.

Layers: masked embedding lookup, one valid convolution per filter width, ReLU,
max over time, concatenation, affine output unit, sigmoid. Trained on binary
cross-entropy with Adam, batch size 1.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .featurize import DEFAULT_MAX_LEN, PAD, Vocabulary, index_sequence
from .linmodel import log1pexp, sigmoid
from .metrics import average_precision

_MAGIC = b"TCCNN001"


@dataclass(frozen=True)
class ConvConfig:
    embed_dim: int = 50
    widths: tuple[int, ...] = (3, 4, 5)
    n_filters: int = 100
    learning_rate: float = 0.001
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    epochs: int = 5
    max_len: int = DEFAULT_MAX_LEN
    seed: int = 0
    filter_init: float = 0.05
    oov_init: float = 0.01


@dataclass
class ConvModel:
    params: dict[str, np.ndarray]
    widths: tuple[int, ...]
    pad_index: int = 0

    @property
    def vocab_size(self) -> int:
        return self.params["embedding"].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.params["embedding"].shape[1]

    @property
    def n_filters(self) -> int:
        return self.params[f"conv{self.widths[0]}_w"].shape[0]

    def copy(self) -> "ConvModel":
        return copy.deepcopy(self)

    def save(self, path) -> None:
        """Binary layout: magic, u32 block count, then per block name, shape and float64 LE data."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(self.params)))
            for name, arr in self.params.items():
                raw = name.encode("ascii")
                fh.write(struct.pack("<H", len(raw)) + raw)
                fh.write(struct.pack("<B", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ConvModel":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValidationError(f"{path}: not a convolutional model file")
            (count,) = struct.unpack("<I", fh.read(4))
            params = {}
            for _ in range(count):
                (nlen,) = struct.unpack("<H", fh.read(2))
                name = fh.read(nlen).decode("ascii")
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                size = int(np.prod(shape)) if ndim else 1
                params[name] = np.frombuffer(fh.read(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        widths = tuple(sorted(int(k[4:-2]) for k in params if k.startswith("conv") and k.endswith("_w")))
        return cls(params, widths)


def param_names(widths: Sequence[int]) -> list[str]:
    names = ["embedding"]
    for w in widths:
        names += [f"conv{w}_w", f"conv{w}_b"]
    return names + ["out_w", "out_b"]


def init_model(vocab: Vocabulary, embeddings: Mapping[str, np.ndarray] | None = None,
               config: ConvConfig = ConvConfig()) -> ConvModel:
    """Pretrained rows are copied, other tokens drawn from U(-oov_init, oov_init), PAD row zero."""
    rng = np.random.default_rng(config.seed)
    d = config.embed_dim
    E = rng.uniform(-config.oov_init, config.oov_init, size=(len(vocab), d))
    for i, tok in enumerate(vocab.tokens):
        vec = embeddings.get(tok) if embeddings else None
        if vec is not None:
            if len(vec) != d:
                raise ValidationError(f"embedding for {tok!r} has dimension {len(vec)}, expected {d}")
            E[i] = vec
    pad = vocab.token_to_index[PAD]
    E[pad] = 0.0
    params = {"embedding": E}
    for w in config.widths:
        params[f"conv{w}_w"] = rng.uniform(-config.filter_init, config.filter_init, size=(config.n_filters, w, d))
        params[f"conv{w}_b"] = np.zeros(config.n_filters)
    params["out_w"] = np.zeros(config.n_filters * len(config.widths))
    params["out_b"] = np.zeros(1)
    return ConvModel(params, tuple(config.widths), pad)


@dataclass
class ForwardCache:
    indices: np.ndarray
    mask: np.ndarray
    shapes: dict[str, tuple[int, ...]]
    windows: dict[int, np.ndarray] = field(default_factory=dict)
    argmax: dict[int, np.ndarray] = field(default_factory=dict)
    pooled_pre: dict[int, np.ndarray] = field(default_factory=dict)
    features: np.ndarray | None = None
    logit: float = 0.0
    probability: float = 0.5


def forward(model: ConvModel, indices: Sequence[int]) -> tuple[float, ForwardCache]:
    idx = np.asarray(indices, dtype=np.int64)
    L = len(idx)
    if L < max(model.widths):
        raise ValidationError(f"sequence length {L} shorter than widest filter {max(model.widths)}")
    if idx.min() < 0 or idx.max() >= model.vocab_size:
        raise ValidationError("token index outside the embedding matrix")
    mask = idx != model.pad_index
    n_real = int(np.flatnonzero(mask)[-1]) + 1 if mask.any() else 0
    X = model.params["embedding"][idx] * mask[:, None]
    cache = ForwardCache(idx, mask, {k: v.shape for k, v in model.params.items()})
    pooled = []
    for w in model.widths:
        # windows that start on padding are masked out; at least one window always survives
        n_pos = max(n_real - w, 0) + 1
        win = np.ascontiguousarray(sliding_window_view(X, (w, X.shape[1]))[:n_pos, 0].reshape(n_pos, -1))
        W = model.params[f"conv{w}_w"].reshape(model.params[f"conv{w}_w"].shape[0], -1)
        pre = win @ W.T + model.params[f"conv{w}_b"]
        am = np.argmax(pre, axis=0)
        best = pre[am, np.arange(pre.shape[1])]
        cache.windows[w], cache.argmax[w], cache.pooled_pre[w] = win, am, best
        pooled.append(np.maximum(best, 0.0))
    h = np.concatenate(pooled)
    z = float(model.params["out_w"] @ h + model.params["out_b"][0])
    p = sigmoid(z)
    cache.features, cache.logit, cache.probability = h, z, p
    return p, cache


def loss(cache: ForwardCache, label: int) -> float:
    return float(log1pexp(cache.logit) - label * cache.logit)


def backward(model: ConvModel, cache: ForwardCache, label: int) -> dict[str, np.ndarray]:
    """Exact cross-entropy gradients for every parameter; the PAD row gets zero gradient."""
    if label not in (0, 1, True, False):
        raise ValidationError(f"label must be 0 or 1, got {label!r}")
    if cache.shapes != {k: v.shape for k, v in model.params.items()} or cache.features is None:
        raise ValidationError("forward cache does not belong to this model")
    dz = cache.probability - float(label)
    grads = {"out_w": dz * cache.features, "out_b": np.array([dz])}
    dh = dz * model.params["out_w"]
    dX = np.zeros((len(cache.indices), model.embed_dim))
    F = model.n_filters
    for k, w in enumerate(model.widths):
        Wf = model.params[f"conv{w}_w"]
        dpool = dh[k * F:(k + 1) * F] * (cache.pooled_pre[w] > 0)
        am = cache.argmax[w]
        grads[f"conv{w}_w"] = (dpool[:, None] * cache.windows[w][am]).reshape(Wf.shape)
        grads[f"conv{w}_b"] = dpool
        # scatter each filter's gradient back onto the window it pooled from
        onehot = np.zeros((cache.windows[w].shape[0], F))
        onehot[am, np.arange(F)] = dpool
        dwin = (onehot @ Wf.reshape(F, -1)).reshape(-1, w, model.embed_dim)
        for off in range(w):
            dX[off:off + len(dwin)] += dwin[:, off, :]
    dX *= cache.mask[:, None]
    dE = np.zeros_like(model.params["embedding"])
    np.add.at(dE, cache.indices, dX)
    grads["embedding"] = dE
    return {name: grads[name] for name in model.params}


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float = 0.001, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    b1, b2 = betas
    state.t += 1
    c1, c2 = 1 - b1 ** state.t, 1 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def predict_proba(model: ConvModel, sequences: Sequence[Sequence[int]]) -> np.ndarray:
    return np.array([forward(model, s)[0] for s in sequences], dtype=np.float64)


def mean_loss(model: ConvModel, sequences: Sequence[Sequence[int]], labels: Sequence[int]) -> float:
    return float(np.mean([loss(forward(model, s)[1], int(y)) for s, y in zip(sequences, labels)]))


def train_cnn(train, dev, vocab: Vocabulary, embeddings: Mapping[str, np.ndarray] | None = None,
              config: ConvConfig = ConvConfig(), history: list[dict] | None = None) -> ConvModel:
    """Adam, batch size 1, examples reshuffled each epoch; keeps the epoch with the best dev PR-AUC.

    ``train`` and ``dev`` are ``(sequences, labels)`` pairs of padded index sequences.
    """
    seqs, labels = train
    labels = [int(y) for y in labels]
    if not seqs or len(set(labels)) < 2:
        raise ValidationError("training set must contain both classes")
    model = init_model(vocab, embeddings, config)
    if config.epochs <= 0:
        return model
    dev_ok = dev is not None and any(int(y) for y in dev[1])
    state = AdamState.zeros_like(model.params)
    rng = np.random.default_rng(config.seed + 1)
    best, best_auc = None, -np.inf
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for i in rng.permutation(len(seqs)):
            _, cache = forward(model, seqs[i])
            total += loss(cache, labels[i])
            adam_step(model.params, backward(model, cache, labels[i]), state,
                      config.learning_rate, config.betas, config.eps)
        record = {"epoch": epoch, "train_loss": total / len(seqs)}
        if dev_ok:
            record["dev_auc"] = average_precision(predict_proba(model, dev[0]), [bool(int(y)) for y in dev[1]])
            if record["dev_auc"] > best_auc:
                best, best_auc = model.copy(), record["dev_auc"]
        if history is not None:
            history.append(record)
    return best if best is not None else model


class SequenceClassifier:
    """Tokens -> probability for a trained ConvModel and its word vocabulary."""

    def __init__(self, model: ConvModel, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN):
        if model.vocab_size != len(vocab):
            raise ValidationError("model and vocabulary sizes differ")
        self.model = model
        self.vocab = vocab
        self.max_len = max(max_len, max(model.widths))

    def probability(self, tokens: Sequence[str]) -> float:
        return forward(self.model, index_sequence(tokens, self.vocab, self.max_len))[0]

    def probabilities(self, docs: Sequence[Sequence[str]]) -> np.ndarray:
        return np.array([self.probability(t) for t in docs], dtype=np.float64)
