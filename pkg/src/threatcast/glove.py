"""Domain word embeddings trained with the GloVe weighted least-squares objective."""

from __future__ import annotations

import struct
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

# binary co-occurrence record: little-endian uint32 row, uint32 column, float64 weight
_TRIPLE = struct.Struct("<IId")


@dataclass
class CooccurrenceTable:
    words: tuple[str, ...]
    counts: dict[tuple[int, int], float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.counts)

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        keys = sorted(self.counts)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([k[1] for k in keys], dtype=np.int64)
        vals = np.array([self.counts[k] for k in keys], dtype=np.float64)
        return rows, cols, vals

    def get(self, a: str, b: str) -> float:
        index = {w: i for i, w in enumerate(self.words)}
        return self.counts.get((index[a], index[b]), 0.0)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            for (i, j) in sorted(self.counts):
                fh.write(_TRIPLE.pack(i, j, self.counts[(i, j)]))

    @classmethod
    def load(cls, path, words: Sequence[str]) -> "CooccurrenceTable":
        counts = {}
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) % _TRIPLE.size:
            raise ValidationError(f"{path}: truncated co-occurrence file")
        for i, j, x in _TRIPLE.iter_unpack(data):
            counts[(i, j)] = x
        return cls(tuple(words), counts)


def count_cooccurrences(corpus: Sequence[Sequence[str]], window: int = 10, min_count: int = 1) -> CooccurrenceTable:
    """Symmetric 1/distance-weighted counts within ``window`` tokens of the same tweet."""
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window}")
    freq = Counter(t for doc in corpus for t in doc)
    words = sorted((w for w, c in freq.items() if c >= min_count), key=lambda w: (-freq[w], w))
    index = {w: i for i, w in enumerate(words)}
    counts: dict[tuple[int, int], float] = defaultdict(float)
    for doc in corpus:
        ids = [index.get(t) for t in doc]
        for p, i in enumerate(ids):
            if i is None:
                continue
            for d in range(1, window + 1):
                if p + d >= len(ids):
                    break
                j = ids[p + d]
                if j is None:
                    continue
                counts[(i, j)] += 1.0 / d
                counts[(j, i)] += 1.0 / d
    return CooccurrenceTable(tuple(words), dict(counts))


def glove_weight(x: float, x_max: float = 100.0, alpha: float = 0.75) -> float:
    if x <= 0:
        raise ValidationError("co-occurrence weight must be positive")
    return (x / x_max) ** alpha if x < x_max else 1.0


@dataclass(frozen=True)
class GloveConfig:
    dim: int = 50
    window: int = 10
    x_max: float = 100.0
    alpha: float = 0.75
    learning_rate: float = 0.05
    epochs: int = 15
    seed: int = 0


@dataclass
class EmbeddingMatrix:
    words: tuple[str, ...]
    main: np.ndarray
    context: np.ndarray
    main_bias: np.ndarray
    context_bias: np.ndarray

    @property
    def dim(self) -> int:
        return self.main.shape[1]

    def vectors(self) -> np.ndarray:
        return self.main + self.context

    def as_dict(self) -> dict[str, np.ndarray]:
        vecs = self.vectors()
        return {w: vecs[i] for i, w in enumerate(self.words)}

    def save_text(self, path) -> None:
        save_vectors(path, self.words, self.vectors())


def save_vectors(path, words: Sequence[str], vectors: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for w, v in zip(words, vectors):
            fh.write(w + " " + " ".join(repr(float(x)) for x in v) + "\n")


def load_vectors(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValidationError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            out[parts[0]] = vec
    return out


def glove_loss(emb: EmbeddingMatrix, table: CooccurrenceTable, config: GloveConfig = GloveConfig()) -> float:
    rows, cols, vals = table.entries()
    pred = np.einsum("ij,ij->i", emb.main[rows], emb.context[cols]) + emb.main_bias[rows] + emb.context_bias[cols]
    weight = np.where(vals < config.x_max, (vals / config.x_max) ** config.alpha, 1.0)
    return float(np.sum(weight * (pred - np.log(vals)) ** 2))


def init_embeddings(n_words: int, words: Sequence[str], config: GloveConfig) -> EmbeddingMatrix:
    rng = np.random.default_rng(config.seed)
    half = 0.5 / config.dim

    def uni(*shape):
        return rng.uniform(-half, half, size=shape)

    return EmbeddingMatrix(tuple(words), uni(n_words, config.dim), uni(n_words, config.dim),
                           uni(n_words), uni(n_words))


def train_embeddings(table: CooccurrenceTable, config: GloveConfig = GloveConfig(),
                     losses: list[float] | None = None) -> EmbeddingMatrix:
    """AdaGrad over shuffled table entries, one pass per epoch.

    Per-epoch losses (before the first epoch, then after each) are appended to ``losses``.
    """
    if not table.counts:
        raise ValidationError("co-occurrence table is empty")
    n = len(table.words)
    emb = init_embeddings(n, table.words, config)
    W, C, bw, bc = emb.main, emb.context, emb.main_bias, emb.context_bias
    # AdaGrad accumulators start at 1 as in the reference implementation
    gW, gC = np.ones_like(W), np.ones_like(C)
    gbw, gbc = np.ones(n), np.ones(n)
    rows, cols, vals = table.entries()
    log_vals = np.log(vals)
    weights = np.where(vals < config.x_max, (vals / config.x_max) ** config.alpha, 1.0)
    rng = np.random.default_rng(config.seed + 1)
    lr = config.learning_rate
    if losses is not None:
        losses.append(glove_loss(emb, table, config))
    for _ in range(config.epochs):
        for e in rng.permutation(len(vals)):
            i, j = rows[e], cols[e]
            wi, cj = W[i], C[j]
            fdiff = weights[e] * (wi @ cj + bw[i] + bc[j] - log_vals[e])
            grad_w = fdiff * cj
            grad_c = fdiff * wi
            W[i] -= lr * grad_w / np.sqrt(gW[i])
            C[j] -= lr * grad_c / np.sqrt(gC[j])
            gW[i] += grad_w * grad_w
            gC[j] += grad_c * grad_c
            bw[i] -= lr * fdiff / np.sqrt(gbw[i])
            bc[j] -= lr * fdiff / np.sqrt(gbc[j])
            gbw[i] += fdiff * fdiff
            gbc[j] += fdiff * fdiff
        if losses is not None:
            losses.append(glove_loss(emb, table, config))
    return emb


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def nearest_neighbors(emb: EmbeddingMatrix | dict, token: str, k: int) -> list[tuple[str, float]]:
    """Top-k other tokens by cosine similarity, ties lexicographic."""
    vecs = emb.as_dict() if isinstance(emb, EmbeddingMatrix) else emb
    if token not in vecs:
        raise KeyError(token)
    if k <= 0:
        return []
    query = vecs[token]
    sims = [(w, cosine(query, v)) for w, v in vecs.items() if w != token]
    sims.sort(key=lambda ws: (-ws[1], ws[0]))
    return sims[:k]
