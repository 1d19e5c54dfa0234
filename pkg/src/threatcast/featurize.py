"""N-gram vocabularies, sparse bag-of-n-gram vectors and CNN index sequences."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

PAD = "<PAD>"
UNK = "<UNK>"
DEFAULT_ORDERS = (2, 3, 4)
DEFAULT_MAX_LEN = 64


def unk_token(order: int) -> str:
    return f"<UNK_{order}>"


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    orders: tuple[int, ...] = ()  # empty for a unigram (word) vocabulary

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        if len(self._index) != len(self.tokens):
            raise ValidationError("vocabulary tokens must be unique")

    @property
    def token_to_index(self) -> dict[str, int]:
        return self._index

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def get(self, token: str, default: int | None = None) -> int | None:
        return self._index.get(token, default)

    @property
    def reserved(self) -> tuple[str, ...]:
        if self.orders:
            return (PAD,) + tuple(unk_token(n) for n in self.orders)
        return (PAD, UNK)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, tok in enumerate(self.tokens):
                fh.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    tok, idx = line.rsplit("\t", 1)
                    pairs.append((int(idx), tok))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise ValidationError(f"{path}: indices are not dense")
        tokens = tuple(t for _, t in pairs)
        orders = tuple(sorted(int(t[5:-1]) for t in tokens if t.startswith("<UNK_") and t.endswith(">")))
        return cls(tokens, orders)


@dataclass(frozen=True)
class SparseVector:
    indices: tuple[int, ...] = ()
    counts: tuple[int, ...] = ()

    def items(self) -> list[tuple[int, int]]:
        return list(zip(self.indices, self.counts))

    def total(self) -> int:
        return sum(self.counts)

    def __len__(self) -> int:
        return len(self.indices)


def extract_ngrams(tokens: Sequence[str], orders: Iterable[int] = DEFAULT_ORDERS) -> list[str]:
    orders = sorted(set(orders))
    if not orders:
        raise ValidationError("at least one n-gram order is required")
    out = []
    for n in orders:
        out.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return out


def _ranked(counts: Counter, min_count: int) -> list[str]:
    kept = [t for t, c in counts.items() if c >= min_count]
    return sorted(kept, key=lambda t: (-counts[t], t))


def build_vocab(corpus: Sequence[Sequence[str]], orders: Iterable[int] = DEFAULT_ORDERS,
                min_count: int = 2) -> Vocabulary:
    """Index n-grams seen at least ``min_count`` times; rarer ones fold into the per-order UNK."""
    if not corpus:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    orders = tuple(sorted(set(orders)))
    counts = Counter()
    for tokens in corpus:
        counts.update(extract_ngrams(tokens, orders))
    reserved = (PAD,) + tuple(unk_token(n) for n in orders)
    return Vocabulary(reserved + tuple(_ranked(counts, min_count)), orders)


def build_word_vocab(corpus: Sequence[Sequence[str]], min_count: int = 1) -> Vocabulary:
    if not corpus:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for tokens in corpus for t in tokens)
    return Vocabulary((PAD, UNK) + tuple(_ranked(counts, min_count)))


def vectorize(tokens: Sequence[str], vocab: Vocabulary) -> SparseVector:
    counts: Counter = Counter()
    for n in vocab.orders:
        unk = vocab.token_to_index[unk_token(n)]
        for i in range(len(tokens) - n + 1):
            counts[vocab.get(" ".join(tokens[i : i + n]), unk)] += 1
    idx = sorted(counts)
    return SparseVector(tuple(idx), tuple(counts[i] for i in idx))


def to_matrix(vectors: Sequence[SparseVector], dim: int) -> sp.csr_matrix:
    """Stack sparse vectors into an (n, dim) CSR matrix of float64 counts."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(v) for v in vectors])
    indices = np.fromiter((i for v in vectors for i in v.indices), dtype=np.int64, count=indptr[-1])
    data = np.fromiter((c for v in vectors for c in v.counts), dtype=np.float64, count=indptr[-1])
    if indices.size and (indices.min() < 0 or indices.max() >= dim):
        raise ValidationError(f"feature index outside [0, {dim})")
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def index_sequence(tokens: Sequence[str], word_vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    if max_len < 1:
        raise ValidationError(f"max_len must be >= 1, got {max_len}")
    unk = word_vocab.token_to_index[UNK]
    pad = word_vocab.token_to_index[PAD]
    seq = [word_vocab.get(t, unk) for t in tokens[:max_len]]
    return seq + [pad] * (max_len - len(seq))
