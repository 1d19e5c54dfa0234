"""Central finite-difference checks for the hand-derived gradients."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from threatcast import convnet, linmodel

STEP = 1e-5


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def random_cnn(rng: np.random.Generator):
    """Small CNN with every parameter random (out_w included, so conv gradients are non-zero)."""
    vocab = int(rng.integers(5, 12))
    d = int(rng.integers(2, 6))
    F = int(rng.integers(1, 4))
    widths = tuple(sorted(rng.choice([1, 2, 3, 4], size=int(rng.integers(1, 4)), replace=False).tolist()))
    params = {"embedding": rng.normal(0, 0.5, (vocab, d))}
    params["embedding"][0] = 0.0
    for w in widths:
        params[f"conv{w}_w"] = rng.normal(0, 0.5, (F, w, d))
        params[f"conv{w}_b"] = rng.normal(0, 0.1, F)
    params["out_w"] = rng.normal(0, 0.5, F * len(widths))
    params["out_b"] = rng.normal(0, 0.1, 1)
    model = convnet.ConvModel(params, widths, 0)
    length = int(rng.integers(max(widths), max(widths) + 6))
    n_real = int(rng.integers(1, length + 1))
    seq = rng.integers(1, vocab, size=n_real).tolist() + [0] * (length - n_real)
    return model, seq, int(rng.integers(0, 2))


def cnn_check(model: convnet.ConvModel, seq, label: int) -> float:
    _, cache = convnet.forward(model, seq)
    grads = convnet.backward(model, cache, label)
    analytic, numeric = [], []
    for name, p in model.params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + STEP
            up = convnet.loss(convnet.forward(model, seq)[1], label)
            flat[i] = old - STEP
            down = convnet.loss(convnet.forward(model, seq)[1], label)
            flat[i] = old
            g.reshape(-1)[i] = (up - down) / (2 * STEP)
        if name == "embedding":
            g[model.pad_index] = 0.0  # the PAD row is masked out of the forward pass
        analytic.append(grads[name].ravel())
        numeric.append(g.ravel())
    return rel_error(np.concatenate(analytic), np.concatenate(numeric))


def lr_check(rng: np.random.Generator) -> float:
    n, dim = int(rng.integers(3, 15)), int(rng.integers(2, 10))
    X = sp.random(n, dim, density=0.5, random_state=np.random.RandomState(int(rng.integers(1 << 30))),
                  data_rvs=lambda k: rng.integers(1, 4, size=k).astype(float), format="csr")
    y = rng.integers(0, 2, size=n).astype(float)
    w, b = rng.normal(0, 0.5, dim), float(rng.normal())
    l2 = float(rng.choice([0.0, 1e-4, 0.1]))
    _, gw, gb = linmodel.loss_and_grad(w, b, X, y, l2)
    num_w = np.zeros(dim)
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = STEP
        num_w[i] = (linmodel.loss_and_grad(w + e, b, X, y, l2)[0] - linmodel.loss_and_grad(w - e, b, X, y, l2)[0]) / (2 * STEP)
    num_b = (linmodel.loss_and_grad(w, b + STEP, X, y, l2)[0] - linmodel.loss_and_grad(w, b - STEP, X, y, l2)[0]) / (2 * STEP)
    return rel_error(np.r_[gw, gb], np.r_[num_w, num_b])
