import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from threatcast import featurize, linmodel
from threatcast.errors import ValidationError
from threatcast.linmodel import LinearConfig, LinearModel

import synthetic


def test_sigmoid_reference_values():
    assert linmodel.sigmoid(0.0) == 0.5
    assert linmodel.sigmoid(1.40) == pytest.approx(0.802, abs=5e-4)
    assert linmodel.sigmoid(-800.0) == 0.0 and linmodel.sigmoid(800.0) == 1.0


@given(st.floats(-700, 700))
def test_log1pexp_stable(z):
    assert linmodel.log1pexp(z) == pytest.approx(np.logaddexp(0.0, z), rel=1e-12, abs=1e-300)


def test_loss_at_zero_is_log_two():
    X = sp.csr_matrix(np.eye(3))
    loss, gw, gb = linmodel.loss_and_grad(np.zeros(3), 0.0, X, np.array([1.0, 0.0, 1.0]), 1e-4)
    assert loss == pytest.approx(np.log(2))
    assert gw.tolist() == pytest.approx([-1 / 6, 1 / 6, -1 / 6])
    assert gb == pytest.approx(-1 / 6)


def test_predict_single_vector():
    model = LinearModel(np.array([0.0, 1.0, 0.2]), 0.0)
    assert linmodel.predict(model, featurize.SparseVector((1, 2), (1, 2))) == pytest.approx(linmodel.sigmoid(1.4))
    with pytest.raises(ValidationError):
        linmodel.predict(model, featurize.SparseVector((3,), (1,)))


def test_zero_epochs_returns_zero_model():
    X = sp.csr_matrix(np.eye(2))
    model = linmodel.train((X, [0, 1]), config=LinearConfig(epochs=0))
    assert not model.weights.any() and model.bias == 0.0


def test_single_class_rejected():
    with pytest.raises(ValidationError):
        linmodel.train((sp.csr_matrix(np.eye(2)), [1, 1]))


def test_loss_never_increases_with_backtracking():
    docs, y = synthetic.separable_bigrams(80, 2)
    vocab = featurize.build_vocab(docs)
    X = featurize.to_matrix([featurize.vectorize(d, vocab) for d in docs], len(vocab))
    log = linmodel.TrainingLog()
    linmodel.train((X, y), config=LinearConfig(learning_rate=5.0, epochs=50), log=log)
    losses = [r.loss for r in log.records]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert any(r.step < 5.0 for r in log.records[1:])


def test_dev_selection_records_best_epoch():
    docs, y = synthetic.separable_bigrams(60, 4)
    vocab = featurize.build_vocab(docs)
    X = featurize.to_matrix([featurize.vectorize(d, vocab) for d in docs], len(vocab))
    log = linmodel.TrainingLog()
    linmodel.train((X[:40], y[:40]), (X[40:], y[40:]), LinearConfig(epochs=20), log=log)
    aucs = [r.dev_auc for r in log.records[1:]]
    assert log.best_epoch == 1 + int(np.argmax(aucs))


def test_top_features_and_classifier(tmp_path):
    docs, y = synthetic.separable_bigrams(100, 0)
    vocab = featurize.build_vocab(docs)
    X = featurize.to_matrix([featurize.vectorize(d, vocab) for d in docs], len(vocab))
    model = linmodel.train((X, y), config=LinearConfig(epochs=100))
    top = linmodel.top_features(model, vocab, 3)
    assert top[0][0] == "zero day" and not any(t.startswith("<") for t, _ in top)
    model.save(tmp_path / "m.txt")
    again = LinearModel.load(tmp_path / "m.txt")
    assert np.array_equal(again.weights, model.weights) and again.bias == model.bias
    clf = linmodel.NgramClassifier(again, vocab)
    assert clf.probability(["x", "zero", "day"]) > 0.5 > clf.probability(["patch", "released"])


def test_load_rejects_truncated(tmp_path):
    (tmp_path / "m.txt").write_text("vocab_size\t3\nbias\t0.0\n1.0\n")
    with pytest.raises(ValidationError):
        LinearModel.load(tmp_path / "m.txt")
