import numpy as np
import pytest

from threatcast import glove
from threatcast.errors import ValidationError
from threatcast.glove import CooccurrenceTable, GloveConfig


def test_counts_are_distance_weighted_and_symmetric():
    table = glove.count_cooccurrences([["a", "b", "c"]], window=2)
    assert table.get("a", "b") == 1.0 and table.get("b", "a") == 1.0
    assert table.get("a", "c") == 0.5
    assert table.get("b", "c") == 1.0


def test_window_limits_pairs():
    table = glove.count_cooccurrences([["a", "b", "c"]], window=1)
    assert table.get("a", "c") == 0.0


def test_counts_never_cross_documents():
    table = glove.count_cooccurrences([["a"], ["b"]], window=5)
    assert len(table) == 0


def test_min_count_drops_rare_words():
    table = glove.count_cooccurrences([["a", "rare", "a"]], window=2, min_count=2)
    assert table.words == ("a",) and table.get("a", "a") == 1.0  # distance 2, counted both ways


def test_weight_function():
    assert glove.glove_weight(16, x_max=256) == pytest.approx(0.125)
    assert glove.glove_weight(100) == 1.0 and glove.glove_weight(500) == 1.0
    with pytest.raises(ValidationError):
        glove.glove_weight(0)


def test_single_pair_fits_log_count():
    table = CooccurrenceTable(("a", "b"), {(0, 1): 8.0})
    cfg = GloveConfig(dim=3, x_max=8.0, learning_rate=0.1, epochs=400, seed=0)
    emb = glove.train_embeddings(table, cfg)
    fitted = emb.main[0] @ emb.context[1] + emb.main_bias[0] + emb.context_bias[1]
    assert fitted == pytest.approx(np.log(8.0), abs=1e-3)


def test_init_ranges():
    cfg = GloveConfig(dim=4, seed=1)
    emb = glove.init_embeddings(5, "abcde", cfg)
    for arr in (emb.main, emb.context, emb.main_bias, emb.context_bias):
        assert np.abs(arr).max() <= 0.5 / 4


def test_table_binary_roundtrip(tmp_path):
    table = glove.count_cooccurrences([["x", "y", "z", "x"]], window=3)
    table.save(tmp_path / "c.bin")
    again = CooccurrenceTable.load(tmp_path / "c.bin", table.words)
    assert again.counts == table.counts
    (tmp_path / "bad.bin").write_bytes(b"\0" * 7)
    with pytest.raises(ValidationError):
        CooccurrenceTable.load(tmp_path / "bad.bin", table.words)


def test_vectors_text_roundtrip(tmp_path):
    table = glove.count_cooccurrences([["x", "y", "z"]], window=2)
    emb = glove.train_embeddings(table, GloveConfig(dim=3, epochs=2))
    emb.save_text(tmp_path / "v.txt")
    loaded = glove.load_vectors(tmp_path / "v.txt")
    assert all(np.array_equal(loaded[w], v) for w, v in emb.as_dict().items())


def test_neighbors():
    vecs = {"a": np.array([1.0, 0.0]), "b": np.array([0.9, 0.1]), "c": np.array([0.0, 1.0]),
            "d": np.array([0.9, 0.1])}
    assert [w for w, _ in glove.nearest_neighbors(vecs, "a", 2)] == ["b", "d"]
    with pytest.raises(KeyError):
        glove.nearest_neighbors(vecs, "zz", 1)
    assert glove.cosine(np.zeros(2), np.ones(2)) == 0.0


def test_empty_table_rejected():
    with pytest.raises(ValidationError):
        glove.train_embeddings(CooccurrenceTable(("a",), {}))
