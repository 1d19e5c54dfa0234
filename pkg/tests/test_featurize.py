import pytest
from hypothesis import given
from hypothesis import strategies as st

from threatcast import featurize
from threatcast.errors import ValidationError
from threatcast.featurize import PAD, UNK, Vocabulary


def test_extract_ngrams_orders():
    assert featurize.extract_ngrams(["a", "b", "c"], (2, 3)) == ["a b", "b c", "a b c"]
    assert featurize.extract_ngrams(["a"], (2,)) == []


def test_vocab_layout_and_min_count():
    docs = [["a", "b", "c"], ["a", "b", "d"], ["x", "y"]]
    vocab = featurize.build_vocab(docs, (2, 3), min_count=2)
    assert vocab.tokens == (PAD, "<UNK_2>", "<UNK_3>", "a b")


def test_vocab_frequency_then_lexicographic():
    docs = [["b", "c"], ["b", "c"], ["a", "b"], ["a", "b"], ["z", "z"], ["z", "z"], ["z", "z"]]
    vocab = featurize.build_vocab(docs, (2,), min_count=2)
    assert vocab.tokens[2:] == ("z z", "a b", "b c")


def test_vectorize_unknowns_per_order():
    vocab = Vocabulary((PAD, "<UNK_2>", "<UNK_3>", "a b"), (2, 3))
    vec = featurize.vectorize(["a", "b", "c", "d"], vocab)
    # bigrams: a b (known), b c, c d -> UNK_2 twice; trigrams: two unknown
    assert vec.items() == [(1, 2), (2, 2), (3, 1)]
    assert vec.total() == 5


def test_to_matrix_shape_and_bounds():
    vocab = Vocabulary((PAD, "<UNK_2>", "a b"), (2,))
    X = featurize.to_matrix([featurize.vectorize(["a", "b"], vocab), featurize.vectorize([], vocab)], len(vocab))
    assert X.shape == (2, 3) and X[0, 2] == 1.0 and X[1].nnz == 0
    with pytest.raises(ValidationError):
        featurize.to_matrix([featurize.SparseVector((5,), (1,))], 3)


def test_word_vocab_and_index_sequence():
    vocab = featurize.build_word_vocab([["b", "a", "b"]])
    assert vocab.tokens == (PAD, UNK, "b", "a")
    assert featurize.index_sequence(["a", "q"], vocab, 4) == [3, 1, 0, 0]
    assert featurize.index_sequence(["a"] * 9, vocab, 3) == [3, 3, 3]


def test_vocab_save_load(tmp_path):
    vocab = featurize.build_vocab([["a", "b", "c"]] * 2, (2, 4))
    vocab.save(tmp_path / "v.tsv")
    loaded = Vocabulary.load(tmp_path / "v.tsv")
    assert loaded == vocab and loaded.orders == (2, 4)


def test_duplicate_tokens_rejected():
    with pytest.raises(ValidationError):
        Vocabulary((PAD, "x", "x"))


words = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=10)


@given(st.lists(words, min_size=1, max_size=8), words)
def test_vectorize_counts_every_ngram(corpus, doc):
    vocab = featurize.build_vocab(corpus, (2, 3, 4), min_count=1)
    vec = featurize.vectorize(doc, vocab)
    assert vec.total() == sum(max(len(doc) - n + 1, 0) for n in (2, 3, 4))
    assert list(vec.indices) == sorted(vec.indices)
    assert 0 not in vec.indices  # padding never counted
