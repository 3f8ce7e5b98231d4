import math

import numpy as np
import pytest

from tripc.rkn import (DNA, PROTEIN, ModelError, PlainRknModel, anchor_gram, encode_sequence, load_model,
                       make_synthetic_model, random_sequence, read_sequences, rkn_forward, save_model,
                       without_gram)


def trivial_model(**kw):
    z = np.zeros((1, 1, 4))
    z[0, 0, 2] = 1.0
    args = dict(anchors=z, lam=0.5, alpha=0.6, weights=np.array([1.0]), gram_invsqrt=[np.eye(1)])
    return PlainRknModel(**{**args, **kw}).validate()


def test_trivial_prediction_is_one():
    assert rkn_forward(trivial_model(), encode_sequence("G")).prediction == pytest.approx(1.0)


def test_orthogonal_character():
    trace = rkn_forward(trivial_model(), encode_sequence("A"))
    assert trace.mappings[0, 0, 0] == pytest.approx(math.exp(-0.6))


def _memoryless_oracle(model, x):
    """c_k[s] for lambda = 0: the product of b_j along the last k positions."""
    s, k = len(x), model.k
    if s < k:
        return np.zeros(model.q)
    out = np.ones(model.q)
    for j in range(1, k + 1):
        t = s - k + j - 1
        out *= np.exp(model.alpha * (model.anchors[j - 1] @ x[t] - 1.0))
    return out


@pytest.mark.parametrize("length", [2, 3, 9])
def test_lambda_zero_matches_unrolled_product(length):
    m = make_synthetic_model(5, 3, seed=1)
    m.lam = 0.0  # bypasses validation on purpose
    x = encode_sequence(random_sequence(length, seed=length))
    trace = rkn_forward(m, x)
    assert np.allclose(trace.mappings[-1, -1], _memoryless_oracle(m, x), rtol=1e-12, atol=0)


def test_invariants_on_synthetic_model():
    m = make_synthetic_model(16, 5, seed=2)
    trace = rkn_forward(m, encode_sequence(random_sequence(20, seed=2)))
    b_bounds = np.exp(m.alpha * (m.anchors @ np.eye(4)[0] - 1.0))
    assert np.all((b_bounds > 0) & (b_bounds <= 1))
    assert np.all(trace.mappings >= 0)
    for j in range(1, m.k + 1):
        r = m.gram_invsqrt[j - 1]
        assert np.max(np.abs(r @ r @ anchor_gram(m, j) - np.eye(16))) <= 1e-6


def test_deterministic():
    a, b = make_synthetic_model(8, 3, seed=5), make_synthetic_model(8, 3, seed=5)
    assert np.array_equal(a.anchors, b.anchors) and a.lam == b.lam
    x = encode_sequence("ACGTTGCA")
    assert rkn_forward(a, x).prediction == rkn_forward(b, x).prediction


def test_gram_fallback_matches_stored():
    m = make_synthetic_model(6, 2, seed=3)
    x = encode_sequence("GATTACA")
    assert rkn_forward(without_gram(m), x).prediction == pytest.approx(rkn_forward(m, x).prediction, abs=1e-10)


def test_save_load_roundtrip(tmp_path):
    m = make_synthetic_model(4, 3, seed=4)
    save_model(m, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert np.array_equal(back.anchors, m.anchors) and np.array_equal(back.weights, m.weights)
    assert back.lam == m.lam and back.alpha == m.alpha
    assert all(np.array_equal(a, b) for a, b in zip(back.gram_invsqrt, m.gram_invsqrt))


def test_load_without_gram_flags_invsqrt(tmp_path):
    save_model(without_gram(make_synthetic_model(4, 2, seed=6)), tmp_path / "m.txt")
    assert load_model(tmp_path / "m.txt").needs_invsqrt


def test_load_rejects_bad_files(tmp_path):
    m = make_synthetic_model(3, 2, seed=7)
    path = tmp_path / "m.txt"
    save_model(m, path)
    text = path.read_text()
    first_row = text.split("[anchors]\n")[1].splitlines()[0]
    path.write_text(text.replace(first_row, " ".join(["0.9"] * 4), 1))
    with pytest.raises(ModelError, match="normalized"):
        load_model(path)
    path.write_text(text.replace("q = 3", "q = 4"))
    with pytest.raises(ModelError):
        load_model(path)
    path.write_text("[anchors]\n1 2\n")
    with pytest.raises(ModelError, match="missing"):
        load_model(path)


def test_validation_errors():
    with pytest.raises(ModelError):
        trivial_model(lam=1.5)
    with pytest.raises(ModelError):
        trivial_model(weights=np.ones(2))
    with pytest.raises(ModelError):
        trivial_model(gram_invsqrt=[np.eye(1) * 2])
    with pytest.raises(ModelError):
        rkn_forward(trivial_model(), np.zeros((2, 3)))


def test_encode_sequence():
    assert encode_sequence("AC").tolist() == [[1, 0, 0, 0], [0, 1, 0, 0]]
    empty = encode_sequence("")
    assert empty.shape == (0, 4)
    with pytest.raises(ModelError):
        rkn_forward(trivial_model(), empty)
    with pytest.raises(ModelError):
        encode_sequence("ACX")
    x = encode_sequence(PROTEIN, PROTEIN)
    assert np.array_equal(x, np.eye(20))
    assert "".join(PROTEIN[i] for i in x.argmax(axis=1)) == PROTEIN


def test_protein_model():
    m = make_synthetic_model(4, 2, d=20, seed=8)
    assert m.alphabet == PROTEIN
    rkn_forward(m, encode_sequence("MKV", PROTEIN))


def test_read_sequences(tmp_path):
    p = tmp_path / "seqs.txt"
    p.write_text("# comment\ns1 ACGT\n\ns2 GGA\n")
    assert read_sequences(p) == [("s1", "ACGT"), ("s2", "GGA")]
    p.write_text("only-one-field\n")
    with pytest.raises(ModelError):
        read_sequences(p)
    assert DNA == "ACGT"
