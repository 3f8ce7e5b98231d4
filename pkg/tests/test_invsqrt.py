import numpy as np
import pytest

from tripc.eigen import inverse_sqrt
from tripc.invsqrt import (ConfigurationError, InvSqrtAbort, MaskBounds, MaskParams, generate_mask_params,
                           invsqrt, mask_fraction_bits, validate_mask_ranges)
from tripc.numfmt import DEFAULT, FixedPointConfig, decode, encode
from tripc.session import Session

from conftest import run_shared

ILLUSTRATIVE = dict(max_lambda=2.0**5, max_alp=2.0**5, max_s=2.0**10, max_m=2.0**5, max_delta=2.0**10,
                    max_alpha=2.0**30)


def well_conditioned_gram(q, seed):
    v = np.random.default_rng(seed).standard_normal((q, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return 0.9 * (v @ v.T) + 0.1 * np.eye(q)


def private_invsqrt(g, seed=0):
    sess = Session(seed=seed)
    return decode(run_shared(sess, invsqrt, encode(g))), sess


def test_identity():
    r, _ = private_invsqrt(np.eye(4))
    assert np.max(np.abs(r - np.eye(4))) <= 1e-3


def test_two_by_two_against_eigen_oracle():
    g = np.array([[1.0, 0.5], [0.5, 1.0]])
    r, _ = private_invsqrt(g)
    assert np.max(np.abs(r - inverse_sqrt(g))) <= 1e-3
    assert np.max(np.abs(r @ r @ g - np.eye(2))) <= 1e-2


@pytest.mark.parametrize("seed", range(5))
def test_random_q16_defining_property(seed):
    g = well_conditioned_gram(16, seed)
    r, _ = private_invsqrt(g, seed)
    assert np.max(np.abs(r @ r @ g - np.eye(16))) <= 1e-2
    assert np.max(np.abs(r - r.T)) <= 1e-2


def test_rounds():
    _, sess = private_invsqrt(np.eye(3))
    rec = [r for r in sess.merged_records() if r.label == "INVSQRT" and r.level == 0][-1]
    assert rec.rounds == 14


def test_rank_deficient_aborts():
    v = np.random.default_rng(3).standard_normal((6, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    with pytest.raises(InvSqrtAbort):
        private_invsqrt(v @ v.T)


def test_unmasking_identity():
    gen = np.random.default_rng(4)
    lam = gen.uniform(0.1, 16, 16)
    delta = gen.uniform(1, 2**10, 16)
    alp, s, alpha = 7.0, 100.0, 2.0**28
    lam2 = delta * (alp * lam + s) + alpha
    exact = (lam2 - (s * delta + alpha)) / alp
    assert np.allclose(exact, delta * lam, rtol=1e-12)
    fx = (decode(encode(lam2)) - decode(encode(s * delta + alpha))) / alp
    assert np.max(np.abs(fx - delta * lam)) <= 1e-6


# ---------------------------------------------------------------- mask ranges

def test_generated_params_validate():
    p = generate_mask_params(16, rng=0)
    assert validate_mask_ranges(p, 16) == []
    assert p.s > 32
    assert np.max(np.abs(p.m @ p.m.T - np.eye(16))) <= 1e-9


def test_illustrative_bounds_are_feasible():
    assert validate_mask_ranges(MaskBounds(**ILLUSTRATIVE), 32) == []


@pytest.mark.parametrize("field,value,name", [
    ("min_s", 32.0, "const_min_s"),
    ("max_m", 2.0**12, "const_orth"),
    ("max_delta", 2.0**30, "const_delta"),
    ("max_alp", 2.0**20, "const_alp"),
    ("max_s", 2.0**40, "const_max_s"),
    ("min_alpha", 100.0, "const_min_alpha"),
    ("max_alpha", 2.0**44, "const_max_alpha"),
])
def test_single_violation_is_named(field, value, name):
    bad = validate_mask_ranges(MaskBounds(**{**ILLUSTRATIVE, field: value}), 32)
    assert any(b.startswith(name + ":") for b in bad)


def test_drawn_params_violation():
    p = generate_mask_params(8, rng=1)
    bad = validate_mask_ranges(MaskParams(p.m, p.alp, 8.0, p.delta, p.alpha_mask), 8)
    assert any(b.startswith("const_min_s") for b in bad)
    bad = validate_mask_ranges(MaskParams(p.m * 2, p.alp, p.s, p.delta, p.alpha_mask), 8)
    assert any(b.startswith("orthogonality") for b in bad)


def test_infeasible_configuration():
    with pytest.raises(ConfigurationError):
        generate_mask_params(16, FixedPointConfig(32, 10))
    assert mask_fraction_bits(16, DEFAULT, MaskBounds.for_size(16)) >= 8
