import math

import numpy as np
import pytest

from tripc.exponential import (contribution_tables, exp_oracle_codes, exponential, plaintext_exp_oracle,
                               tree_truncation_bound, usable_range)
from tripc.numfmt import DEFAULT, RangeError, decode, encode

from conftest import run_shared


def test_power_of_two_example(sess):
    got = decode(run_shared(sess, exponential, encode([3.0]), extra=(2.0,)))
    assert abs(got[0] - 8.0) <= tree_truncation_bound(8.0)


def test_negative_and_zero_exponents(sess):
    x = np.array([0.0, -1.0, -3.0, 0.5])
    got = decode(run_shared(sess, exponential, encode(x), extra=(2.0,)))
    assert np.all(np.abs(got - 2.0**x) <= tree_truncation_bound(2.0**x) + 2.0**-18)


def test_private_matches_oracle_codes(sess):
    x = np.linspace(-9.5, 9.5, 77)
    codes = encode(x)
    got = decode(run_shared(sess, exponential, codes, extra=(math.e,)))
    want = decode(exp_oracle_codes(codes, math.e))
    assert np.all(np.abs(got - want) <= tree_truncation_bound(want))


def test_rounds(sess):
    run_shared(sess, exponential, encode([1.0, 2.0]), extra=(math.e,))
    recs = [r for r in sess.merged_records() if r.label == "EXP" and r.level == 0]
    assert recs[-1].rounds == 24


def test_oracle_examples():
    assert plaintext_exp_oracle(0.0) == 1.0
    assert abs(plaintext_exp_oracle(1.0) - math.e) <= 64 * 2.0**-20 * math.e
    x = np.linspace(-3, 3, 61)
    assert np.max(np.abs(plaintext_exp_oracle(x) - np.exp(x))) < 1e-4


def test_oracle_range_error():
    assert usable_range(math.e) == pytest.approx(20 * math.log(2))
    with pytest.raises(RangeError):
        plaintext_exp_oracle(14.0)
    with pytest.raises(ValueError):
        plaintext_exp_oracle(1.0, base=-2.0)


def test_tables_saturate_and_underflow():
    t = contribution_tables(math.e)
    assert t.pos[0] == DEFAULT.half - 1  # e^(2^43) saturates
    assert t.neg[0] == 0
    assert decode(t.pos[-1]) == pytest.approx(math.exp(2.0**-20), abs=2.0**-20)
    with pytest.raises(ValueError):
        contribution_tables(0.0)


def test_scalar_oracle():
    assert isinstance(plaintext_exp_oracle(1.0), float)
