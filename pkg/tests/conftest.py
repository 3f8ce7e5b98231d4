import numpy as np
import pytest

from tripc.numfmt import DEFAULT
from tripc.prg import Prg
from tripc.rings import Ring, split
from tripc.session import Session


def share(codes, cfg=DEFAULT, rng=None):
    """Split ring codes into two uint64 share arrays."""
    rng = rng or Prg.from_seed("test-share")
    a, b = split(np.asarray(codes, dtype=np.uint64), Ring.full(cfg), rng)
    return a.value, b.value


def run_shared(sess, fn, *codes, extra=(), rng=None):
    """Share each input, run ``fn`` on all three parties, reconstruct."""
    pairs = [share(c, sess.cfg, rng) for c in codes]
    args = (
        tuple(p[0] for p in pairs) + tuple(extra),
        tuple(p[1] for p in pairs) + tuple(extra),
        tuple(np.zeros_like(p[0]) for p in pairs) + tuple(extra),
    )
    out = sess.run(fn, *args)
    return Ring.full(sess.cfg).add(out[0], out[1])


@pytest.fixture
def sess():
    s = Session(seed=11)
    yield s
    s.close()


@pytest.fixture
def rng():
    return Prg.from_seed("tests")
