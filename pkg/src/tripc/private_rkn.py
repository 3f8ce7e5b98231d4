"""Private RKN inference on secret-shared model and sequence.

The model owner encodes and splits anchors, weights and (optionally) the
inverse-root Gram matrices; the data owner splits the one-hot sequence.  The
forgetting factor and similarity sharpness stay public.  Per time step the
proxies run one batched EXP over all k*q anchor similarities and one batched
MUL for the recursion; all similarity dot products are batched up front.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exponential import exponential
from .invsqrt import MaskBounds, invsqrt
from .numfmt import DEFAULT, FixedPointConfig, U64, decode, encode, encode_nearest, truncate_share
from .prg import Prg
from .protocols import dot_product, matmul, mul
from .rings import Ring, split
from .rkn import PlainRknModel, rkn_forward
from .session import Session

SHARE_MAGIC = b"TPCS"


@dataclass(frozen=True)
class PublicModelInfo:
    q: int
    k: int
    d: int
    lam: float
    alpha: float
    alphabet: str
    ridge: float
    has_gram: bool
    n: int = 64
    dec: int = 20

    @property
    def cfg(self) -> FixedPointConfig:
        return FixedPointConfig(self.n, self.dec)


@dataclass
class SharedRknModel:
    """One party's view of an outsourced model (zeros on the helper)."""

    info: PublicModelInfo
    anchors: np.ndarray
    weights: np.ndarray
    gram_invsqrt: list[np.ndarray] | None = None

    @classmethod
    def placeholder(cls, info: PublicModelInfo) -> "SharedRknModel":
        grams = [np.zeros((info.q, info.q), dtype=U64) for _ in range(info.k)] if info.has_gram else None
        return cls(info, np.zeros((info.k, info.q, info.d), dtype=U64), np.zeros(info.q, dtype=U64), grams)

    def without_gram(self) -> "SharedRknModel":
        info = PublicModelInfo(**{**asdict(self.info), "has_gram": False})
        return SharedRknModel(info, self.anchors, self.weights, None)


def public_info(model: PlainRknModel) -> PublicModelInfo:
    return PublicModelInfo(model.q, model.k, model.d, model.lam, model.alpha, model.alphabet,
                           model.ridge, model.gram_invsqrt is not None, model.cfg.n, model.cfg.dec)


def outsource_model(model: PlainRknModel, rng: Prg | None = None) -> tuple[SharedRknModel, SharedRknModel]:
    """Encode and split every secret tensor of the model."""
    rng = rng or Prg()
    cfg = model.cfg
    ring = Ring.full(cfg)
    info = public_info(model)

    def share(x):
        # nearest rather than floor: a one-sided error in R and w adds up across q terms
        a, b = split(encode_nearest(x, cfg), ring, rng)
        return a.value, b.value

    z0, z1 = share(model.anchors)
    w0, w1 = share(model.weights)
    g0 = g1 = None
    if model.gram_invsqrt is not None:
        pairs = [share(r) for r in model.gram_invsqrt]
        g0, g1 = [p[0] for p in pairs], [p[1] for p in pairs]
    return SharedRknModel(info, z0, w0, g0), SharedRknModel(info, z1, w1, g1)


def outsource_sequence(seq, rng: Prg | None = None, cfg: FixedPointConfig = DEFAULT):
    """Split a one-hot sequence (entries 0 or encode(1))."""
    rng = rng or Prg()
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ValueError("sequence must be an s x d one-hot matrix")
    a, b = split(encode(seq, cfg), Ring.full(cfg), rng)
    return a.value, b.value


def reveal_prediction(s0, s1, cfg: FixedPointConfig = DEFAULT) -> float:
    return float(decode(Ring.full(cfg).add(s0, s1), cfg))


# ---------------------------------------------------------------- local helpers

def _scale(ctx, share, value: float) -> np.ndarray:
    """Multiply by a public real and restore the scale."""
    if ctx.is_helper:
        return ctx.placeholder(np.shape(share))
    prod = ctx.ring.mul(share, encode_nearest(value, ctx.cfg))
    return truncate_share(prod, ctx.i, ctx.cfg)


def _add_public(ctx, share, value) -> np.ndarray:
    return ctx.ring.add(share, ctx.public(encode_nearest(value, ctx.cfg)))


# ---------------------------------------------------------------- protocol

def private_gram(ctx, model: SharedRknModel) -> np.ndarray:
    """Shares of the ridge-regularized level-k anchor kernel matrix."""
    info = model.info
    q, k = info.q, info.k
    flat = np.ascontiguousarray(np.transpose(model.anchors, (1, 0, 2)).reshape(q, -1))
    rows, cols = np.triu_indices(q)
    with ctx.op("GRAM"):
        inner = dot_product(ctx, flat[rows], flat[cols])
        power = _scale(ctx, _add_public(ctx, inner, -float(k)), info.alpha)
        values = exponential(ctx, power, math.e)
        gram = np.zeros((q, q), dtype=U64)
        gram[rows, cols] = values
        gram[cols, rows] = values
        gram = _scale(ctx, gram, 1.0 - info.ridge)
        return _add_public(ctx, gram, info.ridge * np.eye(q))


def private_inference(ctx, model: SharedRknModel, seq, compute_invsqrt: bool = False,
                      bounds: MaskBounds | None = None) -> np.ndarray:
    """Shares of the model's prediction for the shared sequence.

    The helper passes a placeholder model and a zero sequence of the right
    shape.  With ``compute_invsqrt`` (or when the model carries no inverse
    roots) the level-k Gram inverse root is computed by the INVSQRT protocol.
    """
    info = model.info
    k, q, d = info.k, info.q, info.d
    seq = np.asarray(seq, dtype=U64)
    if seq.ndim != 2 or seq.shape[1] != d or seq.shape[0] < 1:
        raise ValueError(f"sequence shares must be s x {d} with s >= 1, got {seq.shape}")
    steps = seq.shape[0]
    with ctx.op("RKN"):
        x = np.broadcast_to(seq[:, None, None, :], (steps, k, q, d))
        z = np.broadcast_to(model.anchors[None], (steps, k, q, d))
        sims = dot_product(ctx, np.ascontiguousarray(x), np.ascontiguousarray(z))  # (s, k, q)
        powers = _scale(ctx, _add_public(ctx, sims, -1.0), info.alpha)

        one = ctx.public(encode(1.0, ctx.cfg))
        c = np.zeros((k + 1, q), dtype=U64)
        c[0] = one
        for t in range(steps):
            with ctx.op("STEP"):
                b = exponential(ctx, powers[t], math.e)
                grown = mul(ctx, np.ascontiguousarray(c[:-1]), b)
                c[1:] = ctx.ring.add(_scale(ctx, c[1:], info.lam), grown)

        if compute_invsqrt or model.gram_invsqrt is None:
            r = invsqrt(ctx, private_gram(ctx, model), bounds)
        else:
            r = model.gram_invsqrt[k - 1]
        feature = matmul(ctx, r, np.ascontiguousarray(c[k][:, None]))[:, 0]
        return dot_product(ctx, model.weights, feature)


# ---------------------------------------------------------------- in-process driver

@dataclass
class InferenceResult:
    prediction: float
    plaintext: float | None
    records: list = field(default_factory=list)
    total_rounds: int = 0
    total_bytes: int = 0


def infer_in_process(model: PlainRknModel, seq, seed=None, compute_invsqrt: bool = False,
                     with_oracle: bool = True, session: Session | None = None) -> InferenceResult:
    """Outsource, run the three parties in threads and reveal."""
    cfg = model.cfg
    rng = Prg.from_seed("owner", seed) if seed is not None else Prg()
    m0, m1 = outsource_model(model, rng)
    x0, x1 = outsource_sequence(seq, rng, cfg)
    sess = session or Session(cfg, seed=seed)
    before = len(sess[0].meter.records)
    placeholder = SharedRknModel.placeholder(m0.info)
    out = sess.run(
        private_inference,
        (m0, x0, compute_invsqrt),
        (m1, x1, compute_invsqrt),
        (placeholder, np.zeros_like(x0), compute_invsqrt),
    )
    records = sess.merged_records()[before:]
    top = [r for r in records if r.label == "RKN"]
    plain = rkn_forward(model, seq).prediction if with_oracle else None
    return InferenceResult(
        prediction=reveal_prediction(out[0], out[1], cfg),
        plaintext=plain,
        records=records,
        total_rounds=top[-1].rounds if top else 0,
        total_bytes=top[-1].bytes_sent if top else 0,
    )


# ---------------------------------------------------------------- share files

def _write_tensors(path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    header = dict(header, tensors=[[name, list(arr.shape)] for name, arr in tensors.items()])
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(SHARE_MAGIC + struct.pack("<I", len(blob)) + blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<u8").tobytes())


def _read_tensors(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != SHARE_MAGIC:
        raise ValueError(f"{path}: not a share file")
    (length,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + length])
    pos = 8 + length
    tensors = {}
    for name, shape in header.pop("tensors"):
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<u8", count=count, offset=pos).astype(U64).reshape(shape)
        tensors[name] = arr
        pos += 8 * count
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return header, tensors


def save_model_share(path, shared: SharedRknModel, role: int) -> None:
    tensors = {"anchors": shared.anchors, "weights": shared.weights}
    for j, g in enumerate(shared.gram_invsqrt or [], start=1):
        tensors[f"gram_invsqrt_{j}"] = g
    _write_tensors(path, {"kind": "model", "role": role, "public": asdict(shared.info)}, tensors)


def load_model_share(path) -> tuple[SharedRknModel, int]:
    header, tensors = _read_tensors(path)
    if header.get("kind") != "model":
        raise ValueError(f"{path}: not a model share")
    info = PublicModelInfo(**header["public"])
    grams = [tensors[f"gram_invsqrt_{j}"] for j in range(1, info.k + 1)] if info.has_gram else None
    return SharedRknModel(info, tensors["anchors"], tensors["weights"], grams), header["role"]


def save_sequence_share(path, share, role: int, cfg: FixedPointConfig, seq_id: str = "") -> None:
    _write_tensors(path, {"kind": "sequence", "role": role, "n": cfg.n, "dec": cfg.dec, "id": seq_id},
                   {"sequence": np.asarray(share, dtype=U64)})


def load_sequence_share(path) -> tuple[np.ndarray, dict]:
    header, tensors = _read_tensors(path)
    if header.get("kind") != "sequence":
        raise ValueError(f"{path}: not a sequence share")
    return tensors["sequence"], header


def save_public_info(path, info: PublicModelInfo) -> None:
    Path(path).write_text(json.dumps(asdict(info), indent=2, sort_keys=True) + "\n")


def load_public_info(path) -> PublicModelInfo:
    return PublicModelInfo(**json.loads(Path(path).read_text()))


def save_prediction_share(path, share, role: int, cfg: FixedPointConfig) -> None:
    _write_tensors(path, {"kind": "prediction", "role": role, "n": cfg.n, "dec": cfg.dec},
                   {"prediction": np.atleast_1d(np.asarray(share, dtype=U64))})


def load_prediction_share(path) -> tuple[np.ndarray, dict]:
    header, tensors = _read_tensors(path)
    if header.get("kind") != "prediction":
        raise ValueError(f"{path}: not a prediction share")
    return tensors["prediction"], header
