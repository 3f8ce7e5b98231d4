"""Plaintext recurrent kernel network: the reference forward pass, synthetic
models and the text model format.

Model file layout::

    # tripc rkn model
    n = 64
    dec = 20
    q = 16
    ...
    [anchors]          k*q rows of d numbers (level-major)
    [weights]          q numbers on one line
    [gram_invsqrt 1]   q rows of q numbers, one block per level (optional)

Numbers are written with ``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .eigen import inverse_sqrt
from .numfmt import DEFAULT, FixedPointConfig

DNA = "ACGT"
PROTEIN = "ACDEFGHIKLMNPQRSTVWY"
RIDGE = 0.1


class ModelError(ValueError):
    pass


@dataclass
class PlainRknModel:
    anchors: np.ndarray  # (k, q, d), unit rows
    lam: float
    alpha: float
    weights: np.ndarray  # (q,)
    gram_invsqrt: list[np.ndarray] | None = None  # level j -> (q, q), j = 1..k
    alphabet: str = DNA
    ridge: float = RIDGE
    cfg: FixedPointConfig = field(default=DEFAULT)

    @property
    def k(self) -> int:
        return self.anchors.shape[0]

    @property
    def q(self) -> int:
        return self.anchors.shape[1]

    @property
    def d(self) -> int:
        return self.anchors.shape[2]

    @property
    def needs_invsqrt(self) -> bool:
        """True when inference has to compute the Gram inverse root itself."""
        return self.gram_invsqrt is None

    def validate(self, check_gram: bool = True) -> "PlainRknModel":
        z = np.asarray(self.anchors)
        if z.ndim != 3 or 0 in z.shape:
            raise ModelError(f"anchors must be a non-empty k x q x d tensor, got shape {z.shape}")
        norms = np.linalg.norm(z, axis=2)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ModelError("anchor character vectors must be L2-normalized (within 1e-6)")
        if self.weights.shape != (self.q,):
            raise ModelError(f"weights must have length q={self.q}, got {self.weights.shape}")
        if not 0 < self.lam < 1:
            raise ModelError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.alpha > 0:
            raise ModelError(f"alpha must be positive, got {self.alpha}")
        if len(self.alphabet) != self.d:
            raise ModelError(f"alphabet has {len(self.alphabet)} symbols but d={self.d}")
        if self.gram_invsqrt is not None:
            if len(self.gram_invsqrt) != self.k:
                raise ModelError(f"expected {self.k} inverse-root Gram matrices, got {len(self.gram_invsqrt)}")
            for j, r in enumerate(self.gram_invsqrt, start=1):
                if np.shape(r) != (self.q, self.q):
                    raise ModelError(f"gram_invsqrt {j} has shape {np.shape(r)}")
                if check_gram:
                    err = np.max(np.abs(r @ r @ anchor_gram(self, j) - np.eye(self.q)))
                    if err > 1e-6:
                        raise ModelError(f"gram_invsqrt {j} fails R R K = I (max error {err:.2e})")
        return self


def anchor_gram(model: PlainRknModel, level: int) -> np.ndarray:
    """Ridge-regularized kernel matrix of the anchors' first ``level`` characters."""
    z = model.anchors[:level]
    inner = np.einsum("iad,ibd->ab", z, z)
    k = np.exp(model.alpha * (inner - level))
    return (1 - model.ridge) * k + model.ridge * np.eye(model.q)


def compute_gram_invsqrt(model: PlainRknModel) -> list[np.ndarray]:
    return [inverse_sqrt(anchor_gram(model, j)) for j in range(1, model.k + 1)]


@dataclass
class RknTrace:
    prediction: float
    mappings: np.ndarray  # (s, k, q): c_j[t] for t = 1..s, j = 1..k
    feature: np.ndarray


def rkn_forward(model: PlainRknModel, seq) -> RknTrace:
    """Prediction and all intermediate mappings for one encoded sequence."""
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ModelError("sequence must be a non-empty s x d matrix")
    if x.shape[1] != model.d:
        raise ModelError(f"sequence has d={x.shape[1]}, model expects d={model.d}")
    k, q = model.k, model.q
    c = np.zeros((k + 1, q))
    c[0] = 1.0
    history = np.empty((x.shape[0], k, q))
    for t, xt in enumerate(x):
        b = np.exp(model.alpha * (model.anchors @ xt - 1.0))  # (k, q)
        c[1:] = model.lam * c[1:] + c[:-1] * b
        history[t] = c[1:]
    r = model.gram_invsqrt[k - 1] if model.gram_invsqrt is not None else inverse_sqrt(anchor_gram(model, k))
    feature = r @ c[k]
    return RknTrace(float(model.weights @ feature), history, feature)


def encode_sequence(text: str, alphabet: str = DNA) -> np.ndarray:
    """One-hot rows, one per character."""
    index = {ch: i for i, ch in enumerate(alphabet)}
    out = np.zeros((len(text), len(alphabet)))
    for t, ch in enumerate(text):
        if ch not in index:
            raise ModelError(f"character {ch!r} at position {t} is not in the alphabet {alphabet!r}")
        out[t, index[ch]] = 1.0
    return out


def make_synthetic_model(q: int, k: int, d: int = 4, seed=0, alphabet: str | None = None,
                         with_gram: bool = True) -> PlainRknModel:
    """Random unit anchors, moderate hyperparameters and small weights."""
    if alphabet is None:
        alphabet = DNA if d == 4 else PROTEIN[:d] if d <= len(PROTEIN) else None
    if alphabet is None or len(alphabet) != d:
        raise ModelError(f"no default alphabet of size {d}; pass one explicitly")
    gen = np.random.default_rng(seed)
    z = gen.standard_normal((k, q, d))
    z /= np.linalg.norm(z, axis=2, keepdims=True)
    model = PlainRknModel(
        anchors=z,
        lam=float(gen.uniform(0.3, 0.7)),
        alpha=float(gen.uniform(0.5, 1.0)),
        weights=gen.standard_normal(q) / q,
        alphabet=alphabet,
    )
    if with_gram:
        model.gram_invsqrt = compute_gram_invsqrt(model)
    return model


def random_sequence(length: int, alphabet: str = DNA, seed=0) -> str:
    gen = np.random.default_rng(seed)
    return "".join(gen.choice(list(alphabet), size=length))


# ---------------------------------------------------------------- files

def save_model(model: PlainRknModel, path) -> None:
    lines = [
        "# tripc rkn model",
        f"n = {model.cfg.n}",
        f"dec = {model.cfg.dec}",
        f"q = {model.q}",
        f"k = {model.k}",
        f"d = {model.d}",
        f"lambda = {model.lam!r}",
        f"alpha = {model.alpha!r}",
        f"ridge = {model.ridge!r}",
        f"alphabet = {model.alphabet}",
        f"gram_invsqrt = {'present' if model.gram_invsqrt is not None else 'absent'}",
        "[anchors]",
    ]
    lines += [_row(r) for r in model.anchors.reshape(-1, model.d)]
    lines += ["[weights]", _row(model.weights)]
    for j, r in enumerate(model.gram_invsqrt or [], start=1):
        lines.append(f"[gram_invsqrt {j}]")
        lines += [_row(row) for row in r]
    Path(path).write_text("\n".join(lines) + "\n")


def _row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def load_model(path) -> PlainRknModel:
    header: dict[str, str] = {}
    sections: dict[str, list[list[float]]] = {}
    current = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ModelError(f"line {lineno}: bad section header {line!r}")
            current = line[1:-1].strip()
            sections[current] = []
        elif current is None:
            key, sep, value = line.partition("=")
            if not sep:
                raise ModelError(f"line {lineno}: expected 'key = value'")
            header[key.strip()] = value.strip()
        else:
            try:
                sections[current].append([float(v) for v in line.split()])
            except ValueError:
                raise ModelError(f"line {lineno}: non-numeric entry") from None
    try:
        q, k, d = int(header["q"]), int(header["k"]), int(header["d"])
        cfg = FixedPointConfig(int(header.get("n", 64)), int(header.get("dec", 20)))
        anchors = np.array(sections["anchors"], dtype=np.float64)
        weights = np.array(sections["weights"], dtype=np.float64).ravel()
        lam, alpha = float(header["lambda"]), float(header["alpha"])
    except KeyError as exc:
        raise ModelError(f"missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ModelError(str(exc)) from None
    if anchors.shape != (k * q, d):
        raise ModelError(f"anchors block is {anchors.shape}, header says {k * q} x {d}")
    grams = None
    if header.get("gram_invsqrt", "absent") == "present":
        grams = []
        for j in range(1, k + 1):
            block = np.array(sections.get(f"gram_invsqrt {j}", []), dtype=np.float64)
            if block.shape != (q, q):
                raise ModelError(f"gram_invsqrt {j} block is {block.shape}, expected {q} x {q}")
            grams.append(block)
    model = PlainRknModel(
        anchors=anchors.reshape(k, q, d),
        lam=lam,
        alpha=alpha,
        weights=weights,
        gram_invsqrt=grams,
        alphabet=header.get("alphabet", DNA),
        ridge=float(header.get("ridge", RIDGE)),
        cfg=cfg,
    )
    return model.validate()


def read_sequences(path) -> list[tuple[str, str]]:
    """Plain-text sequence list: one ``id sequence`` pair per line."""
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ModelError(f"line {lineno}: expected 'id sequence'")
        out.append((parts[0], parts[1]))
    return out


def without_gram(model: PlainRknModel) -> PlainRknModel:
    return replace(model, gram_invsqrt=None)

