"""Round-complexity conformance and scaling sweeps.

Rounds are counted as the length of the longest chain of dependent messages
inside an operation (a message sent at depth d can only be answered at
depth d+1); messages that travel in parallel share a round.  Parties'
counts are merged by taking the maximum.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import protocols as pr
from .exponential import exponential
from .invsqrt import invsqrt
from .numfmt import DEFAULT, FixedPointConfig, encode
from .prg import Prg
from .private_rkn import infer_in_process
from .rings import Ring, split
from .rkn import encode_sequence, make_synthetic_model, random_sequence
from .session import Session

# Published round complexities, keyed by operation label.
TABLE_ROUNDS = {"MUL": 2, "MUX": 2, "DP": 2, "MOC": 4, "MSB": 4, "CMP": 4, "EXP": 24, "INVSQRT": 15}

# Measured counts that differ from the table, with the reason.
KNOWN_DEVIATIONS = {
    "INVSQRT": (
        14,
        "critical path is 3 message steps (masked G' to the helper, masked eigenpairs back, "
        "P1's unmasker to P0) + 5 for the eigenvalue guard (MSB 4, opening 1) + 3 dependent "
        "multiplications at 2 rounds each = 14; the published 15 counts one more sequential "
        "step than this schedule needs",
    ),
}

SWEEP_Q = (4, 8, 16, 32)
SWEEP_K = (3, 5, 7)
SWEEP_S = (16, 32, 64, 128)
BASE = {"q": 8, "k": 3, "s": 16}


# ---------------------------------------------------------------- conformance

@dataclass
class ConformanceRow:
    op: str
    table: int
    measured: int
    status: str  # "match", "documented deviation" or "MISMATCH"
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "MISMATCH"


def _shares(codes, cfg, rng):
    a, b = split(codes, Ring.full(cfg), rng)
    return a.value, b.value


def measure_protocol_rounds(cfg: FixedPointConfig = DEFAULT, seed=0, size: int = 8) -> dict[str, int]:
    """Run every protocol once on random inputs and read its merged rounds."""
    sess = Session(cfg, seed=seed)
    rng = Prg.from_seed("conformance", seed)
    gen = rng.generator()
    x0, x1 = _shares(encode(gen.uniform(-4, 4, size), cfg), cfg, rng)
    y0, y1 = _shares(encode(gen.uniform(-4, 4, size), cfg), cfg, rng)
    b0, b1 = _shares(gen.integers(0, 2, size).astype(np.uint64), cfg, rng)
    h0 = Ring.half(cfg).random(rng, (size,))
    z = np.zeros(size, dtype=np.uint64)
    q = 4
    a = gen.standard_normal((q, q))
    g0, g1 = _shares(encode(a @ a.T / q + np.eye(q), cfg), cfg, rng)
    zq = np.zeros((q, q), dtype=np.uint64)

    def body(ctx, x, y, b, h, g):
        pr.mul(ctx, x, y)
        pr.multiplexer(ctx, x, y, b)
        pr.dot_product(ctx, x, y)
        pr.modulus_conversion(ctx, h)
        pr.most_significant_bit(ctx, x)
        pr.compare(ctx, x, y)
        exponential(ctx, x, math.e)
        invsqrt(ctx, g)

    sess.run(body, (x0, y0, b0, h0, g0), (x1, y1, b1, z, g1), (z, z, z, z, zq))
    out: dict[str, int] = {}
    for rec in sess.merged_records():
        if rec.level == 0 and rec.label in TABLE_ROUNDS:
            out.setdefault(rec.label, rec.rounds)
    return out


def conformance_report(cfg: FixedPointConfig = DEFAULT, seed=0) -> list[ConformanceRow]:
    measured = measure_protocol_rounds(cfg, seed)
    rows = []
    for op, table in TABLE_ROUNDS.items():
        got = measured.get(op, -1)
        if got == table:
            rows.append(ConformanceRow(op, table, got, "match"))
        elif op in KNOWN_DEVIATIONS and KNOWN_DEVIATIONS[op][0] == got:
            rows.append(ConformanceRow(op, table, got, "documented deviation", KNOWN_DEVIATIONS[op][1]))
        else:
            rows.append(ConformanceRow(op, table, got, "MISMATCH"))
    return rows


# ---------------------------------------------------------------- count model

def predicted_rkn_rounds(s: int, compute_invsqrt: bool = False) -> int:
    """Rounds of one private inference from the per-op counts.

    Batched similarity DP, then per character one EXP and one MUL, then the
    feature matmul and the output DP.  Computing the Gram inverse root adds
    a DP, an EXP and an INVSQRT.
    """
    steps = s * (24 + 2)
    extra = (2 + 24 + KNOWN_DEVIATIONS["INVSQRT"][0]) if compute_invsqrt else 0
    return 2 + steps + extra + 2 + 2


# ---------------------------------------------------------------- sweeps

@dataclass
class BenchRow:
    sweep: str
    q: int
    k: int
    s: int
    mode: str
    rounds: int
    model_rounds: int
    bytes: int
    seconds: float
    abs_error: float


CSV_FIELDS = [f.name for f in fields(BenchRow)]


def run_point(q: int, k: int, s: int, seed=0, compute_invsqrt: bool = False, sweep: str = "point") -> BenchRow:
    model = make_synthetic_model(q, k, 4, seed=seed)
    seq = encode_sequence(random_sequence(s, seed=seed))
    t = time.perf_counter()
    res = infer_in_process(model, seq, seed=seed, compute_invsqrt=compute_invsqrt)
    elapsed = time.perf_counter() - t
    return BenchRow(sweep, q, k, s, "invsqrt" if compute_invsqrt else "outsourced",
                    res.total_rounds, predicted_rkn_rounds(s, compute_invsqrt), res.total_bytes,
                    round(elapsed, 4), abs(res.prediction - res.plaintext))


def sweep_points(grid: str = "axes", qs=SWEEP_Q, ks=SWEEP_K, ss=SWEEP_S, base=None) -> list[tuple[str, int, int, int]]:
    """(sweep, q, k, s) tuples.

    ``axes`` varies one parameter at a time around ``base``; ``full`` is the
    Cartesian product.
    """
    base = dict(BASE, **(base or {}))
    if grid == "full":
        return [("full", q, k, s) for q in qs for k in ks for s in ss]
    if grid != "axes":
        raise ValueError(f"unknown grid {grid!r}; use 'axes' or 'full'")
    pts = [("q", q, base["k"], base["s"]) for q in qs]
    pts += [("k", base["q"], k, base["s"]) for k in ks]
    pts += [("s", base["q"], base["k"], s) for s in ss]
    return pts


def run_sweep(points, seed=0, compute_invsqrt: bool = False, progress=None) -> list[BenchRow]:
    rows = []
    for sweep, q, k, s in points:
        rows.append(run_point(q, k, s, seed, compute_invsqrt, sweep))
        if progress:
            progress(rows[-1])
    return rows


def write_csv(rows: list[BenchRow], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(asdict(r))


def read_csv(fh) -> list[BenchRow]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for rec in reader:
        out.append(BenchRow(rec["sweep"], int(rec["q"]), int(rec["k"]), int(rec["s"]), rec["mode"],
                            int(rec["rounds"]), int(rec["model_rounds"]), int(rec["bytes"]),
                            float(rec["seconds"]), float(rec["abs_error"])))
    return out


def csv_text(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


# ---------------------------------------------------------------- fits

@dataclass
class Fit:
    target: str
    predictor: str
    degree: int
    coefficients: list[float]
    r2: float
    points: int


def r_squared(y, pred) -> float:
    """Coefficient of determination; a perfect fit counts as 1 even when y is constant."""
    y, pred = np.asarray(y, dtype=float), np.asarray(pred, dtype=float)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    scale = max(1.0, float(np.max(np.abs(y)))) ** 2
    if ss_res <= 1e-18 * scale * len(y):
        return 1.0
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0


def poly_fit(x, y, degree: int, target: str, predictor: str) -> Fit:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    coef = np.polyfit(x, y, degree)
    return Fit(target, predictor, degree, [float(c) for c in coef], r_squared(y, np.polyval(coef, x)), len(x))


def scaling_fits(rows: list[BenchRow]) -> list[Fit]:
    """Linear fits of rounds in s and k; quadratic fit of bytes in q."""
    fits = []
    by = {name: [r for r in rows if r.sweep in (name, "full")] for name in ("s", "k", "q")}
    if len({r.s for r in by["s"]}) >= 2:
        sel = _fixed(by["s"], "s")
        fits.append(poly_fit([r.s for r in sel], [r.rounds for r in sel], 1, "rounds", "s"))
    if len({r.k for r in by["k"]}) >= 2:
        sel = _fixed(by["k"], "k")
        fits.append(poly_fit([r.k for r in sel], [r.rounds for r in sel], 1, "rounds", "k"))
    if len({r.q for r in by["q"]}) >= 3:
        sel = _fixed(by["q"], "q")
        fits.append(poly_fit([r.q for r in sel], [r.bytes for r in sel], 2, "bytes", "q"))
    return fits


def _fixed(rows: list[BenchRow], free: str) -> list[BenchRow]:
    """Rows that share the first row's values of the two other parameters."""
    others = [p for p in ("q", "k", "s") if p != free]
    ref = rows[0]
    return [r for r in rows if all(getattr(r, p) == getattr(ref, p) for p in others)]


def byte_growth_exponent(rows: list[BenchRow]) -> float | None:
    """Slope of log(bytes) against log(q) over the q sweep."""
    sel = [r for r in rows if r.sweep in ("q", "full")]
    if not sel:
        return None
    sel = _fixed(sel, "q")
    if len({r.q for r in sel}) < 2:
        return None
    return float(np.polyfit(np.log([r.q for r in sel]), np.log([r.bytes for r in sel]), 1)[0])


# ---------------------------------------------------------------- report

def _line(*values) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(values)
    return buf.getvalue()


def render_report(rows: list[BenchRow], conformance: list[ConformanceRow], min_r2: float = 0.99) -> tuple[str, bool]:
    """Comma-delimited report sections and the overall pass flag."""
    lines = ["# round-complexity conformance", _line("op", "table", "measured", "status", "note")]
    ok = True
    for c in conformance:
        lines.append(_line(c.op, c.table, c.measured, c.status, c.note))
        ok &= c.ok
    lines += ["", "# count model", _line("q", "k", "s", "mode", "rounds", "model_rounds", "agree")]
    for r in rows:
        agree = r.rounds == r.model_rounds
        ok &= agree
        lines.append(_line(r.q, r.k, r.s, r.mode, r.rounds, r.model_rounds, agree))
    lines += ["", "# scaling fits", _line("target", "predictor", "model", "r2", "coefficients", "pass")]
    for f in scaling_fits(rows):
        passed = f.r2 >= min_r2
        ok &= passed
        coef = " ".join(f"{c:.6g}" for c in f.coefficients)
        lines.append(_line(f.target, f.predictor, f"poly{f.degree}", f"{f.r2:.6f}", coef, passed))
    exponent = byte_growth_exponent(rows)
    if exponent is not None:
        passed = exponent <= 2.05
        ok &= passed
        lines.append(_line("bytes", "q", "loglog", "", f"{exponent:.4f}", passed))
    lines += ["", f"# overall: {'PASS' if ok else 'FAIL'}"]
    return "\n".join(lines) + "\n", ok
