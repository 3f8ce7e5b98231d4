"""Command line entry points.

    tripc make-model      write a synthetic plaintext model
    tripc outsource-model split a model file into two share files
    tripc outsource-seq   split a sequence into two share files
    tripc infer           run the three parties in one process
    tripc run-party       run one party over TCP
    tripc reveal          combine two prediction shares
    tripc bench           round/byte/time sweeps as CSV plus a report
    tripc oracle-check    exhaustive small-ring protocol checks

Exit status: 0 on success, 1 when a check or tolerance fails, 2 on bad
usage or input, 3 when a protocol aborts or the network fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (SWEEP_K, SWEEP_Q, SWEEP_S, conformance_report, render_report, run_sweep, sweep_points,
                    write_csv)
from .invsqrt import InvSqrtAbort
from .numfmt import FixedPointConfig, RangeError
from .oracles import run_suites
from .prg import Prg, derive_key
from .private_rkn import (
    SharedRknModel,
    infer_in_process,
    load_model_share,
    load_prediction_share,
    load_public_info,
    load_sequence_share,
    outsource_model,
    outsource_sequence,
    private_inference,
    reveal_prediction,
    save_model_share,
    save_prediction_share,
    save_public_info,
    save_sequence_share,
)
from .rkn import DNA, ModelError, encode_sequence, load_model, make_synthetic_model, rkn_forward, save_model
from .session import ProtocolContext, Session
from .transport import PartyRole, TransportError, connect_sockets, merge_meters, parse_endpoint, summarize

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
TOL_OUTSOURCED = 2e-5
TOL_INVSQRT = 1e-2


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _op_table(records) -> tuple[list[dict], str]:
    rows = [r for r in summarize(records) if r["op"] != "SETUP"]
    lines = ["op,calls,rounds_per_call,bytes"]
    lines += [f"{r['op']},{r['calls']},{r['rounds_per_call']},{r['bytes']}" for r in rows]
    return rows, "\n".join(lines)


# ---------------------------------------------------------------- commands

def cmd_make_model(args) -> int:
    model = make_synthetic_model(args.q, args.k, args.d, seed=args.seed, with_gram=not args.no_gram)
    save_model(model, args.out)
    print(f"wrote {args.out} (q={model.q}, k={model.k}, d={model.d}, lambda={model.lam:.4f}, alpha={model.alpha:.4f})")
    return EXIT_OK


def cmd_outsource_model(args) -> int:
    model = load_model(args.model)
    rng = Prg.from_seed("outsource-model", args.seed) if args.seed is not None else Prg()
    s0, s1 = outsource_model(model, rng)
    save_model_share(args.out0, s0, 0)
    save_model_share(args.out1, s1, 1)
    if args.public:
        save_public_info(args.public, s0.info)
    print(f"wrote {args.out0} and {args.out1}")
    return EXIT_OK


def _sequence_from_args(args, alphabet: str) -> np.ndarray:
    if args.seq is not None:
        text = args.seq
    elif getattr(args, "seq_file", None):
        text = "".join(Path(args.seq_file).read_text().split())
    else:
        raise UsageError("give --seq TEXT or --seq-file PATH")
    if not text:
        raise UsageError("sequence is empty")
    return encode_sequence(text, alphabet)


def cmd_outsource_seq(args) -> int:
    if args.public:
        info = load_public_info(args.public)
        alphabet, cfg = info.alphabet, info.cfg
    else:
        alphabet, cfg = args.alphabet, FixedPointConfig(args.n, args.dec)
    seq = _sequence_from_args(args, alphabet)
    rng = Prg.from_seed("outsource-seq", args.seed) if args.seed is not None else Prg()
    a, b = outsource_sequence(seq, rng, cfg)
    save_sequence_share(args.out0, a, 0, cfg, args.id)
    save_sequence_share(args.out1, b, 1, cfg, args.id)
    print(f"wrote {args.out0} and {args.out1} ({seq.shape[0]} characters)")
    return EXIT_OK


def cmd_infer(args) -> int:
    shares_given = [args.model_share0, args.model_share1, args.seq_share0, args.seq_share1]
    plain_model = load_model(args.model) if args.model else None
    if any(shares_given):
        if not all(shares_given):
            raise UsageError("share mode needs --model-share0/1 and --seq-share0/1")
        m0, r0 = load_model_share(args.model_share0)
        m1, r1 = load_model_share(args.model_share1)
        x0, _ = load_sequence_share(args.seq_share0)
        x1, _ = load_sequence_share(args.seq_share1)
        if (r0, r1) != (0, 1):
            raise UsageError("model shares must be given in role order (P0 then P1)")
        if m0.info != m1.info or x0.shape != x1.shape:
            raise UsageError("share files do not belong together")
        sess = Session(m0.info.cfg, seed=args.seed)
        out = sess.run(private_inference, (m0, x0, args.compute_invsqrt), (m1, x1, args.compute_invsqrt),
                       (SharedRknModel.placeholder(m0.info), np.zeros_like(x0), args.compute_invsqrt))
        records = [r for r in sess.merged_records() if r.label != "SETUP"]
        prediction = reveal_prediction(out[0], out[1], m0.info.cfg)
        top = [r for r in records if r.label == "RKN"]
        rounds, nbytes = top[-1].rounds, top[-1].bytes_sent
        plaintext = None
        if args.oracle:
            if plain_model is None:
                raise UsageError("--oracle in share mode needs --model and the sequence")
            plaintext = rkn_forward(plain_model, _sequence_from_args(args, plain_model.alphabet)).prediction
    else:
        if plain_model is None:
            raise UsageError("give --model (with --seq) or the four share files")
        seq = _sequence_from_args(args, plain_model.alphabet)
        res = infer_in_process(plain_model, seq, seed=args.seed, compute_invsqrt=args.compute_invsqrt,
                               with_oracle=args.oracle)
        records = [r for r in res.records if r.label != "SETUP"]
        prediction, plaintext, rounds, nbytes = res.prediction, res.plaintext, res.total_rounds, res.total_bytes

    rows, table = _op_table(records)
    tol = args.tol if args.tol is not None else (TOL_INVSQRT if args.compute_invsqrt else TOL_OUTSOURCED)
    payload = {"prediction": prediction, "rounds": rounds, "bytes": nbytes, "ops": rows}
    text = [f"prediction: {prediction:.8f}"]
    status = EXIT_OK
    if plaintext is not None:
        err = abs(prediction - plaintext)
        ok = err < tol
        payload.update(plaintext=plaintext, abs_error=err, tolerance=tol, within_tolerance=ok)
        text.append(f"plaintext:  {plaintext:.8f}  |diff| = {err:.3e}  ({'within' if ok else 'OUTSIDE'} {tol:g})")
        status = EXIT_OK if ok else EXIT_FAIL
    text += [f"rounds: {rounds}  bytes: {nbytes}", "", table]
    _emit(args, payload, "\n".join(text))
    return status


def cmd_run_party(args) -> int:
    try:
        role = PartyRole.parse(args.role)
    except TransportError as exc:
        raise UsageError(str(exc)) from None
    peers = {}
    for r, addr in ((PartyRole.P0, args.peer0), (PartyRole.P1, args.peer1), (PartyRole.HELPER, args.peer2)):
        if addr and r != role:
            peers[r] = parse_endpoint(addr)
    listen = parse_endpoint(args.listen) if args.listen else None

    if role.is_proxy:
        if not (args.model_share and args.seq_share and args.out):
            raise UsageError("proxies need --model-share, --seq-share and --out")
        model, share_role = load_model_share(args.model_share)
        seq, _ = load_sequence_share(args.seq_share)
        if share_role != int(role):
            raise UsageError(f"{args.model_share} belongs to P{share_role}, not {role.name}")
        info = model.info
    else:
        if not (args.public and args.seq_len):
            raise UsageError("the helper needs --public and --seq-len")
        info = load_public_info(args.public)
        model = SharedRknModel.placeholder(info)
        seq = np.zeros((args.seq_len, info.d), dtype=np.uint64)

    links = connect_sockets(role, listen, peers, args.session, timeout=args.timeout, io_timeout=args.io_timeout)
    rng = Prg.from_seed("party", args.seed, int(role)) if args.seed is not None else Prg()
    ctx = ProtocolContext(role, links, info.cfg, rng)
    try:
        ctx.setup_coin(derive_key("session", args.seed) if args.seed is not None else None)
        share = private_inference(ctx, model, seq, args.compute_invsqrt)
    finally:
        ctx.close()
    if role.is_proxy:
        save_prediction_share(args.out, share, int(role), info.cfg)
    records = [r for r in merge_meters([ctx.meter]) if r.label != "SETUP"]
    rounds = next(r.rounds for r in records if r.label == "RKN")
    rows, table = _op_table(records)
    _emit(args, {"role": role.name, "rounds": rounds, "ops": rows},
          f"{role.name} done, {rounds} rounds as seen by this party\n{table}")
    return EXIT_OK


def cmd_reveal(args) -> int:
    a, ha = load_prediction_share(args.share0)
    b, hb = load_prediction_share(args.share1)
    if (ha["n"], ha["dec"]) != (hb["n"], hb["dec"]) or {ha["role"], hb["role"]} != {0, 1}:
        raise UsageError("need one P0 and one P1 prediction share with matching n, dec")
    value = reveal_prediction(a[0], b[0], FixedPointConfig(ha["n"], ha["dec"]))
    _emit(args, {"prediction": value}, f"{value:.8f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    base = {"q": args.base_q, "k": args.base_k, "s": args.base_s}
    points = sweep_points(args.grid, args.q, args.k, args.s, base)
    progress = None if args.quiet else (lambda r: print(
        f"[bench] q={r.q} k={r.k} s={r.s} rounds={r.rounds} bytes={r.bytes} {r.seconds:.2f}s", file=sys.stderr))
    rows = run_sweep(points, seed=args.seed, compute_invsqrt=args.compute_invsqrt, progress=progress)
    with open(args.out, "w", newline="") if args.out else nullcontext(sys.stdout) as fh:
        write_csv(rows, fh)
    report, ok = render_report(rows, conformance_report(seed=args.seed), args.min_r2)
    if args.report:
        Path(args.report).write_text(report)
    if args.out or args.report:
        print(report, end="")
    elif not args.quiet:
        print(report, end="", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle_check(args) -> int:
    try:
        results = run_suites(args.suites, seed=args.seed)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    payload = {"suites": [{"name": r.name, "cases": r.cases, "mismatches": r.mismatches, "passed": r.passed,
                           "seconds": round(r.seconds, 3), **r.detail} for r in results]}
    lines = ["suite,cases,mismatches,result"]
    lines += [f"{r.name},{r.cases},{r.mismatches},{'PASS' if r.passed else 'FAIL'}" for r in results]
    for r in results:
        if r.detail:
            lines.append(f"{r.name}: " + ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                                                  for k, v in r.detail.items()))
    payload["passed"] = all(r.passed for r in results)
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if payload["passed"] else EXIT_FAIL


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tripc", description="Three-party secure RKN inference.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("make-model", help="write a synthetic plaintext model")
    c.add_argument("--q", type=int, default=16)
    c.add_argument("--k", type=int, default=5)
    c.add_argument("--d", type=int, default=4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--no-gram", action="store_true", help="omit the inverse-root Gram matrices")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_make_model)

    c = sub.add_parser("outsource-model", help="split a model file into two share files")
    c.add_argument("model")
    c.add_argument("--out0", required=True)
    c.add_argument("--out1", required=True)
    c.add_argument("--public", help="also write the public model info (needed by the helper)")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_outsource_model)

    c = sub.add_parser("outsource-seq", help="split a sequence into two share files")
    c.add_argument("--seq")
    c.add_argument("--seq-file")
    c.add_argument("--public", help="public model info; fixes alphabet, n and dec")
    c.add_argument("--alphabet", default=DNA)
    c.add_argument("--n", type=int, default=64)
    c.add_argument("--dec", type=int, default=20)
    c.add_argument("--id", default="")
    c.add_argument("--out0", required=True)
    c.add_argument("--out1", required=True)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_outsource_seq)

    c = sub.add_parser("infer", help="private inference with all three parties in this process")
    c.add_argument("--model", help="plaintext model (owner-side run, or for --oracle)")
    c.add_argument("--seq", help="sequence text")
    c.add_argument("--seq-file")
    c.add_argument("--model-share0")
    c.add_argument("--model-share1")
    c.add_argument("--seq-share0")
    c.add_argument("--seq-share1")
    c.add_argument("--oracle", action="store_true", help="also print the plaintext prediction")
    c.add_argument("--tol", type=float, help="tolerance for --oracle (default 2e-5, or 1e-2 with --compute-invsqrt)")
    c.add_argument("--compute-invsqrt", action="store_true", help="compute the Gram inverse root privately")
    c.add_argument("--seed", type=int)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_infer)

    c = sub.add_parser("run-party", help="run one party over TCP")
    c.add_argument("--role", required=True, help="p0, p1 or p2 (helper)")
    c.add_argument("--listen", help="host:port to accept higher-numbered parties on")
    c.add_argument("--peer0")
    c.add_argument("--peer1")
    c.add_argument("--peer2")
    c.add_argument("--session", type=int, required=True, help="session id shared by all three parties")
    c.add_argument("--model-share")
    c.add_argument("--seq-share")
    c.add_argument("--public", help="public model info (helper)")
    c.add_argument("--seq-len", type=int, help="sequence length (helper)")
    c.add_argument("--out", help="prediction share output (proxies)")
    c.add_argument("--compute-invsqrt", action="store_true")
    c.add_argument("--seed", type=int)
    c.add_argument("--timeout", type=float, default=30.0, help="connection setup timeout in seconds")
    c.add_argument("--io-timeout", type=float, default=600.0, help="per-message timeout in seconds")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_run_party)

    c = sub.add_parser("reveal", help="combine the two prediction shares")
    c.add_argument("share0")
    c.add_argument("share1")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_reveal)

    c = sub.add_parser("bench", help="scaling sweeps (CSV) and the round-complexity report")
    c.add_argument("--grid", choices=("axes", "full"), default="axes")
    c.add_argument("--q", type=_int_list, default=list(SWEEP_Q))
    c.add_argument("--k", type=_int_list, default=list(SWEEP_K))
    c.add_argument("--s", type=_int_list, default=list(SWEEP_S))
    c.add_argument("--base-q", type=int, default=8)
    c.add_argument("--base-k", type=int, default=3)
    c.add_argument("--base-s", type=int, default=16)
    c.add_argument("--compute-invsqrt", action="store_true")
    c.add_argument("--min-r2", type=float, default=0.99)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="CSV path (default stdout)")
    c.add_argument("--report", help="also write the report here")
    c.add_argument("--quiet", action="store_true")
    c.set_defaults(func=cmd_bench)

    c = sub.add_parser("oracle-check", help="exhaustive n=8 protocol checks and the EXP sweep")
    c.add_argument("suites", nargs="*", help="moc, msb, cmp, pc, exp or all (default)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelError, RangeError, FileNotFoundError, ValueError) as exc:
        print(f"tripc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvSqrtAbort, TransportError, OSError) as exc:
        print(f"tripc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
