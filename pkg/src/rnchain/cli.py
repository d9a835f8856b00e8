"""Command-line front end.  Every command reads JSON and writes deterministic JSON.

Exit codes: 0 success, 2 validation failure, 3 numeric-contract failure,
4 resource cap.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .compiled import BRANCH_CAP, ProverProgram, decrypted_correlation, eps_ns_audit, run_protocol, scheme_by_name, \
    compiled_score, transcripts_jsonl
from .cpmaps import CpMap
from .dilation import stinespring_minimal, verify_dilation
from .errors import RnChainError, ValidationError
from .games import CLASSICAL_CAP, Correlation, Game, classical_value, eval_commuting, seesaw_quantum_value
from .numerics import Tolerance, commutator, dag, matrix_to_json, max_abs
from .radon_nikodym import Stage, chain_k, chain_residuals, rn_derivative
from .sequential import SequentialStrategy, convert, eval_sequential


def _load(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc


def _located(path, fn, *args):
    """Run a parser and prefix any validation error with the file name."""
    try:
        return fn(*args)
    except ValidationError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def _tol(args) -> Tolerance:
    return Tolerance(args.tol_abs, args.tol_psd, args.tol_rank)


def cmd_value(args) -> dict:
    g = _located(args.game, Game.from_json, _load(args.game))
    if args.mode == "classical":
        value, assignment = classical_value(g, args.cap or CLASSICAL_CAP)
        return {"mode": "classical", "value": value, "assignment": assignment}
    dims = [int(d) for d in args.dims.split(",")] if args.dims else [2] * g.players
    value, strat = seesaw_quantum_value(g, dims, args.restarts, args.seed)
    return {"mode": "seesaw", "value": value, "dims": dims, "seed": args.seed, "strategy": strat.to_json()}


def cmd_dilate(args) -> dict:
    tol = _tol(args)
    t = _located(args.map, CpMap.from_json, _load(args.map))
    d = stinespring_minimal(t, tol)
    return {"dilation": d.to_json(), "residuals": verify_dilation(d, tol)}


def cmd_rn(args) -> dict:
    tol = _tol(args)
    r = _located(args.dominant, CpMap.from_json, _load(args.dominant))
    s = _located(args.part, CpMap.from_json, _load(args.part))
    dil = stinespring_minimal(r, tol)
    der = rn_derivative(s, dil, tol)
    n = dil.n
    comm = max((max_abs(commutator(der.d, dil.units[i, j])) for i in range(n) for j in range(n)), default=0.0)
    recon = 0.0
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            recon = max(recon, max_abs(dag(dil.v) @ der.d @ dil.units[i, j] @ dil.v - s(e)))
    return {"dil_dim": dil.dil_dim, "d": matrix_to_json(der.d),
            "residuals": {"commutator": comm, "reconstruction": recon}}


def _parse_stages(path, obj) -> list:
    try:
        stages = []
        for i, st in enumerate(obj["stages"]):
            maps = {_key(x): {_key(a): CpMap.from_json(cm, f"stages[{i}].maps[{x}][{a}]") for a, cm in arms.items()}
                    for x, arms in st["maps"].items()}
            dom = CpMap.from_json(st["dominant"], f"stages[{i}].dominant") if st.get("dominant") else None
            stages.append(Stage(maps, dom))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"{path}: malformed chain description ({exc})") from exc
    return stages


def _key(s):
    try:
        return int(s)
    except ValueError:
        return s


def cmd_chain(args) -> dict:
    tol = _tol(args)
    stages = _parse_stages(args.stages, _load(args.stages))
    rep = chain_k(stages, tol)
    return {"representation": rep.to_json(), "residuals": chain_residuals(rep, stages)}


def cmd_convert(args) -> dict:
    tol = _tol(args)
    s = _located(args.strategy, SequentialStrategy.from_json, _load(args.strategy), tol)
    conv = convert(s, tol, args.generalized)
    res = chain_residuals(conv.representation, conv.stages)
    res["commutator_players"] = conv.strategy.commutator_defect()
    res["correlation_match"] = max_abs(eval_commuting(conv.strategy).p - eval_sequential(s).p)
    return {"strategy": conv.strategy.to_json(), "residuals": res, "ons": conv.ons.to_json()}


def cmd_simulate(args) -> dict:
    desc = _load(args.run)
    base = Path(args.run).parent
    try:
        game_path, prover_path, scheme = base / desc["game"], base / desc["prover"], desc["scheme"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{args.run}: missing field {exc}") from exc
    g = _located(game_path, Game.from_json, _load(game_path))
    p = _located(prover_path, ProverProgram.from_json, _load(prover_path), _tol(args))
    e = scheme_by_name(scheme)
    ts = run_protocol(g, p, e, args.cap or BRANCH_CAP)
    if args.transcripts:
        Path(args.transcripts).write_text(transcripts_jsonl(ts))
    corr = decrypted_correlation(ts, e, g)
    return {"scheme": scheme, "score": compiled_score(g, corr), "correlation": corr.to_json(),
            "audit": eps_ns_audit(corr, args.eps).to_json(), "transcripts": len(ts)}


def cmd_audit(args) -> dict:
    c = _located(args.correlation, Correlation.from_json, _load(args.correlation))
    return eps_ns_audit(c, args.eps).to_json()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-abs", type=float, default=1e-9)
    common.add_argument("--tol-psd", type=float, default=1e-9)
    common.add_argument("--tol-rank", type=float, default=1e-10)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--cap", type=int, default=None, help="enumeration cap")

    ap = argparse.ArgumentParser(prog="rnchain", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("value", parents=[common], help="classical or seesaw value of a game")
    p.add_argument("game")
    p.add_argument("--mode", choices=["classical", "seesaw"], default="classical")
    p.add_argument("--dims", help="comma-separated local dimensions for seesaw")
    p.add_argument("--restarts", type=int, default=20)
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("dilate", parents=[common], help="minimal Stinespring dilation of a CP map")
    p.add_argument("map")
    p.set_defaults(func=cmd_dilate)

    p = sub.add_parser("rn", parents=[common], help="derivative of a dominated map")
    p.add_argument("dominant")
    p.add_argument("part")
    p.set_defaults(func=cmd_rn)

    p = sub.add_parser("chain", parents=[common], help="commuting operators from a chain of dominated maps")
    p.add_argument("stages")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("convert", parents=[common], help="sequential strategy to commuting strategy")
    p.add_argument("strategy")
    p.add_argument("--generalized", action="store_true")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("simulate", parents=[common], help="run the compiled protocol exactly")
    p.add_argument("run")
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--transcripts", help="write transcripts as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", parents=[common], help="no-signalling audit of a correlation")
    p.add_argument("correlation")
    p.add_argument("--eps", type=float, default=1e-9)
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = args.func(args)
    except RnChainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
