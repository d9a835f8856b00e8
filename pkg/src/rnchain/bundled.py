"""Regenerate the JSON files shipped in ``rnchain/data``.

    python -m rnchain.bundled [target-dir]
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .compiled import copying_prover, echo_prover, honest_prover
from .cpmaps import CpMap
from .games import chsh, mermin_ghz
from .sequential import chsh_steering_strategy, mermin_sequential_strategy, signalling_strategy, uniform_strategy


def _depolarizing() -> CpMap:
    return CpMap.from_function(lambda a: np.trace(a) / 2 * np.eye(2), 2, 2)


def contents() -> dict:
    g, m = chsh(), mermin_ghz()
    half = CpMap.identity(2).scaled(0.5)
    uniform_stage = {"maps": {"0": {"0": half.to_json(), "1": half.to_json()}}}
    return {
        "chsh.json": g.to_json(),
        "mermin3.json": m.to_json(),
        "chsh_steering.json": chsh_steering_strategy().to_json(),
        "mermin_steering.json": mermin_sequential_strategy().to_json(),
        "uniform_3p.json": uniform_strategy().to_json(),
        "signalling_counterexample.json": signalling_strategy().to_json(),
        "depolarizing.json": _depolarizing().to_json(),
        "uniform_chain.json": {"stages": [uniform_stage] * 3},
        "prover_honest_chsh.json": honest_prover(chsh_steering_strategy()).to_json(),
        "prover_honest_mermin.json": honest_prover(mermin_sequential_strategy()).to_json(),
        "prover_echo_chsh.json": echo_prover(g).to_json(),
        "prover_copy_chsh.json": copying_prover(g).to_json(),
        "run_identity_chsh.json": {"game": "chsh.json", "prover": "prover_honest_chsh.json", "scheme": "identity"},
        "run_identity_mermin.json": {"game": "mermin3.json", "prover": "prover_honest_mermin.json",
                                     "scheme": "identity"},
        "run_xorpad_echo.json": {"game": "chsh.json", "prover": "prover_echo_chsh.json", "scheme": "xorpad"},
        "run_identity_copy.json": {"game": "chsh.json", "prover": "prover_copy_chsh.json", "scheme": "identity"},
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def write(target) -> list:
    target = Path(target)
    target.mkdir(parents=True, exist_ok=True)
    names = []
    for name, obj in contents().items():
        (target / name).write_text(dumps(obj))
        names.append(name)
    return names


if __name__ == "__main__":
    dest = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "data"
    for name in write(dest):
        print(name)
