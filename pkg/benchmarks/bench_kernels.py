"""Compare the numba and pure-numpy kernels on the two hot loops.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from rnchain import _kernels
from rnchain.games import chsh, mermin_ghz


def gram_case(n, m, r, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(r, m, n)) + 1j * rng.normal(size=(r, m, n))


def classical_case(g):
    from math import prod

    k = g.players
    nx = prod(g.inputs)
    return (
        g.weights.reshape(prod(g.outputs), nx),
        np.array(list(np.ndindex(*g.inputs)), dtype=np.int64).reshape(nx, k),
        np.concatenate([[0], np.cumsum(g.inputs)]).astype(np.int64),
        np.array(g.outputs, dtype=np.int64),
        np.array([prod(g.outputs[i + 1:]) for i in range(k)], dtype=np.int64),
        prod(o ** i for o, i in zip(g.outputs, g.inputs)),
    )


def _time(fn, repeat):
    fn()  # warm-up / compile
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or disabled); only the numpy path runs")

    rows = []
    for n, m, r in [(2, 2, 4), (3, 3, 9), (4, 4, 16)]:
        kraus = gram_case(n, m, r)
        t_np = _time(lambda: _kernels._gram_numpy(kraus), args.repeat)
        t_nb = _time(lambda: _kernels._gram_numba(kraus), args.repeat) if _kernels.HAVE_NUMBA else float("nan")
        if _kernels.HAVE_NUMBA:
            assert np.allclose(_kernels._gram_numpy(kraus), _kernels._gram_numba(kraus))
        rows.append((f"gram n={n} m={m} r={r}", t_np, t_nb))

    for name, g in [("classical chsh", chsh()), ("classical mermin", mermin_ghz())]:
        case = classical_case(g)
        t_np = _time(lambda: _kernels._classical_numpy(*case), args.repeat)
        t_nb = _time(lambda: _kernels._classical_numba(*case), args.repeat) if _kernels.HAVE_NUMBA else float("nan")
        rows.append((name, t_np, t_nb))

    print(f"{'case':28s} {'numpy [s]':>12s} {'numba [s]':>12s} {'speedup':>8s}")
    for name, t_np, t_nb in rows:
        print(f"{name:28s} {t_np:12.3e} {t_nb:12.3e} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
