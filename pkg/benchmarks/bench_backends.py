"""Compare the compiled and numpy path generators.

Run ``python benchmarks/bench_backends.py``; each row reports the best of
``--repeat`` timings per backend and confirms the outputs agree bit for bit.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lltlab import _backend
from lltlab.kernel import build_example1, build_gauss_chain, build_gibbs_chain, build_iid_tail, example3_parameters
from lltlab.kernel import _path_generator
from lltlab.stable import TailModel


def cases(n: int):
    pi, eps = example3_parameters(20)
    return {
        "finite (Example 3, 20 states)": build_gibbs_chain(pi, eps, 20),
        "lazy uniform": build_example1(),
        "gauss digits": build_gauss_chain(0),
        "pareto increments": build_iid_tail(TailModel(1.5)),
    }


def best(fn, repeat: int) -> tuple[float, np.ndarray]:
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--replicas", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = _backend.available()
    if "cython" not in names:
        print("compiled backend not built; only the numpy fallback is available")
    print(f"n = {args.n}, replicas = {args.replicas}")
    print(f"{'case':<32}" + "".join(f"{b:>12}" for b in names) + f"{'speedup':>10}  identical")
    for label, model in cases(args.n).items():
        timings, outs = {}, {}
        for b in names:
            gen = _path_generator(model, args.n, 12345, _backend.get(b))
            timings[b], outs[b] = best(lambda: gen(0, args.replicas), args.repeat)
        same = all(np.array_equal(outs[names[0]], o) for o in outs.values())
        speed = timings["python"] / timings["cython"] if "cython" in timings else float("nan")
        print(f"{label:<32}" + "".join(f"{timings[b]:>11.3f}s" for b in names) + f"{speed:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
