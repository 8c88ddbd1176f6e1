"""Wall-time comparison of the two numeric backends on one training problem.

Run as a script:  python3 benchmarks/bench_backends.py --epochs 100 --rows 2000

Both backends consume the same counter-based random streams, so they must
agree on the final parameters and log-likelihood to float tolerance; the
benchmark reports both timings and that agreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lchoice import TrainConfig, build_model, fit_joint
from lchoice.analysis import DataSpec
from lchoice.models import UtilitySpec, UtilityTerm
from lchoice.numcore.backend import numba_available


def build_problem(rows: int, width: int, seed: int):
    data = DataSpec(scenario="binary", n_train=rows, n_test=max(rows // 5, 1))
    train, test, _ = data.make(seed)
    pab = tuple(UtilityTerm.of(f"beta_{c}", {"1": f"{c}1", "2": f"{c}2"})
                for c in ("p", "a", "b"))
    return train, test, UtilitySpec(pab), ("q1", "c1", "q2", "c2")


def run(backend: str, rows: int, width: int, epochs: int, seed: int):
    train, test, utility, q = build_problem(rows, width, seed)
    model = build_model("LMNL", ("1", "2"), utility, q=q, net_width=width, seed=seed)
    cfg = TrainConfig(epochs=epochs, seed=seed)
    t0 = time.perf_counter()
    report = fit_joint(model, train, cfg, test=test, backend=backend,
                       compute_std_errors=False)
    return time.perf_counter() - t0, report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--width", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not numba_available():
        print("numba backend unavailable in this environment; nothing to compare")
        return 0

    # throwaway run so JIT compilation does not pollute the numba timing
    run("numba", 50, 4, 2, args.seed)

    t_nb, rep_nb = run("numba", args.rows, args.width, args.epochs, args.seed)
    t_np, rep_np = run("numpy", args.rows, args.width, args.epochs, args.seed)

    print(f"problem: {args.rows} rows, width {args.width}, {args.epochs} epochs")
    print(f"numba : {t_nb:8.3f} s   ll_train {rep_nb.ll_train:.6f}")
    print(f"numpy : {t_np:8.3f} s   ll_train {rep_np.ll_train:.6f}")
    print(f"speedup numba over numpy: {t_np / t_nb:.2f}x")
    gap = abs(rep_nb.ll_train - rep_np.ll_train)
    print(f"|ll_numba - ll_numpy| = {gap:.3e}")
    if gap > 1e-6:
        print("WARNING: backends disagree beyond tolerance")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
