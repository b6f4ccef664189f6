#!/usr/bin/env python3
"""Why the desk-scale low-rank + sparse benchmark misses its tolerance
targets at the prescribed gain, and that the solvers are not the cause.

For a sweep of l1 gains on the same instance and shared start, runs the
sequential and parallel solvers for a fixed sweep budget and reports
their relative objective agreement and worst per-block fixed-point
residual.  At the data-derived recipe gain the sparse subproblem is an
underdetermined dense lasso and both numbers stall; one order of
magnitude up, the subproblem sparsifies and the same code meets
1e-6/1e-5 with orders of margin.
"""

import argparse
import dataclasses
import time

import numpy as np

from bsca.anomaly import (
    anomaly_problem,
    anomaly_solver,
    generate_anomaly_instance,
    initial_state,
    run_anomaly_bsca,
    state_to_vector,
)
from bsca.core import SolverConfig
from bsca.engine import block_residuals, run_parallel_sca


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=100)
    ap.add_argument("--cols", type=int, default=200)
    ap.add_argument("--atoms", type=int, default=200)
    ap.add_argument("--rank", type=int, default=3)
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gain-factors", type=float, nargs="+",
                    default=[1.0, 10.0, 100.0, 300.0])
    args = ap.parse_args()

    base = generate_anomaly_instance(args.rows, args.cols, args.atoms,
                                     rank=args.rank, density=0.05,
                                     noise_var=1e-4, seed=args.seed)
    state0 = initial_state(base, seed=args.seed + 1)
    print(f"recipe gain {base.sparse_gain:.4g}, ridge {base.ridge:.4g}, "
          f"budget {args.sweeps} sweeps\n")
    print(f"{'gain':>12} {'agreement':>12} {'worst resid':>12} "
          f"{'nnz sparse':>10} {'seconds':>8}")
    for factor in args.gain_factors:
        inst = dataclasses.replace(base, sparse_gain=base.sparse_gain * factor)
        problem = anomaly_problem(inst)
        solver = anomaly_solver(inst)
        cfg = SolverConfig(max_outer_iterations=3 * args.sweeps, stop_tol=0.0,
                           seed=args.seed + 1)
        begin = time.monotonic()
        seq = run_anomaly_bsca(inst, cfg, state0=state0)
        par = run_parallel_sca(problem, solver,
                               SolverConfig(max_outer_iterations=args.sweeps,
                                            stop_tol=0.0, seed=args.seed + 1),
                               state_to_vector(state0))
        elapsed = time.monotonic() - begin
        agreement = (abs(seq.final_objective - par.final_objective)
                     / max(1.0, abs(seq.final_objective)))
        worst = 0.0
        for trace in (seq, par):
            x = trace.final_point.values
            res = block_residuals(problem, solver, x, cfg)
            for k in range(3):
                xk = problem.block_of(x, k)
                worst = max(worst, res[k] / (1.0 + np.linalg.norm(xk)))
        sparse = seq.final_point.values[problem.partition.slice_of(2)]
        nnz = int(np.count_nonzero(np.abs(sparse) > 1e-12))
        print(f"{inst.sparse_gain:12.4g} {agreement:12.3e} {worst:12.3e} "
              f"{nnz:10d} {elapsed:8.1f}")


if __name__ == "__main__":
    main()
