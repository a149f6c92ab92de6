# How many global reductions does each GMRES variant spend per iteration?
#
# Every dot product, mass inner product, and norm inside a solve records an
# event in the ReductionLedger.  On a small 2-D Laplacian we tabulate the
# events attributed to each iteration: the level-1 modified Gram-Schmidt
# column grows linearly, everything else is flat.

import numpy as np

from lowsync import (
    GmresConfig,
    ReductionLedger,
    gen_laplace2d,
    gen_rhs,
    solve,
)

A = gen_laplace2d(6)          # 36 unknowns
b = gen_rhs("random", A, seed=42)

methods = ["mgs_l1", "cgs2", "two_sync_cgs2", "one_sync_mgs", "pipeline2",
           "cgs1_ghysels"]

counts = {}
for method in methods:
    ledger = ReductionLedger()
    cfg = GmresConfig(restart_m=36, max_restarts=1, rel_tol=1e-12, method=method)
    _, hist = solve(A, b, config=cfg, ledger=ledger)
    per = ledger.counts_per_iteration()
    counts[method] = [per.get(i, 0) for i in range(1, 11)]
    print(f"{method:>14s}: outcome={hist.outcome} after {hist.iterations} iterations,"
          f" total reductions={len(ledger)}")

print()
print(f"{'iteration':>14s}", *(f"{i:>4d}" for i in range(1, 11)))
for method in methods:
    print(f"{method:>14s}", *(f"{c:>4d}" for c in counts[method]))

print()
print("one_sync_mgs and pipeline2 pay exactly one reduction per iteration;")
print("mgs_l1 pays i+1 at iteration i, which is why its communication cost")
print("grows quadratically with the restart length.")
