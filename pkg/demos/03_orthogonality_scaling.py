# Loss of orthogonality versus condition number for the five column
# orthogonalization kernels, measured as ||I - Q^T Q||_2 after a full QR of
# a 60 x 20 matrix with prescribed singular-value spread.
#
# Classical Gram-Schmidt degrades with kappa^2, the modified variants with
# kappa, and the re-orthogonalized ones not at all.

import numpy as np

from lowsync import orthogonality_loss, qr_factorize

rng = np.random.default_rng(22)


def conditioned(n, k, kappa):
    U, _ = np.linalg.qr(rng.standard_normal((n, k)))
    W, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return U @ np.diag(np.geomspace(1.0, 1.0 / kappa, k)) @ W.T


methods = ["cgs1", "mgs", "mgs_wy", "cgs2_two_sync", "cgs2", "cgs2_wy"]
kappas = [1e2, 1e4, 1e6, 1e8]

print(f"{'kappa':>8s}", *(f"{m:>14s}" for m in methods))
for kappa in kappas:
    M = conditioned(60, 20, kappa)
    row = []
    for method in methods:
        Q, _ = qr_factorize(M, method=method)
        row.append(orthogonality_loss(Q))
    print(f"{kappa:>8.0e}", *(f"{v:>14.2e}" for v in row))

print()
print("Reading the columns: cgs1 loses ~4 digits per 100x in kappa, the")
print("modified variants ~2, and the re-orthogonalized classical kernels")
print("(cgs2, cgs2_wy) stay at machine precision throughout.")
