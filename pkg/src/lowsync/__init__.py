"""Low-synchronization Gram-Schmidt and GMRES with reduction accounting.

The package counts every global-reduction-shaped operation (dot products,
mass inner products, norms) in an append-only ledger while solving, so the
communication cost of each orthogonalization strategy is an exact, testable
quantity rather than a model.  Stability instrumentation (the ||S||_2
independence measure, ||I - Q^T Q||, Arnoldi-recurrence defects) makes the
accuracy side of the trade visible on desk-scale problems.
"""

from .kernels import (
    CsrMatrix,
    DimensionError,
    KrylovBasis,
    NonFiniteError,
    ReductionEvent,
    ReductionLedger,
    dot,
    fused_mdot_norm,
    mass_inner_product,
    maxpy,
    mdot_pair,
    norm2,
    spmv,
)
from .gram_schmidt import (
    FactorState,
    HappyBreakdown,
    apply_T,
    cgs_iterated,
    cgs2_lvl2,
    cgs2_two_sync,
    mgs_level1,
    mgs_lvl2,
    qr_factorize,
)
from .gmres import (
    BREAKDOWN,
    CANCELLATION_FAILURE,
    CONVERGED,
    STALLED_MAXITER,
    ConvergenceHistory,
    GivensState,
    GmresConfig,
    Preconditioner,
    apply_preconditioner,
    canonical_method,
    givens_update,
    gmres_cgs1_ghysels,
    gmres_cgs2,
    gmres_mgs_l1,
    gmres_one_sync,
    gmres_pipeline2,
    gmres_two_sync,
    solve,
    solve_least_squares,
)
from .diagnostics import (
    StabilityReport,
    arnoldi_residual,
    orthogonality_loss,
    paige_metric,
    spectral_norm_small,
)
from .harness import (
    ExperimentSpec,
    MatrixMarketError,
    emit_plot_data,
    gen_laplace2d,
    gen_rhs,
    gen_simoncini,
    load_matrix_market,
    run_experiment,
)

__version__ = "0.1.0"
