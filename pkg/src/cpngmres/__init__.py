"""CP tensor decomposition by ALS, N-GMRES-accelerated ALS and nonlinear CG."""
from .als import SingularSystemError, als_solve, als_sweep
from .kruskal import (
    CPObjective,
    KruskalTensor,
    fit_h,
    gradient,
    normalize_and_reorder,
    objective,
    objective_and_gradient,
    read_ktensor,
    write_ktensor,
)
from .linesearch import LineSearchParams, LineSearchResult, LineSearchStatus, more_thuente
from .ncg import NCGConfig, ncg_minimize, ncg_solve
from .ngmres import NGMRES, AccelWindow, NGMRESConfig, accelerate, ngmres_minimize, ngmres_solve
from .problems import DenseProblemSpec, LaplacianSpec, gen_dense_problem, gen_laplacian, random_initial_guess
from .tensor import (
    DenseTensor,
    SparseTensor,
    TensorFormatError,
    frobenius_norm,
    gram_hadamard,
    khatri_rao,
    matricize,
    mttkrp,
    read_tns,
    write_tns,
)
from .trace import StopReason, Trace, TraceRecord, read_trace_csv, write_trace_csv

__version__ = "0.1.0"

__all__ = [
    "SingularSystemError",
    "als_solve",
    "als_sweep",
    "CPObjective",
    "KruskalTensor",
    "fit_h",
    "gradient",
    "normalize_and_reorder",
    "objective",
    "objective_and_gradient",
    "read_ktensor",
    "write_ktensor",
    "LineSearchParams",
    "LineSearchResult",
    "LineSearchStatus",
    "more_thuente",
    "NCGConfig",
    "ncg_minimize",
    "ncg_solve",
    "NGMRES",
    "AccelWindow",
    "NGMRESConfig",
    "accelerate",
    "ngmres_minimize",
    "ngmres_solve",
    "DenseProblemSpec",
    "LaplacianSpec",
    "gen_dense_problem",
    "gen_laplacian",
    "random_initial_guess",
    "DenseTensor",
    "SparseTensor",
    "TensorFormatError",
    "frobenius_norm",
    "gram_hadamard",
    "khatri_rao",
    "matricize",
    "mttkrp",
    "read_tns",
    "write_tns",
    "StopReason",
    "Trace",
    "TraceRecord",
    "read_trace_csv",
    "write_trace_csv",
]
