"""Edge-flow imputation with kernel/landmark multilinear factorizations."""

from flowkrim.simplicial import (
    SimplicialComplex2,
    HodgeLaplacian1,
    build_complex,
    hodge_laplacian_1,
    boundary_check,
    load_network,
)
from flowkrim.sampling import (
    SamplingMask,
    apply_mask,
    sample_per_snapshot,
    consistency_project,
)
from flowkrim.kernels import (
    NavigatorSet,
    LandmarkSet,
    KernelSpec,
    build_navigators,
    select_landmarks,
    kernel_matrix,
)
from flowkrim.solver import (
    KrimFactors,
    SolverConfig,
    objective,
    solve_x,
    solve_u1,
    solve_u2,
    solve_v,
    sca_step,
    gamma_schedule,
    fit,
)
from flowkrim.baselines import flow_ssl, mmf_fit
from flowkrim.datagen import FlowSpec, generate_flows, load_flows, save_flows
from flowkrim.metrics import mae, param_count, sparsity_report

__version__ = "0.1.0"
