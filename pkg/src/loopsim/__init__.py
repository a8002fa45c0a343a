"""loopsim: simulator and calibration toolkit for a recirculating-loop
photonic processor that evolves a spin-boson system in unary encoding."""

from .calibrate import (
    ErrorReport,
    MethodComparison,
    ParamTable,
    TrainResult,
    TrainingConfig,
    compare_methods,
    error_metric,
    finite_diff_gradient,
    flatten_step_matrices,
    forward_all_inputs,
    kl_loss,
    load_param_table,
    theory_step_matrices,
    train,
    win_stats,
)
from .loopchip import (
    ChipConfig,
    DegenerateStepError,
    PowerMatrix,
    StageRecord,
    conditional_probabilities,
    power_matrix,
    run_loop,
    step_power_matrices,
)
from .losses import (
    LossBudget,
    PlatformSpec,
    load_platforms,
    mode_scaling_loss,
    optimal_splitters,
    platform_comparison,
    ratio_loss_db,
    total_loss_db,
)
from .mesh import (
    DecompositionError,
    MeshNoise,
    MeshPlan,
    MZICell,
    clements_decompose,
    embed_cell,
    imperfect_mzi,
    mesh_forward,
    mzi_transfer,
    noise_offsets,
    plan_from_json,
    plan_to_json,
)
from .model import (
    BasisLabel,
    SpinBosonParams,
    basis_label,
    build_hamiltonian,
    channel_index,
    evolve_exact,
    step_unitary,
    truncated_ladder,
)
from .montecarlo import (
    ArrivalHistogram,
    CountingConfig,
    ProbabilityEstimates,
    default_windows,
    estimate_probabilities,
    expected_histograms,
    peak_separation_check,
    sample_run,
)

__version__ = "0.1.0"
