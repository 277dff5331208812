"""muonlab: matrix-sign optimizers and a desk-scale experiment harness.

The library implements the Muon update (momentum, Newton-Schulz
orthogonalization, RMS-matched and weight-decayed step) next to an AdamW
baseline, on top of a small deterministic linear-algebra core, plus the
harness that runs batch-size sweeps, component ablations, and
width-telescoping hyperparameter searches over synthetic tasks.

Throughout, "tokens" means training samples consumed: one sample is one
token, which is what makes the token-consumption ratios well-defined at
desk scale.
"""

from .errors import (
    ConfigError,
    DegenerateInputError,
    MuonlabError,
    NumericError,
    RangeError,
    ShapeError,
)
from .linalg import (
    F32,
    F64,
    Matrix,
    Rng,
    SvdResult,
    dtype_of,
    frobenius_norm,
    matmul,
    spectral_norm_estimate,
    svd,
    trace,
)
from .msign import (
    COEFF_PRESETS,
    MsignReport,
    NsCoefficients,
    OPTIMIZED_COEFFS,
    SPECTRUM_BAND,
    TAYLOR_COEFFS,
    band_violation,
    coefficient_preset,
    msign_exact,
    msign_newton_schulz,
    newton_schulz_step,
    quintic_orbit,
)
from .optim import (
    AdamWState,
    MuonHyper,
    MuonState,
    OptimizerBank,
    OptimizerSpec,
    SCHEDULE_KINDS,
    Schedule,
    adamw_step,
    clip_global_norm,
    muon_step,
    route_parameter,
    schedule_eta,
    shampoo_direction,
    shampoo_step_oracle,
)
from .tasks import (
    GradCheckReport,
    MlpSpec,
    MlpTask,
    QuadraticSpec,
    QuadraticTask,
    build_task,
    grad_check,
    mlp_loss_grad,
    quadratic_loss_grad,
)
from .harness import (
    ABLATION_CELLS,
    AblationCell,
    AblationTable,
    ETA_TUNING_MULTIPLIERS,
    EvalRow,
    RunRecord,
    STOP_RULES,
    SweepCell,
    SweepResult,
    TelescopeGrid,
    TelescopeResult,
    TelescopeStage,
    TrainConfig,
    ablate,
    batch_sweep,
    loss_spike_count,
    rate_check,
    telescope_sweep,
    train,
)
from .reports import (
    RUN_CSV_COLUMNS,
    SUMMARY_CSV_COLUMNS,
    emit_reports,
    read_run_csv,
    svg_line_plot,
    write_run_csv,
)

__version__ = "0.1.0"
