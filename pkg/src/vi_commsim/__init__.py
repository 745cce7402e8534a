"""Communication-efficient distributed solving of strongly monotone
variational inequalities: permutation-compressed optimistic solver,
extragradient baseline, synthetic problem families and an experiment
harness with per-device communication accounting."""

__version__ = "0.1.0"

from .algorithms import (
    SolverState,
    StepOutcome,
    TheoremParams,
    contraction_factor,
    default_extragradient_eta,
    extra_gradient_step,
    lyapunov_value,
    optimistic_masha_init,
    optimistic_masha_step,
    theorem_params,
)
from .compressors import (
    IDENTITY,
    PERMUTATION,
    CompressorRound,
    aggregate,
    compress,
    derive_round,
    enumerate_unbiasedness,
    variance_gap,
)
from .core import (
    CompositeTerm,
    IndicatorBall,
    OperatorOracle,
    ProblemConstants,
    ScaledL2,
    Zero,
    dist_sq,
    prox,
)
from .errors import (
    ConfigError,
    DimensionError,
    DivergedSeedsError,
    DivergenceError,
    EnumerationSizeError,
    LinearSolveError,
    PowerIterationError,
    VicommError,
)
from .problems import (
    BilinearSaddleInstance,
    QuadraticInstance,
    generate_bilinear,
    generate_quadratic,
    load_instance,
    measure_constants,
    power_iteration_norm,
    saddle_operator,
    save_instance,
    solve_star,
)
from .simulator import (
    ALG_EXTRA_GRADIENT,
    ALG_OPTIMISTIC_MASHA,
    RunConfig,
    RunMetrics,
    SeedAggregate,
    aggregate_metrics,
    aggregate_seeds,
    floats_to_accuracy,
    run,
    seed_mean_psi_ratios,
    write_csv,
)
