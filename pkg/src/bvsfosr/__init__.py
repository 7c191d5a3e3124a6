"""Bayesian variable selection for function-on-scalar regression."""
from .errors import (
    ChainFailure,
    ConstantCovariate,
    DegenerateConditional,
    DegreesOfFreedom,
    DomainViolation,
    FOSRError,
    GridMismatch,
    IllConditionedPrecision,
    InsufficientBasisCount,
    NullVariation,
    NumericalInput,
    ParseError,
    SaturatedFit,
    StuckChains,
    ValidationError,
)
from .fda import (
    BasisSystem,
    DesignStructures,
    FunctionalDataset,
    StandardizedDataset,
    assemble_design,
    build_bspline_basis,
    eval_basis,
    standardize,
)
from .inference import (
    ConvergenceReport,
    FitSummary,
    convergence_report,
    credible_bands,
    gelman_rubin,
    map_estimate,
    predict,
    summarize,
)
from .metrics import MetricReport, gcv, mse_truth, r2_adjusted
from .pipeline import FitResult, fit_model
from .sampler import (
    ChainState,
    FOSRProblem,
    GibbsConfig,
    Hyperparameters,
    PosteriorDraws,
    gibbs_step,
    run_chains,
)
from .synth import ModelConfig, ReplicationResult, SyntheticSpec, generate_dataset, run_replications

__version__ = "0.1.0"
