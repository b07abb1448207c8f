"""Conservative Bayesian priors for block-structured nuisance parameters
with unknown cross-block correlations."""

from .blockmodel import (
    BlockSpec,
    Completion,
    Scenario,
    WhitenedView,
    assemble_uncorrelated,
    assemble_with_cross,
    block_whiten,
    sample_completion,
    sample_whitened,
)
from .bounds import WorstCase, check_limit, conservative_prior, extrinsic_variance, worst_case
from .errors import (
    BlockPriorError,
    BoundViolation,
    InvalidCompletion,
    InvalidMatrix,
    MissingQuadraticMean,
    NegativeConditionalVariance,
    NotPositiveDefinite,
    NotPSD,
    SamplingFailure,
    ScenarioError,
    ShapeError,
)
from .higher import (
    BiasReport,
    SafetyReport,
    extrinsic_quadratic_variance,
    intrinsic_quadratic_shift,
    intrinsic_safety,
    max_bias,
    mean_shift,
    quadratic_extrinsic_bound,
)
from .matcore import eigen_extrema, is_psd, whitening_factor
from .mcverify import SimResult, analytic_total_variance, simulate, verify_conservative

__version__ = "0.1.0"
