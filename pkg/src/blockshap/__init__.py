"""Block-diagonal covariance selection and exact Shapley effects for
Gaussian linear models."""

from .covariance import (
    BlockCovariance,
    SampleMoments,
    StructureConfig,
    StructureScan,
    empirical_moments,
    estimate_covariance,
    estimate_structure,
    frobenius_risk,
    kappa_default,
    neg_loglik,
    penalized_nll,
    project_block,
    structure_scan,
)
from .crb import CrbMatrix, crb_block, crb_unconstrained, logdet_clt_variance
from .errors import NotPositiveDefiniteError, NumericalError
from .experiments import (
    CrbCheckConfig,
    ExperimentConfig,
    ExperimentResult,
    run_crb_check,
    run_fig1,
    run_fig2,
    run_recovery,
)
from .partition import (
    Partition,
    components_of_threshold,
    enumerate_partitions,
    meet,
    penalty,
    refines,
    same_group,
)
from .regression import LinearFit, ols_fit
from .shapley import (
    GaussianLinearModel,
    ShapleyVector,
    conditional_variance,
    shapley_block,
    shapley_full,
    shapley_plugin,
)
from .synthdata import (
    GeneratorSpec,
    derive_rng,
    derive_seed,
    generate_beta,
    generate_sigma,
    sample_gaussian,
    sample_output,
)

__version__ = "0.1.0"

__all__ = [
    "BlockCovariance",
    "CrbCheckConfig",
    "CrbMatrix",
    "ExperimentConfig",
    "ExperimentResult",
    "GaussianLinearModel",
    "GeneratorSpec",
    "LinearFit",
    "NotPositiveDefiniteError",
    "NumericalError",
    "Partition",
    "SampleMoments",
    "ShapleyVector",
    "StructureConfig",
    "StructureScan",
    "components_of_threshold",
    "conditional_variance",
    "crb_block",
    "crb_unconstrained",
    "derive_rng",
    "derive_seed",
    "empirical_moments",
    "enumerate_partitions",
    "estimate_covariance",
    "estimate_structure",
    "frobenius_risk",
    "generate_beta",
    "generate_sigma",
    "kappa_default",
    "logdet_clt_variance",
    "meet",
    "neg_loglik",
    "ols_fit",
    "penalized_nll",
    "penalty",
    "project_block",
    "refines",
    "run_crb_check",
    "run_fig1",
    "run_fig2",
    "run_recovery",
    "same_group",
    "sample_gaussian",
    "sample_output",
    "shapley_block",
    "shapley_full",
    "shapley_plugin",
    "structure_scan",
]
