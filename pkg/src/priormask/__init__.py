"""Context-aware, noise-filtered prior masks for few-shot segmentation."""
from .errors import (
    BadMagicError,
    DimensionError,
    DimOverflowError,
    FormatError,
    NumericError,
    ParameterError,
    PriorMaskError,
    RangeError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .matching import (
    CorrVolume,
    PatchSet,
    PriorChannel,
    elementwise_corr,
    max_reduce,
    normalize_minmax,
    patch_corr,
    stack_patches,
)
from .nsm import NsmWeights, concentrate, fit, fit_step, init_weights, noise_filter, rectify
from .pipeline import (
    EmptySupportWarning,
    Episode,
    PipelineConfig,
    PriorStack,
    SupportShot,
    baseline_prior,
    generate_prior,
)
from .tensor import (
    BinaryMask,
    FeatureMap,
    ProjectionWeights,
    avg_pool_2x2,
    hadamard_mask,
    l2_normalize_channels,
    project_channels,
)

__version__ = "0.1.0"
