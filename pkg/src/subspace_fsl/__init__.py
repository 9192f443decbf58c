"""Non-negative subspace representations for few-shot classification.

Set ``SUBSPACE_FSL_DISABLE_NUMBA=1`` before import to run the pure-numpy
kernels instead of the numba-compiled ones.
"""
from ._accel import backend
from .analysis import (
    CcaResult,
    SparsityReport,
    cca_similarity,
    compare_models,
    hoyer_sparsity,
    reconstruction_error,
    sparsity_report,
)
from .cam import ActivationMap, FeatureMapStack, bilinear_resize, cam_generate, cam_raw
from .errors import (
    ConfigError,
    DimensionError,
    InsufficientSamplesError,
    LabelError,
    LabelMismatchError,
    NonNegativityError,
    NumericError,
    ParseError,
    SubspaceError,
)
from .factorize import (
    FactorModel,
    Method,
    dnmf_fit,
    fit,
    nmf_fit,
    one_hot,
    project_test,
    scnmfs_fit,
    truncated_svd,
)
from .fewshot import (
    EpisodeSpec,
    EvalReport,
    FeatureDataset,
    LinearHead,
    evaluate,
    evaluate_episodes,
    knn_predict,
    load_features,
    sample_episode,
    standardize,
    train_linear_head,
)

__version__ = "0.1.0"
