"""Gaussian process classification on triangulated surfaces.

Spectral Matern kernels built from the Laplace-Beltrami eigenbasis,
fully Bayesian NUTS inference, a two-fidelity autoregressive extension,
geodesic nearest-neighbor baselines, active learning, and a synthetic
benchmark harness.
"""

from .mesh import (
    TriangleMesh,
    average_pairwise_geodesic,
    load_mesh,
    load_mesh_with_attributes,
    normalize_coordinates,
    write_off,
    write_ply,
)
from .laplace import SpectralBasis, assemble_operators, build_basis, solve_spectrum
from .kernel import (
    KernelParams,
    gram_matrix,
    kernel_diag,
    matern_euclidean,
    matern_manifold,
    normalization_constant,
)
from .inference import (
    LatentClassifierModel,
    NutsConfig,
    PosteriorSamples,
    PriorSpec,
    log_posterior,
    run_nuts,
)
from .gpc import (
    ClassProbabilityField,
    LabeledDataset,
    TrainedClassifier,
    load_classifier,
    predict,
    read_labels_csv,
    save_classifier,
    train,
    write_labels_csv,
)
from .mfgpc import (
    MultiFidelityParams,
    TrainedMFClassifier,
    block_covariance,
    load_mf_classifier,
    predict_mf,
    save_mf_classifier,
    train_mf,
)
from .geodesic import GeodesicField, HeatGeodesicSolver, heat_geodesics
from .baseline import nn_classify
from .sampling import (
    ActiveLearningAborted,
    FileOracle,
    SyntheticOracle,
    acquire_next,
    active_learning_loop,
    farthest_point_design,
)
from .synth import field_to_labels, make_low_fidelity, sample_prior_field
from .evaluation import (
    AssessmentConfig,
    MFBenchmarkConfig,
    balanced_accuracy,
    inducibility,
    run_assessment,
    run_mf_benchmark,
)
from . import errors, shapes

__version__ = "0.1.0"

__all__ = [
    "TriangleMesh", "average_pairwise_geodesic", "load_mesh",
    "load_mesh_with_attributes", "normalize_coordinates", "write_off",
    "write_ply",
    "SpectralBasis", "assemble_operators", "build_basis", "solve_spectrum",
    "KernelParams", "gram_matrix", "kernel_diag", "matern_euclidean",
    "matern_manifold", "normalization_constant",
    "LatentClassifierModel", "NutsConfig", "PosteriorSamples", "PriorSpec",
    "log_posterior", "run_nuts",
    "ClassProbabilityField", "LabeledDataset", "TrainedClassifier",
    "load_classifier", "predict", "read_labels_csv", "save_classifier",
    "train", "write_labels_csv",
    "MultiFidelityParams", "TrainedMFClassifier", "block_covariance",
    "load_mf_classifier", "predict_mf", "save_mf_classifier", "train_mf",
    "GeodesicField", "HeatGeodesicSolver", "heat_geodesics",
    "nn_classify",
    "ActiveLearningAborted", "FileOracle", "SyntheticOracle", "acquire_next",
    "active_learning_loop", "farthest_point_design",
    "field_to_labels", "make_low_fidelity", "sample_prior_field",
    "AssessmentConfig", "MFBenchmarkConfig", "balanced_accuracy",
    "inducibility", "run_assessment", "run_mf_benchmark",
    "errors", "shapes",
]
