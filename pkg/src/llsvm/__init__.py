"""Local linear support vector machines with smoothing kernels."""

from .classifier import (
    EmptyBallPolicy,
    FixedBandwidth,
    KnnBandwidth,
    LLSVMConfig,
    Prediction,
    kbr_predict,
    knn_predict,
    linear_predict,
    poly_map,
    predict,
    predict_batch,
    resolve_bandwidth,
    train_global_linear,
)
from .dataset import LabeledDataset
from .kernels import KernelSpec, normalization_constant
from .solver import LocalProblem, SolverResult, primal_value, solve
from .spatial import IndexHandle, build_index

__version__ = "0.1.0"
