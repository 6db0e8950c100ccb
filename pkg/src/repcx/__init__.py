"""repcx: layer-by-layer representation complexity profiling.

Measures how well a network's intermediate representations separate
classes, using the exact leave-one-out 1-nearest-neighbor error as the
complexity measure, with a from-scratch forward engine for the classic
5-layer convolutional digit classifier and an ingestion path for
externally captured activations.
"""

from .complexity import (
    ComplexityEstimate,
    loo_nn_error,
    loo_nn_predict,
    loo_predictions,
    squared_distance,
    subsample,
    subset_mean_complexity,
)
from .errors import (
    DimensionError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    RepcxError,
    UnsupportedDtypeError,
    ValidationError,
)
from .lenet import (
    ActivationTrace,
    BoundaryId,
    avgpool2,
    boundaries,
    classify,
    conv2d_valid,
    dropout_apply,
    end_to_end_error,
    forward,
    forward_batch,
    linear,
    tanh_map,
)
from .pointset import LabeledPointSet, PointSetMeta
from .profiler import (
    ProfileReport,
    RunConfig,
    emit_report,
    measure_boundary,
    profile_run,
    reduce_dataset,
)
from .tensor_io import (
    LeNetWeights,
    flatten,
    load_dataset,
    load_labels,
    load_mnist_idx,
    load_tensor,
    load_weights,
    save_tensor,
    save_weights,
)

__version__ = "0.1.0"
