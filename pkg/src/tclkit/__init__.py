"""tclkit: tensor contraction layers with hand-derived backprop,
parameter/FLOP analysis, and a training CLI."""

__version__ = "0.1.0"

from .tensor import (
    ModeError,
    ShapeError,
    UnfoldedMatrix,
    as_tensor,
    fold,
    kronecker,
    mode_product,
    multi_mode_product,
    unfold,
)
from .layers import (
    BatchNormLayer,
    Conv2dLayer,
    DegenerateBatchError,
    DenseLayer,
    FactorSet,
    FlattenLayer,
    LabelError,
    MaxPool2dLayer,
    NumericError,
    ReluLayer,
    TensorContractionLayer,
    grad_check,
    gradient_suite,
    softmax_cross_entropy,
)
from .network import (
    ConfigError,
    EpochRecord,
    Network,
    NetworkConfig,
    SGD,
    TrainConfig,
    TrainMetrics,
    build_network,
    evaluate,
    infer_shapes,
    train,
    train_epoch,
)
from .analysis import (
    BaselineError,
    CostReport,
    LayerCost,
    TableRow,
    cost_report,
    fc_flops,
    fc_param_count,
    measured_tcl_flops,
    preset_cost_report,
    reproduce_table,
    space_savings,
    tcl_flops,
    tcl_flops_best_order,
    tcl_param_count,
)
from .data import (
    Dataset,
    IdxConsistencyError,
    IdxFormatError,
    IdxTruncatedError,
    load_idx,
    save_idx,
    synthetic_dataset,
)
from .presets import baseline_for, get_preset, preset_names
from .config import RunManifest, manifest_from_file, resolve_manifest
