"""U-shaped neural operators on numpy.

Spectral integral-operator layers that contract and re-expand function
domains with skip connections, the Darcy / Navier-Stokes data generators
used to exercise them, and a small training and evaluation harness.
"""

__version__ = "0.1.0"

from .errors import (
    DataError,
    NonFiniteError,
    NumericalError,
    ShapeError,
    UnoError,
)
from .layers import (
    GridFunction,
    IntegralLayer,
    PointwiseMap,
    concat_skip,
    integral_layer_apply,
    lift,
    positional_embedding,
    project,
)
from .models import (
    LayerSpec,
    Model,
    ModelConfig,
    activation_memory_report,
    build_model,
    build_uno_2d,
    build_uno_3d,
    forward,
    forward_values,
    load_checkpoint,
    make_config_2d,
    make_config_3d,
    param_count,
    save_checkpoint,
    trace_extents,
)
from .spectral import ModeSpec, SpectralWeights, spectral_conv
from .tensor import Tensor, backward, forward_primitive, grad_check, gradients
from .training import (
    AdamState,
    Metrics,
    TrainConfig,
    adam_step,
    autoregressive_rollout,
    evaluate,
    lr_at,
    relative_l2,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
