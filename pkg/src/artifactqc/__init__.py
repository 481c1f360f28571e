"""Unsupervised image quality control on grayscale volumes.

The pipeline: a contrastively trained encoder maps slices to a 2-D
artifact representation, a normalizing flow provides an exact density
over volume-level embeddings, and volumes whose density falls below a
calibrated quantile are flagged for review.
"""

from .artsim import (
    CorruptionSpec,
    add_bias_field,
    add_motion,
    add_noise,
    add_wraparound,
    corrupt,
    corrupt_volume,
)
from .encoder import (
    ContrastiveBatch,
    EncoderConfig,
    build_batch,
    encode,
    encode_batch,
    info_nce_loss,
    train_encoder,
)
from .flow import (
    FlowModel,
    flow_forward,
    flow_inverse,
    load_flow,
    log_density,
    nll_loss,
    sample,
    save_flow,
    train_flow,
)
from .qc import (
    QCRecord,
    ThresholdCalibration,
    calibrate_threshold,
    classify,
    contingency,
    emit_report,
    volume_embedding,
)
from .volio import (
    SliceImage,
    Volume,
    center_slices,
    extract_slice,
    load_volume,
    normalize_intensity,
    pad_to,
    write_volume,
)

__version__ = "0.1.0"

__all__ = [
    "CorruptionSpec",
    "add_bias_field",
    "add_motion",
    "add_noise",
    "add_wraparound",
    "corrupt",
    "corrupt_volume",
    "ContrastiveBatch",
    "EncoderConfig",
    "build_batch",
    "encode",
    "encode_batch",
    "info_nce_loss",
    "train_encoder",
    "FlowModel",
    "flow_forward",
    "flow_inverse",
    "load_flow",
    "log_density",
    "nll_loss",
    "sample",
    "save_flow",
    "train_flow",
    "QCRecord",
    "ThresholdCalibration",
    "calibrate_threshold",
    "classify",
    "contingency",
    "emit_report",
    "volume_embedding",
    "SliceImage",
    "Volume",
    "center_slices",
    "extract_slice",
    "load_volume",
    "normalize_intensity",
    "pad_to",
    "write_volume",
    "__version__",
]
