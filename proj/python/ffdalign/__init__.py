"""Free-form deformation shape alignment."""

from ._core import (
    Checkpoint,
    ControlWarp,
    DifferentialWarp,
    IoError,
    Mode,
    NumericError,
    ValidationError,
    align_pair,
    apply_mask,
    build_control_warp,
    fresh_checkpoint,
    identity_control,
    identity_differential,
    infer,
    iou,
    is_axially_monotonic,
    load_checkpoint,
    parse_mode,
    ransac_affine,
    resample,
    save_checkpoint,
    synthesize,
    train,
    tv_identity_loss,
    upsample,
)

__version__ = "0.1.0"
