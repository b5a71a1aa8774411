"""Event-based egocentric hand reconstruction toolkit.

Pipeline value types flow left to right: intensity frames become an event
stream (dvs), the stream is cut into fixed windows (events) and encoded as
LNES frames or fixed-budget event clouds (representations), hand-region
masks drop background events (masks), and a small cross-attention head
decodes per-hand parameters that a parametric rig turns into joints and a
mesh (head, hand_model), scored by the loss and metric suites.
"""

from .dvs import DvsConfig, FrameSequence, simulate_events
from .errors import EvegoError
from .events import (
    EventPoint,
    EventStream,
    EventWindow,
    SensorGeometry,
    WindowConfig,
    partition_windows,
    read_events_text,
    validate_stream,
    window_history,
    write_events_text,
)
from .hand_model import (
    CameraIntrinsics,
    HandOutput,
    HandRig,
    ManoParams,
    forward,
    load_rig,
    make_minimal_rig,
    make_synthetic_rig,
    mirror_params,
    mirror_rig,
    project_mask,
    save_obj,
    save_rig,
    zero_params,
)
from .head import HeadConfig, HeadModel, forward_head, load_checkpoint, save_checkpoint, train_toy
from .losses import (
    HandLossWeights,
    HandState,
    MaskLossWeights,
    PixelProbMap,
    bce_loss,
    dice_loss,
    interhand_loss,
    joints_loss,
    mano_loss,
    mask_loss,
    total_hand_loss,
    vertices_loss,
)
from .masks import (
    DensityMaskPredictor,
    HandMask,
    StaticMaskPredictor,
    filter_cloud,
    iou,
    load_mask,
    predict_mask_density,
    save_mask,
)
from .metrics import (
    EvalSample,
    MetricReport,
    PckCurve,
    auc,
    evaluate_dataset,
    mpjpe,
    mpvpe,
    pck_curve,
    write_pck_csv,
    write_report_json,
)
from .representations import (
    DEFAULT_CLOUD_BUDGET,
    EventCloud,
    LnesFrame,
    build_cloud,
    build_history_cloud,
    build_lnes,
    read_cloud,
    write_cloud,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "DEFAULT_CLOUD_BUDGET",
    "DensityMaskPredictor",
    "DvsConfig",
    "EvalSample",
    "EvegoError",
    "EventCloud",
    "EventPoint",
    "EventStream",
    "EventWindow",
    "FrameSequence",
    "HandLossWeights",
    "HandMask",
    "HandOutput",
    "HandRig",
    "HandState",
    "HeadConfig",
    "HeadModel",
    "LnesFrame",
    "ManoParams",
    "MaskLossWeights",
    "MetricReport",
    "PckCurve",
    "PixelProbMap",
    "SensorGeometry",
    "StaticMaskPredictor",
    "WindowConfig",
    "auc",
    "bce_loss",
    "build_cloud",
    "build_history_cloud",
    "build_lnes",
    "dice_loss",
    "evaluate_dataset",
    "filter_cloud",
    "forward",
    "forward_head",
    "interhand_loss",
    "iou",
    "joints_loss",
    "load_checkpoint",
    "load_mask",
    "load_rig",
    "make_minimal_rig",
    "make_synthetic_rig",
    "mano_loss",
    "mask_loss",
    "mirror_params",
    "mirror_rig",
    "mpjpe",
    "mpvpe",
    "partition_windows",
    "pck_curve",
    "predict_mask_density",
    "project_mask",
    "read_cloud",
    "read_events_text",
    "save_checkpoint",
    "save_mask",
    "save_obj",
    "save_rig",
    "simulate_events",
    "total_hand_loss",
    "train_toy",
    "validate_stream",
    "vertices_loss",
    "window_history",
    "write_cloud",
    "write_events_text",
    "write_pck_csv",
    "write_report_json",
    "zero_params",
]
