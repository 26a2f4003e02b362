"""Event-camera stream toolkit: simulation, file formats, window images,
pose filtering, calibration and evaluation metrics."""

from .events import (
    EVENT_DTYPE,
    Event,
    EventWindow,
    Polarity,
    SensorGeometry,
    StreamValidationReport,
    as_event_array,
    events_from_columns,
    slide_windows,
    validate_stream,
)
from .representations import (
    RepresentationKind,
    WindowImage,
    build_eci,
    build_eci_s,
    build_eoi,
    build_lnes,
    rescale_window_length,
    swap_polarity,
)
from .simulator import (
    BezierTrajectory,
    CameraConfig,
    LightingConfig,
    LogBrightnessFrame,
    MemoryFrame,
    Primitive,
    SceneConfig,
    bezier_pose,
    render_frame,
    run_simulation,
    sample_scene,
    shade,
    simulate,
    step,
    to_log_brightness,
)
from .stream_format import (
    PoseVector,
    StreamFormatError,
    decode_events,
    decode_metadata,
    encode_events,
    encode_metadata,
    load_paired,
)
from .filtering import (
    Action,
    FilterSettings,
    KalmanState,
    Mode,
    PoseFilter,
    Scheduler,
    lnes_information,
    mode_for_residual,
    predict,
    schedule,
    settings_for_mode,
    update,
    white_noise_cov,
)
from .calibration import CalibrationInput, estimate_noise_rates, estimate_threshold
from .metrics import KeypointSet, PckCurve, auc, default_thresholds, pck2d_palm, pck3d

__version__ = "0.1.0"
