"""Adaptive live-video-analytics streaming over LEO satellite uplinks.

Trace-driven: recorded or synthetic 1 Hz uplink traces and per-GOP video
processing traces drive a two-fidelity pipeline simulator, a family of
throughput predictors, and a shift-guided receding-horizon configuration
optimizer, plus the baselines and metrics to compare them.
"""

from .controller import (
    AdaRateController,
    ControllerConfig,
    FixedController,
    OptimizerInstance,
    StageParams,
    StarStreamController,
    baseline_adarate,
    baseline_fixed,
    brute_force_oracle,
    make_mpc_controller,
    make_starstream_controller,
    optimize_dp,
    plan_horizon,
    select_gop_length,
)
from .errors import (
    AlignmentError,
    ExternalPredictorError,
    PredictionCoverageError,
    ProtocolError,
    StallError,
    StarStreamError,
    TraceFormatError,
    TraceValidationError,
    UsageError,
)
from .predictors import (
    FilePredictor,
    HarmonicMeanPredictor,
    MovingAveragePredictor,
    OraclePredictor,
    PredictionRequest,
    PredictionResult,
    Predictor,
    SubprocessPredictor,
    derive_shifts_from_throughput,
    eval_predictor,
    evaluate_on_traces,
    make_predictor,
    predict_hm,
    predict_ma,
)
from .profiler import (
    GammaState,
    ProfileTable,
    build_profile,
    compute_f1,
    compute_uncertainty,
    estimate_accuracy,
    iou,
    prune_configs,
    update_gamma,
)
from .simulator import (
    Decision,
    DecisionContext,
    FixedSchedule,
    GopOutcome,
    PipelineState,
    SessionResult,
    ThroughputIntegrator,
    compute_metrics,
    gop_transition_uniform,
    simulate_gop_analytic,
    simulate_session,
)
from .traces import (
    BITRATE_CANDIDATES_MBPS,
    FRAME_RATE_CANDIDATES,
    GOP_LENGTH_CANDIDATES,
    NATIVE_FRAME_RATE,
    RESOLUTION_CANDIDATES,
    DatasetSplit,
    Detection,
    DetectionTrace,
    EncodingConfig,
    NetworkSample,
    NetworkTrace,
    SyntheticNetworkParams,
    SyntheticVideoParams,
    VideoTraceSet,
    VideoUnitRecord,
    annotate_shifts,
    gen_synthetic_network_trace,
    gen_synthetic_video_trace,
    load_detection_file,
    load_network_trace,
    load_video_trace_set,
    make_network_trace,
    save_network_trace,
    save_video_trace_set,
    split_dataset,
)

__version__ = "0.1.0"
