"""dynbench: online evaluation harness for pedestrian motion prediction.

Replays scenes as a timed stream, invokes pluggable predictors under a
per-tick deadline, and scores them online with dynamic displacement metrics
under Best-of-N candidate selection.
"""

from .errors import (
    BridgeError,
    BridgePeerError,
    ConfigError,
    ContractError,
    DynbenchError,
    EmptyDatasetError,
    InsufficientDataError,
    NoTrackError,
    ParseError,
    PredictTimeout,
    SceneAborted,
    SequencingError,
)
from .metrics import (
    AgentAccumulator,
    DatasetMetrics,
    InstantError,
    SceneAccumulator,
    SceneMetrics,
    ade,
    aggregate_dataset,
    fde,
    finalize_scene,
    mean_std,
    score_instant,
)
from .predictors import (
    CandidateTrajectory,
    ConstantVelocityPredictor,
    Modality,
    NoisyConstantVelocityPredictor,
    PredictionRecord,
    PredictionRequest,
    Predictor,
    ProbabilisticConstantVelocityPredictor,
    RequestItem,
    build_predictor,
    select_top_k,
)
from .replay import (
    PendingPrediction,
    ReplayConfig,
    SceneResult,
    TickOutcome,
    TimeMode,
    enforce_deadline,
    run_scene,
)
from .scenes import (
    ObservationModel,
    ObservedFrame,
    Scene,
    Track,
    TrackPoint,
    WalkerConfig,
    filter_scenes,
    generate_synthetic_scene,
    load_scenes_jsonl,
    load_trajectory_log,
    observe,
    resample_to_grid,
    scene_from_json,
    scene_to_json,
    write_scenes_jsonl,
)
from .tracking import Tracker, TrackerConfig, TrackState

__version__ = "0.1.0"
