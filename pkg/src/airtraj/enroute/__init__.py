"""En-route forecasting: weather grids, kinematics, dual-attention model."""

from .kinematics import KinematicTriple, derive_kinematics
from .model import (
    ConvStackParams,
    DualAttnParams,
    EnrouteTrainConfig,
    EnrouteTrainReport,
    encode_weather,
    evaluate_enroute,
    fit_enroute_normalizer,
    input_attention,
    load_enroute,
    lva_loss,
    predict_enroute,
    save_enroute,
    teacher_forced_loss,
    temporal_attention,
    train_enroute,
)
from .sample import DEFAULT_HORIZON, DEFAULT_T_OBS, PLAN_LENGTH, EnrouteSample
from .weather import (
    CHANNELS,
    WeatherGrid,
    load_weather_grid,
    save_weather_grid,
    standardize_grid,
    synth_weather_grid,
)

__all__ = [
    "CHANNELS",
    "DEFAULT_HORIZON",
    "DEFAULT_T_OBS",
    "PLAN_LENGTH",
    "ConvStackParams",
    "DualAttnParams",
    "EnrouteSample",
    "EnrouteTrainConfig",
    "EnrouteTrainReport",
    "KinematicTriple",
    "WeatherGrid",
    "derive_kinematics",
    "encode_weather",
    "evaluate_enroute",
    "fit_enroute_normalizer",
    "input_attention",
    "load_enroute",
    "load_weather_grid",
    "lva_loss",
    "predict_enroute",
    "save_enroute",
    "save_weather_grid",
    "standardize_grid",
    "synth_weather_grid",
    "teacher_forced_loss",
    "temporal_attention",
    "train_enroute",
]
