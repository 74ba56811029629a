from .config import (
    CLASS_NAMES,
    CLASS_SIZES,
    AgentSpec,
    ConfigError,
    EgoSpec,
    NoiseParams,
    ScenarioConfig,
    SensorParams,
)
from .dataset import DatasetFormatError, read_config, read_dataset, read_ground_truth, write_dataset
from .simulator import STATIC_LABEL, AgentState, GroundTruthFrame, SensorFrame, Simulator, simulate
from .terrain import Octave, OutOfExtent, TerrainField, TerrainParams, generate_terrain, height_at

__all__ = [
    "CLASS_NAMES", "CLASS_SIZES", "AgentSpec", "ConfigError", "EgoSpec", "NoiseParams",
    "ScenarioConfig", "SensorParams", "DatasetFormatError", "read_config", "read_dataset",
    "read_ground_truth", "write_dataset", "STATIC_LABEL", "AgentState", "GroundTruthFrame",
    "SensorFrame", "Simulator", "simulate", "Octave", "OutOfExtent", "TerrainField",
    "TerrainParams", "generate_terrain", "height_at",
]
