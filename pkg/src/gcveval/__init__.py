"""Synthetic dataset quality via generalized cross-validation.

Harmonizes annotated datasets to a shared label space, drives an (N+1)^2
train/test grid through pluggable external runners, and scores the
resulting transfer-ratio matrix into a simulation quality metric (A_o)
and a transfer quality metric (S_o).
"""

from .annotations import (
    COCO_JSON,
    FORMATS,
    INTERCHANGE,
    KITTI_TXT,
    YOLO_TXT,
    AnnotationRecord,
    parse_annotations,
    read_interchange,
    write_interchange,
)
from .config import ExperimentConfig, RunnerSpec, load_config
from .errors import (
    ConfigError,
    DegenerateWeights,
    DuplicateCell,
    EmptyIntersection,
    GcvEvalError,
    InsufficientSamples,
    MalformedLine,
    MissingCell,
    MissingSplit,
    MixedMetrics,
    ProtocolError,
    RunnerError,
    RunnerFailure,
    RunnerTimeout,
    SchemaError,
    TooFewReferences,
    UndefinedDominance,
    UnknownImageDimension,
    ValidationError,
    ZeroDiagonal,
)
from .harmonize import (
    DatasetManifest,
    HarmonizedSplit,
    LabelSpace,
    filter_to_shared,
    intersect_label_spaces,
    make_splits,
    prepare_experiment,
)
from .matrix import (
    CrossPerformanceMatrix,
    GcvMatrix,
    MetricValue,
    build_matrix,
    normalize,
)
from .metrics import (
    QualityScores,
    SimulationWeights,
    TransferWeights,
    score,
    simulation_quality,
    simulation_weights,
    transfer_quality,
    transfer_weights,
)
from .orchestrator import CellResult, ExperimentPlan, collect, execute, plan
from .report import QualityReport, build_report
from .toyworld import ToyDomainSpec, ToyModel, generate_toy_dataset

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "CellResult",
    "ConfigError",
    "CrossPerformanceMatrix",
    "DatasetManifest",
    "DegenerateWeights",
    "DuplicateCell",
    "EmptyIntersection",
    "ExperimentConfig",
    "ExperimentPlan",
    "GcvEvalError",
    "GcvMatrix",
    "HarmonizedSplit",
    "InsufficientSamples",
    "LabelSpace",
    "MalformedLine",
    "MetricValue",
    "MissingCell",
    "MissingSplit",
    "MixedMetrics",
    "ProtocolError",
    "QualityReport",
    "QualityScores",
    "RunnerError",
    "RunnerFailure",
    "RunnerSpec",
    "RunnerTimeout",
    "SchemaError",
    "SimulationWeights",
    "TooFewReferences",
    "ToyDomainSpec",
    "ToyModel",
    "TransferWeights",
    "UndefinedDominance",
    "UnknownImageDimension",
    "ValidationError",
    "ZeroDiagonal",
    "build_matrix",
    "build_report",
    "collect",
    "execute",
    "filter_to_shared",
    "generate_toy_dataset",
    "intersect_label_spaces",
    "load_config",
    "make_splits",
    "normalize",
    "parse_annotations",
    "plan",
    "prepare_experiment",
    "read_interchange",
    "score",
    "simulation_quality",
    "simulation_weights",
    "transfer_quality",
    "transfer_weights",
    "write_interchange",
    "COCO_JSON",
    "FORMATS",
    "INTERCHANGE",
    "KITTI_TXT",
    "YOLO_TXT",
]
