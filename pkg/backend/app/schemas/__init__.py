# Импортируем все схемы, чтобы они были доступны через app.schemas
from .base import BaseModel, ParamsModel, dump_json
from .guidepost import GuidepostConfig, GuidepostShape, PenaltyParams
from .model import FieldSamplerParams, ModelParams
from .optimizer import CGStatus, OptimizerConfig, OptIterationRecord, OptTrace, StopReason
from .reports import AssessmentReport, AssessmentSample, ObjectiveStats, StateSolveReport, SweepRow
from .run import AssessSpec, MeshSpec, RunConfig, SweepSpec, TargetKind, TargetSpec

__all__ = [
    'BaseModel', 'ParamsModel', 'dump_json',
    'GuidepostConfig', 'GuidepostShape', 'PenaltyParams',
    'FieldSamplerParams', 'ModelParams',
    'CGStatus', 'OptimizerConfig', 'OptIterationRecord', 'OptTrace', 'StopReason',
    'AssessmentReport', 'AssessmentSample', 'ObjectiveStats', 'StateSolveReport', 'SweepRow',
    'AssessSpec', 'MeshSpec', 'RunConfig', 'SweepSpec', 'TargetKind', 'TargetSpec',
]
