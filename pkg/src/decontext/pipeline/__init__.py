"""End-to-end orchestration: configuration, stage files, synthetic data, and the stages."""

from decontext.pipeline.config import ConfigError, PipelineConfig, load_config
from decontext.pipeline.records import ConfigMismatch, Sample, StageError, read_dataset
from decontext.pipeline.stages import StageResult, cmd_answer, cmd_evaluate, cmd_extract, cmd_train, run_pipeline
from decontext.pipeline.synth import SynthSummary, synthesize

__all__ = [
    "ConfigError", "ConfigMismatch", "PipelineConfig", "Sample", "StageError", "StageResult", "SynthSummary",
    "cmd_answer", "cmd_evaluate", "cmd_extract", "cmd_train", "load_config", "read_dataset", "run_pipeline",
    "synthesize",
]
