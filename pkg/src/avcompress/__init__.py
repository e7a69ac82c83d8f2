"""Two-stage audio-visual token compression on abstract embedding streams.

Stage one refines native chunk boundaries with a constrained dynamic program
over a cross-modal correspondence field. Stage two compresses each refined
chunk: a quadtree spatio-temporal merge for video and a semantic-anchor merge
for audio whose budget reacts to the video outcome.
"""

from .config import HyperParams, ScenarioSpec
from .container import load_container, load_container_full, save_container
from .correspondence import CorrespondenceField, build_field
from .cpcr import (Chunk, RefinedChunking, refine_chunks_bruteforce, refine_chunks_dp,
                   validate_chunking)
from .errors import (AVCompressError, BadMagicError, BandInfeasibleError, ConfigError,
                     ContainerError, HeaderError, InfeasibleChunkingError,
                     InvariantViolationError, StructuralError, TruncatedPayloadError,
                     VersionMismatchError)
from .metrics import CostModel, flops_proxy, kv_reuse_amortized, no_reuse_per_turn
from .pipeline import CompressionReport, PipelineResult, run_pipeline
from .saac import audio_budget, compress_audio_chunk
from .streams import AudioStream, VideoStream
from .sweep import sweep
from .synth import generate_scenario
from .tsst import compress_video_chunk

__version__ = "0.1.0"

__all__ = [
    "AVCompressError", "AudioStream", "BadMagicError", "BandInfeasibleError", "Chunk",
    "CompressionReport", "ConfigError", "ContainerError", "CorrespondenceField", "CostModel",
    "HeaderError", "HyperParams", "InfeasibleChunkingError", "InvariantViolationError",
    "PipelineResult", "RefinedChunking", "ScenarioSpec", "StructuralError",
    "TruncatedPayloadError", "VersionMismatchError", "VideoStream", "audio_budget",
    "build_field", "compress_audio_chunk", "compress_video_chunk", "flops_proxy",
    "generate_scenario", "kv_reuse_amortized", "load_container", "load_container_full",
    "no_reuse_per_turn", "refine_chunks_bruteforce", "refine_chunks_dp", "run_pipeline",
    "save_container", "sweep", "validate_chunking",
]
