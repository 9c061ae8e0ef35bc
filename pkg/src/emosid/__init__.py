"""Emotion-conditioned speaker identification with suprasegmental HMMs.

Gender, emotion and speaker are identified in cascade from MFCC and
prosodic observation streams; a flat one-stage recognizer, ablated
cascades and a synthetic corpus generator are included for comparison.
"""

from .errors import EmosidError
from .frontend import AudioBuffer, extract_features
from .hmm import GmmHmm, TrainingConfig, log_forward, train_hmm, viterbi
from .evaluation import evaluate, performance_table
from .pipeline import Label, identify, identify_one_stage, identify_three_stage, observe_records
from .registry import ModelRegistry, Observation, observe, train_registry
from .sphmm import Sphmm, combined_log_prob
from .synth import SynthSpec, preset, synthesize_corpus

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "EmosidError", "GmmHmm", "Label", "ModelRegistry", "Observation", "Sphmm", "SynthSpec",
    "TrainingConfig", "combined_log_prob", "evaluate", "extract_features", "identify", "identify_one_stage",
    "identify_three_stage", "log_forward", "observe", "observe_records", "performance_table", "preset",
    "synthesize_corpus", "train_hmm", "train_registry", "viterbi",
]
