"""Multi-scale temporal network for continuous sign-language recognition.

A self-contained float64 reverse-mode differentiation core drives a frame
encoder, stacked multi-scale temporal (MST) blocks, a transformer encoder and
one CTC loss per feature level. Decoding uses CTC prefix beam search and
results are scored by word error rate.
"""
from .config import ModelConfig
from .ctc import LevelLogits, beam_decode, collapse, ctc_loss, greedy_decode, multi_level_ctc
from .metrics import EditBreakdown, corpus_wer, wer
from .model import MSTNet
from .synth import Sample, ToyGrammar, generate, temporal_augment
from .tensor import Rng, Tensor, backward

__all__ = [
    "EditBreakdown",
    "LevelLogits",
    "MSTNet",
    "ModelConfig",
    "Rng",
    "Sample",
    "Tensor",
    "ToyGrammar",
    "backward",
    "beam_decode",
    "collapse",
    "corpus_wer",
    "ctc_loss",
    "generate",
    "greedy_decode",
    "multi_level_ctc",
    "temporal_augment",
    "wer",
]
