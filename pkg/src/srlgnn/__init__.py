"""Emotion classification for textual conversation: a predicate-argument
graph network fused with a toy transformer encoder."""

from .corpus import (
    Conversation, ContextWindow, CorpusSchema, LabelSet, Utterance,
    compute_metrics, consensus_filter, load_corpus, make_windows, save_corpus,
)
from .encoder import Vocab, build_input, encode_static, tokenize
from .estimator import SrlGnnClassifier
from .model import ClassifierOutput, ModelConfig, SrlGnnModel, classify_utterance
from .pipeline import ExperimentConfig, RunReport, context_sweep, evaluate, train
from .srl_graph import PaGraph, SrlFrame, build_graph, graph_stats, parse_srl_file

__all__ = [
    "ClassifierOutput", "Conversation", "ContextWindow", "CorpusSchema",
    "ExperimentConfig", "LabelSet", "ModelConfig", "PaGraph", "RunReport",
    "SrlFrame", "SrlGnnClassifier", "SrlGnnModel", "Utterance", "Vocab",
    "build_graph", "build_input", "classify_utterance", "compute_metrics",
    "consensus_filter", "context_sweep", "encode_static", "evaluate",
    "graph_stats", "load_corpus", "make_windows", "parse_srl_file",
    "save_corpus", "tokenize", "train",
]
