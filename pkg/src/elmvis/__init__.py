"""Incremental ELMVIS: assign unordered samples to fixed inputs by growing an ELM fit."""

from .elm import ElmModel, hidden_layer, init_model, projection_matrix, pseudoinverse, \
    solve_output_weights
from .incremental import FitResult, IncrementalElmvis, Partition, RunConfig, run
from .swap import SimilarityState, elmvis_plus_run, init_state

__all__ = [
    "ElmModel", "FitResult", "IncrementalElmvis", "Partition", "RunConfig",
    "SimilarityState", "elmvis_plus_run", "hidden_layer", "init_model", "init_state",
    "projection_matrix", "pseudoinverse", "run", "solve_output_weights",
]
