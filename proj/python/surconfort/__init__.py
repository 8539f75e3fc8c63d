"""Congestion forecasting on rail networks with graph-regularised neural networks."""

from ._core import (
    ArgumentError,
    DataError,
    DateContext,
    Model,
    NumericError,
    TrainLog,
    adjacency,
    diffuse,
    encode,
    generate_world,
    pair_penalty,
    sweep,
    train,
)

__all__ = [
    "ArgumentError",
    "DataError",
    "DateContext",
    "Model",
    "NumericError",
    "TrainLog",
    "adjacency",
    "diffuse",
    "encode",
    "generate_world",
    "pair_penalty",
    "sweep",
    "train",
]
