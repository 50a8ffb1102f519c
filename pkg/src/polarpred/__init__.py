"""Next-frame video prediction toolkit: polar predictors and classic baselines.

Submodules are imported lazily so the CLI can pin BLAS thread counts via
environment variables before numpy loads.
"""

__version__ = "0.1.0"

__all__ = [
    "tensor",
    "autodiff",
    "optim",
    "polar",
    "motion",
    "predictors",
    "checkpoint",
    "data",
    "training",
    "metrics",
    "analysis",
    "figures",
    "config",
    "cli",
]
