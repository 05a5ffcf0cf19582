"""Stacked-ensemble intrusion detection: tree and recurrent base learners,
a neural meta-model, and its distillation into an explainable tree."""

__version__ = "1.0.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
