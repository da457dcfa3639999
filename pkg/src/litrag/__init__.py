"""Grounded question answering over a scientific literature corpus.

The pipeline turns a natural-language question into grounded snippets
(either through a structured-query search API or a local semantic
index), folds the snippets into a simulated-dialog prompt, and asks a
completion backend for the final answer. Query translation can be
grammar-constrained so the backend can only ever emit a well-formed
structured query.
"""
from .config import AppConfig, build_orchestrator, load_config
from .orchestrator import AnswerRecord, AskRequest, Orchestrator

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord",
    "AppConfig",
    "AskRequest",
    "Orchestrator",
    "__version__",
    "build_orchestrator",
    "load_config",
]
