"""Code translation engine with a belief-tracking director.

An LLM drafts the translation; rule agents and real compilers observe the
draft; a Bayes filter over latent quality states decides whether to accept,
refine, switch models, or abort. Every run writes an append-only ledger
that replays deterministically without touching any backend.
"""

from .bench import load_manifest, run_benchmark
from .config import EngineConfig, load_engine_config
from .errors import TransforgeError
from .ledger import FileLedger, MemoryLedger, read_ledger
from .pipeline import (
    ConvergenceMode,
    EngineDeps,
    OutcomeStatus,
    TranslationOutcome,
    TranslationTask,
    replay,
    translate,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceMode",
    "EngineConfig",
    "EngineDeps",
    "FileLedger",
    "MemoryLedger",
    "OutcomeStatus",
    "TransforgeError",
    "TranslationOutcome",
    "TranslationTask",
    "load_engine_config",
    "load_manifest",
    "read_ledger",
    "replay",
    "run_benchmark",
    "translate",
    "__version__",
]
