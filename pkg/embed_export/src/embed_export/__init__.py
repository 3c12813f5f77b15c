"""Offline token-embedding exporter.

Reads a canonical-JSONL corpus, runs a configured encoder over each clause,
and writes an SDTE embedding store that the tagging toolkit loads.
"""

__version__ = "0.1.0"

from .store import write_store  # noqa: F401
from .export import export_corpus, export_static  # noqa: F401
