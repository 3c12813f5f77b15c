"""Scientific discourse tagging toolkit.

Attention-pooled BiLSTM-CRF tagging of clause sequences, plus the two
downstream pipelines built on it: claim extraction via transfer learning
and block-based evidence fragment detection.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CLAIM_LABELS,
    CODA_LABELS,
    Corpus,
    Clause,
    LabelSet,
    Paragraph,
    RCT_LABELS,
    SCIDT_LABELS,
    decode_bio,
    encode_bio,
)
from .tagger import TaggerConfig, TaggerModel, load_model, save_model, tag, train  # noqa: F401
