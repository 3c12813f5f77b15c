import pathlib
import sys

import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

from synthgen import keyword_corpus, memory_store  # noqa: E402

from sdtag.corpus import SCIDT_LABELS  # noqa: E402
from sdtag.tagger import TaggerConfig, train  # noqa: E402

TOY_DIMS = dict(c=8, w=8, d=16, p=8, h=6, d2=10, H=8, lr=0.01, batch_size=10)


def toy_config(**overrides) -> TaggerConfig:
    return TaggerConfig(**{**TOY_DIMS, **overrides})


@pytest.fixture(scope="session")
def kw_corpus():
    return keyword_corpus(SCIDT_LABELS, 12, np.random.default_rng(5))


@pytest.fixture(scope="session")
def kw_store(kw_corpus):
    return memory_store(kw_corpus, TOY_DIMS["d"])


@pytest.fixture(scope="session")
def kw_model(kw_corpus, kw_store):
    cfg = toy_config(
        lr=0.02,
        dropout_embedding=0.0,
        dropout_dense=0.0,
        dropout_attention=0.0,
        dropout_lstm=0.0,
        max_epochs=80,
        patience=80,
        validation_ratio=0.0,
        seed=3,
    )
    return train(kw_corpus, kw_store, cfg)


@pytest.fixture(scope="session")
def strong_corpus():
    """Big enough that the tagger generalizes to fresh keyword corpora."""
    return keyword_corpus(SCIDT_LABELS, 40, np.random.default_rng(42), id_prefix="s")


@pytest.fixture(scope="session")
def strong_model(strong_corpus):
    store = memory_store(strong_corpus, TOY_DIMS["d"])
    cfg = toy_config(
        lr=0.02,
        dropout_embedding=0.0,
        dropout_dense=0.0,
        dropout_attention=0.0,
        dropout_lstm=0.0,
        max_epochs=120,
        patience=120,
        validation_ratio=0.0,
        seed=3,
    )
    return train(strong_corpus, store, cfg)
