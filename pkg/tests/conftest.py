import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import toy  # noqa: E402
from levelblend.corpus import segment_chunks  # noqa: E402
from levelblend.model import learn_corpus, learn_lnode  # noqa: E402


@pytest.fixture(scope="session")
def legend():
    return toy.legend()


@pytest.fixture(scope="session")
def levels():
    return toy.toy_levels()


@pytest.fixture(scope="session")
def learned(levels, legend):
    return learn_corpus(levels, legend, seed=0)


@pytest.fixture(scope="session")
def models(learned):
    return learned.lnodes


@pytest.fixture(scope="session")
def water_model():
    chunks = [c for lv in toy.water_levels() for c in segment_chunks(lv, 16, 16)]
    return learn_lnode("sea", chunks, seed=0)


@pytest.fixture(scope="session")
def relabel_pair():
    """(A, B, original chunks, relabeled chunks) with B learned on the type-renamed copy."""
    original = toy.toy_levels(seed=3, n_levels=2)
    renamed = toy.relabeled_levels(original)
    ca = [c for lv in original for c in segment_chunks(lv, 16, 16)]
    cb = [c for lv in renamed for c in segment_chunks(lv, 16, 16)]
    return learn_lnode("C", ca, seed=0), learn_lnode("Cr", cb, seed=0), ca, cb
