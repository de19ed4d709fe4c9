import numpy as np
import pytest

from gbdtkg.records import FEATURE_NAMES, Label, TransformerRecord


def make_record(rid, label, value=0.0):
    feats = value if isinstance(value, (list, tuple, np.ndarray)) else [value] * len(FEATURE_NAMES)
    return TransformerRecord(rid, Label.FAULT if label in ("f", Label.FAULT) else Label.STABLE, tuple(feats))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
