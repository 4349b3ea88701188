"""Check-worthiness classification and verified-claim retrieval for tweets."""

from . import corpus, decomp, feats, metrics, retrieval, svm  # noqa: F401

__version__ = "0.1.0"
