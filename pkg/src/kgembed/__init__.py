"""Multi-relational graph embedding toolkit.

From-scratch training of translation, bilinear, correlation, and
convolutional link-prediction scorers, optionally on top of a
composition-based graph convolutional encoder, with filtered ranking
evaluation and exact combinatorial analysis of reshaping interactions.
"""

__version__ = "0.1.0"

from kgembed.backend import BACKEND

__all__ = ["BACKEND", "__version__"]
