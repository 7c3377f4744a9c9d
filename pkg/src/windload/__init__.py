"""Desk-scale wind-load surrogate pipeline.

Shape morphing by signed-distance interpolation, surface graphs with
reflection-aware features, analytic pressure-coefficient labels, a
from-scratch message-passing surrogate with optional exact reflection
invariance, and the split/metric harness used to compare the two model
variants under mirrored-test evaluation.
"""

__version__ = "0.1.0"

from ._malloc import tune_allocator as _tune_allocator

_tune_allocator()
del _tune_allocator
