"""Minimal reverse-mode differentiable computation core.

A computation is described as a Wengert list (`GraphDef`), evaluated by
`forward` into an execution `Tape`, and differentiated by `backward`,
which accumulates parameter gradients into a `ParamStore`.  Everything
runs in float64 numpy; small and slow, but exactly checkable against
finite differences.
"""

from .graph import GraphDef, Node, Tape, backward, forward
from .gradcheck import GradCheckReport, grad_check
from .optim import adam_step
from .params import ParamStore, he_uniform

__all__ = [
    "GraphDef",
    "Node",
    "Tape",
    "forward",
    "backward",
    "GradCheckReport",
    "grad_check",
    "adam_step",
    "ParamStore",
    "he_uniform",
]
