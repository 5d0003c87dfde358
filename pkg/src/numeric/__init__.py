"""
Minimal differentiable numeric core: tensors, layers, graph attention, Adam
"""

from .tensor import Tensor, no_grad
from .optim import ParamSet, adam_step, backward_gradients
from .graph import GraphBatch, collate, gatv2_forward, global_add_pool

__all__ = [
    "Tensor",
    "no_grad",
    "ParamSet",
    "adam_step",
    "backward_gradients",
    "GraphBatch",
    "collate",
    "gatv2_forward",
    "global_add_pool",
]
