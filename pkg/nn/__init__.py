"""
Minimal differentiable tensor layer used by the denoiser and the training loop.
"""
from .tensor import Tensor, Graph, concat, parameter, no_grad, is_grad_enabled
from .optim import Adam, AdamState, adam_step

__all__ = ['Tensor', 'Graph', 'concat', 'parameter', 'no_grad', 'is_grad_enabled',
           'Adam', 'AdamState', 'adam_step']
