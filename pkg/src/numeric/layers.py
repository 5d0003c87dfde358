"""
Layers used by the policy networks, each with a hand-written backward
"""

import logging
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, record_op, as_tensor, elu, matmul, reshape, softmax

logger = logging.getLogger(__name__)


def linear_forward(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    y = xW + b

    Args:
        x: input of shape (F,) or (N, F)
        weight: (F, O)
        bias: (O,) or None

    Returns:
        Tensor of shape (O,) or (N, O)
    """
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear input {x.shape} does not match weight {weight.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, (1, x.shape[0]))
    y = matmul(x, weight)
    if bias is not None:
        y = y + bias
    if squeeze:
        y = reshape(y, (weight.shape[1],))
    return y


def conv2d_forward(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """
    Valid (unpadded) 2-D convolution

    Args:
        x: (C_in, H, W) or (N, C_in, H, W)
        kernels: (C_out, C_in, k, k)
        bias: (C_out,) or None
        stride: positive step between windows

    Returns:
        (C_out, H', W') or (N, C_out, H', W') with H' = floor((H - k) / stride) + 1
    """
    x = as_tensor(x)
    if stride < 1:
        raise ShapeError(f"conv2d stride must be positive, got {stride}")
    squeeze = x.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise ShapeError(f"conv2d expects (C, H, W) or (N, C, H, W), got {x.shape}")
    _, channels, height, width = data.shape
    out_channels, in_channels, k, k2 = kernels.shape
    if in_channels != channels or k != k2:
        raise ShapeError(f"conv2d input {x.shape} does not match kernels {kernels.shape}")
    if height < k or width < k:
        raise ShapeError(f"conv2d kernel {kernels.shape} larger than input {x.shape}")

    windows = sliding_window_view(data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.einsum("nchwij,ocij->nohw", windows, kernels.data, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        if squeeze:
            g = g.reshape((1,) + g.shape)
        grad_x = np.zeros_like(data)
        for i in range(k):
            for j in range(k):
                grad_x[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += np.einsum(
                    "nohw,oc->nchw", g, kernels.data[:, :, i, j], optimize=True)
        grad_k = np.einsum("nchwij,nohw->ocij", windows, g, optimize=True)
        grads = [grad_x[0] if squeeze else grad_x, grad_k]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return record_op(out[0] if squeeze else out, parents, backward)


def maxpool2d_forward(x: Tensor, window: int = 2) -> Tensor:
    """
    Non-overlapping max pooling; ties send the gradient to the first
    element of the window in row-major order
    """
    x = as_tensor(x)
    squeeze = x.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise ShapeError(f"maxpool2d expects (C, H, W) or (N, C, H, W), got {x.shape}")
    n, c, height, width = data.shape
    if height < window or width < window:
        raise ShapeError(f"maxpool2d window {window} larger than input {x.shape}")

    out_h, out_w = height // window, width // window
    cropped = data[:, :, :out_h * window, :out_w * window]
    blocks = cropped.reshape(n, c, out_h, window, out_w, window).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, out_h, out_w, window * window)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        if squeeze:
            g = g.reshape((1,) + g.shape)
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, arg[..., None], g[..., None], axis=-1)
        grad = grad_blocks.reshape(n, c, out_h, out_w, window, window).transpose(0, 1, 2, 4, 3, 5)
        grad = grad.reshape(n, c, out_h * window, out_w * window)
        full = np.zeros_like(data)
        full[:, :, :out_h * window, :out_w * window] = grad
        return (full[0] if squeeze else full,)

    return record_op(out[0] if squeeze else out, (x,), backward)


def elu_forward(x: Tensor) -> Tensor:
    return elu(as_tensor(x))


def softmax_forward(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``"""
    return softmax(as_tensor(x), axis=axis)
