"""Structured differentiable ops: convolution, pooling, batchnorm,
pixel shuffle, and a symmetric positive-definite linear solve.

conv2d uses an im2col view plus one GEMM per batch; its backward scatters
through a 3x3 slice-accumulation loop instead of np.add.at, which keeps the
training step BLAS-bound.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.linalg import solve_triangular

from ..errors import InputError, SingularSystemError
from .tensor import Tensor, _record

KERNEL = 3  # all convolutions in this package are 3x3


def _im2col(x: np.ndarray, stride: int):
    """(N,C,H,W) -> (N, C*9, P) patch matrix for a 3x3 kernel (view+copy)."""
    n, c, h, w = x.shape
    ho = (h - KERNEL) // stride + 1
    wo = (w - KERNEL) // stride + 1
    sn, sc, sh, sw = x.strides
    patches = as_strided(
        x,
        shape=(n, c, KERNEL, KERNEL, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(n, c * KERNEL * KERNEL, ho * wo), ho, wo


def _col2im(cols: np.ndarray, x_shape, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch grads back onto the image."""
    n, c, h, w = x_shape
    ho = (h - KERNEL) // stride + 1
    wo = (w - KERNEL) // stride + 1
    cols = cols.reshape(n, c, KERNEL, KERNEL, ho, wo)
    out = np.zeros(x_shape, dtype=cols.dtype)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            out[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += cols[
                :, :, ki, kj
            ]
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    """Cross-correlation of (N,C,H,W) with (K,C,3,3) kernels plus bias (K,)."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise InputError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    if kernel.shape[2:] != (KERNEL, KERNEL):
        raise InputError(f"conv2d kernels must be 3x3, got {kernel.shape[2:]}")
    if x.shape[1] != kernel.shape[1]:
        raise InputError(
            f"channel mismatch: input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}"
        )
    if bias.shape != (kernel.shape[0],):
        raise InputError(f"bias shape {bias.shape} does not match {kernel.shape[0]} kernels")

    n, c, h, w = x.shape
    k = kernel.shape[0]
    if padding:
        xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, :, padding : padding + h, padding : padding + w] = x.data
    else:
        xp = x.data
    cols, ho, wo = _im2col(xp, stride)
    wmat = kernel.data.reshape(k, -1)
    out_data = np.matmul(wmat, cols)  # (N, K, P)
    out_data += bias.data[None, :, None]
    out = Tensor(out_data.reshape(n, k, ho, wo))

    def rule(g):
        go = g.reshape(n, k, ho * wo)
        g_bias = go.sum(axis=(0, 2))
        g_kernel = np.tensordot(go, cols, axes=([0, 2], [0, 2])).reshape(kernel.shape)
        g_cols = np.matmul(wmat.T, go)
        g_xp = _col2im(g_cols, xp.shape, stride)
        if padding:
            g_x = g_xp[:, :, padding : padding + h, padding : padding + w]
        else:
            g_x = g_xp
        return g_x, g_kernel, g_bias

    return _record(out, (x, kernel, bias), rule)


def maxpool2(x: Tensor) -> Tensor:
    """2x2/stride-2 max pooling; halves both spatial dims."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InputError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    windows = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(flat, axis=-1)
    out = Tensor(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0])

    def rule(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(n, c, h, w),)

    return _record(out, (x,), rule)


def pixel_shuffle2(x: Tensor) -> Tensor:
    """Depth-to-space: (N,4C,H,W) -> (N,C,2H,2W); group [a,b,c,d] -> [[a,b],[c,d]]."""
    n, c4, h, w = x.shape
    if c4 % 4:
        raise InputError(f"pixel_shuffle2 needs channels divisible by 4, got {c4}")
    c = c4 // 4
    out_data = (
        x.data.reshape(n, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, 2 * h, 2 * w)
    )
    out = Tensor(out_data)

    def rule(g):
        gx = g.reshape(n, c, h, 2, w, 2).transpose(0, 1, 3, 5, 2, 4).reshape(n, c4, h, w)
        return (gx,)

    return _record(out, (x,), rule)


def pixel_unshuffle2(x: Tensor) -> Tensor:
    """Space-to-depth inverse of pixel_shuffle2: (N,C,2H,2W) -> (N,4C,H,W)."""
    n, c, h2, w2 = x.shape
    if h2 % 2 or w2 % 2:
        raise InputError(f"pixel_unshuffle2 requires even spatial dims, got {h2}x{w2}")
    h, w = h2 // 2, w2 // 2
    out_data = (
        x.data.reshape(n, c, h, 2, w, 2).transpose(0, 1, 3, 5, 2, 4).reshape(n, 4 * c, h, w)
    )
    out = Tensor(out_data)

    def rule(g):
        gx = g.reshape(n, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h2, w2)
        return (gx,)

    return _record(out, (x,), rule)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (N,H,W).

    In training mode, batch statistics normalize and the running buffers are
    updated in place with the given momentum. Eval mode uses the frozen
    running statistics.
    """
    if x.ndim != 4:
        raise InputError(f"batchnorm expects 4-D input, got {x.shape}")
    axes = (0, 2, 3)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        # Unbiased variance in the running buffer, biased in the normalizer.
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None])

    def rule(g):
        g_beta = g.sum(axis=axes)
        g_gamma = (g * xhat).sum(axis=axes)
        gs = g * gamma.data[None, :, None, None]
        if training:
            m = x.data.size // x.shape[1]
            g_x = (
                inv_std[None, :, None, None]
                / m
                * (m * gs - gs.sum(axis=axes)[None, :, None, None]
                   - xhat * (gs * xhat).sum(axis=axes)[None, :, None, None])
            )
        else:
            g_x = gs * inv_std[None, :, None, None]
        return g_x.astype(x.dtype, copy=False), g_gamma, g_beta

    return _record(out, (x, gamma, beta), rule)


def _cholesky_lower(g: np.ndarray) -> np.ndarray:
    """Plain Cholesky; raises SingularSystemError with the failing pivot."""
    d = g.shape[0]
    low = np.zeros_like(g)
    for j in range(d):
        s = g[j, j] - low[j, :j] @ low[j, :j]
        if not s > 0:
            raise SingularSystemError(
                f"matrix not positive definite at pivot {j} (value {s:.3e})", pivot=j
            )
        low[j, j] = np.sqrt(s)
        if j + 1 < d:
            low[j + 1 :, j] = (g[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_spd(g: Tensor, y: Tensor) -> Tensor:
    """Solve G X = Y for symmetric positive definite G, differentiably.

    The forward symmetrizes G, factorizes in float64, and solves by forward
    and back substitution. Backward: gY = G^-1 gX, gG = -(gY X^T + X gY^T)/2.
    """
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InputError(f"solve_spd expects a square matrix, got {g.shape}")
    if y.ndim != 2 or y.shape[0] != g.shape[0]:
        raise InputError(f"right-hand side {y.shape} does not match matrix {g.shape}")

    gsym = 0.5 * (g.data + g.data.T).astype(np.float64)
    low = _cholesky_lower(gsym)
    rhs = y.data.astype(np.float64)
    x64 = solve_triangular(low, rhs, lower=True)
    x64 = solve_triangular(low.T, x64, lower=False)
    out = Tensor(x64.astype(y.dtype))

    def rule(grad):
        gy = solve_triangular(low, grad.astype(np.float64), lower=True)
        gy = solve_triangular(low.T, gy, lower=False)
        gg = -0.5 * (gy @ x64.T + x64 @ gy.T)
        return gg.astype(g.dtype), gy.astype(y.dtype)

    return _record(out, (g, y), rule)
