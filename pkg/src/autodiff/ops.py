"""
Differentiable operations used by the generator, discriminator and losses.

Only the layers the networks need are provided: stride-2/kernel-2 and stride-1/kernel-3
convolutions, kernel-2/stride-2 transposed convolutions, instance normalisation,
ReLU/LeakyReLU, dense layers, and the reductions the losses are built from.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.autodiff.tensor import Function, Tensor, constant
from src.errors import ConfigError, DimensionError

INSTANCE_NORM_EPS = 1e-5
LEAKY_SLOPE = 0.2


def _as_tensor(value: Union[Tensor, float, np.ndarray]) -> Tensor:
    return value if isinstance(value, Tensor) else constant(value)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(value: Union[int, Sequence[int]]) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    first, second = value
    return int(first), int(second)


# --- glue ---


class Add(Function):
    tag = "add"

    def forward(self, a, b):
        try:
            self.saved["shapes"] = (a.shape, b.shape)
            return a + b
        except ValueError as e:
            raise DimensionError(f"add: cannot combine shapes {a.shape} and {b.shape}") from e

    def backward(self, grad):
        shape_a, shape_b = self.saved["shapes"]
        return _unbroadcast(grad, shape_a), _unbroadcast(grad, shape_b)


class Scale(Function):
    tag = "scale"

    def forward(self, a, factor):
        factor = np.asarray(factor, dtype=np.float64)
        if np.broadcast_shapes(a.shape, factor.shape) != a.shape:
            raise DimensionError(f"scale: factor shape {factor.shape} does not broadcast to {a.shape}")
        self.saved["factor"] = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.saved["factor"],)


class Total(Function):
    tag = "sum"

    def forward(self, a):
        self.saved["shape"] = a.shape
        return np.asarray(a.sum())

    def backward(self, grad):
        return (np.full(self.saved["shape"], grad.reshape(())),)


class Reshape(Function):
    tag = "reshape"

    def forward(self, a, shape):
        self.saved["shape"] = a.shape
        try:
            return a.reshape(shape)
        except ValueError as e:
            raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from e

    def backward(self, grad):
        return (grad.reshape(self.saved["shape"]),)


def add(a: Tensor, b: Union[Tensor, float]) -> Tensor:
    return Add.apply(a, _as_tensor(b))


def scale(a: Tensor, factor: Union[float, np.ndarray]) -> Tensor:
    return Scale.apply(a, factor=factor)


def total(a: Tensor) -> Tensor:
    return Total.apply(a)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def stop_gradient(a: Tensor) -> Tensor:
    """Same values, cut from the graph: nothing upstream receives a gradient through it."""
    return Tensor(a.data, requires_grad=False)


# --- layers ---


class Conv2d(Function):
    tag = "conv2d"

    def forward(self, x, w, b, stride, padding):
        if x.ndim != 4 or w.ndim != 4:
            raise DimensionError(f"conv2d: expected 4-D input and weight, got {x.shape} and {w.shape}")
        n, cin, h, wd = x.shape
        cout, cin_w, kh, kw = w.shape
        if cin != cin_w:
            raise DimensionError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
        if b.shape != (cout,):
            raise DimensionError(f"conv2d: bias shape {b.shape} != ({cout},)")
        sh, sw = stride
        p = padding
        if (h + 2 * p - kh) % sh or (wd + 2 * p - kw) % sw or h + 2 * p < kh or wd + 2 * p < kw:
            raise DimensionError(
                f"conv2d: spatial size {h}x{wd} (padding {p}) incompatible with kernel {kh}x{kw} stride {sh}x{sw}"
            )
        ho = (h + 2 * p - kh) // sh + 1
        wo = (wd + 2 * p - kw) // sw + 1
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        self.saved.update(windows=windows, w=w, stride=(sh, sw), padding=p, xp_shape=xp.shape, in_hw=(h, wd))
        return np.ascontiguousarray(out) + b[None, :, None, None]

    def backward(self, grad):
        windows, w = self.saved["windows"], self.saved["w"]
        sh, sw = self.saved["stride"]
        p = self.saved["padding"]
        h, wd = self.saved["in_hw"]
        _, _, ho, wo = grad.shape
        _, _, kh, kw = w.shape

        db = grad.sum(axis=(0, 2, 3))
        dw = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        dxp = np.zeros(self.saved["xp_shape"])
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(grad, w[:, :, i, j], axes=([1], [0]))
                dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += contrib.transpose(0, 3, 1, 2)
        dx = dxp[:, :, p : p + h, p : p + wd]
        return np.ascontiguousarray(dx), dw, db


class ConvTranspose2d(Function):
    tag = "conv_transpose2d"

    def forward(self, x, w, b):
        if x.ndim != 4 or w.ndim != 4:
            raise DimensionError(f"conv_transpose2d: expected 4-D input and weight, got {x.shape} and {w.shape}")
        n, cin, h, wd = x.shape
        cin_w, cout, _, _ = w.shape
        if cin != cin_w:
            raise DimensionError(f"conv_transpose2d: input has {cin} channels, weight expects {cin_w}")
        if b.shape != (cout,):
            raise DimensionError(f"conv_transpose2d: bias shape {b.shape} != ({cout},)")
        self.saved.update(x=x, w=w)
        out = np.tensordot(x, w, axes=([1], [0]))  # n, h, w, cout, 2, 2
        out = out.transpose(0, 3, 1, 4, 2, 5).reshape(n, cout, 2 * h, 2 * wd)
        return out + b[None, :, None, None]

    def backward(self, grad):
        x, w = self.saved["x"], self.saved["w"]
        n, _, h, wd = x.shape
        cout = w.shape[1]
        blocks = grad.reshape(n, cout, h, 2, wd, 2)
        dx = np.tensordot(blocks, w, axes=([1, 3, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        dw = np.tensordot(x, blocks, axes=([0, 2, 3], [0, 2, 4]))
        db = grad.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(dx), dw, db


class InstanceNorm2d(Function):
    tag = "instance_norm2d"

    def forward(self, x, gain, offset, eps):
        if x.ndim != 4:
            raise DimensionError(f"instance_norm2d: expected 4-D input, got {x.shape}")
        c = x.shape[1]
        if gain.shape != (c,) or offset.shape != (c,):
            raise DimensionError(f"instance_norm2d: gain/offset must have shape ({c},)")
        mean = x.mean(axis=(2, 3), keepdims=True)
        centred = x - mean
        var = (centred**2).mean(axis=(2, 3), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = centred * inv_std
        self.saved.update(x_hat=x_hat, inv_std=inv_std, gain=gain)
        return gain[None, :, None, None] * x_hat + offset[None, :, None, None]

    def backward(self, grad):
        x_hat, inv_std, gain = self.saved["x_hat"], self.saved["inv_std"], self.saved["gain"]
        m = x_hat.shape[2] * x_hat.shape[3]
        d_hat = grad * gain[None, :, None, None]
        dx = (inv_std / m) * (
            m * d_hat
            - d_hat.sum(axis=(2, 3), keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=(2, 3), keepdims=True)
        )
        dgain = (grad * x_hat).sum(axis=(0, 2, 3))
        doffset = grad.sum(axis=(0, 2, 3))
        return dx, dgain, doffset


class ReLU(Function):
    tag = "relu"

    def forward(self, x):
        mask = x > 0
        self.saved["mask"] = mask
        return np.where(mask, x, 0.0)

    def backward(self, grad):
        return (grad * self.saved["mask"],)


class LeakyReLU(Function):
    tag = "leaky_relu"

    def forward(self, x, slope):
        # Subgradient 0 at exactly 0, like ReLU.
        self.saved["factor"] = np.where(x > 0, 1.0, np.where(x < 0, slope, 0.0))
        return np.where(x > 0, x, slope * x)

    def backward(self, grad):
        return (grad * self.saved["factor"],)


class Dense(Function):
    tag = "dense"

    def forward(self, x, w, b):
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
            raise DimensionError(f"dense: cannot multiply {x.shape} by {w.shape}")
        if b.shape != (w.shape[1],):
            raise DimensionError(f"dense: bias shape {b.shape} != ({w.shape[1]},)")
        self.saved.update(x=x, w=w)
        return x @ w + b

    def backward(self, grad):
        x, w = self.saved["x"], self.saved["w"]
        return grad @ w.T, x.T @ grad, grad.sum(axis=0)


# --- reductions ---


class L1Distance(Function):
    tag = "l1_distance"

    def forward(self, a, b):
        if a.shape != b.shape:
            raise DimensionError(f"l1_distance: shapes {a.shape} and {b.shape} differ")
        diff = a - b
        self.saved["sign"] = np.sign(diff)
        return np.asarray(np.abs(diff).mean())

    def backward(self, grad):
        sign = self.saved["sign"]
        g = sign * (grad.reshape(()) / sign.size)
        return g, -g


class SquareError(Function):
    tag = "square_error"

    def forward(self, a, target, weights):
        target = np.asarray(target, dtype=np.float64)
        if np.broadcast_shapes(a.shape, target.shape) != a.shape:
            raise DimensionError(f"square_error: target shape {target.shape} does not match {a.shape}")
        if weights is None:
            weights = np.full(a.shape, 1.0 / a.size)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != a.shape:
            raise DimensionError(f"square_error: weights shape {weights.shape} != scores shape {a.shape}")
        diff = a - target
        self.saved.update(diff=diff, weights=weights)
        return np.asarray(np.sum(weights * diff**2))

    def backward(self, grad):
        diff, weights = self.saved["diff"], self.saved["weights"]
        return (2.0 * weights * diff * grad.reshape(()),)


class FrameMean(Function):
    tag = "frame_mean"

    def forward(self, patch):
        if patch.ndim != 4 or patch.shape[1] != 1:
            raise DimensionError(f"frame_mean: expected [N,1,bins,T], got {patch.shape}")
        self.saved["shape"] = patch.shape
        return patch[:, 0].mean(axis=1)

    def backward(self, grad):
        n, _, bins, frames = self.saved["shape"]
        return (np.broadcast_to(grad[:, None, None, :] / bins, (n, 1, bins, frames)).copy(),)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: Union[int, Sequence[int]] = 1,
    padding: Optional[int] = None,
) -> Tensor:
    """Cross-correlation. Padding defaults to (k-1)//2 for stride 1 and 0 otherwise."""
    stride = _pair(stride)
    if padding is None:
        padding = (weight.shape[2] - 1) // 2 if stride == (1, 1) else 0
    return Conv2d.apply(x, weight, bias, stride=stride, padding=int(padding))


def conv_transpose2d(
    x: Tensor, weight: Tensor, bias: Tensor, stride: Union[int, Sequence[int]] = 2
) -> Tensor:
    """Kernel-2/stride-2 transposed convolution: every output pixel gets exactly one contribution."""
    if _pair(stride) != (2, 2) or tuple(weight.shape[2:]) != (2, 2):
        raise ConfigError(
            f"conv_transpose2d supports kernel 2 stride 2 only, got kernel {tuple(weight.shape[2:])} stride {stride}"
        )
    return ConvTranspose2d.apply(x, weight, bias)


def instance_norm2d(x: Tensor, gain: Tensor, offset: Tensor, eps: float = INSTANCE_NORM_EPS) -> Tensor:
    if eps <= 0:
        raise ConfigError(f"instance_norm2d: eps must be positive, got {eps}")
    return InstanceNorm2d.apply(x, gain, offset, eps=eps)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu: slope must be in (0, 1), got {slope}")
    return LeakyReLU.apply(x, slope=slope)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Dense.apply(x, weight, bias)


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    return L1Distance.apply(a, b)


def square_error(
    a: Tensor,
    target: Union[float, np.ndarray] = 0.0,
    weights: Optional[np.ndarray] = None,
) -> Tensor:
    """sum_j w_j (a_j - target_j)^2; uniform w_j = 1/size gives the mean squared error."""
    return SquareError.apply(a, target=target, weights=weights)


def frame_mean(patch: Tensor) -> Tensor:
    """Mean over the frequency bins of every frame: [N,1,bins,T] -> [N,T]."""
    return FrameMean.apply(patch)
