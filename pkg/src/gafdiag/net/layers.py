"""From-scratch differentiable layers on float64 numpy arrays.

Each layer caches what its backward pass needs during a train-mode forward
and raises NoForwardCacheError if backward() is called cold.  Gradients are
written (not accumulated) into ``Param.grad``; where one tensor feeds two
consumers (residual shortcut) the model sums the incoming gradients
explicitly, so accumulation order is fixed and results are deterministic.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NoForwardCacheError, ShapeMismatchError


class Param:
    """A trainable array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    """2-D convolution via im2col + matmul."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, bias=True, rng=None):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * kernel * kernel
        self.weight = Param(uniform_init(rng, (out_ch, in_ch, kernel, kernel), fan_in))
        self.bias = Param(uniform_init(rng, (out_ch,), fan_in)) if bias else None
        self._cache = None

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        if c != self.in_ch:
            raise ShapeMismatchError(f"conv expects {self.in_ch} channels, got {c}")
        k, s, p = self.kernel, self.stride, self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        oh, ow = windows.shape[2], windows.shape[3]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * k * k)
        out = cols @ self.weight.data.reshape(self.out_ch, -1).T
        if self.bias is not None:
            out += self.bias.data
        out = out.reshape(b, oh, ow, self.out_ch).transpose(0, 3, 1, 2)
        if train:
            self._cache = (cols, (b, c, h, w), (oh, ow))
        return out

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("Conv2d.backward without train-mode forward")
        cols, (b, c, h, w), (oh, ow) = self._cache
        k, s, p = self.kernel, self.stride, self.padding
        g = grad.transpose(0, 2, 3, 1).reshape(b * oh * ow, self.out_ch)
        self.weight.grad = (g.T @ cols).reshape(self.weight.data.shape)
        if self.bias is not None:
            self.bias.grad = g.sum(axis=0)
        dcols = (g @ self.weight.data.reshape(self.out_ch, -1)).reshape(
            b, oh, ow, c, k, k
        )
        dx = np.zeros((b, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * oh : s, j : j + s * ow : s] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        self._cache = None
        if p:
            dx = dx[:, :, p:-p, p:-p]
        return dx


class Conv1d:
    """1-D convolution over (batch, channels, length)."""

    def __init__(self, in_ch, out_ch, kernel, padding=0, bias=True, rng=None):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * kernel
        self.weight = Param(uniform_init(rng, (out_ch, in_ch, kernel), fan_in))
        self.bias = Param(uniform_init(rng, (out_ch,), fan_in)) if bias else None
        self._cache = None

    def forward(self, x, train=False):
        b, c, length = x.shape
        if c != self.in_ch:
            raise ShapeMismatchError(f"conv1d expects {self.in_ch} channels, got {c}")
        k, p = self.kernel, self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p)))
        windows = sliding_window_view(x, k, axis=2)
        ol = windows.shape[2]
        cols = windows.transpose(0, 2, 1, 3).reshape(b * ol, c * k)
        out = cols @ self.weight.data.reshape(self.out_ch, -1).T
        if self.bias is not None:
            out += self.bias.data
        out = out.reshape(b, ol, self.out_ch).transpose(0, 2, 1)
        if train:
            self._cache = (cols, (b, c, length), ol)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("Conv1d.backward without train-mode forward")
        cols, (b, c, length), ol = self._cache
        k, p = self.kernel, self.padding
        g = grad.transpose(0, 2, 1).reshape(b * ol, self.out_ch)
        self.weight.grad = (g.T @ cols).reshape(self.weight.data.shape)
        if self.bias is not None:
            self.bias.grad = g.sum(axis=0)
        dcols = (g @ self.weight.data.reshape(self.out_ch, -1)).reshape(b, ol, c, k)
        dx = np.zeros((b, c, length + 2 * p))
        for i in range(k):
            dx[:, :, i : i + ol] += dcols[:, :, :, i].transpose(0, 2, 1)
        self._cache = None
        if p:
            dx = dx[:, :, p:-p]
        return dx


class BatchNorm2d:
    """Per-channel normalization over (batch, H, W) with running statistics.

    Train mode uses biased batch moments and updates the running buffers;
    eval mode uses the buffers only.  gamma is the per-channel scale the
    pruning stage ranks on.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def forward(self, x, train=False, update_stats=True):
        if x.shape[1] != self.channels:
            raise ShapeMismatchError(
                f"batchnorm expects {self.channels} channels, got {x.shape[1]}"
            )
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if update_stats:
                m = self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * mean
                self.running_var = (1 - m) * self.running_var + m * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = self.gamma.data[None, :, None, None] * xhat + self.beta.data[None, :, None, None]
        if train:
            self._cache = (xhat, inv_std, x.shape[0] * x.shape[2] * x.shape[3])
        return out

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("BatchNorm2d.backward without train-mode forward")
        xhat, inv_std, m = self._cache
        self.gamma.grad = (grad * xhat).sum(axis=(0, 2, 3))
        self.beta.grad = grad.sum(axis=(0, 2, 3))
        dxhat = grad * self.gamma.data[None, :, None, None]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = (inv_std[None, :, None, None] / m) * (
            m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
        )
        self._cache = None
        return dx


class BatchNorm1d:
    """Per-channel normalization over (batch, length); same contract as the
    2-D variant."""

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def forward(self, x, train=False, update_stats=True):
        if x.shape[1] != self.channels:
            raise ShapeMismatchError(
                f"batchnorm expects {self.channels} channels, got {x.shape[1]}"
            )
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            if update_stats:
                m = self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * mean
                self.running_var = (1 - m) * self.running_var + m * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        out = self.gamma.data[None, :, None] * xhat + self.beta.data[None, :, None]
        if train:
            self._cache = (xhat, inv_std, x.shape[0] * x.shape[2])
        return out

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("BatchNorm1d.backward without train-mode forward")
        xhat, inv_std, m = self._cache
        self.gamma.grad = (grad * xhat).sum(axis=(0, 2))
        self.beta.grad = grad.sum(axis=(0, 2))
        dxhat = grad * self.gamma.data[None, :, None]
        sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        dx = (inv_std[None, :, None] / m) * (
            m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
        )
        self._cache = None
        return dx


class ChannelSelect:
    """Binary per-channel gate used for pseudo-pruning; not trainable."""

    def __init__(self, channels):
        self.mask = np.ones(channels)

    def forward(self, x, train=False):
        return x * self.mask[None, :, None, None]

    def backward(self, grad):
        return grad * self.mask[None, :, None, None]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
            return x * self._mask
        return np.maximum(x, 0.0)

    def backward(self, grad):
        if self._mask is None:
            raise NoForwardCacheError("ReLU.backward without train-mode forward")
        out = grad * self._mask
        self._mask = None
        return out


class MaxPool2d:
    """2x2, stride-2 max pooling; requires even spatial extents."""

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError("max pool requires even height and width")
        tiles = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = tiles.reshape(b, c, h // 2, w // 2, 4)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        if train:
            self._cache = (idx, (b, c, h, w))
        return out

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("MaxPool2d.backward without train-mode forward")
        idx, (b, c, h, w) = self._cache
        dflat = np.zeros((b, c, h // 2, w // 2, 4))
        np.put_along_axis(dflat, idx[..., None], grad[..., None], axis=-1)
        dx = dflat.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        self._cache = None
        return dx.reshape(b, c, h, w)


class MaxReduce:
    """Maximum over one trailing axis (spatial reduction), with argmax routing."""

    def __init__(self, axis=-1):
        self.axis = axis
        self._cache = None

    def forward(self, x, train=False):
        idx = x.argmax(axis=self.axis)
        out = np.take_along_axis(x, np.expand_dims(idx, self.axis), axis=self.axis)
        out = np.squeeze(out, axis=self.axis)
        if train:
            self._cache = (idx, x.shape)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("MaxReduce.backward without train-mode forward")
        idx, shape = self._cache
        dx = np.zeros(shape)
        np.put_along_axis(
            dx, np.expand_dims(idx, self.axis), np.expand_dims(grad, self.axis), axis=self.axis
        )
        self._cache = None
        return dx


class Linear:
    def __init__(self, in_features, out_features, rng=None):
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Param(uniform_init(rng, (out_features, in_features), in_features))
        self.bias = Param(uniform_init(rng, (out_features,), in_features))
        self._cache = None

    def forward(self, x, train=False):
        if x.shape[1] != self.in_features:
            raise ShapeMismatchError(
                f"linear expects {self.in_features} features, got {x.shape[1]}"
            )
        if train:
            self._cache = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, grad):
        if self._cache is None:
            raise NoForwardCacheError("Linear.backward without train-mode forward")
        x = self._cache
        self.weight.grad = grad.T @ x
        self.bias.grad = grad.sum(axis=0)
        self._cache = None
        return grad @ self.weight.data


class ChannelDrop:
    """Random feature loss: per (sample, channel) Bernoulli keep with
    inverted rescaling in train mode, identity in eval mode."""

    def __init__(self, keep_rate=0.9):
        self.keep_rate = keep_rate
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.keep_rate >= 1.0:
            return x
        if rng is None:
            raise ShapeMismatchError("train-mode ChannelDrop needs an rng")
        mask = (rng.random((x.shape[0], x.shape[1])) < self.keep_rate) / self.keep_rate
        self._mask = mask
        return x * mask[:, :, None, None]

    def backward(self, grad):
        if self._mask is None:
            return grad
        out = grad * self._mask[:, :, None, None]
        self._mask = None
        return out
