"""Minimal dense-layer toolkit: numpy forward/backward helpers, optimizers,
and a binary tensor-file format shared by both learned models.

Everything is float64 and fully deterministic for a fixed seed.

Tensor file format (little-endian):
  magic     8 bytes   b"HNAVTNSR"
  version   uint32
  n_meta    uint32, then n_meta int64 metadata values (model-defined order)
  n_tensors uint32
  per tensor: ndim uint32, shape as uint64[ndim], float64 data (row-major)
Tensor order is fixed by the owning model's `param_names()`.
"""

from __future__ import annotations

import math
import struct

import numpy as np

MAGIC = b"HNAVTNSR"
FORMAT_VERSION = 1


def init_affine(rng: np.random.Generator, fan_in: int, fan_out: int):
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weight and bias init."""
    bound = 1.0 / np.sqrt(fan_in)
    W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=fan_out)
    return W, b


def affine(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ W + b


def affine_backward(x: np.ndarray, W: np.ndarray, dout: np.ndarray):
    """Returns (dx, dW, db) for y = x @ W + b with x of shape (..., fan_in)."""
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    dW = x2.T @ d2
    db = d2.sum(axis=0)
    dx = dout @ W.T
    return dx, dW, db


def tanh_backward(y: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Backward through tanh given the forward output y = tanh(x)."""
    return dout * (1.0 - y * y)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, dout: np.ndarray, axis: int = -1) -> np.ndarray:
    """Backward through softmax given its output probs."""
    inner = (dout * probs).sum(axis=axis, keepdims=True)
    return probs * (dout - inner)


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.uniform(1e-12, 1.0, size=shape)
    return -np.log(-np.log(u))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        for name, g in grads.items():
            params[name] -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_tensors(path, metadata: list[int], tensors: list[np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(metadata)))
        for value in metadata:
            f.write(struct.pack("<q", value))
        f.write(struct.pack("<I", len(tensors)))
        for tensor in tensors:
            arr = np.ascontiguousarray(tensor, dtype="<f8")
            f.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(arr.tobytes())


def load_tensors(path) -> tuple[list[int], list[np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a tensor file: bad magic {magic!r}")
        version, = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported tensor file version {version}")
        n_meta, = struct.unpack("<I", f.read(4))
        metadata = [struct.unpack("<q", f.read(8))[0] for _ in range(n_meta)]
        n_tensors, = struct.unpack("<I", f.read(4))
        tensors = []
        for _ in range(n_tensors):
            ndim, = struct.unpack("<I", f.read(4))
            shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
            tensors.append(data.copy())
    return metadata, tensors


def finite_difference_grad(f, params: dict[str, np.ndarray], step: float = 1e-5):
    """Central finite differences of scalar f(params) w.r.t. every entry."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(params)
            flat[i] = orig - step
            lo = f(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads[name] = g
    return grads


def max_relative_error(analytic: dict[str, np.ndarray],
                       numeric: dict[str, np.ndarray]) -> float:
    worst = 0.0
    for name in analytic:
        a, n = analytic[name].ravel(), numeric[name].ravel()
        # floor keeps finite-difference noise on near-zero entries from
        # dominating the relative error
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
