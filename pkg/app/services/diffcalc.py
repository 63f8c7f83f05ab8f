#!/usr/bin/env python3
"""
Reverse-mode differentiation engine

Version: 1.0.0
Author: SpecLab Development Team
Description: Define-by-run tape, the primitives the spectral encoder, the
             projector and the redundancy-reduction loss need, Adam, and a
             central finite-difference oracle.
License: [To be determined]

Usage:
    with Recording():
        out = affine(x, w, b)
        loss = sum_all(mul(out, out))
        backward(loss)
    adam_step(params, state)

All values are float64. A Recording belongs to the context it was entered in
(ContextVar), so concurrent runs on separate threads never share a tape.
"""

import contextvars
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import structlog
from numpy.lib.stride_tricks import sliding_window_view

from app.core.error_handling import (
    ConfigurationError,
    MissingGradientError,
    RecordingError,
    ShapeMismatchError,
)

logger = structlog.get_logger()

BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tensor:
    """Shaped float64 array taking part in recorded computation."""

    __slots__ = ("values", "requires_grad", "grad", "node")

    def __init__(self, values: Any, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatchError(
                "item() requires a single-element tensor",
                details=[{"shape": list(self.shape)}],
            )
        return float(self.values.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad})"


@dataclass
class TapeEntry:
    """One primitive application; the backward closure holds the saved forward context"""

    primitive: str
    inputs: tuple[int, ...]
    output: int
    backward: BackwardFn


class Recording:
    """
    Topologically ordered tape of primitive applications.

    Entries are appended as primitives run, so every input node id precedes
    its consumer. backward() consumes the tape.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self.tensors: dict[int, Tensor] = {}
        self.consumed = False
        self._next_node = 0
        self._token: contextvars.Token | None = None

    def register(self, tensor: Tensor) -> int:
        if tensor.node is not None and self.tensors.get(tensor.node) is tensor:
            return tensor.node
        node = self._next_node
        self._next_node += 1
        tensor.node = node
        self.tensors[node] = tensor
        return node

    def owns(self, tensor: Tensor) -> bool:
        return tensor.node is not None and self.tensors.get(tensor.node) is tensor

    def __enter__(self) -> "Recording":
        self._token = _active_recording.set(self)
        return self

    def __exit__(self, *exc_info: Any) -> None:
        if self._token is not None:
            _active_recording.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.entries)


_active_recording: contextvars.ContextVar[Recording | None] = contextvars.ContextVar(
    "speclab_active_recording", default=None
)


def active_recording() -> Recording | None:
    """Recording entered in the current context, if any"""
    return _active_recording.get()


@contextmanager
def no_recording() -> Iterator[None]:
    """Run a block with recording suspended"""
    token = _active_recording.set(None)
    try:
        yield
    finally:
        _active_recording.reset(token)


def _record(
    primitive: str,
    inputs: Sequence[Tensor],
    out_values: np.ndarray,
    backward_fn: BackwardFn,
) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(out_values, requires_grad=requires_grad)
    recording = _active_recording.get()
    if recording is None or not requires_grad:
        return out
    if recording.consumed:
        raise RecordingError(
            "Recording already consumed by backward; enter a new Recording",
            details=[{"primitive": primitive}],
        )
    in_ids = tuple(recording.register(t) for t in inputs)
    out_id = recording.register(out)
    recording.entries.append(TapeEntry(primitive, in_ids, out_id, backward_fn))
    return out


def _require_ndim(name: str, tensor: Tensor, ndim: int, layout: str):
    if tensor.values.ndim != ndim:
        raise ShapeMismatchError(
            f"{name} must be {ndim}-D {layout}",
            details=[{"operand": name, "shape": list(tensor.shape)}],
        )


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def conv1d(
    input: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    Cross-correlation convolution over the last axis.

    Args:
        input: [B, Cin, L]
        weight: [Cout, Cin, K]
        bias: [Cout]
        stride: Positive step between windows
        padding: Zero padding added on both ends

    Returns:
        [B, Cout, Lout] with Lout = floor((L + 2*padding - K) / stride) + 1
    """
    _require_ndim("input", input, 3, "[B, Cin, L]")
    _require_ndim("weight", weight, 3, "[Cout, Cin, K]")
    _require_ndim("bias", bias, 1, "[Cout]")
    batch, c_in, length = input.shape
    c_out, w_in, kernel = weight.shape
    if w_in != c_in:
        raise ShapeMismatchError(
            "conv1d input channels do not match weight",
            details=[{"input_channels": c_in, "weight_channels": w_in}],
        )
    if bias.shape[0] != c_out:
        raise ShapeMismatchError(
            "conv1d bias length does not match output channels",
            details=[{"bias_length": bias.shape[0], "output_channels": c_out}],
        )
    if stride < 1 or padding < 0:
        raise ShapeMismatchError(
            "conv1d needs stride >= 1 and padding >= 0",
            details=[{"stride": stride, "padding": padding}],
        )
    padded_length = length + 2 * padding
    if padded_length < kernel:
        raise ShapeMismatchError(
            "conv1d kernel longer than padded signal",
            details=[{"length": length, "padding": padding, "kernel": kernel}],
        )
    out_length = (padded_length - kernel) // stride + 1

    x_padded = np.pad(input.values, ((0, 0), (0, 0), (padding, padding)))
    windows = sliding_window_view(x_padded, kernel, axis=2)[:, :, ::stride, :]
    cols = windows.transpose(0, 2, 1, 3).reshape(batch * out_length, c_in * kernel)
    w_mat = weight.values.reshape(c_out, c_in * kernel)
    out = (cols @ w_mat.T).reshape(batch, out_length, c_out).transpose(0, 2, 1)
    out = out + bias.values[None, :, None]

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        g_mat = grad.transpose(0, 2, 1).reshape(batch * out_length, c_out)
        d_weight = (g_mat.T @ cols).reshape(c_out, c_in, kernel)
        d_bias = grad.sum(axis=(0, 2))
        d_cols = (g_mat @ w_mat).reshape(batch, out_length, c_in, kernel)
        d_padded = np.zeros((batch, c_in, padded_length))
        span = stride * (out_length - 1) + 1
        for k in range(kernel):
            d_padded[:, :, k : k + span : stride] += d_cols[:, :, :, k].transpose(0, 2, 1)
        d_input = d_padded[:, :, padding : padding + length]
        return d_input, d_weight, d_bias

    return _record("conv1d", (input, weight, bias), np.ascontiguousarray(out), _backward)


def affine(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """input @ weight.T + bias for input [B, Din], weight [Dout, Din], bias [Dout]"""
    _require_ndim("input", input, 2, "[B, Din]")
    _require_ndim("weight", weight, 2, "[Dout, Din]")
    _require_ndim("bias", bias, 1, "[Dout]")
    if input.shape[1] != weight.shape[1] or bias.shape[0] != weight.shape[0]:
        raise ShapeMismatchError(
            "affine operands do not conform",
            details=[
                {
                    "input": list(input.shape),
                    "weight": list(weight.shape),
                    "bias": list(bias.shape),
                }
            ],
        )
    x = input.values
    w = weight.values
    out = x @ w.T + bias.values

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return grad @ w, grad.T @ x, grad.sum(axis=0)

    return _record("affine", (input, weight, bias), out, _backward)


def relu(input: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0"""
    mask = input.values > 0
    out = np.where(mask, input.values, 0.0)

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad * mask,)

    return _record("relu", (input,), out, _backward)


def global_avg_pool(input: Tensor) -> Tensor:
    """Mean over the last axis: [B, C, L] -> [B, C]"""
    _require_ndim("input", input, 3, "[B, C, L]")
    length = input.shape[2]
    out = input.values.mean(axis=2)

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (np.repeat(grad[:, :, None] / length, length, axis=2),)

    return _record("global_avg_pool", (input,), out, _backward)


def reshape(input: Tensor, shape: Sequence[int]) -> Tensor:
    """View with a new shape of equal size"""
    original = input.shape
    try:
        out = input.values.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeMismatchError(
            "reshape size mismatch",
            details=[{"from": list(original), "to": list(shape)}],
        ) from e

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad.reshape(original),)

    return _record("reshape", (input,), out, _backward)


def _require_same_shape(name: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{name} operands must share a shape",
            details=[{"left": list(a.shape), "right": list(b.shape)}],
        )


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equally shaped tensors"""
    _require_same_shape("add", a, b)

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return grad, grad

    return _record("add", (a, b), a.values + b.values, _backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors"""
    _require_same_shape("mul", a, b)
    a_values, b_values = a.values, b.values

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return grad * b_values, grad * a_values

    return _record("mul", (a, b), a_values * b_values, _backward)


def scale(input: Tensor, factor: float) -> Tensor:
    """Multiply by a constant"""

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad * factor,)

    return _record("scale", (input,), input.values * factor, _backward)


def sum_all(input: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor"""
    original = input.shape

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (np.broadcast_to(grad, original).copy(),)

    return _record("sum_all", (input,), np.asarray(input.values.sum()), _backward)


def normalized_cross_correlation(
    z1: Tensor,
    z2: Tensor,
    eps: float = 1e-12,
    mean_center: bool = False,
) -> Tensor:
    """
    Batch-normalized cross-correlation of two embedding matrices.

    C_kl = sum_b z1_bk z2_bl / (||z1_:k|| * ||z2_:l|| + eps), with columns
    optionally centered on their batch mean first.

    Args:
        z1: [B, D1]
        z2: [B, D2]
        eps: Denominator guard; zero-norm columns yield zero correlations
        mean_center: Subtract column means before correlating

    Returns:
        [D1, D2] correlation matrix
    """
    _require_ndim("z1", z1, 2, "[B, D]")
    _require_ndim("z2", z2, 2, "[B, D]")
    if z1.shape[0] != z2.shape[0]:
        raise ShapeMismatchError(
            "cross-correlation views must share a batch size",
            details=[{"z1_batch": z1.shape[0], "z2_batch": z2.shape[0]}],
        )
    if z1.shape[0] < 2:
        raise ShapeMismatchError(
            "cross-correlation needs a batch of at least 2",
            details=[{"batch": z1.shape[0]}],
        )

    a = z1.values - z1.values.mean(axis=0) if mean_center else z1.values
    b = z2.values - z2.values.mean(axis=0) if mean_center else z2.values
    n1 = np.sqrt((a * a).sum(axis=0))
    n2 = np.sqrt((b * b).sum(axis=0))
    numerator = a.T @ b
    denominator = n1[:, None] * n2[None, :] + eps
    corr = numerator / denominator

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        g_num = grad / denominator
        g_den = -grad * corr / denominator
        g_n1 = (g_den * n2[None, :]).sum(axis=1)
        g_n2 = (g_den * n1[:, None]).sum(axis=0)
        inv_n1 = np.divide(1.0, n1, out=np.zeros_like(n1), where=n1 > 0)
        inv_n2 = np.divide(1.0, n2, out=np.zeros_like(n2), where=n2 > 0)
        d_a = b @ g_num.T + a * (g_n1 * inv_n1)[None, :]
        d_b = a @ g_num + b * (g_n2 * inv_n2)[None, :]
        if mean_center:
            d_a = d_a - d_a.mean(axis=0)
            d_b = d_b - d_b.mean(axis=0)
        return d_a, d_b

    return _record("cross_correlation", (z1, z2), corr, _backward)


def redundancy_loss(corr: Tensor, lam: float) -> Tensor:
    """sum_k (1 - C_kk)^2 + lam * sum_{k != l} C_kl^2 as a scalar tensor"""
    _require_ndim("corr", corr, 2, "[D, D]")
    if corr.shape[0] != corr.shape[1]:
        raise ShapeMismatchError(
            "redundancy loss needs a square matrix",
            details=[{"shape": list(corr.shape)}],
        )
    c = corr.values
    diagonal = np.diagonal(c)
    on_diagonal = ((1.0 - diagonal) ** 2).sum()
    off_diagonal = (c * c).sum() - (diagonal * diagonal).sum()
    loss = on_diagonal + lam * off_diagonal

    def _backward(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        d_c = 2.0 * lam * c
        np.fill_diagonal(d_c, -2.0 * (1.0 - diagonal))
        return (d_c * grad,)

    return _record("redundancy_loss", (corr,), np.asarray(loss), _backward)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """
    Populate grad on every requires_grad tensor reachable from loss.

    Leaf gradients accumulate into existing grad buffers; intermediate
    tensors receive their gradient directly. The active recording is consumed.

    Raises:
        RecordingError: No active recording, recording already consumed, or
            loss not produced under it
        ShapeMismatchError: Loss is not a scalar
    """
    recording = _active_recording.get()
    if recording is None:
        raise RecordingError("backward called without an active Recording")
    if recording.consumed:
        raise RecordingError("Recording already consumed by a previous backward")
    if loss.values.size != 1:
        raise ShapeMismatchError(
            "backward needs a scalar loss", details=[{"shape": list(loss.shape)}]
        )
    if not recording.owns(loss):
        raise RecordingError(
            "loss was not produced under the active Recording "
            "or does not depend on any requires_grad tensor"
        )

    produced = {entry.output for entry in recording.entries}
    grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.values)}  # type: ignore[dict-item]
    for entry in reversed(recording.entries):
        grad = grads.pop(entry.output, None)
        if grad is None:
            continue
        recording.tensors[entry.output].grad = grad
        for node, input_grad in zip(entry.inputs, entry.backward(grad)):
            if input_grad is None or not recording.tensors[node].requires_grad:
                continue
            if node in grads:
                grads[node] = grads[node] + input_grad
            else:
                grads[node] = input_grad

    for node, grad in grads.items():
        tensor = recording.tensors[node]
        if node in produced or not tensor.requires_grad:
            continue
        tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad

    recording.entries.clear()
    recording.tensors.clear()
    recording.consumed = True


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter moments plus hyperparameters of Adam"""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigurationError("Adam lr must be non-negative", details=[{"lr": self.lr}])
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigurationError(
                "Adam betas must lie in [0, 1)",
                details=[{"beta1": self.beta1, "beta2": self.beta2}],
            )
        if self.eps <= 0:
            raise ConfigurationError("Adam eps must be positive", details=[{"eps": self.eps}])
        if self.t < 0:
            raise ConfigurationError("Adam step count must be >= 0", details=[{"t": self.t}])


def init_adam(params: Sequence[Tensor], **hyperparameters: float) -> AdamState:
    """Fresh Adam state with zero moments shaped like params"""
    state = AdamState(**hyperparameters)  # type: ignore[arg-type]
    state.m = [np.zeros_like(p.values) for p in params]
    state.v = [np.zeros_like(p.values) for p in params]
    return state


def adam_step(
    params: Sequence[Tensor], state: AdamState
) -> tuple[Sequence[Tensor], AdamState]:
    """
    One bias-corrected Adam update, applied in place to param values.

    Raises:
        MissingGradientError: A parameter has no grad
    """
    for index, param in enumerate(params):
        if param.grad is None:
            raise MissingGradientError(
                "Adam step on a parameter without gradient",
                details=[{"parameter_index": index, "shape": list(param.shape)}],
            )
    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    if len(state.m) != len(params):
        raise ShapeMismatchError(
            "Adam state does not match parameter list",
            details=[{"state": len(state.m), "params": len(params)}],
        )

    state.t += 1
    bias_correction1 = 1.0 - state.beta1**state.t
    bias_correction2 = 1.0 - state.beta2**state.t
    for param, m, v in zip(params, state.m, state.v):
        grad = param.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        param.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def zero_grad(params: Sequence[Tensor]):
    """Clear gradients before the next backward"""
    for param in params:
        param.grad = None


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def _as_float(value: Tensor | float) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def finite_difference_gradient(
    f: Callable[[Tensor], Tensor | float],
    x: Tensor,
    h: float = 1e-5,
) -> Tensor:
    """
    Central-difference gradient of a scalar function, one coordinate at a time.

    f receives a perturbed copy of x and is evaluated with recording suspended.
    """
    if h <= 0:
        raise ConfigurationError("finite-difference step must be positive", details=[{"h": h}])
    base = x.values
    grad = np.zeros_like(base)
    flat_grad = grad.reshape(-1)
    with no_recording():
        for index in range(base.size):
            plus = base.copy()
            plus.reshape(-1)[index] += h
            minus = base.copy()
            minus.reshape(-1)[index] -= h
            flat_grad[index] = (_as_float(f(Tensor(plus))) - _as_float(f(Tensor(minus)))) / (
                2.0 * h
            )
    return Tensor(grad)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, 1e-30), the gradient-check metric"""
    diff = np.linalg.norm(np.asarray(analytic) - np.asarray(numeric))
    scale_ = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(diff / max(scale_, 1e-30))
