"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps an ndarray plus a gradient slot. Operations (see ops.py) record
themselves on an explicit Tape in execution order, which is automatically a
topological order of the computation graph. backward() replays the tape once
in reverse, accumulating gradients into every tensor that requires them.

Passing tape=None to any operation skips recording entirely, which is the
inference path.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import UsageError


class Tensor:
    """Dense float array with an optional gradient of the same shape.

    grad is None until backward() deposits something. requires_grad marks
    leaves (parameters, or inputs under study); intermediate results get it
    set automatically when any of their inputs requires gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def parameter(data, name: str | None = None) -> Tensor:
    """Tensor marked as trainable."""
    return Tensor(data, requires_grad=True, name=name)


class Node(NamedTuple):
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered operation record; append order is a topological order.

    Backward rules receive d(loss)/d(output) and return one gradient array
    (or None) per input. Returned arrays are owned by the tape afterwards;
    rules with several inputs must not return overlapping views of the same
    buffer, since the first deposit into a leaf is stored by reference.
    """

    def __init__(self):
        self._nodes: list[Node] = []

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        self._nodes.append(Node(output, inputs, backward))

    def __len__(self):
        return len(self._nodes)


def record(tape: Tape | None, output: Tensor, inputs: tuple[Tensor, ...], backward) -> Tensor:
    """Mark output as differentiable and record the op if a tape is active."""
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.record(output, inputs, backward)
    return output


def backward(tape: Tape, loss: Tensor, seed: float = 1.0) -> None:
    """Accumulate d(seed * loss)/d(leaf) into .grad of every tensor on the tape.

    loss must be scalar. Gradients add onto whatever is already in .grad, so
    several backward passes can accumulate (used for micro-batched training);
    call zero_grad() on the parameters between optimizer steps.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.full_like(loss.data, seed)
    for node in reversed(tape._nodes):
        dout = node.output.grad
        node.output.grad = None  # free activation gradient as soon as consumed
        if dout is None:
            continue
        grads = node.backward(dout)
        for tensor, grad in zip(node.inputs, grads):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.grad is None:
                tensor.grad = grad
            else:
                tensor.grad += grad
