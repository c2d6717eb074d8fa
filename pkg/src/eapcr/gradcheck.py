"""Finite-difference verification of every backward rule.

The numeric side is central differences on float64 copies of the inputs; the
analytic side is one tape replay. Agreement is scored as the max absolute
deviation normalized by the largest gradient magnitude, so a systematic error
anywhere in a rule shows up regardless of gradient scale.

run_suite() is the single registry both the test suite and the CLI use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .autodiff import Tape, Tensor, backward, parameter

DEFAULT_STEP = 1e-4
OP_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of f with respect to x, perturbing x in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.ravel(), grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        f_plus = f()
        flat[i] = keep - step
        f_minus = f()
        flat[i] = keep
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.abs(analytic).max(initial=0)), float(np.abs(numeric).max(initial=0)), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0) / scale)


def check_gradients(
    build: Callable[[Tape | None], Tensor],
    wrt: dict[str, Tensor],
    step: float = DEFAULT_STEP,
) -> dict[str, float]:
    """Compare tape gradients of a scalar loss against central differences.

    build must rerun the full forward from the current contents of the wrt
    tensors and be deterministic (fix any randomness before calling).
    """
    for t in wrt.values():
        t.data = t.data.astype(np.float64)
        t.grad = None
        t.requires_grad = True
    tape = Tape()
    loss = build(tape)
    backward(tape, loss)
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in wrt.items()}

    def value() -> float:
        return float(build(None).data)

    return {k: relative_error(analytic[k], numeric_gradient(value, t.data, step)) for k, t in wrt.items()}


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def _rng():
    return np.random.default_rng(1234)


def _sum_of(t: Tensor, tape) -> Tensor:
    # reduce any output to a scalar with elementwise-distinct curvature
    flat = ops.reshape(tape, t, (1, -1))
    target = np.linspace(-1.0, 1.0, flat.data.shape[1]).reshape(1, -1)
    return ops.mse_loss(tape, flat, target)


def _checks() -> list[tuple[str, Callable[[], dict[str, float]]]]:
    checks: list[tuple[str, Callable[[], dict[str, float]]]] = []

    def named(name):
        def deco(fn):
            checks.append((name, fn))
            return fn
        return deco

    @named("matmul")
    def _matmul():
        rng = _rng()
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(4, 2)))
        return check_gradients(lambda tp: _sum_of(ops.matmul(tp, a, b), tp), {"a": a, "b": b})

    @named("matmul_batched")
    def _matmul_b():
        rng = _rng()
        a = parameter(rng.normal(size=(2, 3, 4)))
        b = parameter(rng.normal(size=(2, 4, 2)))
        return check_gradients(lambda tp: _sum_of(ops.matmul(tp, a, b), tp), {"a": a, "b": b})

    @named("transpose")
    def _transpose():
        a = parameter(_rng().normal(size=(3, 5)))
        return check_gradients(lambda tp: _sum_of(ops.transpose(tp, a), tp), {"a": a})

    @named("symmetrize")
    def _symmetrize():
        a = parameter(_rng().normal(size=(4, 4)))
        return check_gradients(lambda tp: _sum_of(ops.symmetrize(tp, a), tp), {"a": a})

    @named("add")
    def _add():
        rng = _rng()
        a = parameter(rng.normal(size=(3, 3)))
        b = parameter(rng.normal(size=(3, 3)))
        return check_gradients(lambda tp: _sum_of(ops.add(tp, a, b), tp), {"a": a, "b": b})

    @named("scale")
    def _scale():
        a = parameter(_rng().normal(size=(6,)))
        return check_gradients(lambda tp: _sum_of(ops.scale(tp, a, 0.37), tp), {"a": a})

    @named("concat")
    def _concat():
        rng = _rng()
        a = parameter(rng.normal(size=(2, 3)))
        b = parameter(rng.normal(size=(2, 5)))
        return check_gradients(
            lambda tp: _sum_of(ops.concat(tp, [a, b], axis=-1), tp), {"a": a, "b": b}
        )

    @named("reshape")
    def _reshape():
        a = parameter(_rng().normal(size=(2, 6)))
        return check_gradients(lambda tp: _sum_of(ops.reshape(tp, a, (3, 4)), tp), {"a": a})

    @named("row_mean")
    def _row_mean():
        a = parameter(_rng().normal(size=(5, 7)))
        return check_gradients(lambda tp: _sum_of(ops.row_mean(tp, a), tp), {"a": a})

    @named("tanh")
    def _tanh():
        a = parameter(_rng().normal(size=(4, 4)))
        return check_gradients(lambda tp: _sum_of(ops.tanh(tp, a), tp), {"a": a})

    @named("relu")
    def _relu():
        rng = _rng()
        raw = rng.normal(size=(5, 5))
        raw += 0.2 * np.sign(raw)  # keep clear of the kink
        a = parameter(raw)
        return check_gradients(lambda tp: _sum_of(ops.relu(tp, a), tp), {"a": a})

    @named("embedding_lookup")
    def _embed():
        rng = _rng()
        table = parameter(rng.normal(size=(3, 4)))
        idx = np.array([0, 2, 2, 1])
        return check_gradients(
            lambda tp: _sum_of(ops.embedding_lookup(tp, table, idx), tp), {"table": table}
        )

    @named("row_gather")
    def _row_gather():
        vec = parameter(_rng().normal(size=(5,)))
        idx = np.array([[0, 4, 4], [2, 1, 0]])
        return check_gradients(lambda tp: _sum_of(ops.row_gather(tp, vec, idx), tp), {"vec": vec})

    @named("pairwise_gather")
    def _pairwise():
        m = parameter(_rng().normal(size=(4, 4)))
        idx = np.array([[0, 3, 3, 1], [2, 2, 0, 1]])
        return check_gradients(
            lambda tp: _sum_of(ops.pairwise_gather(tp, m, idx), tp), {"m": m}
        )

    @named("apply_two_sided")
    def _two_sided():
        a = parameter(_rng().normal(size=(5, 5)))
        sigma = np.array([2, 0, 4, 1, 3])
        return check_gradients(
            lambda tp: _sum_of(ops.apply_two_sided(tp, a, sigma), tp), {"a": a}
        )

    @named("dense")
    def _dense():
        rng = _rng()
        x = parameter(rng.normal(size=(2, 7)))
        w = parameter(rng.normal(size=(4, 7)))
        b = parameter(rng.normal(size=(4,)))
        return check_gradients(
            lambda tp: _sum_of(ops.dense(tp, x, w, b), tp), {"x": x, "w": w, "b": b}
        )

    @named("conv2d")
    def _conv():
        rng = _rng()
        x = parameter(rng.normal(size=(1, 6, 6)))
        w = parameter(rng.normal(size=(4, 1, 4, 4)) * 0.5)
        b = parameter(rng.normal(size=(4,)))
        return check_gradients(
            lambda tp: _sum_of(ops.conv2d(tp, x, w, b), tp), {"x": x, "w": w, "b": b}
        )

    @named("conv2d_multichannel")
    def _conv_mc():
        rng = _rng()
        x = parameter(rng.normal(size=(2, 3, 5, 5)))
        w = parameter(rng.normal(size=(4, 3, 3, 3)) * 0.5)
        b = parameter(rng.normal(size=(4,)))
        return check_gradients(
            lambda tp: _sum_of(ops.conv2d(tp, x, w, b), tp), {"x": x, "w": w, "b": b}
        )

    @named("maxpool2d")
    def _maxpool():
        x = parameter(_rng().normal(size=(1, 4, 4)))
        return check_gradients(lambda tp: _sum_of(ops.maxpool2d(tp, x), tp), {"x": x})

    @named("maxpool2d_odd")
    def _maxpool_odd():
        x = parameter(_rng().normal(size=(2, 2, 5, 5)))
        return check_gradients(lambda tp: _sum_of(ops.maxpool2d(tp, x), tp), {"x": x})

    @named("adaptive_avgpool2d")
    def _adaptive():
        x = parameter(_rng().normal(size=(2, 7, 7)))
        return check_gradients(
            lambda tp: _sum_of(ops.adaptive_avgpool2d(tp, x, 3), tp), {"x": x}
        )

    @named("dropout")
    def _dropout():
        x = parameter(_rng().normal(size=(6, 6)))

        def build(tp):
            rng = np.random.default_rng(7)  # frozen mask across evaluations
            return _sum_of(ops.dropout(tp, x, 0.4, True, rng), tp)

        return check_gradients(build, {"x": x})

    @named("softmax_cross_entropy")
    def _ce():
        logits = parameter(_rng().normal(size=(3, 5)))
        labels = np.array([1, 4, 0])
        return check_gradients(
            lambda tp: ops.softmax_cross_entropy(tp, logits, labels), {"logits": logits}
        )

    @named("mse")
    def _mse():
        pred = parameter(_rng().normal(size=(6,)))
        target = np.linspace(-1, 1, 6)
        return check_gradients(lambda tp: ops.mse_loss(tp, pred, target), {"pred": pred})

    @named("dense_tanh_chain")
    def _chain():
        rng = _rng()
        x = parameter(rng.normal(size=(1, 5)))
        w = parameter(rng.normal(size=(3, 5)))
        b = parameter(rng.normal(size=(3,)))

        def build(tp):
            return ops.softmax_cross_entropy(
                tp, ops.tanh(tp, ops.dense(tp, x, w, b)), np.array([2])
            )

        return check_gradients(build, {"x": x, "w": w, "b": b})

    return checks


def run_suite(include_model: bool = True) -> list[CheckResult]:
    """Every operator check plus the end-to-end tiny model check."""
    results = [
        CheckResult(name, max(errs.values()), OP_TOLERANCE) for name, errs in
        ((name, fn()) for name, fn in _checks())
    ]
    if include_model:
        from .model import end_to_end_gradcheck

        results.append(
            CheckResult("model_end_to_end", end_to_end_gradcheck(), END_TO_END_TOLERANCE)
        )
    return results
