"""Differentiable operations.

Every op takes the tape first; tape=None computes forward only. Array
arguments that are not Tensors (index arrays, labels) are plain numpy arrays.
Single samples and batches share one code path: image ops accept [C,H,W] or
[B,C,H,W], vector ops accept [n] or [B,n].
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, record
from .errors import (
    ConfigError,
    DimensionError,
    LabelError,
    TokenIndexError,
)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-d operands or equal leading batch dimensions."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} x {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2] or a.data.shape[:-2] != b.data.shape[:-2]:
        raise DimensionError(f"matmul shapes do not chain: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(dout):
        da = dout @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        db = np.swapaxes(a.data, -1, -2) @ dout if b.requires_grad else None
        return da, db

    return record(tape, out, (a, b), bwd)


def transpose(tape: Tape | None, x: Tensor) -> Tensor:
    """Swap the two trailing axes."""
    if x.data.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 dims, got {x.shape}")
    out = Tensor(np.swapaxes(x.data, -1, -2).copy())

    def bwd(dout):
        return (np.swapaxes(dout, -1, -2).copy(),)

    return record(tape, out, (x,), bwd)


def symmetrize(tape: Tape | None, x: Tensor) -> Tensor:
    """0.5 (X + X^T); output is exactly symmetric elementwise."""
    if x.data.ndim != 2 or x.data.shape[0] != x.data.shape[1]:
        raise DimensionError(f"symmetrize needs a square matrix, got {x.shape}")
    half = np.asarray(0.5, dtype=x.dtype)
    out = Tensor(half * (x.data + x.data.T))

    def bwd(dout):
        return (half * (dout + dout.T),)

    return record(tape, out, (x,), bwd)


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of identically shaped tensors."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def bwd(dout):
        # distinct buffers: the first deposit into a leaf is kept by reference
        return dout, dout.copy()

    return record(tape, out, (a, b), bwd)


def scale(tape: Tape | None, x: Tensor, factor: float) -> Tensor:
    f = np.asarray(factor, dtype=x.dtype)
    out = Tensor(x.data * f)

    def bwd(dout):
        return (dout * f,)

    return record(tape, out, (x,), bwd)


def concat(tape: Tape | None, parts: list[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise DimensionError("concat of zero tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bwd(dout):
        moved = np.moveaxis(dout, axis, 0)
        return tuple(
            np.moveaxis(moved[bounds[i]:bounds[i + 1]], 0, axis)
            for i in range(len(parts))
        )

    return record(tape, out, tuple(parts), bwd)


def reshape(tape: Tape | None, x: Tensor, shape: tuple) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(dout):
        return (dout.reshape(x.data.shape),)

    return record(tape, out, (x,), bwd)


def flatten(tape: Tape | None, x: Tensor, batched: bool) -> Tensor:
    """Collapse to [n] or, when batched, to [B, n]."""
    if batched:
        return reshape(tape, x, (x.data.shape[0], -1))
    return reshape(tape, x, (-1,))


def row_mean(tape: Tape | None, x: Tensor) -> Tensor:
    """Mean over the trailing axis."""
    n = x.data.shape[-1]
    out = Tensor(x.data.mean(axis=-1))

    def bwd(dout):
        return (np.broadcast_to((dout / n)[..., None], x.data.shape).copy(),)

    return record(tape, out, (x,), bwd)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(tape: Tape | None, x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data))
    y = out.data

    def bwd(dout):
        return (dout * (1.0 - y * y),)

    return record(tape, out, (x,), bwd)


def relu(tape: Tape | None, x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    y = out.data

    def bwd(dout):
        return (dout * (y > 0),)

    return record(tape, out, (x,), bwd)


# ---------------------------------------------------------------------------
# table lookups


def _check_indices(indices: np.ndarray, vocab: int) -> np.ndarray:
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TokenIndexError(f"indices must be integers, got dtype {idx.dtype}")
    bad = (idx < 0) | (idx >= vocab)
    if bad.any():
        pos = tuple(int(v) for v in np.argwhere(bad)[0])
        raise TokenIndexError(
            f"index {int(idx[pos])} out of range [0, {vocab}) at feature position {pos}"
        )
    return idx


def embedding_lookup(tape: Tape | None, table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of table [V, E]; indices [N] or [B, N] -> [..., N, E]."""
    vocab, width = table.data.shape
    idx = _check_indices(indices, vocab)
    out = Tensor(table.data[idx])

    def bwd(dout):
        dtable = np.zeros_like(table.data)
        np.add.at(dtable, idx.ravel(), dout.reshape(-1, width))
        return (dtable,)

    return record(tape, out, (table,), bwd)


def row_gather(tape: Tape | None, vec: Tensor, indices: np.ndarray) -> Tensor:
    """Gather elements of a vector [V] at integer positions of any shape."""
    if vec.data.ndim != 1:
        raise DimensionError(f"row_gather needs a vector, got {vec.shape}")
    vocab = vec.data.shape[0]
    idx = _check_indices(indices, vocab)

    out = Tensor(vec.data[idx])

    def bwd(dout):
        g = np.bincount(idx.ravel(), weights=dout.ravel().astype(np.float64), minlength=vocab)
        return (g.astype(vec.dtype),)

    return record(tape, out, (vec,), bwd)


def pairwise_gather(tape: Tape | None, matrix: Tensor, indices: np.ndarray) -> Tensor:
    """out[..., i, j] = matrix[idx[..., i], idx[..., j]] for a square matrix [V, V].

    With matrix = table @ table^T this equals the bilinear product of gathered
    embeddings E E^T without materializing E.
    """
    if matrix.data.ndim != 2 or matrix.data.shape[0] != matrix.data.shape[1]:
        raise DimensionError(f"pairwise_gather needs a square matrix, got {matrix.shape}")
    vocab = matrix.data.shape[0]
    idx = _check_indices(indices, vocab)
    out = Tensor(matrix.data[idx[..., :, None], idx[..., None, :]])

    def bwd(dout):
        flat = (idx[..., :, None].astype(np.int64) * vocab + idx[..., None, :]).ravel()
        g = np.bincount(flat, weights=dout.ravel().astype(np.float64), minlength=vocab * vocab)
        return (g.reshape(vocab, vocab).astype(matrix.dtype),)

    return record(tape, out, (matrix,), bwd)


def apply_two_sided(tape: Tape | None, a: Tensor, sigma: np.ndarray) -> Tensor:
    """P[..., sigma(i), sigma(j)] = A[..., i, j]; equals M A M^T for the 0/1 matrix M."""
    n = len(sigma)
    if a.data.shape[-2:] != (n, n):
        raise DimensionError(f"two-sided apply: matrix {a.shape} vs permutation of {n}")
    inv = np.empty(n, dtype=np.int64)
    inv[sigma] = np.arange(n)
    out = Tensor(a.data[..., inv[:, None], inv[None, :]])

    def bwd(dout):
        return (dout[..., sigma[:, None], sigma[None, :]],)

    return record(tape, out, (a,), bwd)


# ---------------------------------------------------------------------------
# dense and convolutional layers


def dense(tape: Tape | None, x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map y = x W^T + b with W [m, n], x [n] or [B, n]."""
    m, n = weight.data.shape
    if x.data.shape[-1] != n:
        raise DimensionError(f"dense: input {x.shape} vs weight {weight.shape}")
    if bias.data.shape != (m,):
        raise DimensionError(f"dense: bias {bias.shape} vs weight {weight.shape}")
    out = Tensor(x.data @ weight.data.T + bias.data)
    batched = x.data.ndim == 2

    def bwd(dout):
        dx = dout @ weight.data if x.requires_grad else None
        if batched:
            dw = dout.T @ x.data
            db = dout.sum(axis=0)
        else:
            dw = np.outer(dout, x.data)
            db = dout.copy()
        return dx, dw, db

    return record(tape, out, (x, weight, bias), bwd)


def _as_batched_image(x: np.ndarray):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected [C,H,W] or [B,C,H,W], got {x.shape}")


def conv2d(tape: Tape | None, x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """2-d cross-correlation, stride 1, zero same-padding.

    kernels [O, C, k, k]; padding (k-1)//2 before, the remainder after, so
    output spatial size equals input size for any k.
    """
    x4, squeeze = _as_batched_image(x.data)
    nb, nc, h, w = x4.shape
    no, kc, k, k2 = kernels.data.shape
    if k != k2:
        raise DimensionError(f"kernels must be square, got {kernels.shape}")
    if kc != nc:
        raise DimensionError(f"conv2d channels: input {nc} vs kernels {kc}")
    if bias.data.shape != (no,):
        raise DimensionError(f"conv2d bias {bias.shape} vs {no} kernels")
    if k > h or k > w:
        raise DimensionError(f"kernel {k} exceeds padded input {h}x{w}")
    lo = (k - 1) // 2

    def pad(arr):
        return np.pad(arr, ((0, 0), (0, 0), (lo, k - 1 - lo), (lo, k - 1 - lo)))

    xpad = pad(x4)
    acc = np.zeros((no, nb, h, w), dtype=x4.dtype)
    for di in range(k):
        for dj in range(k):
            acc += np.tensordot(
                kernels.data[:, :, di, dj], xpad[:, :, di:di + h, dj:dj + w], axes=([1], [1])
            )
    out_data = acc.transpose(1, 0, 2, 3) + bias.data[None, :, None, None]
    out = Tensor(out_data[0] if squeeze else out_data)

    def bwd(dout):
        d4 = dout[None] if squeeze else dout
        db = d4.sum(axis=(0, 2, 3))
        dw = np.empty_like(kernels.data)
        xp = pad(x4)  # recomputed; cheaper than retaining it across the pass
        for di in range(k):
            for dj in range(k):
                dw[:, :, di, dj] = np.tensordot(
                    d4, xp[:, :, di:di + h, dj:dj + w], axes=([0, 2, 3], [0, 2, 3])
                )
        dx = None
        if x.requires_grad:
            dxp = np.zeros((nb, nc, h + k - 1, w + k - 1), dtype=x4.dtype)
            for di in range(k):
                for dj in range(k):
                    part = np.tensordot(d4, kernels.data[:, :, di, dj], axes=([1], [0]))
                    dxp[:, :, di:di + h, dj:dj + w] += part.transpose(0, 3, 1, 2)
            dx = dxp[:, :, lo:lo + h, lo:lo + w].copy()
            if squeeze:
                dx = dx[0]
        return dx, dw, db

    return record(tape, out, (x, kernels, bias), bwd)


def maxpool2d(tape: Tape | None, x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped.

    Ties take the first element in row-major window order.
    """
    x4, squeeze = _as_batched_image(x.data)
    nb, nc, h, w = x4.shape
    ho, wo = h // 2, w // 2
    if ho == 0 or wo == 0:
        raise DimensionError(f"maxpool2d needs spatial size >= 2, got {h}x{w}")
    win = (
        x4[:, :, : ho * 2, : wo * 2]
        .reshape(nb, nc, ho, 2, wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(nb, nc, ho, wo, 4)
    )
    arg = win.argmax(axis=-1)
    out_data = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    out = Tensor(out_data[0] if squeeze else out_data)

    def bwd(dout):
        d4 = dout[None] if squeeze else dout
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, arg[..., None], d4[..., None], axis=-1)
        dx = np.zeros_like(x4)
        dx[:, :, : ho * 2, : wo * 2] = (
            dwin.reshape(nb, nc, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(nb, nc, ho * 2, wo * 2)
        )
        return (dx[0] if squeeze else dx,)

    return record(tape, out, (x,), bwd)


def adaptive_avgpool2d(tape: Tape | None, x: Tensor, out_size: int) -> Tensor:
    """Average over near-equal rectangular bins partitioning H x W into s x s.

    Bin i spans rows [floor(i*H/s), floor((i+1)*H/s)); bins tile the input
    exactly, so every element belongs to one bin.
    """
    x4, squeeze = _as_batched_image(x.data)
    nb, nc, h, w = x4.shape
    s = out_size
    if s < 1 or s > h or s > w:
        raise DimensionError(f"adaptive pool to {s}x{s} from {h}x{w}")
    rb = [(i * h) // s for i in range(s + 1)]
    cb = [(j * w) // s for j in range(s + 1)]
    out_data = np.empty((nb, nc, s, s), dtype=x4.dtype)
    for i in range(s):
        for j in range(s):
            out_data[:, :, i, j] = x4[:, :, rb[i]:rb[i + 1], cb[j]:cb[j + 1]].mean(axis=(2, 3))
    out = Tensor(out_data[0] if squeeze else out_data)

    def bwd(dout):
        d4 = dout[None] if squeeze else dout
        dx = np.zeros_like(x4)
        for i in range(s):
            for j in range(s):
                area = (rb[i + 1] - rb[i]) * (cb[j + 1] - cb[j])
                dx[:, :, rb[i]:rb[i + 1], cb[j]:cb[j + 1]] = (d4[:, :, i, j] / area)[
                    :, :, None, None
                ]
        return (dx[0] if squeeze else dx,)

    return record(tape, out, (x,), bwd)


# ---------------------------------------------------------------------------
# regularization and losses


def dropout(
    tape: Tape | None,
    x: Tensor,
    rate: float,
    training: bool,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Zero each element with probability rate, scale survivors by 1/(1-rate).

    Identity when not training or rate == 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    keep = rng.random(x.data.shape) >= rate
    factor = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    mask = keep.astype(x.dtype) * factor
    out = Tensor(x.data * mask)

    def bwd(dout):
        return (dout * mask,)

    return record(tape, out, (x,), bwd)


def softmax_cross_entropy(tape: Tape | None, logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels.

    logits [C] or [B, C]; natural-log convention, log-sum-exp stabilized.
    """
    z = logits.data
    one_d = z.ndim == 1
    z2 = z[None] if one_d else z
    y = np.atleast_1d(np.asarray(labels))
    nb, nc = z2.shape
    if y.shape != (nb,):
        raise DimensionError(f"labels {y.shape} vs logits {z2.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise LabelError(f"labels must be integers, got dtype {y.dtype}")
    if ((y < 0) | (y >= nc)).any():
        bad = int(y[(y < 0) | (y >= nc)][0])
        raise LabelError(f"label {bad} outside [0, {nc})")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    out = Tensor(np.asarray(-logp[np.arange(nb), y].mean(), dtype=z.dtype))
    probs = np.exp(logp)

    def bwd(dout):
        g = probs.copy()
        g[np.arange(nb), y] -= 1.0
        g *= np.asarray(dout, dtype=z.dtype) / nb
        return ((g[0] if one_d else g),)

    return record(tape, out, (logits,), bwd)


def mse_loss(tape: Tape | None, pred: Tensor, target) -> Tensor:
    """Mean squared error against a plain array of the same shape."""
    t = np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.data.shape:
        raise DimensionError(f"mse target {t.shape} vs prediction {pred.shape}")
    diff = pred.data - t
    out = Tensor(np.asarray((diff * diff).mean(), dtype=pred.dtype))

    def bwd(dout):
        return (diff * np.asarray(2.0 * dout / diff.size, dtype=pred.dtype),)

    return record(tape, out, (pred,), bwd)
