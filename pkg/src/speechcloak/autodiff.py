"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A Tape records nodes in construction order, which is topological by
construction: parents always precede their consumers. ``backward`` walks
the node list once in strict reverse insertion order, so gradients are
deterministic (identical tapes yield bit-identical gradients). The op set
is exactly what the STFT/mel pipeline, the surrogate encoder, and the two
perturbation losses need; there is no broadcasting, no GPU path, and no
higher-order differentiation.

Ops are module-level functions so callers can invoke them through the
module namespace (``ad.square(x)``), which also gives diagnostics a hook
to substitute a deliberately broken rule when validating the gradient
checker itself.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NonFiniteValueError(FloatingPointError):
    """A forward value went NaN/Inf; carries the offending node index."""

    def __init__(self, index: int, op: str):
        super().__init__(f"non-finite value at node {index} (op {op!r})")
        self.index = index
        self.op = op


class Node:
    """One recorded operation: forward value plus a local VJP rule."""

    __slots__ = ("tape", "index", "op", "value", "grad", "parents", "vjp")

    def __init__(self, tape, index, op, value, parents, vjp):
        self.tape = tape
        self.index = index
        self.op = op
        self.value = value
        self.grad = np.zeros_like(value)
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return elementwise_mul(self, other)
        return scalar_scale(self, float(other))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Node(#{self.index}, op={self.op!r}, shape={self.value.shape})"


class Tape:
    """Append-only computation graph for one forward/backward pass."""

    def __init__(self, rng_seed: int = 0):
        self.nodes: list[Node] = []
        self.rng_seed = rng_seed

    def record(self, op: str, value, parents: Sequence[Node] = (), vjp=None) -> Node:
        value = np.asarray(value, dtype=np.float64)
        index = len(self.nodes)
        if not np.all(np.isfinite(value)):
            raise NonFiniteValueError(index, op)
        node = Node(self, index, op, value, tuple(parents), vjp)
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        """An input node whose gradient will be read after backward."""
        return self.record("leaf", value)

    def constant(self, value) -> Node:
        """A node that blocks gradient flow (also serves as stop-gradient)."""
        return self.record("constant", value)


def _same_tape(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ValueError("operands were recorded on different tapes")
    return tape


def _same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")
    return _same_tape(a, b).record(
        "add", a.value + b.value, (a, b), lambda g: (g, g)
    )


def sub(a: Node, b: Node) -> Node:
    _same_shape(a, b, "sub")
    return _same_tape(a, b).record(
        "sub", a.value - b.value, (a, b), lambda g: (g, -g)
    )


def elementwise_mul(a: Node, b: Node) -> Node:
    _same_shape(a, b, "elementwise_mul")
    return _same_tape(a, b).record(
        "elementwise_mul",
        a.value * b.value,
        (a, b),
        lambda g: (g * b.value, g * a.value),
    )


def scalar_scale(x: Node, c: float) -> Node:
    c = float(c)
    return x.tape.record("scalar_scale", x.value * c, (x,), lambda g: (g * c,))


def square(x: Node) -> Node:
    return x.tape.record("square", x.value**2, (x,), lambda g: (2.0 * x.value * g,))


def sqrt_eps(x: Node, eps: float = 1e-12) -> Node:
    """sqrt(x + eps); the offset keeps the gradient finite at exact zeros."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    root = np.sqrt(x.value + eps)
    return x.tape.record("sqrt_eps", root, (x,), lambda g: (g * 0.5 / root,))


def absolute(x: Node) -> Node:
    """|x| with subgradient 0 at 0."""
    return x.tape.record(
        "absolute", np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),)
    )


def log_floor(x: Node, amin: float = 1e-10) -> Node:
    """log(max(x, amin)); gradient is 1/x above the floor, 0 at or below it."""
    if amin <= 0:
        raise ValueError("amin must be positive")
    floored = np.maximum(x.value, amin)
    mask = x.value > amin
    return x.tape.record(
        "log_floor",
        np.log(floored),
        (x,),
        lambda g: (np.where(mask, g / floored, 0.0),),
    )


def relu(x: Node) -> Node:
    mask = x.value > 0
    return x.tape.record(
        "relu", np.where(mask, x.value, 0.0), (x,), lambda g: (np.where(mask, g, 0.0),)
    )


def mean(x: Node) -> Node:
    n = x.value.size
    return x.tape.record(
        "mean", np.mean(x.value), (x,), lambda g: (np.full_like(x.value, g / n),)
    )


def sum_all(x: Node) -> Node:
    return x.tape.record(
        "sum", np.sum(x.value), (x,), lambda g: (np.full_like(x.value, g),)
    )


def clamp_minmax(x: Node, lo: float | None, hi: float | None) -> Node:
    """Clip to [lo, hi]; gradient passes (factor 1) inside the closed interval."""
    lo_v = -np.inf if lo is None else float(lo)
    hi_v = np.inf if hi is None else float(hi)
    if lo_v > hi_v:
        raise ValueError(f"clamp_minmax: lo {lo_v} > hi {hi_v}")
    mask = (x.value >= lo_v) & (x.value <= hi_v)
    return x.tape.record(
        "clamp_minmax",
        np.clip(x.value, lo_v, hi_v),
        (x,),
        lambda g: (np.where(mask, g, 0.0),),
    )


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ValueError(f"matmul: inner dims {av.shape} @ {bv.shape}")
        vjp = lambda g: (g @ bv.T, av.T @ g)
    elif av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise ValueError(f"matmul: inner dims {av.shape} @ {bv.shape}")
        vjp = lambda g: (bv @ g, np.outer(av, g))
    elif av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ValueError(f"matmul: inner dims {av.shape} @ {bv.shape}")
        vjp = lambda g: (np.outer(g, bv), av.T @ g)
    else:
        raise ValueError(f"matmul: unsupported ranks {av.ndim} and {bv.ndim}")
    return _same_tape(a, b).record("matmul", av @ bv, (a, b), vjp)


def l1_distance(a: Node, b: Node) -> Node:
    """Sum of absolute elementwise differences (the L1 norm of a - b)."""
    _same_shape(a, b, "l1_distance")
    sign = np.sign(a.value - b.value)
    return _same_tape(a, b).record(
        "l1_distance",
        np.sum(np.abs(a.value - b.value)),
        (a, b),
        lambda g: (g * sign, -g * sign),
    )


def l2_norm(x: Node) -> Node:
    norm = float(np.sqrt(np.sum(x.value**2)))
    if norm == 0.0:
        vjp = lambda g: (np.zeros_like(x.value),)
    else:
        vjp = lambda g: (g * x.value / norm,)
    return x.tape.record("l2_norm", norm, (x,), vjp)


def l2_normalize(x: Node, eps: float = 1e-12) -> Node:
    """x / sqrt(sum(x^2) + eps)."""
    norm = np.sqrt(np.sum(x.value**2) + eps)
    unit = x.value / norm

    def vjp(g):
        return ((g - unit * np.dot(unit, g)) / norm,)

    return x.tape.record("l2_normalize", unit, (x,), vjp)


def cosine_similarity(a: Node, b: Node) -> Node:
    _same_shape(a, b, "cosine_similarity")
    av, bv = a.value, b.value
    na = np.sqrt(np.sum(av**2))
    nb = np.sqrt(np.sum(bv**2))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_similarity: zero-norm operand")
    cos = float(np.dot(av, bv) / (na * nb))

    def vjp(g):
        return (
            g * (bv / (na * nb) - cos * av / na**2),
            g * (av / (na * nb) - cos * bv / nb**2),
        )

    return _same_tape(a, b).record("cosine_similarity", cos, (a, b), vjp)


# ---------------------------------------------------------------------------
# gather / framing ops


def frame_gather(x: Node, start: int, length: int) -> Node:
    """One frame of ``length`` samples from a 1-D signal, zero-padded past
    the end."""
    if x.value.ndim != 1:
        raise ValueError("frame_gather expects a 1-D signal")
    if start < 0 or length < 1:
        raise ValueError("frame_gather: invalid start/length")
    n = x.value.size
    out = np.zeros(length)
    valid = max(0, min(length, n - start))
    out[:valid] = x.value[start : start + valid]

    def vjp(g):
        gx = np.zeros(n)
        gx[start : start + valid] = g[:valid]
        return (gx,)

    return x.tape.record("frame_gather", out, (x,), vjp)


def frame_stack(x: Node, frame_length: int, hop: int, n_frames: int) -> Node:
    """All analysis frames as an (n_frames, frame_length) matrix.

    Frame t starts at t * hop; samples past the end of the signal are
    zero. The backward rule scatter-adds overlapping frame gradients back
    onto the signal.
    """
    if x.value.ndim != 1:
        raise ValueError("frame_stack expects a 1-D signal")
    n = x.value.size
    idx = np.arange(n_frames)[:, None] * hop + np.arange(frame_length)[None, :]
    mask = idx < n
    out = np.where(mask, x.value[np.minimum(idx, n - 1)], 0.0)

    def vjp(g):
        gx = np.zeros(n)
        np.add.at(gx, idx[mask], g[mask])
        return (gx,)

    return x.tape.record("frame_stack", out, (x,), vjp)


def pad_to(x: Node, length: int) -> Node:
    """Zero-pad a 1-D signal at the tail to ``length`` samples."""
    n = x.value.size
    if x.value.ndim != 1 or length < n:
        raise ValueError(f"pad_to: cannot pad shape {x.value.shape} to {length}")
    if length == n:
        return x.tape.record("pad_to", x.value, (x,), lambda g: (g,))
    out = np.zeros(length)
    out[:n] = x.value
    return x.tape.record("pad_to", out, (x,), lambda g: (g[:n],))


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into every node's ``grad``.

    Requires a scalar root. Visits nodes in strict reverse insertion
    order exactly once; a node consumed k times receives the sum of its
    k incoming contributions.
    """
    if root.value.shape != ():
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    tape = root.tape
    for node in tape.nodes:
        node.grad = np.zeros_like(node.value)
    root.grad = np.array(1.0)
    for node in reversed(tape.nodes[: root.index + 1]):
        if node.vjp is None or not np.any(node.grad):
            continue
        for parent, contribution in zip(node.parents, node.vjp(node.grad)):
            parent.grad = parent.grad + contribution


def value_of(f: Callable[[Node], Node], x: np.ndarray) -> float:
    """Evaluate a tape-building scalar function at a plain array."""
    return float(f(Tape().leaf(x)).value)


def gradient_of(f: Callable[[Node], Node], x: np.ndarray) -> np.ndarray:
    """Analytic gradient of a tape-building scalar function."""
    tape = Tape()
    leaf = tape.leaf(x)
    backward(f(leaf))
    return leaf.grad


def grad_check(
    f: Callable[[Node], Node],
    x: np.ndarray,
    h: float = 1e-4,
    indices: Sequence[int] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - central| / max(1, |central|).
    ``indices`` restricts the (expensive) finite-difference probes to a
    subset of coordinates; the analytic side is always the full gradient.
    Non-finite discrepancies surface as ``inf`` in the result rather than
    raising.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = gradient_of(f, x).ravel()
    flat = x.ravel()
    probe = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in probe:
        bumped = flat.copy()
        bumped[i] += h
        f_plus = value_of(f, bumped.reshape(x.shape))
        bumped[i] -= 2 * h
        f_minus = value_of(f, bumped.reshape(x.shape))
        central = (f_plus - f_minus) / (2.0 * h)
        if not np.isfinite(central) or not np.isfinite(analytic[i]):
            return float("inf")
        worst = max(worst, abs(analytic[i] - central) / max(1.0, abs(central)))
    return worst
