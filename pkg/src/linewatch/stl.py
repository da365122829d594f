"""Temporal-logic formulas over sampled signals and their robustness.

A formula is an expression tree of linear predicates under And/Or and the
discrete-window temporal operators Globally/Eventually (negation normal
form; windows are in integer grid steps). Three evaluations are provided:

* ``robustness`` -- exact quantitative semantics (min/max recursion),
* ``smooth_robustness`` -- min/max replaced by log-sum-exp soft versions
  with sharpness ``kappa``, differentiable in the trace samples,
* ``smooth_robustness_gradient`` -- exact reverse-mode gradient of the
  smoothed value with respect to every sample entry.

Soft reductions over formula children are summed in value-sorted order so
that results do not depend on child ordering (reordering a conjunction is
a no-op bit-for-bit).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class WindowError(ValueError):
    """A temporal window does not fit inside the trace at the requested step."""

    def __init__(self, node: "Formula", message: str):
        super().__init__(message)
        self.node = node


@dataclass
class Trace:
    """Uniformly sampled signal: samples[k] is the stacked vector at t = k*ts."""

    ts: float
    samples: np.ndarray  # (n_samples, dim)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError("trace needs at least one sample of constant dimension")
        if not self.ts > 0:
            raise ValueError("ts must be > 0")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass
class LinearPredicate:
    """mu(s) = coefficients . s - offset over the stacked sample vector."""

    coefficients: np.ndarray
    offset: float
    label: Optional[str] = None

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if not np.any(self.coefficients):
            raise ValueError("predicate coefficient vector must be non-zero")


@dataclass
class And:
    children: list["Formula"]
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("And needs at least one child")


@dataclass
class Or:
    children: list["Formula"]
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("Or needs at least one child")


@dataclass
class Globally:
    a: int
    b: int
    child: "Formula"
    label: Optional[str] = None

    def __post_init__(self) -> None:
        _check_window(self.a, self.b)


@dataclass
class Eventually:
    a: int
    b: int
    child: "Formula"
    label: Optional[str] = None

    def __post_init__(self) -> None:
        _check_window(self.a, self.b)


Formula = Union[LinearPredicate, And, Or, Globally, Eventually]


def _check_window(a: int, b: int) -> None:
    if not (isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer))):
        raise ValueError("window bounds must be integer step counts")
    if not (0 <= a <= b):
        raise ValueError(f"window must satisfy 0 <= a <= b, got [{a}, {b}]")


# ---------------------------------------------------------------------------
# Structure helpers
# ---------------------------------------------------------------------------


def operator_depth(node: Formula) -> int:
    """Nesting depth counting only min/max operator nodes."""
    if isinstance(node, LinearPredicate):
        return 0
    if isinstance(node, (And, Or)):
        return 1 + max(operator_depth(c) for c in node.children)
    return 1 + operator_depth(node.child)


def max_operand_count(node: Formula) -> int:
    """Largest reduction width: child count or temporal window length."""
    if isinstance(node, LinearPredicate):
        return 1
    if isinstance(node, (And, Or)):
        return max(len(node.children), *(max_operand_count(c) for c in node.children))
    return max(node.b - node.a + 1, max_operand_count(node.child))


def to_sexpr(node: Formula) -> str:
    """Textual dump (grammar in docs/formula_grammar.md)."""
    tag = f" :{node.label}" if node.label else ""
    if isinstance(node, LinearPredicate):
        terms = " ".join(
            f"({i} {c!r})" for i, c in enumerate(node.coefficients) if c != 0.0
        )
        return f"(pred{tag} [{terms}] {node.offset!r})"
    if isinstance(node, And):
        return f"(and{tag} " + " ".join(to_sexpr(c) for c in node.children) + ")"
    if isinstance(node, Or):
        return f"(or{tag} " + " ".join(to_sexpr(c) for c in node.children) + ")"
    op = "G" if isinstance(node, Globally) else "F"
    return f"({op}{tag} {node.a} {node.b} {to_sexpr(node.child)})"


# ---------------------------------------------------------------------------
# Exact semantics
# ---------------------------------------------------------------------------


def _exact_values(node: Formula, samples: np.ndarray) -> np.ndarray:
    """Robustness at every step where the node's windows fit; may be empty."""
    if isinstance(node, LinearPredicate):
        if node.coefficients.shape[0] != samples.shape[1]:
            raise ValueError(
                f"predicate dimension {node.coefficients.shape[0]} "
                f"!= trace dimension {samples.shape[1]}"
            )
        return samples @ node.coefficients - node.offset
    if isinstance(node, (And, Or)):
        arrays = [_exact_values(c, samples) for c in node.children]
        n = min(a.shape[0] for a in arrays)
        if n == 0:
            return np.empty(0)
        stack = np.stack([a[:n] for a in arrays])
        return stack.min(axis=0) if isinstance(node, And) else stack.max(axis=0)
    child = _exact_values(node.child, samples)
    length = child.shape[0] - node.b
    if length <= 0:
        return np.empty(0)
    windows = sliding_window_view(child, node.b - node.a + 1)
    agg = windows.min(axis=1) if isinstance(node, Globally) else windows.max(axis=1)
    return agg[node.a : node.a + length]


def robustness(formula: Formula, trace: Trace, k: int = 0) -> float:
    """Exact quantitative semantics at step k (positive iff satisfied)."""
    values = _exact_values(formula, trace.samples)
    if not 0 <= k < values.shape[0]:
        raise WindowError(
            formula,
            f"step {k} outside the {values.shape[0]} steps where the formula's "
            f"windows fit the {trace.n_samples}-sample trace",
        )
    return float(values[k])


@dataclass
class CriticalNode:
    """The predicate instance that decides the robustness value."""

    label: Optional[str]
    step: int
    value: float


def critical_node(formula: Formula, trace: Trace, k: int = 0) -> CriticalNode:
    """Follow argmin/argmax branches down to the deciding predicate."""
    cache: dict[int, np.ndarray] = {}

    def values(node: Formula) -> np.ndarray:
        arr = cache.get(id(node))
        if arr is None:
            arr = _exact_values(node, trace.samples)
            cache[id(node)] = arr
        return arr

    if not 0 <= k < values(formula).shape[0]:
        raise WindowError(formula, f"step {k} outside the formula's valid range")

    def descend(node: Formula, step: int, label: Optional[str]) -> CriticalNode:
        label = node.label or label
        if isinstance(node, LinearPredicate):
            return CriticalNode(label, step, float(values(node)[step]))
        if isinstance(node, (And, Or)):
            vals = [float(values(c)[step]) for c in node.children]
            pick = int(np.argmin(vals)) if isinstance(node, And) else int(np.argmax(vals))
            return descend(node.children[pick], step, label)
        child_vals = values(node.child)[step + node.a : step + node.b + 1]
        off = int(np.argmin(child_vals)) if isinstance(node, Globally) else int(np.argmax(child_vals))
        return descend(node.child, step + node.a + off, label)

    return descend(formula, k, None)


# ---------------------------------------------------------------------------
# Smoothed semantics and gradient
# ---------------------------------------------------------------------------


def _soft_reduce_children(stack: np.ndarray, kappa: float, minimum: bool) -> np.ndarray:
    """Soft min/max across axis 0, summing exponentials in value order."""
    sign = -1.0 if minimum else 1.0
    ref = stack.min(axis=0) if minimum else stack.max(axis=0)
    shifted = np.sort(sign * kappa * (stack - ref[None, :]), axis=0)
    # shifted is ascending and <= 0; summing small-to-large is canonical.
    total = np.exp(shifted).sum(axis=0)
    return ref + sign * np.log(total) / kappa


def _soft_reduce_windows(windows: np.ndarray, kappa: float, minimum: bool) -> np.ndarray:
    """Soft min/max along the last axis (time order, no reordering)."""
    sign = -1.0 if minimum else 1.0
    ref = windows.min(axis=1) if minimum else windows.max(axis=1)
    total = np.exp(sign * kappa * (windows - ref[:, None])).sum(axis=1)
    return ref + sign * np.log(total) / kappa


class _SmoothNode:
    __slots__ = ("node", "values", "children", "child")

    def __init__(self, node, values, children=None, child=None):
        self.node = node
        self.values = values
        self.children = children
        self.child = child


def _smooth_forward(node: Formula, samples: np.ndarray, kappa: float) -> _SmoothNode:
    if isinstance(node, LinearPredicate):
        return _SmoothNode(node, _exact_values(node, samples))
    if isinstance(node, (And, Or)):
        recs = [_smooth_forward(c, samples, kappa) for c in node.children]
        n = min(r.values.shape[0] for r in recs)
        if n == 0:
            return _SmoothNode(node, np.empty(0), children=recs)
        stack = np.stack([r.values[:n] for r in recs])
        out = _soft_reduce_children(stack, kappa, minimum=isinstance(node, And))
        return _SmoothNode(node, out, children=recs)
    rec = _smooth_forward(node.child, samples, kappa)
    length = rec.values.shape[0] - node.b
    if length <= 0:
        return _SmoothNode(node, np.empty(0), child=rec)
    windows = sliding_window_view(rec.values, node.b - node.a + 1)[node.a : node.a + length]
    out = _soft_reduce_windows(windows, kappa, minimum=isinstance(node, Globally))
    return _SmoothNode(node, out, child=rec)


def _smooth_backward(rec: _SmoothNode, cot: np.ndarray, kappa: float, grad: np.ndarray) -> None:
    node = rec.node
    if isinstance(node, LinearPredicate):
        n = cot.shape[0]
        grad[:n] += cot[:, None] * node.coefficients[None, :]
        return
    if isinstance(node, (And, Or)):
        sign = -1.0 if isinstance(node, And) else 1.0
        n = rec.values.shape[0]
        for child in rec.children:
            # exp weights are exactly normalized: sum_i w_i = 1 analytically.
            w = np.exp(sign * kappa * (child.values[:n] - rec.values))
            child_cot = np.zeros(child.values.shape[0])
            child_cot[:n] = cot * w
            _smooth_backward(child, child_cot, kappa, grad)
        return
    sign = -1.0 if isinstance(node, Globally) else 1.0
    child = rec.child
    n = rec.values.shape[0]
    width = node.b - node.a + 1
    windows = sliding_window_view(child.values, width)[node.a : node.a + n]
    w = np.exp(sign * kappa * (windows - rec.values[:, None]))
    child_cot = np.zeros(child.values.shape[0])
    for j in range(width):
        child_cot[node.a + j : node.a + j + n] += cot * w[:, j]
    _smooth_backward(child, child_cot, kappa, grad)


def _require_step(rec: _SmoothNode, formula: Formula, trace: Trace, k: int) -> None:
    if not 0 <= k < rec.values.shape[0]:
        raise WindowError(
            formula,
            f"step {k} outside the {rec.values.shape[0]} steps where the formula's "
            f"windows fit the {trace.n_samples}-sample trace",
        )


def smooth_robustness(formula: Formula, trace: Trace, k: int = 0, kappa: float = 10.0) -> float:
    """Log-sum-exp smoothed robustness at step k."""
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    rec = _smooth_forward(formula, trace.samples, kappa)
    _require_step(rec, formula, trace, k)
    return float(rec.values[k])


def smooth_robustness_gradient(
    formula: Formula, trace: Trace, k: int = 0, kappa: float = 10.0
) -> np.ndarray:
    """Gradient of smooth_robustness with respect to every sample entry."""
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    rec = _smooth_forward(formula, trace.samples, kappa)
    _require_step(rec, formula, trace, k)
    grad = np.zeros_like(trace.samples)
    cot = np.zeros(rec.values.shape[0])
    cot[k] = 1.0
    _smooth_backward(rec, cot, kappa, grad)
    return grad


def smooth_robustness_with_gradient(
    formula: Formula, trace: Trace, k: int = 0, kappa: float = 10.0
) -> tuple[float, np.ndarray]:
    """Value and gradient from a single forward/backward pass."""
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    rec = _smooth_forward(formula, trace.samples, kappa)
    _require_step(rec, formula, trace, k)
    grad = np.zeros_like(trace.samples)
    cot = np.zeros(rec.values.shape[0])
    cot[k] = 1.0
    _smooth_backward(rec, cot, kappa, grad)
    return float(rec.values[k]), grad
