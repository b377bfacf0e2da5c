"""Minimal reverse-mode gradient engine over dense float64 arrays, plus Adam.

The tape is rebuilt per forward pass (define-by-run) and the backward walk
visits records in exact reverse order, so gradients are bitwise
reproducible. Broadcasting is limited to adding/multiplying a row vector
against a matrix (the vector-plus-bias pattern); everything else must be
shape-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import NumericalError


class Var(NamedTuple):
    tape: "Tape"
    index: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _row_broadcastable(a: np.ndarray, b: np.ndarray) -> bool:
    return a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]


class Tape:
    """Records primitive operations for one reverse sweep."""

    def __init__(self) -> None:
        self.values: list[np.ndarray] = []
        # (output index, input indices, backward fn: out-grad -> in-grads)
        self.records: list[tuple[int, tuple[int, ...], Callable]] = []

    def leaf(self, value) -> Var:
        self.values.append(_as_array(value))
        return Var(self, len(self.values) - 1)

    # `constant` is a leaf whose gradient the caller never reads.
    constant = leaf

    def _emit(self, op: str, value: np.ndarray, parents: tuple[int, ...],
              backward: Callable) -> Var:
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite output of primitive '{op}'")
        self.values.append(value)
        out = len(self.values) - 1
        self.records.append((out, parents, backward))
        return Var(self, out)

    def affine(self, x: Var, w: Var, b: Var) -> Var:
        """x @ w + b, with x a vector or a matrix of row vectors."""
        xv, wv, bv = x.value, w.value, b.value
        if wv.ndim != 2 or xv.shape[-1] != wv.shape[0] or bv.shape != (wv.shape[1],):
            raise ValueError(
                f"affine shape mismatch: x{xv.shape} w{wv.shape} b{bv.shape}")
        out = xv @ wv + bv

        def backward(g):
            if xv.ndim == 1:
                return g @ wv.T, np.outer(xv, g), g
            return g @ wv.T, xv.T @ g, g.sum(axis=0)

        return self._emit("affine", out, (x.index, w.index, b.index), backward)

    def _binary(self, op: str, a: Var, b: Var, fwd, back_a, back_b) -> Var:
        av, bv = a.value, b.value
        if av.shape == bv.shape:
            reduce_b = False
        elif _row_broadcastable(av, bv):
            reduce_b = True
        else:
            raise ValueError(f"{op} shape mismatch: {av.shape} vs {bv.shape}")

        def backward(g):
            ga = back_a(g, av, bv)
            gb = back_b(g, av, bv)
            if reduce_b:
                gb = gb.sum(axis=0)
            return ga, gb

        return self._emit(op, fwd(av, bv), (a.index, b.index), backward)

    def add(self, a: Var, b: Var) -> Var:
        return self._binary("add", a, b, lambda x, y: x + y,
                            lambda g, x, y: g, lambda g, x, y: g)

    def sub(self, a: Var, b: Var) -> Var:
        return self._binary("sub", a, b, lambda x, y: x - y,
                            lambda g, x, y: g, lambda g, x, y: -g)

    def mul(self, a: Var, b: Var) -> Var:
        return self._binary("mul", a, b, lambda x, y: x * y,
                            lambda g, x, y: g * y, lambda g, x, y: g * x)

    def tanh(self, x: Var) -> Var:
        out = np.tanh(x.value)
        return self._emit("tanh", out, (x.index,), lambda g: (g * (1.0 - out * out),))

    def exp(self, x: Var) -> Var:
        out = np.exp(x.value)
        return self._emit("exp", out, (x.index,), lambda g: (g * out,))

    def log(self, x: Var) -> Var:
        xv = x.value
        return self._emit("log", np.log(xv), (x.index,), lambda g: (g / xv,))

    def square(self, x: Var) -> Var:
        xv = x.value
        return self._emit("square", xv * xv, (x.index,), lambda g: (2.0 * xv * g,))

    def scale(self, x: Var, c: float) -> Var:
        return self._emit("scale", x.value * c, (x.index,), lambda g: (g * c,))

    def sum(self, x: Var) -> Var:
        xv = x.value
        out = np.asarray(xv.sum(), dtype=np.float64)
        return self._emit("sum", out, (x.index,), lambda g: (np.full_like(xv, g),))


def backward(loss: Var) -> list[np.ndarray | None]:
    """Gradients of a scalar loss with respect to every tape node.

    Nodes the loss does not depend on get None; read leaf gradients with
    `grad_of`, which substitutes zeros.
    """
    tape = loss.tape
    if loss.value.ndim != 0:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    grads: list[np.ndarray | None] = [None] * len(tape.values)
    grads[loss.index] = np.asarray(1.0, dtype=np.float64)
    for out, parents, back in reversed(tape.records):
        g = grads[out]
        if g is None:
            continue
        for parent, gp in zip(parents, back(g)):
            if grads[parent] is None:
                grads[parent] = gp.copy() if isinstance(gp, np.ndarray) else np.asarray(gp)
            else:
                grads[parent] = grads[parent] + gp
    return grads


def grad_of(grads: Sequence[np.ndarray | None], var: Var) -> np.ndarray:
    g = grads[var.index]
    if g is None:
        return np.zeros_like(var.value)
    return np.asarray(g, dtype=np.float64)


@dataclass
class AdamState:
    """Adam with bias correction; weight decay is coupled L2 on the gradient."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 8e-3
    weight_decay: float = 1e-4
    beta_m: float = 0.9
    beta_v: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def init(cls, params: Sequence[np.ndarray], learning_rate: float = 8e-3,
             weight_decay: float = 1e-4, beta_m: float = 0.9, beta_v: float = 0.999,
             epsilon: float = 1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            beta_m=beta_m,
            beta_v=beta_v,
            epsilon=epsilon,
        )

    def clone(self) -> "AdamState":
        return AdamState(
            m=[a.copy() for a in self.m],
            v=[a.copy() for a in self.v],
            step_count=self.step_count,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            beta_m=self.beta_m,
            beta_v=self.beta_v,
            epsilon=self.epsilon,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> list[np.ndarray]:
    """One Adam update; mutates `state` accumulators, returns new parameters."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step_count += 1
    t = state.step_count
    bc_m = 1.0 - state.beta_m ** t
    bc_v = 1.0 - state.beta_v ** t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {i}")
        g = g + state.weight_decay * p
        state.m[i] = state.beta_m * state.m[i] + (1.0 - state.beta_m) * g
        state.v[i] = state.beta_v * state.v[i] + (1.0 - state.beta_v) * (g * g)
        m_hat = state.m[i] / bc_m
        v_hat = state.v[i] / bc_v
        out.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
    return out


class FiniteDiffReport(NamedTuple):
    max_rel_error: float
    worst_param: int
    worst_coord: int
    passed: bool


def relative_error(a: float, b: float) -> float:
    """|a - b| scaled by max(1, |a|, |b|); absolute for near-zero gradients."""
    return abs(a - b) / max(1.0, abs(a), abs(b))


def finite_diff_check(build: Callable[[Tape, list[Var]], Var],
                      params: Sequence[np.ndarray], h: float = 1e-5,
                      tol: float = 1e-6) -> FiniteDiffReport:
    """Central differences per coordinate against the reverse sweep.

    `build` constructs the scalar loss from leaf Vars for `params` on a
    fresh tape; it is evaluated 2 * n_coordinates + 1 times.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = [np.asarray(p, dtype=np.float64) for p in params]

    def value_at(ps: Sequence[np.ndarray]) -> float:
        tape = Tape()
        return float(build(tape, [tape.leaf(p) for p in ps]).value)

    tape = Tape()
    leaves = [tape.leaf(p) for p in params]
    loss = build(tape, leaves)
    grads = backward(loss)
    analytic = [grad_of(grads, leaf) for leaf in leaves]

    worst = (0.0, 0, 0)
    for pi, p in enumerate(params):
        flat = p.ravel()
        for ci in range(flat.size):
            orig = flat[ci]
            bumped = [q.copy() for q in params]
            bumped[pi].ravel()[ci] = orig + h
            f_plus = value_at(bumped)
            bumped[pi].ravel()[ci] = orig - h
            f_minus = value_at(bumped)
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = relative_error(float(analytic[pi].ravel()[ci]), numeric)
            if err > worst[0]:
                worst = (err, pi, ci)
    return FiniteDiffReport(worst[0], worst[1], worst[2], worst[0] < tol)
