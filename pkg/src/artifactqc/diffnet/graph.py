"""Wengert-list computation graphs: build, evaluate, differentiate.

A `GraphDef` declares named inputs and parameters and a list of nodes in
execution order.  `forward` interprets the list and records every node
value on a `Tape`; `backward` walks the tape in reverse, accumulating
parameter gradients into the `ParamStore` and exposing input gradients
on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import ShapeMismatch, UnknownNode
from .ops import OPS
from .params import ParamStore


@dataclass(frozen=True)
class Node:
    name: str
    op: str
    inputs: tuple[str, ...] = ()
    attrs: dict[str, Any] = field(default_factory=dict)


class GraphDef:
    """A computation description over declared inputs and parameters."""

    def __init__(self, inputs: Sequence[str], params: Sequence[str] = ()) -> None:
        self.input_names = list(inputs)
        self.param_names = list(params)
        self.nodes: list[Node] = []
        self.output: str | None = None
        self._known = set(self.input_names) | set(self.param_names)
        if len(self._known) != len(self.input_names) + len(self.param_names):
            raise ValueError("duplicate input/parameter names")

    def add(self, op: str, *inputs: str, name: str | None = None, **attrs: Any) -> str:
        if op not in OPS:
            raise UnknownNode(f"unknown op {op!r}")
        for ref in inputs:
            if ref not in self._known:
                raise UnknownNode(f"node input {ref!r} is not a declared input, param or node")
        if name is None:
            name = f"n{len(self.nodes)}_{op}"
        if name in self._known:
            raise ValueError(f"node name {name!r} already used")
        node = Node(name=name, op=op, inputs=tuple(inputs), attrs=attrs)
        self.nodes.append(node)
        self._known.add(name)
        self.output = name
        return name

    # Thin builder helpers; each returns the new node's name.
    def dense(self, x: str, w: str, b: str, **kw) -> str:
        return self.add("dense", x, w, b, **kw)

    def conv2d(self, x: str, w: str, b: str, stride: int = 1, pad: int = 0, **kw) -> str:
        return self.add("conv2d", x, w, b, stride=stride, pad=pad, **kw)

    def relu(self, x: str, **kw) -> str:
        return self.add("relu", x, **kw)

    def leaky_relu(self, x: str, alpha: float = 0.01, **kw) -> str:
        return self.add("leaky_relu", x, alpha=alpha, **kw)

    def exp(self, x: str, **kw) -> str:
        return self.add("exp", x, **kw)

    def log(self, x: str, **kw) -> str:
        return self.add("log", x, **kw)

    def clip(self, x: str, lo: float, hi: float, **kw) -> str:
        return self.add("clip", x, lo=lo, hi=hi, **kw)

    def affine(self, x: str, scale: float = 1.0, shift: float = 0.0, **kw) -> str:
        return self.add("affine", x, scale=scale, shift=shift, **kw)

    def add_(self, a: str, b: str, **kw) -> str:
        return self.add("add", a, b, **kw)

    def sub(self, a: str, b: str, **kw) -> str:
        return self.add("sub", a, b, **kw)

    def mul(self, a: str, b: str, **kw) -> str:
        return self.add("mul", a, b, **kw)

    def concat(self, xs: Sequence[str], axis: int = 0, **kw) -> str:
        return self.add("concat", *xs, axis=axis, **kw)

    def slice_(self, x: str, axis: int, start: int | None, stop: int | None, **kw) -> str:
        return self.add("slice", x, axis=axis, start=start, stop=stop, **kw)

    def gap(self, x: str, **kw) -> str:
        return self.add("gap", x, **kw)

    def sum_(self, x: str, axis: int | None = None, **kw) -> str:
        return self.add("sum", x, axis=axis, **kw)

    def mean_(self, x: str, axis: int | None = None, **kw) -> str:
        return self.add("mean", x, axis=axis, **kw)

    def logsumexp(self, x: str, **kw) -> str:
        return self.add("logsumexp", x, **kw)

    def const(self, value, **kw) -> str:
        return self.add("const", value=np.asarray(value, dtype=np.float64), **kw)

    def set_output(self, name: str) -> None:
        if name not in self._known:
            raise UnknownNode(f"output {name!r} is not a declared node")
        self.output = name


@dataclass
class Tape:
    """Execution record of one forward pass; required by `backward`."""

    graph: GraphDef
    params: ParamStore
    values: dict[str, np.ndarray]
    aux: dict[str, object] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def value(self, name: str) -> np.ndarray:
        return self.values[name]

    def grad(self, name: str) -> np.ndarray:
        """Gradient of the output w.r.t. a graph input or node (after backward)."""
        if name not in self.grads:
            ref = self.values.get(name)
            if ref is None:
                raise UnknownNode(f"no value recorded for {name!r}")
            return np.zeros_like(ref)
        return self.grads[name]


def forward(
    graph: GraphDef, inputs: Sequence[np.ndarray], params: ParamStore
) -> tuple[np.ndarray, Tape]:
    """Evaluate the graph; return the output array and the execution tape."""
    if len(inputs) != len(graph.input_names):
        raise ShapeMismatch(
            f"graph declares {len(graph.input_names)} inputs, got {len(inputs)}"
        )
    if graph.output is None:
        raise UnknownNode("graph has no output node")
    values: dict[str, np.ndarray] = {
        name: np.asarray(arr, dtype=np.float64)
        for name, arr in zip(graph.input_names, inputs)
    }

    def resolve(ref: str) -> np.ndarray:
        if ref in values:
            return values[ref]
        if ref in params:
            return params.value(ref)
        raise UnknownNode(f"reference {ref!r} is neither a computed value nor a parameter")

    aux: dict[str, object] = {}
    for node in graph.nodes:
        fwd = OPS[node.op][0]
        args = [resolve(ref) for ref in node.inputs]
        result = fwd(node, *args)
        if isinstance(result, tuple):
            result, aux[node.name] = result
        values[node.name] = np.asarray(result, dtype=np.float64)
    return values[graph.output], Tape(graph=graph, params=params, values=values, aux=aux)


def backward(tape: Tape, out_grad: np.ndarray | float = 1.0) -> None:
    """Accumulate d(output)/d(param) into the ParamStore gradients.

    Gradients w.r.t. graph inputs (and any intermediate node) remain
    available through ``tape.grad``.
    """
    graph, params, values = tape.graph, tape.params, tape.values
    output = values[graph.output]
    g0 = np.asarray(out_grad, dtype=np.float64)
    if g0.shape != output.shape:
        if g0.size == 1 and output.size == 1:
            g0 = g0.reshape(output.shape)
        else:
            raise ShapeMismatch(f"out_grad shape {g0.shape} != output shape {output.shape}")
    grads: dict[str, np.ndarray] = {graph.output: g0}

    def resolve(ref: str) -> np.ndarray:
        if ref in values:
            return values[ref]
        return params.value(ref)

    for node in reversed(graph.nodes):
        g = grads.pop(node.name, None)
        if g is None:
            continue
        bwd = OPS[node.op][1]
        if bwd is None:
            continue
        args = [resolve(ref) for ref in node.inputs]
        input_grads = bwd(node, g, values[node.name], tape.aux.get(node.name), *args)
        for ref, gi in zip(node.inputs, input_grads):
            if gi is None:
                continue
            if ref in params and ref not in values:
                params.accumulate_grad(ref, gi)
            elif ref in grads:
                grads[ref] = grads[ref] + gi
            else:
                grads[ref] = gi
    tape.grads = grads
