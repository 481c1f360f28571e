"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import GraphDef, backward, forward
from .params import ParamStore


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    worst: tuple[str, int, float, float] | None  # (name, flat index, analytic, numeric)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(
    graph: GraphDef,
    inputs: Sequence[np.ndarray],
    params: ParamStore,
    tolerance: float = 1e-4,
    sample_size: int = 120,
    step: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences.

    Checks all parameter entries when there are fewer than ``sample_size``,
    otherwise a seeded random subsample.  The graph output must be scalar.
    ``floor`` bounds the relative-error denominator from below: central
    differences carry ~eps*|f|/step of cancellation noise, so entries with
    gradients near zero cannot be compared in purely relative terms.
    """
    out, tape = forward(graph, inputs, params)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar output, got shape {out.shape}")
    params.zero_grads()
    backward(tape, 1.0)
    analytic = {name: params.grad(name).copy() for name in params.names()}
    params.zero_grads()

    entries = [
        (name, idx)
        for name in params.names()
        for idx in range(params.value(name).size)
    ]
    if len(entries) > sample_size:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(entries), size=sample_size, replace=False)
        entries = [entries[i] for i in chosen]

    max_rel = 0.0
    worst = None
    for name, idx in entries:
        flat = params.value(name).reshape(-1)
        saved = flat[idx]
        flat[idx] = saved + step
        f_plus = float(forward(graph, inputs, params)[0])
        flat[idx] = saved - step
        f_minus = float(forward(graph, inputs, params)[0])
        flat[idx] = saved
        numeric = (f_plus - f_minus) / (2.0 * step)
        a = float(analytic[name].reshape(-1)[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if rel >= max_rel:
            max_rel = rel
            worst = (name, idx, a, numeric)
    return GradCheckReport(max_rel_error=max_rel, checked=len(entries), worst=worst)
