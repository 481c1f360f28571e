"""Built-in numerical self-checks, runnable from the CLI.

Each check compares an implementation path against closed forms or an
independent numerical estimate (finite differences); the suite passes
only if every check does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diffnet import GraphDef, ParamStore, grad_check
from .encoder import EncoderConfig, info_nce_loss, init_encoder_params, loss_graph
from .flow import FlowModel, flow_forward, flow_graph, flow_inverse, init_flow_params, log_density
from .seeds import derive_seed


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name: str, error: float, tolerance: float) -> CheckResult:
    return CheckResult(
        name=name,
        passed=error < tolerance,
        detail=f"error {error:.3e}, tolerance {tolerance:.0e}",
    )


def numerical_log_abs_det(fn: Callable[[np.ndarray], np.ndarray], point: np.ndarray,
                          h: float = 1e-6) -> float:
    """log |det J| of a 2-D map by central finite differences."""
    jac = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        jac[:, k] = (fn(point + e) - fn(point - e)) / (2.0 * h)
    return float(np.log(abs(np.linalg.det(jac))))


def _mixed_ops_check() -> CheckResult:
    rng = np.random.default_rng(7)
    params = ParamStore()
    params.add("w", rng.standard_normal((3, 1, 3, 3)) * 0.4)
    params.add("b", rng.standard_normal(3) * 0.1)
    params.add("dw", rng.standard_normal((2, 3)) * 0.4)
    params.add("db", np.zeros(2))
    g = GraphDef(inputs=["x"], params=["w", "b", "dw", "db"])
    h = g.relu(g.conv2d("x", "w", "b", stride=2, pad=1))
    h = g.dense(g.gap(h), "dw", "db")
    g.set_output(g.sum_(g.mul(h, h)))
    x = rng.standard_normal((2, 1, 8, 8))
    report = grad_check(g, [x], params, seed=3)
    return _check("gradcheck: conv/dense/relu graph", report.max_rel_error, 1e-4)


def _encoder_loss_check() -> CheckResult:
    config = EncoderConfig(
        input_size=(16, 16), dense_blocks=1, layers_per_block=2, growth_rate=4, negatives=2
    )
    params = init_encoder_params(config, seed=7)
    rng = np.random.default_rng(9)
    x = rng.uniform(0.0, 1.0, (4, 1, 16, 16))
    report = grad_check(loss_graph(config), [x], params, seed=4)
    return _check("gradcheck: contrastive training graph", report.max_rel_error, 1e-4)


def _flow_loss_check() -> CheckResult:
    params = init_flow_params(seed=11)
    rng = np.random.default_rng(13)
    m = rng.standard_normal((16, 2))
    report = grad_check(flow_graph("loss"), [m], params, seed=5)
    return _check("gradcheck: flow training graph", report.max_rel_error, 1e-5)


def random_flow_model(seed: int, final_scale: float = 0.02) -> FlowModel:
    """A flow with He-init hidden layers and perturbed output layers.

    This is the regime trained models live in: conditioning nets respond
    with |s| of order one over the standardized data range, well inside
    the clamp, so float64 round trips stay sharp.
    """
    params = init_flow_params(seed=derive_seed(seed, 0x51))
    rng = np.random.default_rng(derive_seed(seed, 0x52))
    for name in params.names():
        if name.endswith((".w2", ".b2")):
            params.value(name)[:] = final_scale * rng.standard_normal(
                params.value(name).shape
            )
    return FlowModel(params=params)


def _flow_roundtrip_check() -> CheckResult:
    worst = 0.0
    for draw in range(3):
        model = random_flow_model(100 + draw)
        rng = np.random.default_rng(200 + draw)
        points = rng.uniform(-5.0, 5.0, (500, 2))
        z, _ = flow_forward(model, points)
        back = flow_inverse(model, z)
        worst = max(worst, float(np.max(np.abs(back - points))))
    return _check("flow round trip (forward then inverse)", worst, 1e-9)


def _flow_logdet_check() -> CheckResult:
    model = random_flow_model(21)
    rng = np.random.default_rng(22)
    points = rng.standard_normal((25, 2)) * 2.0
    _, analytic = flow_forward(model, points)
    worst = 0.0
    for i, point in enumerate(points):
        numeric = numerical_log_abs_det(lambda p: flow_forward(model, p)[0], point)
        worst = max(worst, abs(float(analytic[i]) - numeric))
    return _check("flow log-determinant vs numerical Jacobian", worst, 1e-5)


def _loss_closed_forms() -> list[CheckResult]:
    zero = np.zeros(2)
    e1 = np.array([1.0, 0.0])
    ln2_err = abs(info_nce_loss(e1, zero, [zero, zero, zero]) - math.log(2.0))
    case2 = info_nce_loss(e1, e1, [zero])
    case2_err = abs(case2 - math.log(1.0 + math.exp(-1.0)))
    return [
        _check("contrastive loss, all-zero dots = ln 2", ln2_err, 1e-12),
        _check("contrastive loss, unit positive dot = ln(1+e^-1)", case2_err, 1e-12),
    ]


def _identity_density_checks() -> list[CheckResult]:
    model = FlowModel.identity()
    at0 = abs(log_density(model, np.zeros(2)) + math.log(2.0 * math.pi))
    at1 = abs(log_density(model, np.array([1.0, 0.0])) + math.log(2.0 * math.pi) + 0.5)
    return [
        _check("identity flow: log density at (0,0) = -log(2pi)", at0, 1e-12),
        _check("identity flow: log density at (1,0) = -log(2pi)-1/2", at1, 1e-12),
    ]


def run_selftest(verbose: bool = True) -> bool:
    checks: list[CheckResult] = [
        _mixed_ops_check(),
        _encoder_loss_check(),
        _flow_loss_check(),
        _flow_roundtrip_check(),
        _flow_logdet_check(),
    ]
    checks.extend(_loss_closed_forms())
    checks.extend(_identity_density_checks())
    all_passed = True
    for check in checks:
        all_passed &= check.passed
        if verbose:
            status = "PASS" if check.passed else "FAIL"
            print(f"[{status}] {check.name}: {check.detail}")
    if verbose:
        print("self-test:", "all checks passed" if all_passed else "FAILURES present")
    return all_passed
