"""Normalizing flow over R^2: six affine coupling layers, exact density.

Each layer passes one coordinate through unchanged and maps the other
through a conditioned affine transform:

    out = (c, a * exp(s(c)) + t(c)),   (a, c) = input

so the Jacobian is triangular with log-determinant s(c).  Because the
pass-through coordinate swaps position every layer, consecutive layers
transform alternating coordinates; the layer's parity records which one.
The latent is scored under a standard 2-D Gaussian, giving an exact log
density by the change-of-variables rule.

Training embeddings are standardized per component before the flow; the
standardization Jacobian is folded back into ``log_density`` so reported
densities stay in original embedding units.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
import numpy as np

from . import diffnet
from .diffnet import GraphDef, ParamStore, adam_step, he_uniform
from .errors import DegenerateData, NonFiniteIntermediate
from .seeds import derive_seed

N_LAYERS = 6
HIDDEN = 32           # width of the two hidden layers of each s/t net
S_CLAMP = 5.0         # |s| bound before exponentiation
LEAKY_ALPHA = 0.01
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CouplingLayer:
    """One swap-and-affine module; ``parity`` is the coordinate it transforms."""

    index: int

    @property
    def parity(self) -> int:
        return self.index % 2


@dataclass
class FlowModel:
    params: ParamStore
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    std: np.ndarray = field(default_factory=lambda: np.ones(2))
    layers: tuple[CouplingLayer, ...] = field(
        default_factory=lambda: tuple(CouplingLayer(i) for i in range(N_LAYERS))
    )

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(2)
        if len(self.layers) != N_LAYERS:
            raise ValueError(f"expected {N_LAYERS} coupling layers")
        if any(layer.parity != i % 2 for i, layer in enumerate(self.layers)):
            raise ValueError("coupling layer parities must alternate")

    @classmethod
    def identity(cls) -> "FlowModel":
        """All-zero parameters: the flow reduces to the identity map."""
        params = ParamStore()
        for name, shape in _param_shapes():
            params.add(name, np.zeros(shape))
        return cls(params=params)


def _param_shapes() -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    for i in range(N_LAYERS):
        for net in ("s", "t"):
            prefix = f"c{i}.{net}"
            shapes.extend(
                [
                    (f"{prefix}.w0", (HIDDEN, 1)),
                    (f"{prefix}.b0", (HIDDEN,)),
                    (f"{prefix}.w1", (HIDDEN, HIDDEN)),
                    (f"{prefix}.b1", (HIDDEN,)),
                    (f"{prefix}.w2", (1, HIDDEN)),
                    (f"{prefix}.b2", (1,)),
                ]
            )
    return shapes


def init_flow_params(seed: int) -> ParamStore:
    """He-uniform hidden layers; zero final layers so training starts at identity."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for name, shape in _param_shapes():
        if name.endswith(".w0"):
            params.add(name, he_uniform(rng, shape, 1))
        elif name.endswith(".w1"):
            params.add(name, he_uniform(rng, shape, HIDDEN))
        elif name.endswith(".b0") or name.endswith(".b1"):
            params.add(name, np.zeros(shape))
        else:  # w2 / b2
            params.add(name, np.zeros(shape))
    return params


def _mlp(params: ParamStore, prefix: str, x: np.ndarray) -> np.ndarray:
    """Evaluate one s/t net on (B, 1) inputs, matching the graph arithmetic."""
    h = x @ params.value(f"{prefix}.w0").T + params.value(f"{prefix}.b0")
    h = np.where(h > 0.0, h, LEAKY_ALPHA * h)
    h = h @ params.value(f"{prefix}.w1").T + params.value(f"{prefix}.b1")
    h = np.where(h > 0.0, h, LEAKY_ALPHA * h)
    return h @ params.value(f"{prefix}.w2").T + params.value(f"{prefix}.b2")


def _as_points(m) -> tuple[np.ndarray, bool]:
    arr = np.asarray(m, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected points of shape (2,) or (B, 2), got {arr.shape}")
    return arr, single


def flow_forward(model: FlowModel, m) -> tuple[np.ndarray, np.ndarray | float]:
    """Map embedding points to latent points; also return the log-determinant."""
    cur, single = _as_points(m)
    logdet = np.zeros(cur.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N_LAYERS):
            c = cur[:, 1:2]
            a = cur[:, 0:1]
            s = np.clip(_mlp(model.params, f"c{i}.s", c), -S_CLAMP, S_CLAMP)
            t = _mlp(model.params, f"c{i}.t", c)
            cur = np.concatenate([c, a * np.exp(s) + t], axis=1)
            if not np.all(np.isfinite(cur)):
                raise NonFiniteIntermediate(f"non-finite value after coupling layer {i}")
            logdet += s[:, 0]
    if single:
        return cur[0], float(logdet[0])
    return cur, logdet


def flow_inverse(model: FlowModel, z) -> np.ndarray:
    """Exact inverse: undo the layers in reverse order."""
    cur, single = _as_points(z)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in reversed(range(N_LAYERS)):
            c = cur[:, 0:1]
            a2 = cur[:, 1:2]
            s = np.clip(_mlp(model.params, f"c{i}.s", c), -S_CLAMP, S_CLAMP)
            t = _mlp(model.params, f"c{i}.t", c)
            cur = np.concatenate([(a2 - t) * np.exp(-s), c], axis=1)
            if not np.all(np.isfinite(cur)):
                raise NonFiniteIntermediate(f"non-finite value inverting coupling layer {i}")
    return cur[0] if single else cur


def log_density(model: FlowModel, m) -> np.ndarray | float:
    """Exact log p(m) in original embedding units.

    Standardizes, pushes through the flow, scores the latent under
    N(0, I) and corrects for both Jacobians (flow and standardization).
    """
    arr, single = _as_points(m)
    std_points = (arr - model.mean) / model.std
    z, logdet = flow_forward(model, std_points)
    log_pz = -LOG_2PI - 0.5 * np.sum(z * z, axis=1)
    out = log_pz + logdet - np.log(model.std).sum()
    return float(out[0]) if single else out


def nll_loss(model: FlowModel, batch) -> float:
    """Mean negative log density of a nonempty batch of embeddings."""
    arr, _ = _as_points(batch)
    if arr.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    return float(-np.mean(log_density(model, arr)))


def _graph_mlp(g: GraphDef, prefix: str, x: str) -> str:
    h = g.leaky_relu(g.dense(x, f"{prefix}.w0", f"{prefix}.b0"), alpha=LEAKY_ALPHA)
    h = g.leaky_relu(g.dense(h, f"{prefix}.w1", f"{prefix}.b1"), alpha=LEAKY_ALPHA)
    return g.dense(h, f"{prefix}.w2", f"{prefix}.b2")


@lru_cache(maxsize=4)
def flow_graph(output: str = "loss") -> GraphDef:
    """Differentiable flow computation on standardized points (B, 2).

    output="loss": scalar mean NLL (training objective).
    output="logdensity": per-point log density (B,), standardized units.
    """
    if output not in ("loss", "logdensity"):
        raise ValueError(f"unknown flow graph output {output!r}")
    names = [name for name, _ in _param_shapes()]
    g = GraphDef(inputs=["m"], params=names)
    cur = "m"
    ld = None
    for i in range(N_LAYERS):
        c = g.slice_(cur, axis=1, start=1, stop=2)
        a = g.slice_(cur, axis=1, start=0, stop=1)
        s = g.clip(_graph_mlp(g, f"c{i}.s", c), -S_CLAMP, S_CLAMP)
        t = _graph_mlp(g, f"c{i}.t", c)
        cur = g.concat([c, g.add_(g.mul(a, g.exp(s)), t)], axis=1)
        ld = s if ld is None else g.add_(ld, s)
    z_sq = g.sum_(g.mul(cur, cur), axis=1)
    log_pz = g.affine(z_sq, scale=-0.5, shift=-LOG_2PI)
    logdens = g.add_(log_pz, g.sum_(ld, axis=1), name="logdensity")
    if output == "logdensity":
        g.set_output(logdens)
    else:
        g.set_output(g.mean_(g.affine(logdens, scale=-1.0), name="loss"))
    return g


def train_flow(
    embeddings,
    steps: int,
    lr: float,
    batch_size: int,
    seed: int,
) -> tuple[FlowModel, list[float]]:
    """Minibatch NLL training; returns the model and per-step losses.

    Inputs are standardized with the training set's per-component mean
    and std (stored on the model).  Logged losses include the
    standardization correction, i.e. they are NLLs in original units.
    """
    arr, _ = _as_points(embeddings)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if arr.shape[0] < batch_size:
        raise ValueError(f"need at least batch_size={batch_size} embeddings, got {arr.shape[0]}")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    if np.any(std < 1e-12):
        raise DegenerateData(f"zero variance in embedding component: std={std}")
    standardized = (arr - mean) / std
    correction = float(np.log(std).sum())

    params = init_flow_params(derive_seed(seed, 0xF1))
    graph = flow_graph("loss")
    rng = np.random.default_rng(derive_seed(seed, 0xF2))
    n = arr.shape[0]
    losses: list[float] = []
    for _ in range(steps):
        idx = rng.choice(n, size=batch_size, replace=False)
        loss, tape = diffnet.forward(graph, [standardized[idx]], params)
        diffnet.backward(tape, 1.0)
        adam_step(params, lr)
        losses.append(float(loss) + correction)
    return FlowModel(params=params, mean=mean, std=std), losses


def sample(model: FlowModel, count: int, seed: int) -> np.ndarray:
    """Draw from the learned density: latent Gaussians through the inverse flow."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, 2))
    return flow_inverse(model, z) * model.std + model.mean


def save_flow(model: FlowModel, checkpoint_path: str | os.PathLike,
              sidecar_path: str | os.PathLike) -> None:
    """MQCP parameters plus a JSON sidecar with the standardization stats."""
    model.params.save(checkpoint_path)
    sidecar = {
        "standardize": {"mean": model.mean.tolist(), "std": model.std.tolist()},
        "layers": N_LAYERS,
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_flow(checkpoint_path: str | os.PathLike,
              sidecar_path: str | os.PathLike) -> FlowModel:
    params = ParamStore.load(checkpoint_path)
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("layers") != N_LAYERS:
        raise ValueError(f"sidecar declares {sidecar.get('layers')} layers, expected {N_LAYERS}")
    return FlowModel(
        params=params,
        mean=np.asarray(sidecar["standardize"]["mean"], dtype=np.float64),
        std=np.asarray(sidecar["standardize"]["std"], dtype=np.float64),
    )
