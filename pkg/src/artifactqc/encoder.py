"""Artifact encoder: a small dense-connectivity conv net into R^2.

The network maps a prepared slice to a 2-vector. Training is contrastive:
a query slice is pulled toward a positive (another orientation of the
same volume, hence the same artifact level) and pushed from negatives
(slices of other volumes, or simulated corruptions of the query).  The
loss works on raw dot products, stabilized through log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import diffnet
from .artsim import CorruptionSpec, corrupt
from .diffnet import GraphDef, ParamStore, adam_step, he_uniform
from .errors import InsufficientVolumes, ShapeMismatch
from .seeds import derive_seed
from .volio import SliceImage, Volume, extract_slice, prepare_slice

TRAIN_SEVERITY_RANGE = (0.2, 0.8)   # severity window for simulated negatives
TRAIN_NEGATIVE_KINDS = ("noise", "motion")


@dataclass(frozen=True)
class EncoderConfig:
    input_size: tuple[int, int] = (64, 64)
    dense_blocks: int = 3
    layers_per_block: int = 4
    growth_rate: int = 8
    embedding_dim: int = 2
    negatives: int = 8
    simulated_negative_fraction: float = 0.5
    grad_accum_queries: int = 4

    def __post_init__(self) -> None:
        if self.embedding_dim != 2:
            raise ValueError("the embedding dimension is fixed at 2")
        if self.negatives < 1:
            raise ValueError("need at least one negative per batch")
        if not 0.0 <= self.simulated_negative_fraction <= 1.0:
            raise ValueError("simulated_negative_fraction must be in [0, 1]")
        if self.dense_blocks < 1 or self.layers_per_block < 1 or self.growth_rate < 1:
            raise ValueError("architecture sizes must be positive")
        object.__setattr__(self, "input_size", tuple(self.input_size))


@dataclass(frozen=True)
class NegativeProvenance:
    source: str                       # "other-volume" | "simulated"
    volume_index: int | None = None
    spec: CorruptionSpec | None = None


@dataclass
class ContrastiveBatch:
    query: SliceImage
    positive: SliceImage
    negatives: list[SliceImage]
    provenance: list[NegativeProvenance]
    query_volume: int


def _conv_layers(config: EncoderConfig):
    """Yield (name, kind, in_ch, out_ch, stride) in declaration order."""
    stem_ch = 2 * config.growth_rate
    yield "stem", "conv", 1, stem_ch, 2
    ch = stem_ch
    for bi in range(config.dense_blocks):
        for li in range(config.layers_per_block):
            yield f"b{bi}.l{li}", "conv", ch, config.growth_rate, 1
            ch += config.growth_rate
        if bi < config.dense_blocks - 1:
            yield f"t{bi}", "conv", ch, max(ch // 2, 1), 2
            ch = max(ch // 2, 1)
    yield "head", "dense", ch, config.embedding_dim, 0


def param_names(config: EncoderConfig) -> list[str]:
    names = []
    for name, _, _, _, _ in _conv_layers(config):
        names.append(f"{name}.w")
        names.append(f"{name}.b")
    return names


def init_encoder_params(config: EncoderConfig, seed: int) -> ParamStore:
    """He-uniform weights for every layer feeding a relu, zero biases."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for name, kind, in_ch, out_ch, _ in _conv_layers(config):
        if kind == "conv":
            fan_in = in_ch * 9
            params.add(f"{name}.w", he_uniform(rng, (out_ch, in_ch, 3, 3), fan_in))
        else:
            params.add(f"{name}.w", he_uniform(rng, (out_ch, in_ch), in_ch))
        params.add(f"{name}.b", np.zeros(out_ch))
    return params


def _build_trunk(g: GraphDef, config: EncoderConfig) -> str:
    """Shared conv trunk from input "x" to the 2-D embedding node."""
    h = g.relu(g.conv2d("x", "stem.w", "stem.b", stride=2, pad=1))
    for bi in range(config.dense_blocks):
        for li in range(config.layers_per_block):
            name = f"b{bi}.l{li}"
            y = g.relu(g.conv2d(h, f"{name}.w", f"{name}.b", stride=1, pad=1))
            h = g.concat([h, y], axis=1)
        if bi < config.dense_blocks - 1:
            h = g.relu(g.conv2d(h, f"t{bi}.w", f"t{bi}.b", stride=2, pad=1))
    pooled = g.gap(h)
    return g.dense(pooled, "head.w", "head.b", name="emb")


@lru_cache(maxsize=16)
def embedding_graph(config: EncoderConfig) -> GraphDef:
    """Batch of images (B,1,H,W) -> embeddings (B,2)."""
    g = GraphDef(inputs=["x"], params=param_names(config))
    g.set_output(_build_trunk(g, config))
    return g


@lru_cache(maxsize=16)
def loss_graph(config: EncoderConfig) -> GraphDef:
    """Stacked (query, positive, negatives...) batch -> scalar contrastive loss."""
    g = GraphDef(inputs=["x"], params=param_names(config))
    emb = _build_trunk(g, config)
    m_query = g.slice_(emb, axis=0, start=0, stop=1)        # (1, 2)
    others = g.slice_(emb, axis=0, start=1, stop=None)      # (1+N, 2)
    dots = g.sum_(g.mul(others, m_query), axis=1)           # (1+N,)
    d_plus = g.slice_(dots, axis=0, start=0, stop=1)        # (1,)
    d_neg = g.slice_(dots, axis=0, start=1, stop=None)      # (N,)
    shifted = g.affine(d_neg, scale=1.0, shift=-math.log(config.negatives))
    logits = g.concat([d_plus, shifted], axis=0)
    g.set_output(g.sub(g.logsumexp(logits), g.sum_(d_plus), name="loss"))
    return g


def encode(image: SliceImage, params: ParamStore, config: EncoderConfig) -> np.ndarray:
    """Deterministic forward pass of one prepared slice to its 2-D embedding."""
    if image.pixels.shape != config.input_size:
        raise ShapeMismatch(
            f"image {image.pixels.shape} does not match input size {config.input_size}"
        )
    x = image.pixels.astype(np.float64)[None, None]
    emb, _ = diffnet.forward(embedding_graph(config), [x], params)
    return emb[0]


def encode_batch(
    images: Sequence[SliceImage], params: ParamStore, config: EncoderConfig
) -> np.ndarray:
    """Embeddings for many slices in one forward pass; rows match input order."""
    for image in images:
        if image.pixels.shape != config.input_size:
            raise ShapeMismatch(
                f"image {image.pixels.shape} does not match input size {config.input_size}"
            )
    x = np.stack([img.pixels for img in images]).astype(np.float64)[:, None]
    emb, _ = diffnet.forward(embedding_graph(config), [x], params)
    return emb


def info_nce_loss(
    m_star: np.ndarray, m_plus: np.ndarray, m_neg: Sequence[np.ndarray]
) -> float:
    """Contrastive loss over raw dot products.

    -log[ exp(d+) / (exp(d+) + (1/N) sum_i exp(d-_i)) ], evaluated through
    log-sum-exp so |dots| up to several hundred stay finite.
    """
    if len(m_neg) == 0:
        raise ValueError("need at least one negative embedding")
    m_star = np.asarray(m_star, dtype=np.float64)
    d_plus = float(m_star @ np.asarray(m_plus, dtype=np.float64))
    d_neg = np.asarray([m_star @ np.asarray(m, dtype=np.float64) for m in m_neg])
    logits = np.concatenate([[d_plus], d_neg - math.log(len(m_neg))])
    peak = logits.max()
    lse = peak + math.log(np.exp(logits - peak).sum())
    return lse - d_plus


def _random_slice(rng: np.random.Generator, volume: Volume, orientation: str) -> SliceImage:
    axis = {"axial": 2, "coronal": 1, "sagittal": 0}[orientation]
    index = int(rng.integers(volume.dims[axis]))
    return extract_slice(volume, orientation, index)


def build_batch(
    volumes: Sequence[Volume], config: EncoderConfig, seed: int
) -> ContrastiveBatch:
    """Assemble one query / positive / negatives group, deterministically.

    The query is a random axial slice; the positive a random coronal or
    sagittal slice of the same volume.  round(N * fraction) negatives are
    noise/motion corruptions of the query at severity in [0.2, 0.8]; the
    rest are random slices of other volumes.
    """
    if len(volumes) < 2:
        raise InsufficientVolumes("contrastive batches need at least two volumes")
    rng = np.random.default_rng(seed)
    size = config.input_size

    qv = int(rng.integers(len(volumes)))
    query = prepare_slice(_random_slice(rng, volumes[qv], "axial"), size)
    pos_orientation = ("coronal", "sagittal")[int(rng.integers(2))]
    positive = prepare_slice(_random_slice(rng, volumes[qv], pos_orientation), size)

    n_sim = int(math.floor(config.negatives * config.simulated_negative_fraction + 0.5))
    negatives: list[SliceImage] = []
    provenance: list[NegativeProvenance] = []
    for _ in range(n_sim):
        kind = TRAIN_NEGATIVE_KINDS[int(rng.integers(len(TRAIN_NEGATIVE_KINDS)))]
        severity = float(rng.uniform(*TRAIN_SEVERITY_RANGE))
        spec = CorruptionSpec(kind=kind, severity=severity, seed=int(rng.integers(2 ** 63)))
        negatives.append(corrupt(query, spec))
        provenance.append(NegativeProvenance(source="simulated", spec=spec))
    for _ in range(config.negatives - n_sim):
        ov = int(rng.integers(len(volumes) - 1))
        if ov >= qv:
            ov += 1
        orientation = ("axial", "coronal", "sagittal")[int(rng.integers(3))]
        negatives.append(prepare_slice(_random_slice(rng, volumes[ov], orientation), size))
        provenance.append(NegativeProvenance(source="other-volume", volume_index=ov))
    return ContrastiveBatch(
        query=query,
        positive=positive,
        negatives=negatives,
        provenance=provenance,
        query_volume=qv,
    )


def batch_array(batch: ContrastiveBatch) -> np.ndarray:
    """Stack a batch into the (2+N, 1, H, W) float64 network input."""
    images = [batch.query.pixels, batch.positive.pixels]
    images.extend(n.pixels for n in batch.negatives)
    return np.stack(images).astype(np.float64)[:, None]


def train_encoder(
    volumes: Sequence[Volume],
    config: EncoderConfig,
    steps: int,
    lr: float,
    seed: int,
) -> tuple[ParamStore, list[float]]:
    """Contrastive training loop; returns final parameters and per-step losses.

    Each optimization step accumulates gradients over
    ``config.grad_accum_queries`` independent batches before one Adam
    update.  Fully deterministic given the seed.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if len(volumes) < 2:
        raise InsufficientVolumes("training needs at least two volumes")
    params = init_encoder_params(config, derive_seed(seed, 0xE0))
    graph = loss_graph(config)
    q = config.grad_accum_queries
    losses: list[float] = []
    for step in range(steps):
        total = 0.0
        for j in range(q):
            batch = build_batch(volumes, config, derive_seed(seed, 1 + step * q + j))
            loss, tape = diffnet.forward(graph, [batch_array(batch)], params)
            diffnet.backward(tape, 1.0 / q)
            total += float(loss)
        adam_step(params, lr)
        losses.append(total / q)
    return params, losses
