"""Synthetic phantom volumes and labelled datasets.

Phantoms are nested ellipsoids — an outer shell, a filled interior, dark
"ventricles" and a handful of random blobs — with per-volume randomized
intensities, sizes and a smooth gain gradient, standing in for the
anatomy and contrast diversity of a multi-cohort corpus.  A labelled
dataset corrupts a chosen fraction of the phantoms with random recipes
and records everything in a manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .artsim import (
    LEAF_KINDS,
    CorruptionSpec,
    corrupt_volume,
    effective_severity,
)
from .seeds import derive_seed
from .volio import Volume, write_volume

HIGH_SEVERITY = 0.75  # effective severity at or above this labels a volume "high"


def generate_phantom(
    shape: tuple[int, int, int] = (64, 64, 32),
    spacing: tuple[float, float, float] = (0.8, 0.8, 0.8),
    seed: int = 0,
) -> Volume:
    """One randomized phantom volume; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    nx, ny, nz = shape
    x = np.linspace(-1.0, 1.0, nx)[:, None, None]
    y = np.linspace(-1.0, 1.0, ny)[None, :, None]
    z = np.linspace(-1.0, 1.0, nz)[None, None, :]

    def ellipsoid(center, axes):
        return (
            ((x - center[0]) / axes[0]) ** 2
            + ((y - center[1]) / axes[1]) ** 2
            + ((z - center[2]) / axes[2]) ** 2
        )

    head_center = rng.uniform(-0.03, 0.03, 3)
    head_axes = np.array(
        [rng.uniform(0.88, 0.96), rng.uniform(0.88, 0.96), rng.uniform(0.92, 0.99)]
    )
    r2 = ellipsoid(head_center, head_axes)
    inside = r2 <= 1.0

    base = rng.uniform(0.5, 0.72)
    vol = np.where(inside, base, 0.0)

    shell = inside & (r2 > 0.80)
    vol[shell] = rng.uniform(0.88, 1.02)

    for side in (-1.0, 1.0):
        center = head_center + [
            side * rng.uniform(0.12, 0.22),
            rng.uniform(-0.08, 0.08),
            rng.uniform(-0.08, 0.08),
        ]
        axes = rng.uniform(0.08, 0.18, 3)
        vent = ellipsoid(center, axes) <= 1.0
        vol[vent & inside] = base * rng.uniform(0.25, 0.45)

    for _ in range(int(rng.integers(2, 5))):
        center = head_center + rng.uniform(-0.4, 0.4, 3)
        axes = rng.uniform(0.06, 0.18, 3)
        blob = ellipsoid(center, axes) <= 1.0
        vol[blob & inside] = base * rng.uniform(0.5, 1.25)

    grad_dir = rng.uniform(-1.0, 1.0, 3)
    gain = 1.0 + 0.06 * (grad_dir[0] * x + grad_dir[1] * y + grad_dir[2] * z)
    vol = vol * gain * rng.uniform(0.85, 1.15)
    vol = vol + rng.normal(0.0, 0.006, vol.shape)  # mild acquisition floor
    vol = np.clip(vol, 0.0, None)
    return Volume(voxels=vol.astype(np.float32), spacing=spacing)


def random_corruption_spec(rng: np.random.Generator) -> CorruptionSpec:
    """A corruption recipe at severity >= 0.5: one leaf kind or a two-leaf mix."""
    choice = int(rng.integers(len(LEAF_KINDS) + 1))
    if choice < len(LEAF_KINDS):
        return CorruptionSpec(
            kind=LEAF_KINDS[choice],
            severity=float(rng.uniform(0.5, 1.0)),
            seed=int(rng.integers(2 ** 63)),
        )
    first, second = rng.choice(len(LEAF_KINDS), size=2, replace=False)
    children = tuple(
        CorruptionSpec(
            kind=LEAF_KINDS[int(k)],
            severity=float(rng.uniform(0.5, 1.0)),
            seed=int(rng.integers(2 ** 63)),
        )
        for k in (first, second)
    )
    return CorruptionSpec(
        kind="compose",
        severity=max(c.severity for c in children),
        seed=int(rng.integers(2 ** 63)),
        children=children,
    )


@dataclass(frozen=True)
class DatasetEntry:
    volume_id: str
    label: str
    spec: CorruptionSpec | None


def generate_dataset(
    out_dir: str | os.PathLike,
    count: int,
    corrupt_fraction: float,
    seed: int,
    shape: tuple[int, int, int] = (64, 64, 32),
) -> list[DatasetEntry]:
    """Write ``count`` phantom volumes plus manifest.json; corrupt a fraction.

    Corrupted volumes get label medium or high by their strongest leaf
    severity; clean volumes are low.
    """
    if not 0.0 <= corrupt_fraction <= 1.0:
        raise ValueError(f"corrupt_fraction must be in [0, 1], got {corrupt_fraction}")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(derive_seed(seed, 0xD5))
    n_corrupt = int(np.floor(count * corrupt_fraction + 0.5))
    corrupted = set(map(int, rng.choice(count, size=n_corrupt, replace=False))) if n_corrupt else set()

    entries: list[DatasetEntry] = []
    for i in range(count):
        volume_id = f"vol_{i:04d}"
        volume = generate_phantom(shape=shape, seed=derive_seed(seed, i))
        spec = None
        label = "low"
        if i in corrupted:
            spec = random_corruption_spec(rng)
            volume = corrupt_volume(volume, spec)
            label = "high" if effective_severity(spec) >= HIGH_SEVERITY else "medium"
        write_volume(volume, os.path.join(out_dir, f"{volume_id}.mqcv"))
        entries.append(DatasetEntry(volume_id=volume_id, label=label, spec=spec))

    manifest = {
        "volumes": [
            {
                "id": e.volume_id,
                "label": e.label,
                "spec": e.spec.to_json_dict() if e.spec is not None else None,
            }
            for e in entries
        ]
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return entries


def load_manifest(data_dir: str | os.PathLike) -> dict[str, str]:
    """volume_id -> label mapping from a dataset directory, {} if absent."""
    path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return {v["id"]: v["label"] for v in manifest["volumes"]}
