"""Seeded MR-style artifact simulators.

Four corruption families cover the usual acquisition failure modes:
additive Gaussian noise, k-space motion ghosting, smooth multiplicative
bias fields, and wrap-around aliasing.  Every operation is a pure,
deterministic function of (image, severity, seed), so simulated negative
examples and labelled evaluation sets replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .seeds import derive_seed
from .volio import SliceImage, Volume, extract_slice

LEAF_KINDS = ("noise", "motion", "bias", "wraparound")
KINDS = LEAF_KINDS + ("compose",)

NOISE_SIGMA_SCALE = 0.25         # sigma = scale * severity * robust intensity range
MOTION_ROW_FRACTION = 0.30       # fraction of phase-encode rows corrupted at severity 1
MOTION_CENTER_FRACTION = 0.08    # central k-space band that is never touched
MOTION_MAX_SHIFT = 5.0           # pixels of in-plane translation at severity 1
WRAP_FOLD_FRACTION = 0.25        # fraction of rows folded onto the far edge at severity 1


@dataclass(frozen=True)
class CorruptionSpec:
    """A corruption recipe: a leaf operation or a left-to-right composition."""

    kind: str
    severity: float = 0.5
    seed: int = 0
    children: tuple["CorruptionSpec", ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0.0 <= self.severity <= 1.0:
            raise ValueError(f"severity must be in [0, 1], got {self.severity}")
        if self.kind == "compose" and len(self.children) < 1:
            raise ValueError("compose requires at least one child")
        if self.kind != "compose" and self.children:
            raise ValueError(f"leaf kind {self.kind!r} cannot have children")
        object.__setattr__(self, "children", tuple(self.children))

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "severity": self.severity,
            "seed": int(self.seed),
            "children": [c.to_json_dict() for c in self.children],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CorruptionSpec":
        return cls(
            kind=obj["kind"],
            severity=float(obj["severity"]),
            seed=int(obj.get("seed", 0)),
            children=tuple(cls.from_json_dict(c) for c in obj.get("children", ())),
        )


def _check_severity(severity: float) -> None:
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must be in [0, 1], got {severity}")


def add_noise(image: SliceImage, severity: float, seed: int) -> SliceImage:
    """Add i.i.d. Gaussian noise scaled to the image's robust intensity range.

    sigma = 0.25 * severity * (p99 - p1); the output is clamped to the
    input range extended by 3 sigma.  A flat image has zero range and is
    returned unchanged.
    """
    _check_severity(severity)
    px = image.pixels.astype(np.float64)
    p1, p99 = np.percentile(px, [1.0, 99.0])
    sigma = NOISE_SIGMA_SCALE * severity * (p99 - p1)
    if sigma <= 0.0:
        return SliceImage(px.astype(np.float32), image.orientation, image.source_index)
    rng = np.random.default_rng(seed)
    out = px + rng.normal(0.0, sigma, px.shape)
    out = np.clip(out, px.min() - 3.0 * sigma, px.max() + 3.0 * sigma)
    return SliceImage(out.astype(np.float32), image.orientation, image.source_index)


def add_motion(image: SliceImage, severity: float, seed: int) -> SliceImage:
    """Ghosting from per-row k-space phase errors.

    round(severity * 30%) of the phase-encode rows (axis 0 of the 2-D
    spectrum, low-frequency centre band excluded) each get a random phase
    ramp equivalent to an in-plane shift of up to 5 * severity pixels.
    The real part of the inverse transform is returned: the untouched DC
    row then keeps the mean pixel value exactly.
    """
    _check_severity(severity)
    px = image.pixels.astype(np.float64)
    h, w = px.shape
    n_rows = int(np.floor(severity * MOTION_ROW_FRACTION * h + 0.5))
    if n_rows == 0:
        return SliceImage(px.astype(np.float32), image.orientation, image.source_index)

    spectrum = np.fft.fftshift(np.fft.fft2(px), axes=0)
    center = h // 2
    half_band = max(1, int(np.floor(MOTION_CENTER_FRACTION * h + 0.5))) // 2
    protected = set(range(center - half_band, center + half_band + 1))
    eligible = np.array([r for r in range(h) if r not in protected], dtype=np.int64)
    n_rows = min(n_rows, eligible.size)

    rng = np.random.default_rng(seed)
    rows = rng.choice(eligible, size=n_rows, replace=False)
    shifts = rng.uniform(-MOTION_MAX_SHIFT * severity, MOTION_MAX_SHIFT * severity, n_rows)
    freq = np.fft.fftfreq(w)
    for row, shift in zip(rows, shifts):
        spectrum[row, :] *= np.exp(-2j * np.pi * freq * shift)

    out = np.fft.ifft2(np.fft.ifftshift(spectrum, axes=0)).real
    return SliceImage(out.astype(np.float32), image.orientation, image.source_index)


def add_bias_field(image: SliceImage, severity: float, seed: int) -> SliceImage:
    """Multiply by a smooth field 1 + severity * g(x, y).

    g is a seeded random quadratic polynomial over [-1, 1]^2 coordinates,
    affinely rescaled to span exactly [-0.5, 0.5] over the image grid.
    """
    _check_severity(severity)
    px = image.pixels.astype(np.float64)
    if severity == 0.0:
        return SliceImage(px.astype(np.float32), image.orientation, image.source_index)
    h, w = px.shape
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(6)
    v = np.linspace(-1.0, 1.0, h)[:, None]
    u = np.linspace(-1.0, 1.0, w)[None, :]
    g = c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v
    g_min, g_max = g.min(), g.max()
    if g_max - g_min < 1e-12:
        g = np.zeros_like(g)
    else:
        g = (g - 0.5 * (g_max + g_min)) / (g_max - g_min)
    out = px * (1.0 + severity * g)
    return SliceImage(out.astype(np.float32), image.orientation, image.source_index)


def add_wraparound(image: SliceImage, severity: float) -> SliceImage:
    """Fold the outer k = round(severity * height / 4) rows onto the opposite edge.

    Models aliasing along the phase-encode direction: the top rows alias
    onto the bottom rows and vice versa, each contribution scaled by 0.5.
    """
    _check_severity(severity)
    px = image.pixels.astype(np.float64)
    h = px.shape[0]
    k = int(np.floor(severity * WRAP_FOLD_FRACTION * h + 0.5))
    if k == 0:
        return SliceImage(px.astype(np.float32), image.orientation, image.source_index)
    out = px.copy()
    out[h - k:, :] += 0.5 * px[:k, :]
    out[:k, :] += 0.5 * px[h - k:, :]
    return SliceImage(out.astype(np.float32), image.orientation, image.source_index)


def corrupt(image: SliceImage, spec: CorruptionSpec) -> SliceImage:
    """Apply a corruption recipe; compositions run left to right."""
    if spec.kind == "noise":
        return add_noise(image, spec.severity, spec.seed)
    if spec.kind == "motion":
        return add_motion(image, spec.severity, spec.seed)
    if spec.kind == "bias":
        return add_bias_field(image, spec.severity, spec.seed)
    if spec.kind == "wraparound":
        return add_wraparound(image, spec.severity)
    out = image
    for child in spec.children:
        out = corrupt(out, child)
    return out


def reseed(spec: CorruptionSpec, salt: int) -> CorruptionSpec:
    """Derive a spec with fresh per-salt seeds throughout the tree."""
    return replace(
        spec,
        seed=derive_seed(spec.seed, salt),
        children=tuple(reseed(c, salt) for c in spec.children),
    )


def corrupt_volume(volume: Volume, spec: CorruptionSpec) -> Volume:
    """Corrupt every axial slice of a volume, reseeding per slice index.

    Slice-wise seeds keep e.g. noise realizations independent across
    slices while the whole operation stays a deterministic function of
    (volume, spec).
    """
    nx, ny, nz = volume.dims
    out = np.empty((nx, ny, nz), dtype=np.float32)
    for z in range(nz):
        img = extract_slice(volume, "axial", z)
        out[:, :, z] = corrupt(img, reseed(spec, z)).pixels
    return Volume(voxels=out, spacing=volume.spacing)


def effective_severity(spec: CorruptionSpec) -> float:
    """Strongest leaf severity in the recipe; used for labelling datasets."""
    if spec.kind == "compose":
        return max(effective_severity(c) for c in spec.children)
    return spec.severity
