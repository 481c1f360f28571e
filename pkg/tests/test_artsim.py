import json

import numpy as np
import pytest

from artifactqc.artsim import (
    CorruptionSpec,
    add_bias_field,
    add_motion,
    add_noise,
    add_wraparound,
    corrupt,
    corrupt_volume,
    effective_severity,
    reseed,
)
from artifactqc.volio import SliceImage, Volume

from conftest import random_image, random_volume


def _gradient_image(h=256, w=256):
    px = np.linspace(0.0, 1.0, h)[:, None] * np.ones((1, w))
    return SliceImage(pixels=px.astype(np.float32))


class TestNoise:
    def test_severity_zero_is_identity(self, rng):
        img = random_image(rng)
        out = add_noise(img, 0.0, seed=3)
        assert np.array_equal(out.pixels, img.pixels)

    def test_deterministic(self, rng):
        img = random_image(rng)
        a = add_noise(img, 0.7, seed=42)
        b = add_noise(img, 0.7, seed=42)
        assert np.array_equal(a.pixels, b.pixels)
        c = add_noise(img, 0.7, seed=43)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_flat_image_has_zero_sigma(self):
        img = SliceImage(pixels=np.full((256, 256), 3.0, dtype=np.float32))
        out = add_noise(img, 0.5, seed=1)
        assert np.array_equal(out.pixels, img.pixels)

    def test_empirical_std_matches_sigma(self):
        # sample-statistics oracle on a non-degenerate 256x256 image
        img = _gradient_image()
        p1, p99 = np.percentile(img.pixels, [1, 99])
        sigma = 0.25 * 0.5 * (p99 - p1)
        out = add_noise(img, 0.5, seed=7)
        measured = float(np.std(out.pixels.astype(np.float64) - img.pixels))
        assert measured == pytest.approx(sigma, rel=0.05)

    def test_clamped_to_extended_range(self):
        img = _gradient_image(64, 64)
        p1, p99 = np.percentile(img.pixels, [1, 99])
        sigma = 0.25 * 1.0 * (p99 - p1)
        out = add_noise(img, 1.0, seed=11)
        assert out.pixels.min() >= img.pixels.min() - 3 * sigma - 1e-6
        assert out.pixels.max() <= img.pixels.max() + 3 * sigma + 1e-6

    def test_mean_abs_difference_monotone_in_severity(self):
        # detectability proxy, averaged over noise realizations
        img = _gradient_image(64, 64)
        mads = []
        for severity in (0.2, 0.5, 0.8):
            diffs = [
                np.abs(add_noise(img, severity, seed=s).pixels - img.pixels).mean()
                for s in range(20)
            ]
            mads.append(np.mean(diffs))
        assert mads[0] < mads[1] < mads[2]


class TestMotion:
    def test_severity_zero_is_identity(self, rng):
        img = random_image(rng)
        out = add_motion(img, 0.0, seed=5)
        assert np.max(np.abs(out.pixels - img.pixels)) < 1e-4

    def test_deterministic(self, rng):
        img = random_image(rng, shape=(32, 32))
        a = add_motion(img, 0.6, seed=9)
        b = add_motion(img, 0.6, seed=9)
        assert np.array_equal(a.pixels, b.pixels)

    def test_mean_preserved_dc_untouched(self):
        # DC-preservation oracle on random nonnegative images
        for seed in range(5):
            rng = np.random.default_rng(900 + seed)
            img = SliceImage(pixels=rng.uniform(0.1, 1.0, (48, 48)).astype(np.float32))
            out = add_motion(img, 0.8, seed=seed)
            assert float(out.pixels.mean()) == pytest.approx(
                float(img.pixels.mean()), rel=0.01
            )

    def test_output_finite_and_changed(self, rng):
        img = SliceImage(pixels=rng.uniform(0.0, 1.0, (64, 64)).astype(np.float32))
        out = add_motion(img, 0.9, seed=2)
        assert np.all(np.isfinite(out.pixels))
        assert np.max(np.abs(out.pixels - img.pixels)) > 1e-3


class TestBiasField:
    def test_severity_zero_is_identity(self, rng):
        img = random_image(rng)
        out = add_bias_field(img, 0.0, seed=3)
        assert np.array_equal(out.pixels, img.pixels)

    def test_field_range_contract(self):
        # recover the field on a constant image: out/in = 1 + severity*g
        img = SliceImage(pixels=np.full((40, 40), 2.0, dtype=np.float32))
        for severity in (0.3, 1.0):
            out = add_bias_field(img, severity, seed=21)
            field = out.pixels.astype(np.float64) / 2.0
            assert field.min() == pytest.approx(1 - 0.5 * severity, abs=1e-6)
            assert field.max() == pytest.approx(1 + 0.5 * severity, abs=1e-6)

    def test_ratio_recovers_field(self, rng):
        # ratio-recovery oracle: the same seed must reproduce the same field
        img = SliceImage(pixels=rng.uniform(0.5, 2.0, (32, 32)).astype(np.float32))
        out = add_bias_field(img, 0.8, seed=4)
        ratio = out.pixels.astype(np.float64) / img.pixels.astype(np.float64)
        ones = SliceImage(pixels=np.ones((32, 32), dtype=np.float32))
        field = add_bias_field(ones, 0.8, seed=4).pixels.astype(np.float64)
        assert np.max(np.abs(ratio - field)) < 1e-5


class TestWraparound:
    def test_severity_zero_is_identity(self, rng):
        img = random_image(rng)
        assert np.array_equal(add_wraparound(img, 0.0).pixels, img.pixels)

    def test_all_zero_stays_zero(self):
        img = SliceImage(pixels=np.zeros((16, 16), dtype=np.float32))
        assert np.array_equal(add_wraparound(img, 1.0).pixels, img.pixels)

    def test_fold_bookkeeping(self, rng):
        # sum changes by exactly the folded contributions
        img = SliceImage(pixels=rng.uniform(0, 1, (20, 12)).astype(np.float32))
        severity = 0.8
        k = round(severity * 0.25 * 20)
        out = add_wraparound(img, severity)
        folded = 0.5 * (img.pixels[:k].sum() + img.pixels[-k:].sum())
        assert float(out.pixels.sum()) == pytest.approx(
            float(img.pixels.sum()) + float(folded), rel=1e-5
        )

    def test_fold_is_additive_overlay(self, rng):
        img = SliceImage(pixels=rng.uniform(0, 1, (16, 8)).astype(np.float32))
        out = add_wraparound(img, 1.0)
        k = 4
        np.testing.assert_allclose(
            out.pixels[:k], img.pixels[:k] + 0.5 * img.pixels[-k:], rtol=1e-6
        )
        np.testing.assert_allclose(
            out.pixels[-k:], img.pixels[-k:] + 0.5 * img.pixels[:k], rtol=1e-6
        )


class TestCorruptDispatch:
    def test_leaf_equals_direct_call(self, rng):
        img = random_image(rng)
        spec = CorruptionSpec(kind="noise", severity=0.5, seed=77)
        assert np.array_equal(
            corrupt(img, spec).pixels, add_noise(img, 0.5, seed=77).pixels
        )
        spec = CorruptionSpec(kind="wraparound", severity=0.75)
        assert np.array_equal(
            corrupt(img, spec).pixels, add_wraparound(img, 0.75).pixels
        )

    def test_compose_zero_severity_identity(self, rng):
        img = random_image(rng)
        spec = CorruptionSpec(
            kind="compose",
            severity=0.0,
            children=(
                CorruptionSpec(kind="noise", severity=0.0, seed=1),
                CorruptionSpec(kind="motion", severity=0.0, seed=2),
            ),
        )
        out = corrupt(img, spec)
        assert np.max(np.abs(out.pixels - img.pixels)) < 1e-4

    def test_compose_order_matters(self, rng):
        img = SliceImage(pixels=rng.uniform(0, 1, (32, 32)).astype(np.float32))
        noise = CorruptionSpec(kind="noise", severity=0.6, seed=5)
        motion = CorruptionSpec(kind="motion", severity=0.6, seed=6)
        ab = corrupt(img, CorruptionSpec(kind="compose", severity=0.6, children=(noise, motion)))
        ba = corrupt(img, CorruptionSpec(kind="compose", severity=0.6, children=(motion, noise)))
        assert np.max(np.abs(ab.pixels - ba.pixels)) > 1e-4

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            CorruptionSpec(kind="sparkle", severity=0.5)
        with pytest.raises(ValueError):
            CorruptionSpec(kind="noise", severity=1.5)
        with pytest.raises(ValueError):
            CorruptionSpec(kind="compose", severity=0.5)
        with pytest.raises(ValueError):
            CorruptionSpec(
                kind="noise",
                severity=0.5,
                children=(CorruptionSpec(kind="noise", severity=0.5),),
            )

    def test_json_round_trip(self):
        spec = CorruptionSpec(
            kind="compose",
            severity=0.9,
            seed=123,
            children=(
                CorruptionSpec(kind="bias", severity=0.9, seed=5),
                CorruptionSpec(kind="motion", severity=0.55, seed=6),
            ),
        )
        blob = json.dumps(spec.to_json_dict())
        assert CorruptionSpec.from_json_dict(json.loads(blob)) == spec

    def test_effective_severity(self):
        spec = CorruptionSpec(
            kind="compose",
            severity=0.6,
            children=(
                CorruptionSpec(kind="bias", severity=0.6, seed=5),
                CorruptionSpec(kind="motion", severity=0.85, seed=6),
            ),
        )
        assert effective_severity(spec) == 0.85


class TestVolumeCorruption:
    def test_deterministic_and_changes_volume(self, rng):
        vol = random_volume(rng, dims=(8, 8, 6))
        spec = CorruptionSpec(kind="noise", severity=0.8, seed=3)
        a = corrupt_volume(vol, spec)
        b = corrupt_volume(vol, spec)
        assert np.array_equal(a.voxels, b.voxels)
        assert np.max(np.abs(a.voxels - vol.voxels)) > 0

    def test_slices_get_distinct_noise(self, rng):
        vol = Volume(voxels=np.full((8, 8, 4), 0.5, dtype=np.float32))
        # flat slices give sigma zero; use a graded volume instead
        vox = rng.uniform(0, 1, (8, 8, 4)).astype(np.float32)
        vol = Volume(voxels=vox)
        spec = CorruptionSpec(kind="noise", severity=0.9, seed=3)
        out = corrupt_volume(vol, spec)
        delta = out.voxels.astype(np.float64) - vox
        # per-slice noise fields differ (independent reseeding per index)
        assert np.max(np.abs(delta[:, :, 0] - delta[:, :, 1])) > 1e-4

    def test_reseed_is_stable_function(self):
        spec = CorruptionSpec(kind="motion", severity=0.5, seed=10)
        assert reseed(spec, 3) == reseed(spec, 3)
        assert reseed(spec, 3) != reseed(spec, 4)
