import json
from pathlib import Path

import numpy as np
import pytest

from tryondit import pngio
from tryondit.core import apply_mask
from tryondit.dataset import (
    PALETTE,
    SynthConfig,
    TryOnSample,
    _torso_quad,
    binary_dilate,
    dominant_palette_color,
    generate_synthetic,
    load_dataset,
    render_sample,
    split,
)


def dir_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_generate_deterministic(tmp_path):
    cfg = SynthConfig(n_samples=4, seed=7)
    generate_synthetic(cfg, tmp_path / "a")
    generate_synthetic(cfg, tmp_path / "b")
    assert dir_bytes(tmp_path / "a") == dir_bytes(tmp_path / "b")


def test_generate_layout_and_manifest(tmp_path):
    cfg = SynthConfig(n_samples=3, seed=1)
    manifest = generate_synthetic(cfg, tmp_path)
    assert manifest["sample_ids"] == ["00000", "00001", "00002"]
    for sub, ext in [("image", "png"), ("cloth", "png"), ("agnostic-mask", "png"), ("caption", "txt")]:
        assert sorted(p.name for p in (tmp_path / sub).iterdir()) == [
            f"0000{i}.{ext}" for i in range(3)
        ]
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == manifest


def test_generate_rejects_bad_size(tmp_path):
    with pytest.raises(ValueError, match="divisible by 16"):
        SynthConfig(n_samples=1, size=(63, 48))


def test_mask_covers_torso_and_has_foreground():
    cfg = SynthConfig(n_samples=16, seed=3)
    for i in range(16):
        s = render_sample(cfg, i)
        assert s.mask.sum() > 0
        # mask must contain the torso quad it was dilated from
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        rng.integers(len(cfg.palette))
        rng.integers(len(cfg.patterns))
        jx = int(rng.integers(-cfg.pose_jitter, cfg.pose_jitter + 1))
        jy = int(rng.integers(-cfg.pose_jitter // 2, cfg.pose_jitter // 2 + 1))
        torso = _torso_quad(*cfg.size, jx, jy)
        assert (s.mask[0].astype(bool) | ~torso).all()


def test_masking_removes_all_garment_pixels():
    cfg = SynthConfig(n_samples=12, seed=5)
    for i in range(12):
        s = render_sample(cfg, i)
        color = s.garment_caption.split()[2]
        base = (np.asarray(PALETTE[color]) * 2 - 1).reshape(3, 1, 1)
        masked = apply_mask(s.person_image, s.mask)
        assert not (np.abs(masked - base) < 1e-6).all(axis=0).any()


def test_caption_labels_match_pixels():
    cfg = SynthConfig(n_samples=24, seed=11)
    for i in range(24):
        s = render_sample(cfg, i)
        color = s.garment_caption.split()[2]
        full = np.ones(s.garment_image.shape[1:], dtype=bool)
        assert dominant_palette_color(s.garment_image, full) == color
        assert dominant_palette_color(s.person_image, s.mask[0].astype(bool)) == color


def test_load_roundtrip(tmp_path):
    cfg = SynthConfig(n_samples=5, seed=2)
    generate_synthetic(cfg, tmp_path)
    samples = load_dataset(tmp_path)
    assert len(samples) == 5
    assert [s.sample_id for s in samples] == [f"0000{i}" for i in range(5)]
    ref = render_sample(cfg, 3)
    got = samples[3]
    # PNG quantization keeps values on the 8-bit grid; rendering is on it too
    np.testing.assert_allclose(got.person_image, ref.person_image, atol=1 / 127.5)
    np.testing.assert_array_equal(got.mask, ref.mask)
    assert got.garment_caption == ref.garment_caption
    assert got.person_caption == ref.person_caption


def test_load_skips_incomplete_sample(tmp_path):
    generate_synthetic(SynthConfig(n_samples=4, seed=2), tmp_path)
    (tmp_path / "agnostic-mask" / "00002.png").unlink()
    with pytest.warns(UserWarning, match="00002"):
        samples = load_dataset(tmp_path)
    assert len(samples) == 3
    assert all(s.sample_id != "00002" for s in samples)


def test_mask_png_threshold_at_128(tmp_path):
    from PIL import Image

    arr = np.zeros((4, 4), dtype=np.uint8)
    arr[0, 0] = 127
    arr[0, 1] = 128
    arr[1, 0] = 255
    Image.fromarray(arr, mode="L").save(tmp_path / "m.png")
    mask = pngio.load_mask(tmp_path / "m.png")
    assert mask[0, 0, 0] == 0  # 127 -> 0
    assert mask[0, 0, 1] == 1  # 128 -> 1
    assert mask[0, 1, 0] == 1  # 255 -> 1
    assert mask.sum() == 2


def test_png_bytes_stable_under_reload(tmp_path):
    generate_synthetic(SynthConfig(n_samples=2, seed=9), tmp_path)
    src = tmp_path / "image" / "00001.png"
    img = pngio.load_image(src)
    pngio.save_image(tmp_path / "resaved.png", img)
    assert src.read_bytes() == (tmp_path / "resaved.png").read_bytes()


def test_split_partition():
    samples = [
        TryOnSample(None, None, None, "", "", f"{i:03d}") for i in range(100)
    ]
    train, test = split(samples, 0.9, seed=4)
    assert len(train) == 90 and len(test) == 10
    ids = {s.sample_id for s in train} | {s.sample_id for s in test}
    assert ids == {s.sample_id for s in samples}
    assert not ({s.sample_id for s in train} & {s.sample_id for s in test})


def test_split_deterministic():
    samples = [TryOnSample(None, None, None, "", "", f"{i:03d}") for i in range(50)]
    a = split(samples, 0.8, seed=1)
    b = split(samples, 0.8, seed=1)
    assert [s.sample_id for s in a[0]] == [s.sample_id for s in b[0]]
    assert [s.sample_id for s in a[1]] == [s.sample_id for s in b[1]]


def test_split_rejects_degenerate_fraction():
    with pytest.raises(ValueError):
        split([], 1.0, seed=0)


def test_binary_dilate_radius():
    m = np.zeros((9, 9), dtype=bool)
    m[4, 4] = True
    d = binary_dilate(m, 2)
    assert d[2:7, 2:7].all()
    assert d.sum() == 25
