"""Procedural garment/person pairs plus directory-layout ingestion.

The generator draws a schematic person (head, torso, limbs, tinted
background) whose torso carries a colored pattern, and the matching flat
garment on a plain background. The clothing-agnostic mask is the torso
region dilated by a couple of pixels, so masking the person provably
removes every garment pixel. Hue/pattern labels in the captions match
pixel statistics by construction, which is what makes end-to-end pattern
transfer measurable at desk scale.

Disk layout (VITON-HD style, shared basename stems):

    <root>/image/<id>.png          person image
    <root>/cloth/<id>.png          flat garment image
    <root>/agnostic-mask/<id>.png  binary mask (255 = regenerate)
    <root>/caption/<id>.txt        line 1: garment description,
                                   line 2: person description
    <root>/manifest.json           sample ids + generator config

Real datasets in this layout drop in unchanged.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pngio
from .core import check_image, check_mask

GENERATOR_VERSION = "1"

# palette hues are spaced 60 degrees apart so bucketing is unambiguous
PALETTE: dict[str, tuple[float, float, float]] = {
    "red": (0.86, 0.16, 0.16),
    "yellow": (0.88, 0.82, 0.20),
    "green": (0.16, 0.71, 0.27),
    "cyan": (0.24, 0.78, 0.82),
    "blue": (0.18, 0.31, 0.86),
    "magenta": (0.78, 0.24, 0.75),
}
PATTERNS = ("solid", "stripes", "checks", "dots")

_SKIN = (0.88, 0.78, 0.70)  # saturation < 0.25, below the hue-vote gate
_LIMB = (0.25, 0.25, 0.28)
_SECONDARY = (0.97, 0.97, 0.97)  # unsaturated, never wins a hue vote


@dataclass(frozen=True)
class TryOnSample:
    garment_image: np.ndarray
    person_image: np.ndarray
    mask: np.ndarray
    garment_caption: str
    person_caption: str
    sample_id: str


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 64
    size: tuple[int, int] = (64, 48)  # (H, W)
    seed: int = 0
    palette: tuple[str, ...] = tuple(PALETTE)
    patterns: tuple[str, ...] = PATTERNS
    pose_jitter: int = 4

    def __post_init__(self):
        h, w = self.size
        if h % 16 or w % 16:
            raise ValueError(f"size {self.size} must be divisible by 16")
        unknown = set(self.palette) - set(PALETTE)
        if unknown:
            raise ValueError(f"unknown palette colors: {sorted(unknown)}")
        unknown = set(self.patterns) - set(PATTERNS)
        if unknown:
            raise ValueError(f"unknown patterns: {sorted(unknown)}")


# -- drawing helpers --------------------------------------------------------


def _to_model(rgb01: np.ndarray) -> np.ndarray:
    return rgb01 * 2.0 - 1.0


def _fill(canvas: np.ndarray, region: np.ndarray, rgb01) -> None:
    canvas[:, region] = _to_model(np.asarray(rgb01, dtype=canvas.dtype))[:, None]


def _disk(h: int, w: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _torso_quad(h: int, w: int, jx: int, jy: int) -> np.ndarray:
    """Trapezoid torso region, jittered by (jx, jy) pixels."""
    top, bottom = int(0.34 * h) + jy, int(0.72 * h) + jy
    cx = w / 2 + jx
    half_top, half_bot = 0.30 * w, 0.24 * w
    yy, xx = np.mgrid[0:h, 0:w]
    frac = np.clip((yy - top) / max(bottom - top, 1), 0.0, 1.0)
    half = half_top + (half_bot - half_top) * frac
    return (yy >= top) & (yy < bottom) & (np.abs(xx - cx) <= half)


def _garment_shape(h: int, w: int) -> np.ndarray:
    """Flat garment: the torso silhouette with short sleeves, centered."""
    body = _torso_quad(h, w, 0, -int(0.05 * h))
    yy, xx = np.mgrid[0:h, 0:w]
    top = int(0.34 * h) - int(0.05 * h)
    sleeves = (
        (yy >= top)
        & (yy < top + int(0.14 * h))
        & (np.abs(xx - w / 2) <= 0.40 * w)
    )
    return body | sleeves


def _render_pattern(canvas: np.ndarray, region: np.ndarray, pattern: str, rgb01) -> None:
    """Paint `pattern` in `rgb01` over `region`; phase anchored at the
    region's bounding box so garment and torso renditions line up."""
    h, w = region.shape
    ys, xs = np.nonzero(region)
    y0, x0 = ys.min(), xs.min()
    yy, xx = np.mgrid[0:h, 0:w]
    if pattern == "solid":
        base = np.ones((h, w), dtype=bool)
    elif pattern == "stripes":
        base = ((yy - y0) // 4) % 2 == 0
    elif pattern == "checks":
        base = (((yy - y0) // 4) + ((xx - x0) // 4)) % 2 == 0
    elif pattern == "dots":
        base = ~((((yy - y0) % 6) - 2) ** 2 + (((xx - x0) % 6) - 2) ** 2 <= 1)
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    _fill(canvas, region & base, rgb01)
    _fill(canvas, region & ~base, _SECONDARY)


def binary_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation of a (H, W) boolean mask by `radius` pixels."""
    out = mask.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            shifted = np.zeros_like(mask)
            ys = slice(max(dy, 0), mask.shape[0] + min(dy, 0))
            yd = slice(max(-dy, 0), mask.shape[0] + min(-dy, 0))
            xs = slice(max(dx, 0), mask.shape[1] + min(dx, 0))
            xd = slice(max(-dx, 0), mask.shape[1] + min(-dx, 0))
            shifted[yd, xd] = mask[ys, xs]
            out |= shifted
    return out


def render_sample(cfg: SynthConfig, index: int) -> TryOnSample:
    """Draw sample `index`; fully determined by (cfg.seed, index)."""
    h, w = cfg.size
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    color = cfg.palette[int(rng.integers(len(cfg.palette)))]
    pattern = cfg.patterns[int(rng.integers(len(cfg.patterns)))]
    jx = int(rng.integers(-cfg.pose_jitter, cfg.pose_jitter + 1))
    jy = int(rng.integers(-cfg.pose_jitter // 2, cfg.pose_jitter // 2 + 1))
    tint = 0.82 + 0.08 * float(rng.random())

    dtype = np.float32
    person = np.full((3, h, w), _to_model(np.float32(tint)), dtype=dtype)
    torso = _torso_quad(h, w, jx, jy)
    cx = w / 2 + jx
    head = _disk(h, w, 0.20 * h + jy, cx, 0.10 * h)
    _fill(person, head, _SKIN)
    yy, xx = np.mgrid[0:h, 0:w]
    top = int(0.34 * h) + jy
    legs = (yy >= int(0.72 * h) + jy) & (yy < int(0.95 * h)) & (np.abs(xx - cx) <= 0.12 * w)
    _fill(person, legs, _LIMB)
    arms = (
        (yy >= top)
        & (yy < int(0.68 * h) + jy)
        & (np.abs(np.abs(xx - cx) - 0.34 * w) <= 0.035 * w)
    )
    _fill(person, arms, _LIMB)
    _render_pattern(person, torso, pattern, PALETTE[color])

    garment = np.full((3, h, w), _to_model(np.float32(0.92)), dtype=dtype)
    _render_pattern(garment, _garment_shape(h, w), pattern, PALETTE[color])

    mask = binary_dilate(torso, 2).astype(dtype)[None]

    lean = "leaning left" if jx < -1 else "leaning right" if jx > 1 else "centered"
    return TryOnSample(
        garment_image=garment,
        person_image=person,
        mask=mask,
        garment_caption=f"a {pattern} {color} top",
        person_caption=f"standing, front view, {lean}",
        sample_id=f"{index:05d}",
    )


def generate_synthetic(cfg: SynthConfig, out_dir: str | Path) -> dict:
    """Write cfg.n_samples rendered samples to `out_dir`; returns the manifest."""
    out = Path(out_dir)
    for sub in ("image", "cloth", "agnostic-mask", "caption"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(cfg.n_samples):
        s = render_sample(cfg, i)
        pngio.save_image(out / "image" / f"{s.sample_id}.png", s.person_image)
        pngio.save_image(out / "cloth" / f"{s.sample_id}.png", s.garment_image)
        pngio.save_mask(out / "agnostic-mask" / f"{s.sample_id}.png", s.mask)
        (out / "caption" / f"{s.sample_id}.txt").write_text(
            f"{s.garment_caption}\n{s.person_caption}\n", encoding="utf-8"
        )
        ids.append(s.sample_id)
    manifest = {
        "sample_ids": ids,
        "generator_version": GENERATOR_VERSION,
        "config": {
            "n_samples": cfg.n_samples,
            "size": list(cfg.size),
            "seed": cfg.seed,
            "palette": list(cfg.palette),
            "patterns": list(cfg.patterns),
            "pose_jitter": cfg.pose_jitter,
        },
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def load_dataset(root: str | Path) -> list[TryOnSample]:
    """Load every complete sample under `root`, sorted by sample_id.

    Samples with a missing file are skipped with a warning; the returned
    list contains only validated records.
    """
    root = Path(root)
    image_dir = root / "image"
    if not image_dir.is_dir():
        raise FileNotFoundError(f"no image/ directory under {root}")
    samples = []
    skipped = 0
    for img_path in sorted(image_dir.glob("*.png")):
        sid = img_path.stem
        cloth = root / "cloth" / f"{sid}.png"
        mask = root / "agnostic-mask" / f"{sid}.png"
        caption = root / "caption" / f"{sid}.txt"
        missing = [p.name for p in (cloth, mask, caption) if not p.exists()]
        if missing:
            skipped += 1
            warnings.warn(f"sample {sid}: missing {', '.join(missing)}; skipped")
            continue
        lines = caption.read_text(encoding="utf-8").splitlines()
        garment_caption = lines[0] if lines else ""
        person_caption = lines[1] if len(lines) > 1 else ""
        person = pngio.load_image(img_path)
        garment = pngio.load_image(cloth)
        m = pngio.load_mask(mask)
        check_image(person, f"{sid} person")
        check_image(garment, f"{sid} garment")
        check_mask(m, f"{sid} mask")
        if garment.shape != person.shape or m.shape[1:] != person.shape[1:]:
            skipped += 1
            warnings.warn(f"sample {sid}: inconsistent shapes; skipped")
            continue
        samples.append(
            TryOnSample(
                garment_image=garment,
                person_image=person,
                mask=m,
                garment_caption=garment_caption,
                person_caption=person_caption,
                sample_id=sid,
            )
        )
    if skipped:
        warnings.warn(f"skipped {skipped} incomplete sample(s) under {root}")
    return samples


def split(
    samples: list[TryOnSample], train_fraction: float, seed: int
) -> tuple[list[TryOnSample], list[TryOnSample]]:
    """Disjoint, exhaustive, seeded shuffle split."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie strictly in (0, 1); got {train_fraction}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x59117]))
    order = rng.permutation(len(samples))
    n_train = int(len(samples) * train_fraction)
    train = [samples[i] for i in sorted(order[:n_train])]
    test = [samples[i] for i in sorted(order[n_train:])]
    return train, test


# -- hue bucketing ------------------------------------------------------------


def _rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB [0,1] (N,3) -> hue degrees, saturation, value."""
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    mx = rgb.max(axis=1)
    mn = rgb.min(axis=1)
    delta = mx - mn
    hue = np.zeros_like(mx)
    nz = delta > 1e-12
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    hue[rmax] = 60.0 * (((g - b)[rmax] / delta[rmax]) % 6)
    hue[gmax] = 60.0 * ((b - r)[gmax] / delta[gmax] + 2)
    hue[bmax] = 60.0 * ((r - g)[bmax] / delta[bmax] + 4)
    sat = np.where(mx > 1e-12, delta / np.maximum(mx, 1e-12), 0.0)
    return hue, sat, mx


def palette_hues(palette=tuple(PALETTE)) -> dict[str, float]:
    out = {}
    for name in palette:
        hue, _, _ = _rgb_to_hsv(np.asarray([PALETTE[name]]))
        out[name] = float(hue[0])
    return out


def dominant_palette_color(
    image: np.ndarray,
    region: np.ndarray,
    palette=tuple(PALETTE),
    min_saturation: float = 0.25,
    min_votes_fraction: float = 0.05,
) -> str | None:
    """Majority palette-hue vote over sufficiently saturated region pixels.

    Returns None when fewer than `min_votes_fraction` of the region's
    pixels are saturated enough to vote.
    """
    check_image(image)
    region = np.asarray(region, dtype=bool)
    if region.shape != image.shape[1:]:
        raise ValueError(f"region {region.shape} does not match image {image.shape[1:]}")
    pixels = ((image[:, region].T + 1.0) / 2.0).astype(np.float64)
    if pixels.shape[0] == 0:
        return None
    hue, sat, val = _rgb_to_hsv(np.clip(pixels, 0.0, 1.0))
    voters = (sat >= min_saturation) & (val >= 0.2)
    if voters.sum() < min_votes_fraction * pixels.shape[0]:
        return None
    hues = palette_hues(palette)
    names = list(hues)
    centers = np.asarray([hues[n] for n in names])
    diff = np.abs(hue[voters, None] - centers[None, :])
    diff = np.minimum(diff, 360.0 - diff)
    votes = np.bincount(diff.argmin(axis=1), minlength=len(names))
    return names[int(votes.argmax())]
