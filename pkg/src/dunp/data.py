"""Synthetic corpora, augmentation, splits, and PNG/PGM mask I/O.

Images are float32 (C, H, W) in [0, 1]; masks are float32 (1, H, W)
with values exactly 0 or 1.  Geometric augmentations are exact index
permutations applied to image and mask alike; photometric ones touch
the image only.  Masks therefore stay binary under every kind.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError

GEOMETRIC_KINDS = ("rot90", "rot270", "hflip", "vflip", "transpose", "vflip_rot90")
PHOTOMETRIC_KINDS = ("brightness", "contrast", "gamma", "gaussian_noise")
AUGMENT_KINDS = GEOMETRIC_KINDS + PHOTOMETRIC_KINDS + ("identity",)

_DEFAULT_AMOUNT = {"brightness": 0.1, "contrast": 1.2, "gamma": 0.8,
                   "gaussian_noise": 0.05}


@dataclass
class SegSample:
    image: np.ndarray
    mask: np.ndarray
    id: str
    augment: str = "orig"
    meta: dict = field(default_factory=dict)

    def validate(self) -> "SegSample":
        if self.image.ndim != 3 or self.image.shape[0] not in (1, 3):
            raise ConfigurationError(
                f"sample image must be (C, H, W) with C in (1, 3), got {self.image.shape}")
        if self.mask.ndim != 3 or self.mask.shape[0] != 1:
            raise ConfigurationError(
                f"sample mask must be (1, H, W), got {self.mask.shape}")
        if self.image.shape[1:] != self.mask.shape[1:]:
            raise ConfigurationError(
                f"image {self.image.shape[1:]} and mask {self.mask.shape[1:]} disagree")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise ConfigurationError("image values must lie in [0, 1]")
        vals = np.unique(self.mask)
        if not np.isin(vals, (0.0, 1.0)).all():
            raise ConfigurationError("mask must be binary {0, 1}")
        return self


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    amount: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ConfigurationError(f"unknown augmentation kind {self.kind!r}")


def _disk_mask(size: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


def _textured_image(mask: np.ndarray, rng, channels: int) -> np.ndarray:
    fg = rng.uniform(0.65, 0.85)
    bg = rng.uniform(0.2, 0.35)
    base = np.where(mask, fg, bg).astype(np.float32)
    img = np.stack([base + rng.normal(0.0, 0.03, mask.shape).astype(np.float32)
                    for _ in range(channels)])
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(n: int, size: int = 64, shape_kind: str = "disk",
                       seed: int = 0, channels: int = 1) -> list:
    """Random shapes with analytically exact masks.

    disk: one circle; rect: one axis-aligned rectangle; blob: union of
    three to five circles.  meta records the generating geometry.
    """
    if shape_kind not in ("disk", "rect", "blob"):
        raise ConfigurationError(f"unknown shape kind {shape_kind!r}")
    if n < 1 or size < 8:
        raise ConfigurationError(f"need n >= 1 and size >= 8, got n={n}, size={size}")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        if shape_kind == "disk":
            r = rng.uniform(size / 6.0, size / 3.0)
            cy = rng.uniform(r, size - r)
            cx = rng.uniform(r, size - r)
            mask = _disk_mask(size, cy, cx, r)
            meta = {"kind": "disk", "cy": cy, "cx": cx, "r": r}
        elif shape_kind == "rect":
            h = int(rng.integers(size // 5, size // 2))
            w = int(rng.integers(size // 5, size // 2))
            top = int(rng.integers(0, size - h))
            left = int(rng.integers(0, size - w))
            mask = np.zeros((size, size), dtype=bool)
            mask[top:top + h, left:left + w] = True
            meta = {"kind": "rect", "top": top, "left": left, "h": h, "w": w}
        else:
            k = int(rng.integers(3, 6))
            mask = np.zeros((size, size), dtype=bool)
            lobes = []
            base_cy = rng.uniform(size * 0.3, size * 0.7)
            base_cx = rng.uniform(size * 0.3, size * 0.7)
            for _ in range(k):
                r = rng.uniform(size / 10.0, size / 5.0)
                cy = np.clip(base_cy + rng.normal(0, size / 8.0), r, size - r)
                cx = np.clip(base_cx + rng.normal(0, size / 8.0), r, size - r)
                mask |= _disk_mask(size, cy, cx, r)
                lobes.append({"cy": float(cy), "cx": float(cx), "r": float(r)})
            meta = {"kind": "blob", "lobes": lobes}
        image = _textured_image(mask, rng, channels)
        samples.append(SegSample(image=image,
                                 mask=mask[None].astype(np.float32),
                                 id=f"{shape_kind}_{i:04d}", meta=meta).validate())
    return samples


def _geometric(arr: np.ndarray, kind: str) -> np.ndarray:
    if kind == "rot90":
        return np.rot90(arr, 1, axes=(1, 2))
    if kind == "rot270":
        return np.rot90(arr, 3, axes=(1, 2))
    if kind == "hflip":
        return arr[:, :, ::-1]
    if kind == "vflip":
        return arr[:, ::-1, :]
    if kind == "transpose":
        return arr.swapaxes(1, 2)
    if kind == "vflip_rot90":
        return np.rot90(arr[:, ::-1, :], 1, axes=(1, 2))
    raise ConfigurationError(f"not a geometric kind: {kind}")


def augment(sample: SegSample, op: AugmentOp) -> SegSample:
    """Apply one augmentation; id is preserved, tag records the kind."""
    img, mask = sample.image, sample.mask
    if op.kind == "identity":
        out_img, out_mask = img.copy(), mask.copy()
    elif op.kind in GEOMETRIC_KINDS:
        out_img = np.ascontiguousarray(_geometric(img, op.kind))
        out_mask = np.ascontiguousarray(_geometric(mask, op.kind))
    else:
        amt = op.amount if op.amount is not None else _DEFAULT_AMOUNT[op.kind]
        if op.kind == "brightness":
            out_img = img + amt
        elif op.kind == "contrast":
            out_img = (img - 0.5) * amt + 0.5
        elif op.kind == "gamma":
            if amt <= 0:
                raise ConfigurationError(f"gamma exponent must be > 0, got {amt}")
            out_img = np.power(img, amt)
        else:
            rng = np.random.default_rng(op.seed)
            out_img = img + rng.normal(0.0, amt, img.shape).astype(img.dtype)
        out_img = np.clip(out_img, 0.0, 1.0).astype(np.float32)
        out_mask = mask.copy()
    return replace(sample, image=out_img, mask=out_mask, augment=op.kind).validate()


def expand_with_augments(samples, kinds, seed: int = 0) -> list:
    """Original samples plus one variant per (sample, kind)."""
    out = list(samples)
    for i, s in enumerate(samples):
        for j, kind in enumerate(kinds):
            out.append(augment(s, AugmentOp(kind=kind, seed=seed + 1000 * i + j)))
    return out


def _resize_bilinear(arr: np.ndarray, th: int, tw: int) -> np.ndarray:
    """align_corners=False bilinear resize of a (C, H, W) array."""
    c, h, w = arr.shape
    ys = (np.arange(th, dtype=np.float64) + 0.5) * h / th - 0.5
    xs = (np.arange(tw, dtype=np.float64) + 0.5) * w / tw - 0.5
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    tl = arr[:, y0c[:, None], x0c[None, :]]
    tr = arr[:, y0c[:, None], x1c[None, :]]
    bl = arr[:, y1c[:, None], x0c[None, :]]
    br = arr[:, y1c[:, None], x1c[None, :]]
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    return (top * (1 - fy) + bot * fy).astype(arr.dtype)


def _resize_nearest(arr: np.ndarray, th: int, tw: int) -> np.ndarray:
    c, h, w = arr.shape
    ys = np.minimum((np.floor((np.arange(th) + 0.5) * h / th)).astype(int), h - 1)
    xs = np.minimum((np.floor((np.arange(tw) + 0.5) * w / tw)).astype(int), w - 1)
    return arr[:, ys[:, None], xs[None, :]]


def resize_to(sample: SegSample, size: tuple) -> SegSample:
    """Bilinear for the image, nearest for the mask; identity is exact."""
    th, tw = size
    if (th, tw) == sample.image.shape[1:]:
        return replace(sample, image=sample.image.copy(), mask=sample.mask.copy())
    return replace(sample,
                   image=np.clip(_resize_bilinear(sample.image, th, tw), 0.0, 1.0),
                   mask=_resize_nearest(sample.mask, th, tw)).validate()


def split(samples, ratios: tuple = (0.8, 0.1, 0.1), seed: int = 0):
    """Deterministic train/val/test split grouped by base sample id.

    Counts are floor(n * ratio) for train and val; the remainder is
    test.  Augmented variants always land with their base sample.
    """
    samples = list(samples)
    if not samples:
        raise ConfigurationError("cannot split an empty corpus")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios must be 3 non-negatives summing to 1, got {ratios}")
    base_ids = []
    seen = set()
    for s in samples:
        if s.id not in seen:
            seen.add(s.id)
            base_ids.append(s.id)
    order = np.random.default_rng(seed).permutation(len(base_ids))
    shuffled = [base_ids[i] for i in order]
    n = len(shuffled)
    n_train = math.floor(n * ratios[0])
    n_val = math.floor(n * ratios[1])
    train_ids = set(shuffled[:n_train])
    val_ids = set(shuffled[n_train:n_train + n_val])
    by = {"train": [], "val": [], "test": []}
    for s in samples:
        if s.id in train_ids:
            by["train"].append(s)
        elif s.id in val_ids:
            by["val"].append(s)
        else:
            by["test"].append(s)
    return by["train"], by["val"], by["test"]


def _to_u8(img01: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img01 * 255.0), 0, 255).astype(np.uint8)


def save_image(path, image: np.ndarray) -> None:
    """(C, H, W) float [0, 1] -> 8-bit PNG/PGM (L for 1 channel, RGB for 3)."""
    arr = _to_u8(image)
    if arr.shape[0] == 1:
        Image.fromarray(arr[0], mode="L").save(path)
    else:
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def save_mask(path, mask: np.ndarray) -> None:
    """(1, H, W) binary -> 8-bit {0, 255} PNG/PGM."""
    Image.fromarray((mask[0] >= 0.5).astype(np.uint8) * 255, mode="L").save(path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.float32)[None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32).transpose(2, 0, 1)
    return arr / 255.0


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return (arr >= 127.5).astype(np.float32)[None]


def save_corpus(samples, directory) -> None:
    """One <id>.png + <id>_mask.png pair per sample; ids must be unique."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("corpus save needs unique sample ids "
                                 "(augmented variants share ids; save bases only)")
    for s in samples:
        save_image(directory / f"{s.id}.png", s.image)
        save_mask(directory / f"{s.id}_mask.png", s.mask)


def load_corpus(directory) -> list:
    """Read every <id>.png/<id>.pgm with a matching <id>_mask sibling."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"corpus directory not found: {directory}")
    samples = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in (".png", ".pgm"):
            continue
        if path.stem.endswith("_mask"):
            continue
        mask_path = None
        for suffix in (".png", ".pgm"):
            cand = path.with_name(path.stem + "_mask" + suffix)
            if cand.exists():
                mask_path = cand
                break
        if mask_path is None:
            raise ConfigurationError(f"no mask file for image {path.name}")
        samples.append(SegSample(image=load_image(path), mask=load_mask(mask_path),
                                 id=path.stem).validate())
    if not samples:
        raise ConfigurationError(f"no image/mask pairs found in {directory}")
    return samples
