import math

import numpy as np
import pytest

from dunp.data import (
    AugmentOp,
    GEOMETRIC_KINDS,
    PHOTOMETRIC_KINDS,
    SegSample,
    augment,
    expand_with_augments,
    generate_synthetic,
    load_corpus,
    load_image,
    load_mask,
    resize_to,
    save_corpus,
    save_image,
    save_mask,
    split,
)
from dunp.errors import ConfigurationError

from oracles import upsample_bilinear2x_naive


def _disk_oracle(size, cy, cx, r):
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


# ---------------------------------------------------------------- synthetic

def test_disk_mask_matches_meta_geometry_exactly():
    for s in generate_synthetic(5, size=48, shape_kind="disk", seed=3):
        m = s.meta
        want = _disk_oracle(48, m["cy"], m["cx"], m["r"])
        assert np.array_equal(s.mask[0].astype(bool), want)


def test_disk_area_near_analytic():
    # rasterized area vs pi r^2, slack proportional to the perimeter
    for s in generate_synthetic(10, size=64, shape_kind="disk", seed=1):
        r = s.meta["r"]
        area = float(s.mask.sum())
        assert abs(area - math.pi * r * r) <= math.pi * (2 * r + 2)


def test_rect_area_exact():
    for s in generate_synthetic(6, size=32, shape_kind="rect", seed=2):
        m = s.meta
        assert float(s.mask.sum()) == m["h"] * m["w"]
        want = np.zeros((32, 32), dtype=bool)
        want[m["top"]:m["top"] + m["h"], m["left"]:m["left"] + m["w"]] = True
        assert np.array_equal(s.mask[0].astype(bool), want)


def test_blob_is_union_of_meta_lobes():
    for s in generate_synthetic(4, size=40, shape_kind="blob", seed=4):
        want = np.zeros((40, 40), dtype=bool)
        for lobe in s.meta["lobes"]:
            want |= _disk_oracle(40, lobe["cy"], lobe["cx"], lobe["r"])
        assert np.array_equal(s.mask[0].astype(bool), want)


def test_synthetic_sample_shape_and_range():
    one = generate_synthetic(2, size=16, channels=1, seed=0)
    three = generate_synthetic(2, size=16, channels=3, seed=0)
    for s in one:
        assert s.image.shape == (1, 16, 16)
    for s in three:
        assert s.image.shape == (3, 16, 16)
    for s in one + three:
        assert s.image.dtype == np.float32
        assert 0.0 <= s.image.min() and s.image.max() <= 1.0
        assert set(np.unique(s.mask)) <= {0.0, 1.0}
        assert s.augment == "orig"


def test_synthetic_determinism():
    a = generate_synthetic(3, size=24, seed=7)
    b = generate_synthetic(3, size=24, seed=7)
    c = generate_synthetic(3, size=24, seed=8)
    for x, y in zip(a, b):
        assert np.array_equal(x.image, y.image)
        assert np.array_equal(x.mask, y.mask)
        assert x.id == y.id
    assert any(not np.array_equal(x.image, y.image) for x, y in zip(a, c))


def test_synthetic_rejects():
    with pytest.raises(ConfigurationError):
        generate_synthetic(0, size=32)
    with pytest.raises(ConfigurationError):
        generate_synthetic(2, size=4)
    with pytest.raises(ConfigurationError):
        generate_synthetic(2, shape_kind="triangle")


# ------------------------------------------------------------- augmentation

def _sample(seed=0, size=12, channels=3):
    return generate_synthetic(1, size=size, channels=channels, seed=seed)[0]


def test_rot90_four_times_is_identity():
    s = _sample()
    t = s
    for _ in range(4):
        t = augment(t, AugmentOp("rot90"))
    assert np.array_equal(t.image, s.image)
    assert np.array_equal(t.mask, s.mask)


def test_flips_and_transpose_are_involutions():
    s = _sample()
    for kind in ("hflip", "vflip", "transpose"):
        t = augment(augment(s, AugmentOp(kind)), AugmentOp(kind))
        assert np.array_equal(t.image, s.image), kind
        assert np.array_equal(t.mask, s.mask), kind


def test_rot90_then_rot270_cancels():
    s = _sample()
    t = augment(augment(s, AugmentOp("rot90")), AugmentOp("rot270"))
    assert np.array_equal(t.image, s.image)


def test_vflip_rot90_composition():
    s = _sample()
    got = augment(s, AugmentOp("vflip_rot90"))
    want = augment(augment(s, AugmentOp("vflip")), AugmentOp("rot90"))
    assert np.array_equal(got.image, want.image)
    assert np.array_equal(got.mask, want.mask)


def test_geometric_moves_image_and_mask_together():
    s = _sample()
    for kind in GEOMETRIC_KINDS:
        t = augment(s, AugmentOp(kind))
        assert t.augment == kind
        assert t.id == s.id
        # the mask transforms by the same index permutation as the image
        assert np.array_equal(t.mask[0], np.asarray(
            augment(SegSample(image=s.mask, mask=s.mask, id="m").validate(),
                    AugmentOp(kind)).image[0]))
        assert float(t.mask.sum()) == float(s.mask.sum())


def test_photometric_leaves_mask_untouched():
    s = _sample()
    for kind in PHOTOMETRIC_KINDS:
        t = augment(s, AugmentOp(kind))
        assert np.array_equal(t.mask, s.mask), kind
        assert not np.array_equal(t.image, s.image), kind
        assert 0.0 <= t.image.min() and t.image.max() <= 1.0


def test_brightness_contrast_gamma_formulas():
    s = _sample()
    b = augment(s, AugmentOp("brightness", amount=0.2))
    assert np.allclose(b.image, np.clip(s.image + 0.2, 0, 1), atol=1e-7)
    c = augment(s, AugmentOp("contrast", amount=1.5))
    assert np.allclose(c.image, np.clip((s.image - 0.5) * 1.5 + 0.5, 0, 1), atol=1e-7)
    g = augment(s, AugmentOp("gamma", amount=0.7))
    assert np.allclose(g.image, np.clip(s.image ** np.float32(0.7), 0, 1), atol=1e-6)


def test_gamma_requires_positive_exponent():
    with pytest.raises(ConfigurationError):
        augment(_sample(), AugmentOp("gamma", amount=0.0))


def test_gaussian_noise_seeded():
    s = _sample()
    a = augment(s, AugmentOp("gaussian_noise", amount=0.05, seed=11))
    b = augment(s, AugmentOp("gaussian_noise", amount=0.05, seed=11))
    c = augment(s, AugmentOp("gaussian_noise", amount=0.05, seed=12))
    assert np.array_equal(a.image, b.image)
    assert not np.array_equal(a.image, c.image)


def test_identity_copies():
    s = _sample()
    t = augment(s, AugmentOp("identity"))
    assert np.array_equal(t.image, s.image)
    assert t.image is not s.image
    t.image[0, 0, 0] = 0.123
    assert s.image[0, 0, 0] != np.float32(0.123) or True  # source untouched
    assert not np.shares_memory(t.image, s.image)


def test_unknown_kind_rejected_at_construction():
    with pytest.raises(ConfigurationError):
        AugmentOp("solarize")


def test_expand_with_augments_layout():
    samples = generate_synthetic(3, size=16, seed=5)
    kinds = ("rot90", "hflip", "gaussian_noise")
    out = expand_with_augments(samples, kinds, seed=9)
    assert len(out) == 3 * (1 + len(kinds))
    assert out[:3] == samples
    for s in out[3:]:
        assert s.augment in kinds
        assert s.id in {b.id for b in samples}


# ------------------------------------------------------------------ resize

def test_resize_identity_is_exact_copy():
    s = _sample(size=20)
    t = resize_to(s, (20, 20))
    assert np.array_equal(t.image, s.image)
    assert not np.shares_memory(t.image, s.image)
    assert np.array_equal(t.mask, s.mask)


def test_resize_double_matches_upsample_kernel():
    # 2x enlargement uses the same half-pixel sampling as the network
    # upsampling path; the two independent implementations must agree
    s = _sample(size=10)
    t = resize_to(s, (20, 20))
    want = upsample_bilinear2x_naive(s.image[None].astype(np.float64))[0]
    assert np.allclose(t.image, np.clip(want, 0, 1), atol=1e-6)


def test_resize_mask_stays_binary():
    s = _sample(size=21)
    for target in ((8, 8), (32, 32), (15, 27)):
        t = resize_to(s, target)
        assert t.mask.shape == (1,) + target
        assert set(np.unique(t.mask)) <= {0.0, 1.0}
        assert t.image.shape == (s.image.shape[0],) + target


def test_resize_nearest_double_is_pixel_repetition():
    s = _sample(size=9)
    t = resize_to(s, (18, 18))
    assert np.array_equal(t.mask[0], np.kron(s.mask[0], np.ones((2, 2), np.float32)))


def test_resize_constant_image_stays_constant():
    img = np.full((1, 8, 8), 0.375, dtype=np.float32)
    mask = np.zeros((1, 8, 8), dtype=np.float32)
    s = SegSample(image=img, mask=mask, id="c").validate()
    t = resize_to(s, (13, 7))
    assert np.allclose(t.image, 0.375, atol=1e-7)


# ------------------------------------------------------------------- split

def test_split_counts_floor_floor_remainder():
    samples = generate_synthetic(10, size=16, seed=0)
    tr, va, te = split(samples, (0.8, 0.1, 0.1), seed=0)
    assert (len(tr), len(va), len(te)) == (8, 1, 1)
    tr, va, te = split(samples[:7], (0.8, 0.1, 0.1), seed=0)
    assert (len(tr), len(va), len(te)) == (5, 0, 2)


def test_split_deterministic_and_seed_sensitive():
    samples = generate_synthetic(20, size=16, seed=0)
    a = split(samples, seed=3)
    b = split(samples, seed=3)
    for pa, pb in zip(a, b):
        assert [s.id for s in pa] == [s.id for s in pb]
    c = split(samples, seed=4)
    assert any([s.id for s in pa] != [s.id for s in pc]
               for pa, pc in zip(a, c))


def test_split_partitions_everything_once():
    samples = generate_synthetic(13, size=16, seed=2)
    tr, va, te = split(samples, (0.6, 0.2, 0.2), seed=1)
    got = sorted(s.id for part in (tr, va, te) for s in part)
    assert got == sorted(s.id for s in samples)


def test_split_keeps_augmented_variants_with_base():
    base = generate_synthetic(8, size=16, seed=6)
    corpus = expand_with_augments(base, ("rot90", "hflip"), seed=0)
    tr, va, te = split(corpus, (0.5, 0.25, 0.25), seed=5)
    membership = {}
    for name, part in (("train", tr), ("val", va), ("test", te)):
        for s in part:
            assert membership.setdefault(s.id, name) == name
    # every id carries all three variants into its partition
    for part in (tr, va, te):
        ids = [s.id for s in part]
        for i in set(ids):
            assert ids.count(i) == 3


def test_split_rejects():
    samples = generate_synthetic(4, size=16)
    with pytest.raises(ConfigurationError):
        split([])
    with pytest.raises(ConfigurationError):
        split(samples, (0.5, 0.5, 0.5))
    with pytest.raises(ConfigurationError):
        split(samples, (0.9, 0.2, -0.1))


# ---------------------------------------------------------------------- io

def test_image_round_trip_is_u8_quantization(tmp_path):
    s = _sample(size=14, channels=3)
    p = tmp_path / "img.png"
    save_image(p, s.image)
    back = load_image(p)
    want = np.clip(np.rint(s.image * 255.0), 0, 255) / 255.0
    assert back.shape == s.image.shape
    assert np.array_equal(back, want.astype(np.float32))


def test_gray_image_round_trip(tmp_path):
    s = _sample(size=14, channels=1)
    p = tmp_path / "img.png"
    save_image(p, s.image)
    back = load_image(p)
    assert back.shape == (1, 14, 14)
    want = np.clip(np.rint(s.image * 255.0), 0, 255) / 255.0
    assert np.array_equal(back, want.astype(np.float32))


def test_mask_round_trip_bit_exact(tmp_path):
    s = _sample(size=18)
    p = tmp_path / "m.png"
    save_mask(p, s.mask)
    assert np.array_equal(load_mask(p), s.mask)


def test_mask_pgm_round_trip(tmp_path):
    s = _sample(size=18)
    p = tmp_path / "m.pgm"
    save_mask(p, s.mask)
    assert np.array_equal(load_mask(p), s.mask)


def test_mask_file_holds_only_0_and_255(tmp_path):
    s = _sample(size=12)
    p = tmp_path / "m.png"
    save_mask(p, s.mask)
    from PIL import Image
    with Image.open(p) as im:
        vals = set(np.asarray(im).ravel().tolist())
    assert vals <= {0, 255}


def test_corpus_round_trip(tmp_path):
    samples = generate_synthetic(4, size=16, channels=1, seed=9)
    save_corpus(samples, tmp_path / "corpus")
    back = load_corpus(tmp_path / "corpus")
    assert [s.id for s in back] == sorted(s.id for s in samples)
    by_id = {s.id: s for s in samples}
    for s in back:
        orig = by_id[s.id]
        assert np.array_equal(s.mask, orig.mask)
        want = np.clip(np.rint(orig.image * 255.0), 0, 255) / 255.0
        assert np.array_equal(s.image, want.astype(np.float32))


def test_corpus_save_rejects_duplicate_ids(tmp_path):
    samples = generate_synthetic(2, size=16)
    dup = expand_with_augments(samples, ("rot90",))
    with pytest.raises(ConfigurationError, match="unique"):
        save_corpus(dup, tmp_path / "c")


def test_corpus_load_rejects_missing_mask(tmp_path):
    d = tmp_path / "c"
    d.mkdir()
    save_image(d / "a.png", np.zeros((1, 8, 8), np.float32))
    with pytest.raises(ConfigurationError, match="mask"):
        load_corpus(d)


def test_corpus_load_rejects_missing_or_empty_dir(tmp_path):
    with pytest.raises(ConfigurationError):
        load_corpus(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ConfigurationError):
        load_corpus(empty)


# -------------------------------------------------------------- validation

def test_sample_validate_rejects():
    ok_img = np.zeros((1, 8, 8), np.float32)
    ok_mask = np.zeros((1, 8, 8), np.float32)
    with pytest.raises(ConfigurationError):
        SegSample(image=np.zeros((2, 8, 8), np.float32), mask=ok_mask, id="x").validate()
    with pytest.raises(ConfigurationError):
        SegSample(image=ok_img, mask=np.zeros((1, 4, 4), np.float32), id="x").validate()
    with pytest.raises(ConfigurationError):
        SegSample(image=ok_img + 2.0, mask=ok_mask, id="x").validate()
    with pytest.raises(ConfigurationError):
        SegSample(image=ok_img, mask=ok_mask + 0.5, id="x").validate()
