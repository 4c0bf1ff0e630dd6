import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from advtrack import frames
from advtrack.errors import BadDimensions, BadMagic, EmptyRegion, ShapeMismatch
from advtrack.geometry import BBox


def test_apply_zero_is_identity(rng):
    f = rng.uniform(0, 255, (6, 5, 3))
    assert np.array_equal(frames.apply(f, np.zeros_like(f)), f)


def test_apply_clips_at_top():
    f = np.full((3, 3, 3), 255.0)
    assert np.all(frames.apply(f, np.full_like(f, 5.0)) == 255.0)


def test_apply_matches_scalar_loop(rng):
    f = rng.uniform(0, 255, (4, 5, 3))
    e = rng.uniform(-40, 40, f.shape)
    ref = np.empty_like(f)
    for idx in np.ndindex(f.shape):
        v = f[idx] + e[idx]
        ref[idx] = 0.0 if v < 0 else 255.0 if v > 255 else v
    assert np.array_equal(frames.apply(f, e), ref)


def test_apply_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        frames.apply(np.zeros((3, 3, 3)), np.zeros((3, 4, 3)))


def test_crop_full_frame(rng):
    f = rng.uniform(0, 255, (8, 10, 3))
    assert np.array_equal(frames.crop(f, BBox(5, 4, 10, 8)), f)


def test_crop_outside_is_channel_mean(rng):
    f = rng.uniform(0, 255, (8, 10, 3))
    out = frames.crop(f, BBox(100, 100, 4, 3))
    assert out.shape == (3, 4, 3)
    assert np.allclose(out, f.mean(axis=(0, 1)))


def test_crop_checkerboard_corner():
    board = (np.indices((4, 4)).sum(axis=0) % 2).astype(float)[:, :, None] * 255
    out = frames.crop(board, BBox(1, 1, 2, 2))
    # manual indices: rows 0..1, cols 0..1 -> [[0, 255], [255, 0]]
    assert out[:, :, 0].tolist() == [[0, 255], [255, 0]]


def test_crop_empty_region():
    with pytest.raises(EmptyRegion):
        frames.crop(np.zeros((4, 4, 3)), BBox(2, 2, 0.4, 3))


def test_embed_zero_patch():
    out = frames.embed((6, 6, 3), BBox(3, 3, 2, 2), np.zeros((2, 2, 3)))
    assert not out.any()


def test_embed_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        frames.embed((6, 6, 3), BBox(3, 3, 2, 2), np.zeros((3, 2, 3)))


def test_embed_disjoint_sum_matches_loop(rng):
    shape = (10, 12, 3)
    r1, r2 = BBox(3, 3, 4, 4), BBox(9, 7, 4, 6)
    p1, p2 = rng.normal(size=(4, 4, 3)), rng.normal(size=(6, 4, 3))
    ref = np.zeros(shape)
    for (region, patch) in ((r1, p1), (r2, p2)):
        x0, y0, w, h = frames.region_bounds(region)
        for y in range(h):
            for x in range(w):
                ref[y0 + y, x0 + x] += patch[y, x]
    got = frames.embed(shape, r1, p1) + frames.embed(shape, r2, p2)
    assert np.array_equal(got, ref)


regions = st.builds(BBox, st.floats(-5, 25), st.floats(-5, 25), st.floats(1, 14), st.floats(1, 14))


@given(regions)
def test_crop_embed_roundtrip(region):
    f = np.random.default_rng(0).uniform(0, 255, (20, 20, 3))
    patch = frames.crop(f, region)
    back = frames.crop(frames.embed(f.shape, region, patch), region)
    mask = frames.inside_mask(f.shape, region)
    assert np.array_equal(back[mask], patch[mask])


@given(hnp.arrays(np.float64, (4, 4, 3), elements=st.floats(0, 255)),
       hnp.arrays(np.float64, (4, 4, 3), elements=st.floats(-300, 300)))
def test_apply_stays_in_range(f, e):
    out = frames.apply(f, e)
    assert out.min() >= 0 and out.max() <= 255
    assert np.array_equal(frames.apply(f, np.zeros_like(f)), f)


def test_ppm_roundtrip(tmp_path, rng):
    f = np.floor(rng.uniform(0, 256, (7, 9, 3)))
    p = tmp_path / "a.ppm"
    frames.save_ppm(p, f)
    assert p.read_bytes()[:2] == b"P6"
    assert np.array_equal(frames.load_ppm(p), f)


def test_pgm_roundtrip(tmp_path, rng):
    f = np.floor(rng.uniform(0, 256, (5, 4, 1)))
    frames.save_ppm(tmp_path / "g.pgm", f)
    assert np.array_equal(frames.load_ppm(tmp_path / "g.pgm"), f)


def test_ppm_with_comment(tmp_path):
    p = tmp_path / "c.ppm"
    p.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6]))
    assert frames.load_ppm(p)[0, 1].tolist() == [4, 5, 6]


def test_ppm_errors(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P3\n1 1\n255\n0 0 0")
    with pytest.raises(BadMagic):
        frames.load_ppm(p)
    p.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(BadDimensions):
        frames.load_ppm(p)
    p.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(BadDimensions):
        frames.load_ppm(p)


def test_grid_roundtrip_bit_exact(tmp_path, rng):
    g = rng.normal(0, 3, (5, 7, 3))
    g[0, 0, 0] = 0.125
    p = tmp_path / "e.grid"
    frames.save_grid(p, g)
    back = frames.load_grid(p)
    assert back.tobytes() == g.tobytes()
    assert back[0, 0, 0] == 0.125
    hdr = frames.read_grid_header(p)
    assert (hdr["H"], hdr["W"], hdr["C"]) == (5, 7, 3)


def test_grid_errors(tmp_path):
    p = tmp_path / "x.grid"
    p.write_bytes(np.zeros(8).tobytes())
    with pytest.raises(BadMagic):
        frames.load_grid(p)
    frames.save_grid(p, np.ones((2, 2, 1)))
    with open(p, "ab") as fh:
        fh.write(b"\0" * 8)
    with pytest.raises(BadDimensions):
        frames.load_grid(p)
    p.write_bytes(b"short")
    with pytest.raises(BadDimensions):
        frames.load_grid(p)


def test_visualize_perturbation():
    assert not frames.visualize_perturbation(np.zeros((2, 2, 3))).any()
    assert np.all(frames.visualize_perturbation(np.ones((2, 2, 3))) == 255)
    # 0.004 * 255 = 1.02
    assert np.allclose(frames.visualize_perturbation(np.full((2, 2, 3), 0.004)), 1.02)
    assert np.allclose(frames.visualize_perturbation(np.full((1, 1, 3), -0.004)), 1.02)


@settings(max_examples=30)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5), st.sampled_from([1, 3])),
                  elements=st.floats(-1e6, 1e6)))
def test_grid_roundtrip_property(g):
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "g.grid")
        frames.save_grid(p, g)
        assert frames.load_grid(p).tobytes() == np.ascontiguousarray(g).tobytes()
