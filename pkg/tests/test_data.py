import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfigf.data import (
    ImagePair, SyntheticSceneSpec, bicubic_resize, boundary_band, cubic, edge_overlap, make_gdsr_pair,
    make_mfif_pair, mask_agreement, read_image, write_image,
)
from sfigf.girt import FormatError, read_container, read_girt, write_container, write_girt
from sfigf.losses import focus_masks
from sfigf.metrics import rmse


def rand(*shape, seed=0):
    return np.random.default_rng(seed).random(shape)


@pytest.mark.parametrize("channels,ext", [(1, "pgm"), (3, "ppm")])
@pytest.mark.parametrize("bits", [8, 16])
def test_netpbm_round_trip(tmp_path, channels, ext, bits):
    maxval = 2**bits - 1
    img = np.random.default_rng(0).integers(0, maxval + 1, (channels, 5, 7)) / maxval
    path = tmp_path / f"x.{ext}"
    write_image(img, path, bits=bits)
    np.testing.assert_array_equal(read_image(path), img)


def test_pgm_16bit_is_big_endian(tmp_path):
    path = tmp_path / "d.pgm"
    path.write_bytes(b"P5\n# depth\n2 1\n65535\n" + bytes([0x01, 0x02, 0xFF, 0xFF]))
    np.testing.assert_array_equal(read_image(path), [[[0x0102 / 65535, 1.0]]])


def test_netpbm_errors(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError, match="magic"):
        read_image(bad)
    bad.write_bytes(b"P5\n1 1\n70000\n\x00")
    with pytest.raises(FormatError, match="maxval"):
        read_image(bad)
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(FormatError, match="truncated"):
        read_image(bad)
    bad.write_bytes(b"P5\nx 4\n255\n\x00")
    with pytest.raises(FormatError, match="header"):
        read_image(bad)


def test_girt_layout_and_round_trip(tmp_path):
    arr = np.array([[1.5, -2.0, 0.0]])
    path = tmp_path / "t.girt"
    write_girt(path, arr)
    raw = path.read_bytes()
    assert raw[:4] == b"GIRT"
    assert raw[4:16] == (2).to_bytes(4, "little") + (1).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert raw[16:24] == np.float64(1.5).tobytes() and len(raw) == 16 + 24
    back = read_girt(path)
    assert back.tobytes() == arr.tobytes()
    np.testing.assert_array_equal(read_image(path), arr[None])


def test_girt_errors(tmp_path):
    path = tmp_path / "t.girt"
    path.write_bytes(b"GIRX" + bytes(8))
    with pytest.raises(FormatError, match="magic"):
        read_girt(path)
    write_girt(path, np.ones(3))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(FormatError, match="truncated"):
        read_girt(path)
    write_girt(path, np.ones(3))
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(FormatError, match="trailing"):
        read_girt(path)


def test_container_round_trip(tmp_path):
    path = tmp_path / "c.girc"
    tensors = {"a.weight": rand(2, 3), "b": np.array(4.0)}
    write_container(path, {"model": "sfigf", "n": 4}, tensors)
    header, back = read_container(path)
    assert header == {"model": "sfigf", "n": "4"}
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].tobytes() == tensors[k].tobytes()


def test_cubic_kernel():
    assert cubic(np.array([0.0]))[0] == 1.0
    np.testing.assert_array_equal(cubic(np.array([1.0, 2.0, -1.0, 2.5])), 0.0)
    x = np.linspace(-0.99, 0.99, 7)
    np.testing.assert_allclose(cubic(x) + cubic(x + 1) + cubic(x - 1) + cubic(x + 2) + cubic(x - 2), 1.0)


def test_resize_identity_and_constants():
    x = rand(2, 9, 11)
    np.testing.assert_allclose(bicubic_resize(x, 1.0), x, atol=1e-12)
    for s in (0.25, 0.5, 1.7, 4.0):
        out = bicubic_resize(np.full((8, 12), 0.6), s)
        np.testing.assert_allclose(out, 0.6, atol=1e-12)
    assert bicubic_resize(x, 0.5).shape == (2, 4, 6)
    with pytest.raises(ValueError):
        bicubic_resize(x, 0.0)


def test_downsample_ramp_is_analytic():
    ramp = np.tile(np.arange(40.0) * 0.01, (40, 1))
    down = bicubic_resize(ramp, 0.5)
    centers = (np.arange(20) + 0.5) * 2 - 0.5
    np.testing.assert_allclose(down[3:-3, 3:-3], np.tile(centers * 0.01, (20, 1))[3:-3, 3:-3], atol=1e-10)


def test_upsample_interpolates_samples():
    # at scale 4 every fourth output sits between inputs; linear data stays linear inside
    x = np.tile(np.arange(10.0), (10, 1))
    up = bicubic_resize(x, 4.0)
    centers = (np.arange(40) + 0.5) / 4 - 0.5
    np.testing.assert_allclose(up[8:-8, 8:-8], np.tile(centers, (40, 1))[8:-8, 8:-8], atol=1e-12)


def test_gdsr_pair():
    spec = SyntheticSceneSpec(size=32, seed=4)
    a, b = make_gdsr_pair(spec, 4), make_gdsr_pair(spec, 4)
    assert np.array_equal(a.guide, b.guide) and np.array_equal(a.target, b.target)
    assert a.guide.shape == (3, 32, 32) and a.target.shape == a.ground_truth.shape == (1, 32, 32)
    for arr in (a.guide, a.target, a.ground_truth):
        assert arr.min() >= 0 and arr.max() <= 1
    assert rmse(a.target, a.ground_truth) > 0
    assert edge_overlap(a) >= 0.8
    with pytest.raises(ValueError, match="divisible"):
        make_gdsr_pair(SyntheticSceneSpec(size=30), 4)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(2, 5))
def test_gdsr_edges_shared(seed, levels):
    pair = make_gdsr_pair(SyntheticSceneSpec(size=32, depth_levels=levels, seed=seed), 2)
    assert edge_overlap(pair) >= 0.8
    assert rmse(pair.target, pair.ground_truth) > 0


def test_mfif_pair():
    spec = SyntheticSceneSpec(size=48, seed=2)
    p = make_mfif_pair(spec)
    q = make_mfif_pair(spec)
    assert np.array_equal(p.guide, q.guide) and p.task == "mfif"
    near = p.focus_mask
    # each pixel is sharp in at least one source
    sharp = p.ground_truth
    assert np.array_equal(p.guide[0][near == 1], sharp[0][near == 1])
    assert np.array_equal(p.target[0][near == 0], sharp[0][near == 0])
    detected = focus_masks(p.guide, p.target).s1
    assert mask_agreement(detected, near) >= 0.9


def test_boundary_band():
    m = np.zeros((10, 10))
    m[:, 5:] = 1
    band = boundary_band(m, 2)
    assert band[:, 3:7].all() and not band[:, :3].any() and not band[:, 7:].any()


def test_image_pair_validation():
    with pytest.raises(ValueError, match="task"):
        ImagePair(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), task="video")
    with pytest.raises(ValueError, match="aligned"):
        ImagePair(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))
