import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussgrasp.grasp_core import (Calibration, EncoderMode, GaussianEncoderConfig, GraspMaps,
                                   GraspRectangle, PlanarGrasp, angle_difference, canonical_angle,
                                   decode_angle, decode_grasps, encode_angle, encode_grasp_maps,
                                   gaussian_quality_patch, pixel_to_world, rectangle_from_planar)

finite_angles = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


# --- angle encoding ---------------------------------------------------------

@pytest.mark.parametrize("theta, expected", [
    (0.0, (1.0, 0.0)),
    (math.pi / 4, (0.0, 1.0)),
    (math.pi / 3, (-0.5, 0.86603)),
])
def test_encode_angle_examples(theta, expected):
    assert encode_angle(theta) == pytest.approx(expected, abs=1e-5)


@pytest.mark.parametrize("cs, expected", [
    ((1.0, 0.0), 0.0),
    ((0.0, 1.0), math.pi / 4),
    ((-0.5, -0.86603), -math.pi / 3),
])
def test_decode_angle_examples(cs, expected):
    assert decode_angle(*cs) == pytest.approx(expected, abs=1e-4)


def test_angle_domain_errors():
    with pytest.raises(ValueError):
        encode_angle(math.nan)
    with pytest.raises(ValueError):
        encode_angle(math.inf)
    with pytest.raises(ValueError):
        decode_angle(0.0, 0.0)


@given(finite_angles)
def test_encode_angle_unit_norm_and_periodic(theta):
    c, s = encode_angle(theta)
    assert abs(c * c + s * s - 1) < 1e-12
    # theta + pi is itself rounded, so equality holds to rounding only
    c2, s2 = encode_angle(theta + math.pi)
    assert c2 == pytest.approx(c, abs=1e-12) and s2 == pytest.approx(s, abs=1e-12)


def test_decode_encode_roundtrip_10k():
    rng = np.random.default_rng(0)
    for theta in rng.uniform(-20, 20, 10_000):
        back = decode_angle(*encode_angle(theta))
        assert -math.pi / 2 <= back < math.pi / 2
        assert angle_difference(back, canonical_angle(theta)) < 1e-9


@pytest.mark.parametrize("theta, expected", [
    (math.pi / 2, -math.pi / 2),
    (-math.pi / 2, -math.pi / 2),
    (math.pi, 0.0),
    (3 * math.pi / 4, -math.pi / 4),
])
def test_canonical_angle(theta, expected):
    assert canonical_angle(theta) == pytest.approx(expected, abs=1e-12)


# --- Gaussian patch ---------------------------------------------------------

def test_gaussian_patch_values():
    cfg = GaussianEncoderConfig.isotropic(16)
    patch = gaussian_quality_patch((100, 80), cfg, (200, 200))
    assert patch[80, 100] == 1.0
    assert patch[80, 116] == pytest.approx(0.60653, abs=1e-5)   # exp(-0.5)
    assert patch[112, 100] == pytest.approx(0.13534, abs=1e-5)  # exp(-2)
    assert patch.max() == 1.0 and patch.min() > 0


def test_gaussian_patch_rounds_center():
    cfg = GaussianEncoderConfig.isotropic(8)
    patch = gaussian_quality_patch((10.4, 20.6), cfg, (64, 64))
    assert np.unravel_index(np.argmax(patch), patch.shape) == (21, 10)
    assert patch[21, 10] == 1.0


def test_gaussian_patch_outside_is_error():
    cfg = GaussianEncoderConfig()
    with pytest.raises(ValueError):
        gaussian_quality_patch((64, 3), cfg, (64, 64))
    with pytest.raises(ValueError):
        gaussian_quality_patch((-1, 3), cfg, (64, 64))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 47), st.integers(0, 47), st.floats(1, 40), st.floats(1, 40))
def test_gaussian_patch_monotone_along_rays(x0, y0, tx, ty):
    patch = gaussian_quality_patch((x0, y0), GaussianEncoderConfig(T_x=tx, T_y=ty), (48, 48))
    row, col = patch[y0], patch[:, x0]
    assert np.all(np.diff(row[x0:]) <= 0) and np.all(np.diff(row[:x0 + 1]) >= 0)
    assert np.all(np.diff(col[y0:]) <= 0) and np.all(np.diff(col[:y0 + 1]) >= 0)


# --- map encoding -----------------------------------------------------------

def test_encode_empty_gives_zero_maps():
    maps = encode_grasp_maps([], GaussianEncoderConfig(), (32, 40))
    assert maps.shape == (32, 40)
    for m in maps.as_tuple():
        assert not m.any()


def test_encode_single_grasp():
    cfg = GaussianEncoderConfig.isotropic(16, w_max=150)
    maps = encode_grasp_maps([GraspRectangle(150, 150, 0, 60, 30)], cfg, (300, 300))
    assert np.unravel_index(np.argmax(maps.quality), maps.shape) == (150, 150)
    assert maps.quality[150, 150] == 1.0
    assert maps.width[150, 150] == pytest.approx(0.4)
    assert maps.cos2theta[150, 150] == 1.0 and maps.sin2theta[150, 150] == 0.0
    (g,) = decode_grasps(maps, k=1, smooth_sigma=0, w_max=150)
    assert (g.u, g.v, g.phi, g.width) == (150, 150, 0.0, pytest.approx(60))


def test_encode_overlap_is_max_not_sum():
    cfg = GaussianEncoderConfig.isotropic(16)
    a, b = GraspRectangle(100, 100, 0, 40, 20), GraspRectangle(108, 100, 0, 40, 20)
    maps = encode_grasp_maps([a, b], cfg, (200, 200))
    pa = gaussian_quality_patch(a.center, cfg, (200, 200))
    pb = gaussian_quality_patch(b.center, cfg, (200, 200))
    # brute-force per-pixel max oracle
    oracle = np.array([[max(pa[i, j], pb[i, j]) for j in range(200)] for i in range(200)])
    np.testing.assert_array_equal(maps.quality, oracle)
    assert maps.quality[100, 104] == pytest.approx(math.exp(-16 / 512))
    assert maps.quality[100, 104] < pa[100, 104] + pb[100, 104]


def test_encode_last_writer_wins_on_angle():
    cfg = GaussianEncoderConfig()
    a = GraspRectangle(50, 50, 0.0, 60, 60)
    b = GraspRectangle(50, 50, math.pi / 4, 30, 30)
    maps = encode_grasp_maps([a, b], cfg, (100, 100))
    assert maps.sin2theta[50, 50] == pytest.approx(1.0)
    assert maps.width[50, 50] == pytest.approx(30 / 150)


def test_background_convention_and_binary_mode():
    rect = GraspRectangle(40, 40, 0.3, 45, 24)
    for mode in EncoderMode:
        for region in ("center-third", "full-rect"):
            cfg = GaussianEncoderConfig(mode=mode, fill_region=region)
            maps = encode_grasp_maps([rect], cfg, (80, 80))
            zero = maps.quality == 0
            assert not maps.cos2theta[zero].any() and not maps.width[zero].any()
            assert 0 <= maps.quality.min() and maps.quality.max() == 1.0
    binary = encode_grasp_maps([rect], GaussianEncoderConfig(mode="binary"), (80, 80))
    assert set(np.unique(binary.quality)) == {0.0, 1.0}
    # centre third of a 45 x 24 box: about 15 x 8 pixels
    assert 90 <= binary.quality.sum() <= 160


def test_width_clipped_to_unit():
    maps = encode_grasp_maps([GraspRectangle(20, 20, 0, 400, 20)], GaussianEncoderConfig(w_max=150), (40, 40))
    assert maps.width.max() == 1.0


# --- decoding ---------------------------------------------------------------

def test_decode_single_spike():
    q = np.zeros((40, 40))
    q[20, 10] = 1.0
    maps = GraspMaps(q, np.ones_like(q), np.zeros_like(q), np.full_like(q, 0.2))
    (g,) = decode_grasps(maps, k=1, smooth_sigma=0)
    assert (g.u, g.v) == (10, 20)
    assert g.width == pytest.approx(30)


def test_decode_flat_map_tiebreak():
    z = np.zeros((10, 12))
    (g,) = decode_grasps(GraspMaps(z + 0.5, z + 1, z, z), k=1, smooth_sigma=0)
    assert (g.u, g.v) == (0, 0)
    gs = decode_grasps(GraspMaps(z + 0.5, z + 1, z, z), k=3, smooth_sigma=0)
    assert (gs[0].u, gs[0].v) == (0, 0)


def _random_rect(rng, size=300):
    w = rng.uniform(10, 140)
    return GraspRectangle(rng.uniform(0, size - 1), rng.uniform(0, size - 1), rng.uniform(-math.pi / 2, math.pi / 2),
                          w, rng.uniform(5, 60))


def test_roundtrip_100_random_grasps():
    rng = np.random.default_rng(1)
    cfg = GaussianEncoderConfig.isotropic(16, w_max=150)
    for _ in range(100):
        r = _random_rect(rng)
        (g,) = decode_grasps(encode_grasp_maps([r], cfg, (300, 300)), k=1, smooth_sigma=0, w_max=150)
        assert math.hypot(g.u - r.x, g.v - r.y) <= 1
        assert angle_difference(g.phi, r.theta) <= 1e-6
        assert abs(g.width - r.w) <= 1


def _local_maxima_oracle(q):
    peaks = []
    h, w = q.shape
    for i in range(h):
        for j in range(w):
            nb = q[max(0, i - 1):i + 2, max(0, j - 1):j + 2]
            if q[i, j] >= nb.max() and q[i, j] > 0.5:
                peaks.append((j, i))
    return peaks


def test_decode_two_grasps_top2():
    cfg = GaussianEncoderConfig.isotropic(8)
    a, b = GraspRectangle(30.2, 40.7, 0.2, 30, 15), GraspRectangle(90, 70, -1.0, 50, 20)
    maps = encode_grasp_maps([a, b], cfg, (120, 120))
    found = decode_grasps(maps, k=2, smooth_sigma=0)
    assert len(found) == 2
    oracle = _local_maxima_oracle(maps.quality)
    assert sorted((g.u, g.v) for g in found) == sorted(oracle)
    for r in (a, b):
        assert min(math.hypot(g.u - r.x, g.v - r.y) for g in found) <= 1


def test_decode_smoothing_keeps_peak():
    cfg = GaussianEncoderConfig.isotropic(16)
    maps = encode_grasp_maps([GraspRectangle(64, 40, 0.5, 40, 20)], cfg, (128, 128))
    (g,) = decode_grasps(maps, k=1, smooth_sigma=2)
    assert (g.u, g.v) == (64, 40)
    assert 0 < g.quality <= 1


# --- rectangle reconstruction ------------------------------------------------

def test_rectangle_from_planar():
    r = rectangle_from_planar(PlanarGrasp(5, 6, 0, 10, 0.9), 0.5)
    assert (r.x, r.y, r.theta, r.w, r.h) == (5, 6, 0, 10, 5)
    r2 = rectangle_from_planar(PlanarGrasp(0, 0, math.pi / 4, 8, 0.9))
    assert (r2.theta, r2.w, r2.h) == (pytest.approx(math.pi / 4), 8, 4)
    corners = r.corners()
    # corner-expansion oracle: centre +- (5, 2.5)
    assert sorted(map(tuple, corners.round(12))) == sorted([(0, 3.5), (10, 3.5), (10, 8.5), (0, 8.5)])
    with pytest.raises(ValueError):
        rectangle_from_planar(PlanarGrasp(0, 0, 0, 0, 0.5))


def test_rectangle_invariants():
    with pytest.raises(ValueError):
        GraspRectangle(0, 0, 0, 0, 1)
    assert GraspRectangle(0, 0, math.pi / 2, 1, 1).theta == pytest.approx(-math.pi / 2)
    with pytest.raises(ValueError):
        PlanarGrasp(0, 0, 0, 1, 1.5)


# --- frames -----------------------------------------------------------------

def test_pixel_to_world_identity():
    calib = Calibration(fx=500, fy=500, cx=320, cy=240)
    w = pixel_to_world(PlanarGrasp(320, 240, 0.2, 50, 0.7), 1.0, calib)
    np.testing.assert_allclose(w.p, [0, 0, 1])
    assert w.q == 0.7 and w.varphi == pytest.approx(0.2)
    assert w.w == pytest.approx(0.1)


def test_pixel_to_world_translation_and_rotation():
    t = np.eye(4)
    t[2, 3] = 0.5
    w = pixel_to_world(PlanarGrasp(320, 240, 0.0, 10, 0.5), 1.0, Calibration(500, 500, 320, 240, t))
    np.testing.assert_allclose(w.p, [0, 0, 1.5])

    yaw = 0.3
    rot = np.eye(4)
    rot[:2, :2] = [[math.cos(yaw), -math.sin(yaw)], [math.sin(yaw), math.cos(yaw)]]
    calib = Calibration(400, 400, 100, 100, rot)
    w = pixel_to_world(PlanarGrasp(140, 100, 0.1, 10, 0.5), 2.0, calib)
    # matrix-application oracle
    cam = np.array([(140 - 100) * 2 / 400, 0, 2.0, 1])
    np.testing.assert_allclose(w.p, (rot @ cam)[:3])
    assert w.varphi == pytest.approx(0.4)


def test_pixel_to_world_errors():
    calib = Calibration(500, 500, 320, 240)
    with pytest.raises(ValueError):
        pixel_to_world(PlanarGrasp(0, 0, 0, 1, 0.5), 0.0, calib)
    bad = np.eye(4)
    bad[3] = [0, 0, 1, 1]
    with pytest.raises(ValueError):
        Calibration(500, 500, 320, 240, bad)
