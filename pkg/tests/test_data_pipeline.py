import math
import warnings

import numpy as np
import pytest

from gaussgrasp.data import (AugmentError, AugmentSpec, DatasetError, DatasetWarning, InputError, InputSpec,
                             ParseSummary, SampleRecord, Source, SplitError, assemble_input, augment,
                             make_kfold_splits, make_splits, parse_cornell, parse_jacquard, read_split_file,
                             rectangle_from_vertices, write_split_file)
from gaussgrasp.data.dataset import GraspDataset
from gaussgrasp.data.imageio import pointcloud_to_depth, write_depth
from gaussgrasp.data.inputs import fill_invalid_depth, normalize_depth
from gaussgrasp.grasp_core import GaussianEncoderConfig, GraspRectangle, angle_difference, decode_grasps, encode_grasp_maps

from synthetic import write_cornell, write_jacquard


# --- Cornell ----------------------------------------------------------------

def test_vertices_axis_aligned():
    r = rectangle_from_vertices([(0, 0), (10, 0), (10, 4), (0, 4)])
    assert (r.x, r.y, r.theta, r.w, r.h) == (5, 2, 0, 10, 4)


def test_vertices_rotated_square():
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    base = np.array([(0, 0), (10, 0), (10, 10), (0, 10)], float)
    rot = base @ np.array([[c, s], [-s, c]])
    r = rectangle_from_vertices(rot)
    assert r.theta == pytest.approx(math.pi / 4)
    assert r.w == pytest.approx(10) and r.h == pytest.approx(10)


def test_vertices_flipped_convention():
    r = rectangle_from_vertices([(0, 0), (10, 0), (10, 4), (0, 4)], opening_edge_first=False)
    assert (r.w, r.h) == (pytest.approx(4), pytest.approx(10))
    assert r.theta == pytest.approx(-math.pi / 2)


def test_parse_cornell_synthetic(tmp_path):
    write_cornell(tmp_path, n_samples=5, n_objects=2)
    recs = parse_cornell(tmp_path)
    assert [r.sample_id for r in recs] == [f"pcd{100 + i:04d}" for i in range(5)]
    assert all(r.source is Source.CORNELL and r.grasp_rects for r in recs)
    assert {r.object_id for r in recs} == {"0", "1"}
    assert all(r.rgb_path is not None and r.depth_path is not None for r in recs)


def test_parse_cornell_nan_and_missing(tmp_path):
    d = tmp_path / "01"
    d.mkdir()
    (d / "pcd0100cpos.txt").write_text("0 0\n10 0\n10 4\n0 4\nNaN NaN\n1 1\n2 2\n3 3\n")
    write_depth(d / "pcd0100d.tiff", np.ones((8, 8), np.float32))
    write_depth(d / "pcd0101d.tiff", np.ones((8, 8), np.float32))
    summary = ParseSummary()
    with pytest.warns(DatasetWarning) as rec:
        recs = parse_cornell(tmp_path, summary=summary)
    assert len(recs) == 1 and len(recs[0].grasp_rects) == 1
    assert summary.skipped_grasps == 1 and summary.skipped_samples == ["pcd0101"]
    assert len(rec) == 2


def test_parse_cornell_empty_dir(tmp_path):
    with pytest.raises(DatasetError):
        parse_cornell(tmp_path)


def test_parse_cornell_885_records(tmp_path):
    d = tmp_path / "02"
    d.mkdir()
    depth = np.ones((4, 4), np.float32)
    for i in range(885):
        write_depth(d / f"pcd{i:04d}d.npy", depth)
        (d / f"pcd{i:04d}cpos.txt").write_text("0 0\n3 0\n3 2\n0 2\n")
    assert len(parse_cornell(tmp_path)) == 885


def test_pointcloud_depth(tmp_path):
    p = tmp_path / "pcd0100.txt"
    header = "# .PCD v.7\nFIELDS x y z rgb index\nPOINTS 2\nDATA ascii\n"
    p.write_text(header + "0.1 0.2 0.9 0 5\n0.1 0.2 1.1 0 12\n")
    depth = pointcloud_to_depth(p, (4, 4))
    assert depth[1, 1] == pytest.approx(0.9) and depth[3, 0] == pytest.approx(1.1)
    assert np.count_nonzero(depth) == 2


# --- Jacquard ---------------------------------------------------------------

def _jacq_scene(tmp_path, lines):
    d = tmp_path / "obj1"
    d.mkdir(parents=True, exist_ok=True)
    write_depth(d / "0_obj1_perfect_depth.tiff", np.ones((16, 16), np.float32))
    (d / "0_obj1_grasps.txt").write_text("\n".join(lines) + "\n")
    return d


def test_parse_jacquard_lines(tmp_path):
    _jacq_scene(tmp_path, ["100;120;0;50;20", "100;120;90;50;20", "100;120;0;50;20"])
    (rec,) = parse_jacquard(tmp_path)
    r0, r1 = rec.grasp_rects
    assert (r0.x, r0.y, r0.theta, r0.w, r0.h) == (100, 120, 0, 50, 20)
    assert r1.theta == pytest.approx(-math.pi / 2)
    assert rec.object_id == "obj1" and rec.sample_id == "0_obj1"


def test_parse_jacquard_malformed_line(tmp_path):
    lines = ["10;12;0;5;2", "11;12;10;5;2", "oops;1;2", "12;12;20;5;2"]
    _jacq_scene(tmp_path, lines)
    with pytest.warns(DatasetWarning) as rec:
        (r,) = parse_jacquard(tmp_path)
    assert len(r.grasp_rects) == len(lines) - 1
    assert len(rec) == 1


def test_parse_jacquard_missing_depth(tmp_path):
    d = _jacq_scene(tmp_path, ["1;1;0;5;2"])
    (d / "1_obj1_grasps.txt").write_text("1;1;0;5;2\n")
    with pytest.warns(DatasetWarning):
        recs = parse_jacquard(tmp_path)
    assert [r.sample_id for r in recs] == ["0_obj1"]


def test_parse_jacquard_synthetic(tmp_path):
    write_jacquard(tmp_path, n_scenes=3, views=2)
    recs = parse_jacquard(tmp_path)
    assert len(recs) == 6 and len({r.object_id for r in recs}) == 3


# --- input assembly ----------------------------------------------------------

@pytest.fixture
def cornell_record(tmp_path):
    write_cornell(tmp_path, n_samples=1)
    return parse_cornell(tmp_path)[0]


@pytest.mark.parametrize("mode, channels", [("d", 1), ("rgb", 3), ("rgbd", 4)])
def test_assemble_shapes(cornell_record, mode, channels):
    img, rects = assemble_input(cornell_record, InputSpec(channels=mode, size=300))
    assert img.shape == (channels, 300, 300) and img.dtype == np.float32
    assert rects and all(0 <= r.x < 300 and 0 <= r.y < 300 for r in rects)


def test_assemble_label_geometry(cornell_record):
    img, rects = assemble_input(cornell_record, InputSpec(size=240))
    scale = 240 / 480
    for src, dst in zip(cornell_record.grasp_rects, rects):
        assert dst.x == pytest.approx((src.x - 80 + 0.5) * scale - 0.5)
        assert dst.w == pytest.approx(src.w * scale) and dst.theta == src.theta


def test_depth_normalization(cornell_record):
    img, _ = assemble_input(cornell_record, InputSpec(size=300))
    assert abs(img[0].mean()) < 1e-6
    assert img.min() >= -1 and img.max() <= 1


def test_constant_depth_normalizes_to_zero(tmp_path):
    write_depth(tmp_path / "d.tiff", np.full((40, 60), 0.8, np.float32))
    rec = SampleRecord("s", "o", tmp_path / "d.tiff", [GraspRectangle(30, 20, 0, 10, 5)], Source.CORNELL)
    img, rects = assemble_input(rec, InputSpec(size=20))
    assert not img.any() and len(rects) == 1


def test_normalize_depth_rescales_large_range():
    d = np.linspace(0, 1000, 400).reshape(20, 20)
    out = normalize_depth(d)
    assert abs(out.mean()) < 1e-12 and np.abs(out).max() == pytest.approx(1.0)


def test_rgb_missing_is_input_error(tmp_path):
    write_depth(tmp_path / "d.tiff", np.ones((8, 8), np.float32))
    rec = SampleRecord("s", "o", tmp_path / "d.tiff", [], Source.CORNELL)
    with pytest.raises(InputError):
        assemble_input(rec, InputSpec(channels="rgbd", size=8))


def test_fill_invalid_depth():
    d = np.array([[1.0, 0.0, 3.0], [np.nan, 2.0, -1.0]])
    out = fill_invalid_depth(d)
    assert np.all(out > 0) and out[0, 0] == 1.0 and out[1, 1] == 2.0
    assert out[0, 1] in (1.0, 2.0, 3.0)


def test_input_spec_invariants():
    with pytest.raises(ValueError):
        InputSpec(size=302)


# --- augmentation ------------------------------------------------------------

def _img_and_rects(size=64):
    rng = np.random.default_rng(0)
    img = rng.normal(size=(2, size, size)).astype(np.float32)
    rects = [GraspRectangle(20, 30, 0.3, 12, 6), GraspRectangle(40, 36, -1.0, 16, 8)]
    return img, rects


def test_augment_identity():
    img, rects = _img_and_rects()
    out, out_rects = augment(img, rects, AugmentSpec.identity(), np.random.default_rng(0))
    np.testing.assert_array_equal(out, img)
    assert out_rects == rects


def test_augment_rotation_quarter_turn():
    size = 64
    c = (size - 1) / 2
    img = np.zeros((1, size, size), np.float32)
    img[0, 30, 20] = 1.0
    rects = [GraspRectangle(20, 30, 0.3, 12, 6)]
    spec = AugmentSpec(rotate=(math.pi / 2, math.pi / 2), zoom=(1, 1), crop=0)
    out, (r,) = augment(img, rects, spec, np.random.default_rng(0))
    # affine oracle
    assert (r.x, r.y) == (pytest.approx(c - (30 - c)), pytest.approx(c + (20 - c)))
    assert angle_difference(r.theta, 0.3 + math.pi / 2) < 1e-12
    assert np.unravel_index(np.argmax(out[0]), out[0].shape) == (round(r.y), round(r.x))


def test_augment_zoom_halves_sizes():
    img, rects = _img_and_rects()
    spec = AugmentSpec(rotate=(0, 0), zoom=(0.5, 0.5), crop=0)
    _, out = augment(img, rects, spec, np.random.default_rng(0))
    assert [(r.w, r.h) for r in out] == [(6, 3), (8, 4)]


def test_augment_deterministic_and_consistent():
    img, rects = _img_and_rects()
    spec = AugmentSpec(crop=8)
    a = augment(img, rects, spec, np.random.default_rng(42))
    b = augment(img, rects, spec, np.random.default_rng(42))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_augment_label_consistency_roundtrip():
    """Re-encoding transformed labels and decoding recovers the transformed centre."""
    size = 96
    rng = np.random.default_rng(3)
    cfg = GaussianEncoderConfig.isotropic(4)
    for _ in range(20):
        rect = GraspRectangle(rng.uniform(30, 66), rng.uniform(30, 66), rng.uniform(-1.5, 1.5), 20, 10)
        img = np.zeros((1, size, size), np.float32)
        _, out = augment(img, [rect], AugmentSpec(crop=6), rng)
        (r,) = out
        (g,) = decode_grasps(encode_grasp_maps(out, cfg, (size, size)), smooth_sigma=0)
        assert math.hypot(g.u - r.x, g.v - r.y) <= 1


def test_augment_all_dropped_errors():
    img = np.zeros((1, 32, 32), np.float32)
    rects = [GraspRectangle(1, 1, 0, 4, 2)]
    spec = AugmentSpec(rotate=(math.pi, math.pi), zoom=(1.5, 1.5), crop=0, max_retries=3)
    with pytest.raises(AugmentError):
        augment(img, rects, spec, np.random.default_rng(0))


def test_augment_spec_bounds():
    with pytest.raises(ValueError):
        AugmentSpec(zoom=(0.5, 2.0))


def test_dataset_augmentation_is_seeded(tmp_path):
    write_cornell(tmp_path, n_samples=2)
    recs = parse_cornell(tmp_path)
    ds = GraspDataset(recs, InputSpec(size=64), AugmentSpec(seed=5))
    a = ds.get(recs[0].sample_id, epoch=1)
    b = ds.get(recs[0].sample_id, epoch=1)
    c = ds.get(recs[0].sample_id, epoch=2)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])
    np.testing.assert_array_equal(ds.get(recs[0].sample_id)[0], ds.assembled(recs[0].sample_id)[0])


# --- splits -----------------------------------------------------------------

def _records(n, n_objects):
    return [SampleRecord(f"s{i}", f"o{i % n_objects}", None, [], Source.CORNELL) for i in range(n)]


def test_object_wise_two_objects():
    recs = _records(10, 2)
    train, test = make_splits(recs, "object-wise", 0.5, seed=1)
    objs = {r.object_id for r in recs if r.sample_id in test}
    assert len(test) == 5 and len(objs) == 1
    assert not objs & {r.object_id for r in recs if r.sample_id in train}


def test_image_wise_885():
    train, test = make_splits(_records(885, 240), "image-wise", 0.1, seed=0)
    assert len(test) in (88, 89)
    assert len(train) + len(test) == 885 and not set(train) & set(test)


@pytest.mark.parametrize("mode", ["image-wise", "object-wise"])
def test_splits_deterministic_disjoint_exhaustive(mode):
    recs = _records(57, 11)
    a = make_splits(recs, mode, 0.2, seed=9)
    assert a == make_splits(recs, mode, 0.2, seed=9)
    assert a != make_splits(recs, mode, 0.2, seed=10)
    assert sorted(a[0] + a[1]) == sorted(r.sample_id for r in recs)
    assert not set(a[0]) & set(a[1])


def test_split_errors():
    with pytest.raises(SplitError):
        make_splits(_records(10, 1), "object-wise", 0.5)
    with pytest.raises(SplitError):
        make_splits(_records(10, 2), "image-wise", 1.0)


def test_kfold_covers_everything():
    recs = _records(20, 5)
    folds = make_kfold_splits(recs, 5, "object-wise", seed=0)
    tests = [set(t) for _, t in folds]
    assert set().union(*tests) == {r.sample_id for r in recs}
    assert sum(len(t) for t in tests) == 20


def test_split_file_roundtrip(tmp_path):
    write_split_file(tmp_path / "ids.txt", ["a", "b"])
    assert (tmp_path / "ids.txt").read_text() == "a\nb\n"
    assert read_split_file(tmp_path / "ids.txt") == ["a", "b"]
