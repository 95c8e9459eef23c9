import os
from pathlib import Path

import numpy as np
import pytest

import hmdface


def test_constants():
    assert hmdface.LANDMARK_COUNT == 70
    assert hmdface.WIRE_FRAME_BYTES == 298
    assert hmdface.payload_bitrate(30.0) == pytest.approx(67200.0)


def test_mirror_index_is_an_involution():
    for i in range(hmdface.LANDMARK_COUNT):
        assert hmdface.mirror_index(hmdface.mirror_index(i)) == i


def test_landmarks_and_render_shapes():
    pts = hmdface.landmarks_of(7, 128, mouth_open=0.5)
    assert pts.shape == (70, 2)
    assert np.all((pts >= 0) & (pts <= 127))
    frame = hmdface.render_face(7, 128, smile=0.3)
    assert frame["rgb"].shape == (128, 128, 3)
    assert frame["depth"].shape == (128, 128)
    assert frame["depth"].dtype == np.uint8
    assert frame["near_mm"] < frame["far_mm"]


def test_unknown_expression_field_raises():
    with pytest.raises(hmdface.HmdfaceError, match="validation"):
        hmdface.landmarks_of(7, 128, frown=1.0)


def test_rasterize_marks_landmarks():
    pts = hmdface.landmarks_of(7, 256)
    img = hmdface.rasterize(pts, 256)
    assert img.shape[:2] == (256, 256)
    assert img.any()


def test_wire_round_trip():
    pts = hmdface.landmarks_of(3, 256, jaw_shift=0.2)
    data = hmdface.encode_frame(pts, sequence=41, timestamp_us=123456)
    assert len(data) == hmdface.WIRE_FRAME_BYTES
    back = hmdface.decode_frame(data)
    assert back["sequence"] == 41
    assert back["timestamp_us"] == 123456
    np.testing.assert_allclose(back["points"], np.round(pts), atol=1e-9)


def test_truncated_frame_raises():
    with pytest.raises(hmdface.HmdfaceError):
        hmdface.decode_frame(b"\x00" * 10)


def test_masked_ssim_and_depth_stats():
    frame = hmdface.render_face(7, 128)
    mask = (frame["depth"] > 0).astype(np.uint8)
    assert hmdface.masked_ssim(frame["rgb"], frame["rgb"], mask) == pytest.approx(1.0, abs=1e-9)
    stats = hmdface.depth_stats(frame["depth"], frame["depth"])
    assert stats["median_mm"] == pytest.approx(0.0)
    assert stats["fraction_within_5mm"] == pytest.approx(1.0)
    assert stats["pixels"] > 0


def test_postprocess_clips_depth():
    frame = hmdface.render_face(7, 64)
    out = hmdface.postprocess(frame["rgb"], frame["depth"], erode=0, clip_near=100, clip_far=200)
    d = out["depth"]
    kept = d[d > 0]
    assert kept.size > 0
    assert kept.min() >= 100 and kept.max() <= 200


def _desk_generator():
    work = os.environ.get("HMDFACE_ACCEPTANCE_WORK")
    if not work:
        return None
    path = Path(work) / "gan" / "generator.hmgw"
    return path if path.exists() else None


@pytest.mark.skipif(_desk_generator() is None, reason="no trained desk generator available")
def test_generate_with_desk_weights():
    pts = hmdface.landmarks_of(7, 256)
    out = hmdface.generate(str(_desk_generator()), pts)
    assert out["rgb"].shape == (128, 128, 3)
    assert out["depth"].shape == (128, 128)
