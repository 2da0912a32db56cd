from __future__ import annotations

import json

import numpy as np
import pytest

from gyroburst.burst.burst_io import (
    CAMERA_FILE,
    CLEAN_REFERENCE_FILE,
    GYRO_FILE,
    TIMING_FILE,
    TRUTH_FILE,
    read_burst,
    read_correspondences_csv,
    read_gyro_csv,
    read_timing_json,
    write_burst,
    write_correspondences_csv,
)
from gyroburst.burst.features import CorrespondenceSet
from gyroburst.burst.simulation import simulate_burst
from gyroburst.core.errors import InputFormatError


@pytest.fixture
def burst_dir(tmp_path):
    simulated = simulate_burst("offset", n_frames=3, seed=2, width=64, height=64, margin=16)
    write_burst(simulated.to_burst(), tmp_path / "burst")
    return tmp_path / "burst", simulated


def test_written_burst_reads_back(burst_dir):
    path, simulated = burst_dir
    for name in (GYRO_FILE, TIMING_FILE, CAMERA_FILE, TRUTH_FILE, CLEAN_REFERENCE_FILE, "frame_0000.png"):
        assert (path / name).exists()

    burst = read_burst(path)
    assert len(burst.frames) == 3
    assert burst.frame_size == (64, 64)
    assert np.max(np.abs(burst.frames[1].data - simulated.frames[1].data)) <= 1.0 / 65535
    assert [t.exposure_start for t in burst.timings] == [t.exposure_start for t in simulated.timings]
    assert np.array_equal(burst.trace.t, simulated.trace.t)
    assert np.allclose(burst.trace.omega, simulated.trace.omega)
    assert burst.intrinsics == simulated.intrinsics
    assert burst.has_truth
    for got, want in zip(burst.true_homographies, simulated.true_homographies):
        assert np.allclose(got.h, want.h)
    assert burst.noise_sigma == pytest.approx(simulated.noise_sigma)
    assert burst.meta["preset"] == "offset"
    assert burst.clean_reference is not None


def test_gyro_csv_errors_carry_line_numbers(tmp_path):
    bad_header = tmp_path / "header.csv"
    bad_header.write_text("time,wx,wy,wz\n0,0,0,0\n")
    with pytest.raises(InputFormatError) as info:
        read_gyro_csv(bad_header)
    assert info.value.line == 1

    bad_number = tmp_path / "number.csv"
    bad_number.write_text("t_ns,omega_x,omega_y,omega_z\n0,0,0,0\n10,abc,0,0\n")
    with pytest.raises(InputFormatError) as info:
        read_gyro_csv(bad_number)
    assert info.value.line == 3
    assert f"{bad_number}:3:" in str(info.value)

    unordered = tmp_path / "order.csv"
    unordered.write_text("t_ns,omega_x,omega_y,omega_z\n10,0,0,0\n5,0,0,0\n")
    with pytest.raises(InputFormatError):
        read_gyro_csv(unordered)


def test_timing_json_errors(tmp_path):
    broken = tmp_path / "timing.json"
    broken.write_text('[\n  {"exposure_start_ns": 0,\n  "exposure_end_ns": }\n]\n')
    with pytest.raises(InputFormatError) as info:
        read_timing_json(broken)
    assert info.value.line == 3

    inverted = tmp_path / "inverted.json"
    inverted.write_text(json.dumps([{"exposure_start_ns": 10, "exposure_end_ns": 5}]))
    with pytest.raises(InputFormatError):
        read_timing_json(inverted)


def test_timings_are_sorted_by_frame_id(tmp_path):
    path = tmp_path / "timing.json"
    path.write_text(json.dumps([
        {"frame_id": 1, "exposure_start_ns": 40, "exposure_end_ns": 50},
        {"frame_id": 0, "exposure_start_ns": 0, "exposure_end_ns": 10},
    ]))
    timings = read_timing_json(path)
    assert [t.frame_id for t in timings] == [0, 1]


def test_missing_frames_and_count_mismatch(burst_dir, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(InputFormatError):
        read_burst(empty)

    path, _ = burst_dir
    (path / "frame_0002.png").unlink()
    with pytest.raises(InputFormatError) as info:
        read_burst(path)
    assert "2 frames" in str(info.value)


def test_correspondence_csv(tmp_path):
    corr = CorrespondenceSet.from_arrays([[1.0, 2.0], [3.0, 4.0]], [[1.5, 2.5], [3.5, 4.5]], [0.9, 0.7])
    path = write_correspondences_csv(corr, tmp_path / "corr.csv")
    back = read_correspondences_csv(path)
    assert np.allclose(back.x_prime, corr.x_prime)
    assert np.allclose(back.scores, [0.9, 0.7])

    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,x_prime,y_prime,score\n1,2,3,4,0.5\n1,2,3,4,1.5\n")
    with pytest.raises(InputFormatError) as info:
        read_correspondences_csv(bad)
    assert info.value.line == 3


def test_frame_masks_round_trip(burst_dir):
    path, simulated = burst_dir
    burst = simulated.to_burst()
    mask = np.ones((64, 64), dtype=bool)
    mask[:, :5] = False
    burst.frames[1] = burst.frames[1].with_mask(mask)
    write_burst(burst, path)
    assert (path / "mask_0001.pgm").exists()
    assert not (path / "mask_0000.pgm").exists()

    back = read_burst(path)
    assert back.frames[0].mask is None
    assert np.array_equal(back.frames[1].valid_mask, mask)
