from __future__ import annotations

import numpy as np
import pytest

from gyroburst.burst.features import (
    CorrespondenceSet,
    detect_corners,
    fit_homography_dlt,
    fit_homography_robust,
    match_corners,
    reprojection_errors,
)
from gyroburst.burst.simulation import make_scene
from gyroburst.core.errors import DegenerateConfiguration, PreconditionError, TooFewFeatures
from gyroburst.core.geometry import Homography
from gyroburst.core.image import Image

TRUE_H = Homography(np.array([
    [1.01, 0.02, 3.0],
    [-0.01, 0.99, -2.0],
    [1e-5, -2e-5, 1.0],
]))


def checkerboard(size: int = 96, square: int = 16) -> Image:
    yy, xx = np.mgrid[0:size, 0:size]
    return Image(np.where(((xx // square) + (yy // square)) % 2 == 0, 0.2, 0.8))


def exact_pairs(n: int = 30, seed: int = 1) -> CorrespondenceSet:
    x = np.random.default_rng(seed).uniform(0.0, 200.0, size=(n, 2))
    return CorrespondenceSet.from_arrays(x, TRUE_H.project(x))


def test_checkerboard_corners_sit_on_the_lattice():
    corners = detect_corners(checkerboard(), max_corners=100, min_distance=8.0, border=8)
    assert len(corners) >= 16
    lattice = np.arange(1, 6) * 16 - 0.5
    for x, y in corners:
        assert np.min(np.abs(lattice - x)) < 0.75
        assert np.min(np.abs(lattice - y)) < 0.75


def test_corner_detection_rejects_flat_and_tiny_images():
    with pytest.raises(TooFewFeatures):
        detect_corners(Image.constant(64, 64, 0.5))
    with pytest.raises(PreconditionError):
        detect_corners(Image.constant(16, 16, 0.5))


def test_matching_follows_a_known_shift():
    scene = make_scene(200, 200, rng_seed=3).data
    reference = Image(scene[40:168, 40:168])
    # current(x + (3, 2)) == reference(x)
    current = Image(scene[38:166, 37:165])
    corners = detect_corners(reference, max_corners=80)
    corr = match_corners(reference, current, corners, Homography.identity(), search_radius=8)
    offsets = corr.x_prime - corr.x
    close = np.linalg.norm(offsets - [3.0, 2.0], axis=1) < 0.75
    assert len(corr) >= 10
    assert close.mean() >= 0.8
    assert np.all((corr.scores >= 0.5) & (corr.scores <= 1.0))


def test_matching_validates_patch_size():
    img = make_scene(64, 64)
    with pytest.raises(PreconditionError):
        match_corners(img, img, np.array([[32.0, 32.0]]), Homography.identity(), patch=8)


def test_dlt_recovers_exact_homography():
    fitted = fit_homography_dlt(exact_pairs())
    assert np.allclose(fitted.normalized().h, TRUE_H.h, atol=1e-7)


def test_dlt_degenerate_inputs():
    with pytest.raises(TooFewFeatures):
        fit_homography_dlt(CorrespondenceSet.from_arrays(np.zeros((3, 2)), np.zeros((3, 2))))
    line = np.column_stack([np.arange(6.0), np.arange(6.0)]) * 10.0
    with pytest.raises(DegenerateConfiguration):
        fit_homography_dlt(CorrespondenceSet.from_arrays(line, line + 1.0))


def test_ransac_separates_gross_outliers():
    good = exact_pairs(40, seed=2)
    x_bad = np.random.default_rng(5).uniform(0.0, 200.0, size=(10, 2))
    xp_bad = TRUE_H.project(x_bad) + np.array([30.0, -25.0])
    corr = CorrespondenceSet.from_arrays(np.vstack([good.x, x_bad]), np.vstack([good.x_prime, xp_bad]))

    h, mask = fit_homography_robust(corr, inlier_threshold=2.0, rng_seed=0)
    assert mask[:40].all()
    assert not mask[40:].any()
    assert np.max(reprojection_errors(h.h, good.x, good.x_prime)) < 1e-6


def test_ransac_is_deterministic_for_a_seed():
    rng = np.random.default_rng(9)
    x = rng.uniform(0.0, 200.0, size=(50, 2))
    xp = TRUE_H.project(x) + rng.normal(0.0, 0.5, size=x.shape)
    corr = CorrespondenceSet.from_arrays(x, xp)
    h1, m1 = fit_homography_robust(corr, rng_seed=4)
    h2, m2 = fit_homography_robust(corr, rng_seed=4)
    assert np.array_equal(m1, m2)
    assert np.array_equal(h1.h, h2.h)


def test_correspondence_score_range():
    with pytest.raises(PreconditionError):
        CorrespondenceSet.from_arrays(np.zeros((1, 2)), np.zeros((1, 2)), scores=[1.5])
