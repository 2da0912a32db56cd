"""Corner detection, gyro-guided patch matching and homography fitting."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from ..core.errors import (
    DegenerateConfiguration,
    DegenerateHomography,
    PointAtInfinity,
    PreconditionError,
    TooFewFeatures,
)
from ..core.geometry import Homography, apply_homography
from ..core.image import Image

logger = logging.getLogger(__name__)

HARRIS_K = 0.04
HARRIS_RELATIVE_THRESHOLD = 1e-3
MIN_CORNERS = 4
MIN_IMAGE_SIDE = 32
DEFAULT_POINT_NOISE_SIGMA = 0.5


@dataclass(frozen=True, eq=False)
class Correspondence:
    """A target-frame point ``x`` and its match ``x_prime`` in the current frame."""
    x: np.ndarray
    x_prime: np.ndarray
    score: float = 1.0

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=np.float64).reshape(2)
        xp = np.array(self.x_prime, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
            raise PreconditionError("correspondence points must be finite")
        score = float(self.score)
        if not 0.0 <= score <= 1.0:
            raise PreconditionError(f"match score {score} outside [0, 1]")
        x.setflags(write=False)
        xp.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_prime", xp)
        object.__setattr__(self, "score", score)


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    pairs: Tuple[Correspondence, ...]
    point_noise_sigma: float = DEFAULT_POINT_NOISE_SIGMA

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.point_noise_sigma >= 0.0:
            raise PreconditionError("point_noise_sigma must be non-negative")

    @classmethod
    def from_arrays(
        cls,
        x: np.ndarray,
        x_prime: np.ndarray,
        scores: Optional[Iterable[float]] = None,
        point_noise_sigma: float = DEFAULT_POINT_NOISE_SIGMA,
    ) -> "CorrespondenceSet":
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        x_prime = np.asarray(x_prime, dtype=np.float64).reshape(-1, 2)
        if len(x) != len(x_prime):
            raise PreconditionError("point arrays differ in length")
        scores = [1.0] * len(x) if scores is None else list(scores)
        pairs = tuple(Correspondence(a, b, s) for a, b, s in zip(x, x_prime, scores))
        return cls(pairs, point_noise_sigma)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.pairs]).reshape(-1, 2)

    @property
    def x_prime(self) -> np.ndarray:
        return np.array([p.x_prime for p in self.pairs]).reshape(-1, 2)

    @property
    def scores(self) -> np.ndarray:
        return np.array([p.score for p in self.pairs], dtype=np.float64)

    def subset(self, mask: Sequence[bool]) -> "CorrespondenceSet":
        mask = np.asarray(mask, dtype=bool)
        return CorrespondenceSet(tuple(p for p, keep in zip(self.pairs, mask) if keep), self.point_noise_sigma)


def reprojection_errors(h: np.ndarray, x: np.ndarray, x_prime: np.ndarray) -> np.ndarray:
    """Per-point ||h(x) - x'||; points mapped to infinity get ``inf``."""
    h = np.asarray(h, dtype=np.float64)
    hom = x @ h[:, :2].T + h[:, 2]
    den = hom[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = hom[:, :2] / den[:, None]
        err = np.linalg.norm(proj - x_prime, axis=1)
    err[np.abs(den) < 1e-12] = np.inf
    return err


# ---------------------------------------------------------------------------
# Harris corners
# ---------------------------------------------------------------------------

def harris_response(data: np.ndarray, sigma: float = 1.0, k: float = HARRIS_K) -> np.ndarray:
    smoothed = ndimage.gaussian_filter(data, 0.7)
    ix = ndimage.sobel(smoothed, axis=1) / 8.0
    iy = ndimage.sobel(smoothed, axis=0) / 8.0
    sxx = ndimage.gaussian_filter(ix * ix, sigma)
    syy = ndimage.gaussian_filter(iy * iy, sigma)
    sxy = ndimage.gaussian_filter(ix * iy, sigma)
    return (sxx * syy - sxy ** 2) - k * (sxx + syy) ** 2


def _quadratic_offset(left: float, center: float, right: float) -> float:
    denom = left - 2.0 * center + right
    if denom >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def detect_corners(
    img: Image,
    max_corners: int = 200,
    min_distance: float = 8.0,
    border: int = 8,
) -> np.ndarray:
    """Harris corners as an (n, 2) array of (x, y), strongest first.

    Candidates are local maxima of the response above a fraction of its
    peak, thinned greedily so no two are closer than ``min_distance``, then
    refined to subpixel accuracy by a quadratic fit along each axis.
    """
    if img.width < MIN_IMAGE_SIDE or img.height < MIN_IMAGE_SIDE:
        raise PreconditionError(f"image {img.width}x{img.height} too small for corner detection")
    data = np.where(img.valid_mask, img.data, 0.0)
    response = harris_response(data)

    peak = float(response.max())
    if peak <= 1e-14:
        raise TooFewFeatures("no corner response (flat image)", 0)

    candidates = (response == ndimage.maximum_filter(response, size=3)) & (
        response > HARRIS_RELATIVE_THRESHOLD * peak
    )
    candidates &= img.valid_mask
    border = max(int(border), 1)
    candidates[:border, :] = False
    candidates[-border:, :] = False
    candidates[:, :border] = False
    candidates[:, -border:] = False

    rows, cols = np.nonzero(candidates)
    order = np.argsort(-response[rows, cols], kind="stable")
    rows, cols = rows[order], cols[order]

    kept: List[Tuple[int, int]] = []
    min_d2 = float(min_distance) ** 2
    for r, c in zip(rows, cols):
        if len(kept) >= max_corners:
            break
        if kept:
            arr = np.asarray(kept)
            d2 = (arr[:, 0] - r) ** 2 + (arr[:, 1] - c) ** 2
            if np.any(d2 < min_d2):
                continue
        kept.append((int(r), int(c)))

    if len(kept) < MIN_CORNERS:
        raise TooFewFeatures(f"only {len(kept)} corners found", len(kept))

    corners = np.empty((len(kept), 2))
    for i, (r, c) in enumerate(kept):
        dx = _quadratic_offset(response[r, c - 1], response[r, c], response[r, c + 1])
        dy = _quadratic_offset(response[r - 1, c], response[r, c], response[r + 1, c])
        corners[i] = (c + dx, r + dy)
    logger.debug(f"Detected {len(corners)} corners (peak response {peak:.3e})")
    return corners


# ---------------------------------------------------------------------------
# ZNCC matching
# ---------------------------------------------------------------------------

def _zncc_surface(region: np.ndarray, template: np.ndarray) -> np.ndarray:
    p = template.shape[0]
    t = template - template.mean()
    t_norm = np.sqrt(np.sum(t * t))
    windows = sliding_window_view(region, (p, p))
    num = np.einsum("ijkl,kl->ij", windows, t)
    w_sum = windows.sum(axis=(2, 3))
    w_sq = np.einsum("ijkl,ijkl->ij", windows, windows)
    w_var = np.maximum(w_sq - w_sum * w_sum / (p * p), 0.0)
    den = t_norm * np.sqrt(w_var)
    out = np.full(num.shape, -1.0)
    ok = den > 1e-12
    out[ok] = num[ok] / den[ok]
    return out


def match_corners(
    target: Image,
    current: Image,
    corners: np.ndarray,
    predicted_h: Homography,
    search_radius: int = 8,
    patch: int = 11,
    zncc_threshold: float = 0.5,
    point_noise_sigma: float = DEFAULT_POINT_NOISE_SIGMA,
) -> CorrespondenceSet:
    """Match target corners into ``current`` around their predicted positions.

    Each corner is rounded to the pixel grid and its patch is compared by
    ZNCC against every integer offset within ``search_radius`` of
    ``predicted_h`` applied to it. The peak is refined by a quadratic fit;
    the score is the ZNCC at the integer peak.
    """
    if patch < 7 or patch % 2 == 0:
        raise PreconditionError(f"patch must be odd and >= 7, got {patch}")
    if search_radius < 1:
        raise PreconditionError("search_radius must be >= 1")

    half = patch // 2
    radius = int(search_radius)
    tgt = target.data
    cur = np.where(current.valid_mask, current.data, 0.0)
    h_img, w_img = cur.shape

    x_list, xp_list, scores = [], [], []
    for cx, cy in np.asarray(corners, dtype=np.float64).reshape(-1, 2):
        ix, iy = int(round(cx)), int(round(cy))
        if ix - half < 0 or iy - half < 0 or ix + half >= tgt.shape[1] or iy + half >= tgt.shape[0]:
            continue
        template = tgt[iy - half:iy + half + 1, ix - half:ix + half + 1]
        if template.std() < 1e-9:
            continue
        try:
            px, py = apply_homography(predicted_h, (ix, iy))
        except PointAtInfinity:
            continue
        if not (np.isfinite(px) and np.isfinite(py)):
            continue
        qx, qy = int(round(px)), int(round(py))

        x0 = max(qx - radius - half, 0)
        y0 = max(qy - radius - half, 0)
        x1 = min(qx + radius + half + 1, w_img)
        y1 = min(qy + radius + half + 1, h_img)
        if x1 - x0 < patch or y1 - y0 < patch:
            continue
        surface = _zncc_surface(cur[y0:y1, x0:x1], template)
        i, j = np.unravel_index(int(np.argmax(surface)), surface.shape)
        best = float(surface[i, j])
        if best < zncc_threshold:
            continue

        dy = _quadratic_offset(surface[i - 1, j], best, surface[i + 1, j]) if 0 < i < surface.shape[0] - 1 else 0.0
        dx = _quadratic_offset(surface[i, j - 1], best, surface[i, j + 1]) if 0 < j < surface.shape[1] - 1 else 0.0
        mx = x0 + j + half + dx
        my = y0 + i + half + dy
        if not (0.0 <= mx <= w_img - 1 and 0.0 <= my <= h_img - 1):
            continue

        x_list.append((ix, iy))
        xp_list.append((mx, my))
        scores.append(min(max(best, 0.0), 1.0))

    if len(x_list) < MIN_CORNERS:
        raise TooFewFeatures(f"only {len(x_list)} corners matched above ZNCC {zncc_threshold}", len(x_list))
    logger.debug(f"Matched {len(x_list)}/{len(corners)} corners")
    return CorrespondenceSet.from_arrays(np.array(x_list), np.array(xp_list), scores, point_noise_sigma)


# ---------------------------------------------------------------------------
# Homography fitting
# ---------------------------------------------------------------------------

def normalizing_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.linalg.norm(points - centroid, axis=1).mean()
    if dist <= 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / dist
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _to_homogeneous(points: np.ndarray) -> np.ndarray:
    return np.column_stack([points, np.ones(len(points))])


def _apply_similarity(t: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ t[:2, :2].T + t[:2, 2]


def dlt_matrix(x: np.ndarray, x_prime: np.ndarray) -> np.ndarray:
    """The 2n x 9 constraint matrix A with A h = 0 for h = vec(H) row-major."""
    n = len(x)
    a = np.zeros((2 * n, 9))
    xs, ys = x[:, 0], x[:, 1]
    us, vs = x_prime[:, 0], x_prime[:, 1]
    a[0::2, 0] = -xs
    a[0::2, 1] = -ys
    a[0::2, 2] = -1.0
    a[0::2, 6] = us * xs
    a[0::2, 7] = us * ys
    a[0::2, 8] = us
    a[1::2, 3] = -xs
    a[1::2, 4] = -ys
    a[1::2, 5] = -1.0
    a[1::2, 6] = vs * xs
    a[1::2, 7] = vs * ys
    a[1::2, 8] = vs
    return a


def _padded_singular_values(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    padded = np.zeros(9)
    padded[:len(s)] = s
    return padded, vt


def fit_homography_dlt(corr: CorrespondenceSet) -> Homography:
    """Normalized DLT: smallest right singular vector of A in Hartley-normalized coordinates."""
    if len(corr) < 4:
        raise TooFewFeatures(f"DLT needs 4 correspondences, got {len(corr)}", len(corr))
    x, xp = corr.x, corr.x_prime
    t = normalizing_transform(x)
    tp = normalizing_transform(xp)
    a = dlt_matrix(_apply_similarity(t, x), _apply_similarity(tp, xp))
    s, vt = _padded_singular_values(a)
    if s[7] - s[8] <= 1e-9 * s[0]:
        raise DegenerateConfiguration("correspondences are collinear or coincident")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tp) @ hn @ t
    if abs(h[2, 2]) <= 1e-12:
        raise DegenerateConfiguration("fitted homography has h33 = 0")
    try:
        return Homography(h / h[2, 2])
    except DegenerateHomography as e:
        raise DegenerateConfiguration("fitted homography is singular") from e


def fit_homography_robust(
    corr: CorrespondenceSet,
    inlier_threshold: float = 2.0,
    max_iters: int = 1000,
    rng_seed: int = 0,
    confidence: float = 0.999,
) -> Tuple[Homography, np.ndarray]:
    """RANSAC over minimal 4-point samples followed by DLT refits on the consensus set.

    The iteration count adapts to the best inlier ratio seen so far and never
    exceeds ``max_iters``. The returned model is always the DLT fit of the
    returned inlier mask.
    """
    n = len(corr)
    if n < 4:
        raise TooFewFeatures(f"robust fit needs 4 correspondences, got {n}", n)
    x, xp = corr.x, corr.x_prime
    rng = np.random.default_rng(rng_seed)

    best_mask: Optional[np.ndarray] = None
    best_count, best_cost = 0, np.inf
    needed = max_iters
    it = 0
    while it < min(needed, max_iters):
        it += 1
        sample = rng.choice(n, 4, replace=False)
        mask = np.zeros(n, dtype=bool)
        mask[sample] = True
        try:
            model = fit_homography_dlt(corr.subset(mask))
        except (DegenerateConfiguration, TooFewFeatures):
            continue
        err = reprojection_errors(model.h, x, xp)
        inliers = err < inlier_threshold
        count = int(inliers.sum())
        cost = float(np.sum(np.minimum(err, inlier_threshold)))
        if count > best_count or (count == best_count and cost < best_cost):
            best_mask, best_count, best_cost = inliers, count, cost
            ratio = count / n
            if ratio >= 1.0:
                needed = 0
            elif ratio > 0.0:
                needed = math.ceil(math.log(1.0 - confidence) / math.log(1.0 - ratio ** 4))

    if best_mask is None or best_count < 4:
        raise DegenerateConfiguration(f"no model reached 4 inliers ({best_count} best)")

    mask = best_mask
    model = fit_homography_dlt(corr.subset(mask))
    for _ in range(10):
        refined_mask = reprojection_errors(model.h, x, xp) < inlier_threshold
        if refined_mask.sum() < 4 or np.array_equal(refined_mask, mask):
            break
        try:
            refined = fit_homography_dlt(corr.subset(refined_mask))
        except DegenerateConfiguration:
            break
        mask, model = refined_mask, refined

    logger.debug(f"RANSAC: {int(mask.sum())}/{n} inliers after {it} iterations")
    return model, mask
