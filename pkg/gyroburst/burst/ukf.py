"""Unscented Kalman refinement of an 8-parameter homography (h33 = 1).

The filter has an identity state transition and a nonlinear measurement
model: every sigma state is a homography, and its measurement is the
stacked projection of all target points. ``refine_homography`` runs the
filter in the Hartley-normalized frame of the correspondence set and maps
the result back to pixels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import (
    CovarianceNotPSD,
    DegenerateConfiguration,
    NonFiniteResult,
    PointAtInfinity,
    PreconditionError,
    TooFewFeatures,
)
from ..core.geometry import Homography
from .features import (
    CorrespondenceSet,
    dlt_matrix,
    normalizing_transform,
    reprojection_errors,
)

logger = logging.getLogger(__name__)

STATE_DIM = 8
COVARIANCE_FLOOR = 1e-10
CHOLESKY_JITTER = 1e-12
MAX_SIGMA_RETRIES = 3


class UkfConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(1e-3, gt=0.0, le=1.0)
    beta: float = 2.0
    process_noise_sigma: float = Field(1e-4, gt=0.0)
    measurement_noise_sigma: float = Field(1.0, gt=0.0)


@dataclass(frozen=True, eq=False)
class UkfState:
    h: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        p = np.array(self.p, dtype=np.float64)
        if h.shape != (STATE_DIM,) or p.shape != (STATE_DIM, STATE_DIM):
            raise PreconditionError("UKF state must be an 8-vector with an 8x8 covariance")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(p))):
            raise NonFiniteResult("UKF state is not finite")
        scale = max(1.0, float(np.max(np.abs(p))))
        if np.max(np.abs(p - p.T)) > 1e-10 * scale:
            raise CovarianceNotPSD("covariance is not symmetric")
        try:
            np.linalg.cholesky(p + CHOLESKY_JITTER * scale * np.eye(STATE_DIM))
        except np.linalg.LinAlgError as e:
            raise CovarianceNotPSD("covariance is not positive semidefinite") from e
        h.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_homography(cls, h: Homography, p: np.ndarray) -> "UkfState":
        return cls(h.params8(), p)

    def homography(self) -> Homography:
        return Homography.from_params8(self.h)


@dataclass(frozen=True, eq=False)
class SigmaPoints:
    """Columns of ``points`` are the 2L+1 sampled states; column 0 is the mean."""
    points: np.ndarray
    w_m: np.ndarray
    w_c: np.ndarray

    def mean(self) -> np.ndarray:
        return weighted_mean(self.points, self.w_m)

    def covariance(self, mean: Optional[np.ndarray] = None) -> np.ndarray:
        mean = self.mean() if mean is None else mean
        dev = self.points - mean[:, None]
        return (dev * self.w_c) @ dev.T


def ut_weights(cfg: UkfConfig, dim: int = STATE_DIM) -> Tuple[np.ndarray, np.ndarray, float]:
    """Mean/covariance weights and the spread factor L + lambda."""
    lam = (cfg.alpha ** 2 - 1.0) * dim
    spread = dim + lam
    w_m = np.full(2 * dim + 1, 1.0 / (2.0 * spread))
    w_c = w_m.copy()
    w_m[0] = lam / spread
    w_c[0] = lam / spread + (1.0 - cfg.alpha ** 2 + cfg.beta)
    return w_m, w_c, spread


def weighted_mean(samples: np.ndarray, w_m: np.ndarray) -> np.ndarray:
    """sum_j w_j Y_j, written as Y_0 + sum_j w_j (Y_j - Y_0) since w_0 is large and negative."""
    base = samples[:, 0]
    return base + (samples[:, 1:] - base[:, None]) @ w_m[1:]


def _psd_sqrt(p: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of p, computed on the diagonally scaled matrix."""
    d = np.sqrt(np.clip(np.diag(p), 0.0, None))
    active = d > 0.0
    out = np.zeros_like(p)
    if not np.any(active):
        return out
    sub = p[np.ix_(active, active)]
    da = d[active]
    scaled = sub / np.outer(da, da)
    try:
        chol = np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(scaled + CHOLESKY_JITTER * np.eye(len(da)))
        except np.linalg.LinAlgError as e:
            raise CovarianceNotPSD("covariance is not positive semidefinite") from e
    out[np.ix_(active, active)] = da[:, None] * chol
    return out


def _project_psd(p: np.ndarray) -> np.ndarray:
    p = 0.5 * (p + p.T)
    vals, vecs = np.linalg.eigh(p)
    vals = np.clip(vals, 0.0, None)
    p = (vecs * vals) @ vecs.T
    return 0.5 * (p + p.T)


def sigma_points(state: UkfState, cfg: UkfConfig) -> SigmaPoints:
    """[h, h + sqrt((L+lambda) P)_i, h - sqrt((L+lambda) P)_i] with the matching weights."""
    w_m, w_c, spread = ut_weights(cfg)
    root = np.sqrt(spread) * _psd_sqrt(state.p)
    h = state.h
    points = np.column_stack([h, h[:, None] + root, h[:, None] - root])
    return SigmaPoints(points=points, w_m=w_m, w_c=w_c)


def _project_all(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    hm = np.append(params, 1.0).reshape(3, 3)
    hom = x @ hm[:, :2].T + hm[:, 2]
    den = hom[:, 2]
    if np.any(np.abs(den) < 1e-12) or not np.all(np.isfinite(hom)):
        raise PointAtInfinity("sigma state maps a target point to infinity")
    return (hom[:, :2] / den[:, None]).reshape(-1)


def _observe(sp: SigmaPoints, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Measurements of every sigma column; degenerate columns are pulled toward the mean."""
    points = sp.points.copy()
    center = points[:, 0]
    ys = []
    for j in range(points.shape[1]):
        for attempt in range(MAX_SIGMA_RETRIES + 1):
            try:
                ys.append(_project_all(points[:, j], x))
                break
            except PointAtInfinity:
                if attempt == MAX_SIGMA_RETRIES or j == 0:
                    raise
                points[:, j] = center + 0.5 * (points[:, j] - center)
                logger.debug(f"Sigma column {j} hit infinity; halving its spread")
    return points, np.column_stack(ys)


def ukf_step(
    state: UkfState,
    corr: CorrespondenceSet,
    cfg: UkfConfig,
    measurement_scale: float = 1.0,
) -> UkfState:
    """One predict/update cycle against the correspondences.

    Works in whatever frame the correspondences are expressed in; the
    measurement noise std is ``cfg.measurement_noise_sigma * measurement_scale``.
    Measurements produced exactly by the predicted state leave the mean in place.
    """
    if len(corr) < 4:
        raise TooFewFeatures(f"UKF update needs 4 correspondences, got {len(corr)}", len(corr))
    x, z = corr.x, corr.x_prime.reshape(-1)

    # predict: identity transition plus additive process noise
    sp = sigma_points(state, cfg)
    h_pred = sp.mean()
    q = cfg.process_noise_sigma ** 2 * np.eye(STATE_DIM)
    p_pred = _project_psd(sp.covariance(h_pred) + q)

    # update
    sp = sigma_points(UkfState(h_pred, p_pred), cfg)
    points, ys = _observe(sp, x)
    y_mean = weighted_mean(ys, sp.w_m)
    dx = points - h_pred[:, None]
    dy = ys - y_mean[:, None]
    r = (cfg.measurement_noise_sigma * measurement_scale) ** 2
    p_yy = (dy * sp.w_c) @ dy.T + r * np.eye(len(z))
    p_hy = (dx * sp.w_c) @ dy.T
    p_yy = 0.5 * (p_yy + p_yy.T)
    try:
        gain = np.linalg.solve(p_yy, p_hy.T).T
    except np.linalg.LinAlgError as e:
        raise CovarianceNotPSD("innovation covariance is singular") from e

    # innovation against the prediction's own measurement (column 0), not the
    # sigma-weighted mean, which carries the curvature bias of the projection
    h_new = h_pred + gain @ (z - ys[:, 0])
    p_new = _project_psd(p_pred - gain @ p_yy @ gain.T)
    if not (np.all(np.isfinite(h_new)) and np.all(np.isfinite(p_new))):
        raise NonFiniteResult("UKF update produced non-finite values")
    return UkfState(h_new, p_new)


def init_covariance(corr: CorrespondenceSet, h0: Homography) -> np.ndarray:
    """First-order covariance of the 8 homography parameters of ``h0``.

    The constraint matrix A is built from the target points and their images
    under ``h0``. Independent point noise of std ``corr.point_noise_sigma`` on
    both coordinates of both points is propagated through the null-vector
    map of A (in Hartley-normalized coordinates), back to pixel
    coordinates, and onto the h33 = 1 parameterization.
    """
    if len(corr) < 4:
        raise TooFewFeatures(f"covariance needs 4 correspondences, got {len(corr)}", len(corr))
    h0 = h0.normalized()
    x = corr.x
    xh = h0.project(x)
    t = normalizing_transform(x)
    tp = normalizing_transform(xh)
    xn = x @ t[:2, :2].T + t[:2, 2]
    xhn = xh @ tp[:2, :2].T + tp[:2, 2]

    a = dlt_matrix(xn, xhn)
    u, sv, vt = np.linalg.svd(a, full_matrices=True)
    s = np.zeros(9)
    s[:len(sv)] = sv
    if s[7] <= 1e-9 * s[0]:
        raise DegenerateConfiguration("constraint matrix has more than a 1-dim null space")
    # pseudo-inverse restricted to the 8 leading directions
    jac = sum(np.outer(vt[k], u[:, k]) / s[k] for k in range(8))

    hn = vt[8]
    h1, h2, _, h4, h5, _, h7, h8, h9 = hn
    sigma = corr.point_noise_sigma
    var_x = (sigma * t[0, 0]) ** 2
    var_u = (sigma * tp[0, 0]) ** 2

    n = len(x)
    lam = np.zeros((2 * n, 2 * n))
    for i in range(n):
        px, py = xn[i]
        pu, pv = xhn[i]
        w = h7 * px + h8 * py + h9
        m = np.array([
            [-h1 + pu * h7, -h2 + pu * h8, w, 0.0],
            [-h4 + pv * h7, -h5 + pv * h8, 0.0, w],
        ])
        lam[2 * i:2 * i + 2, 2 * i:2 * i + 2] = (m * np.array([var_x, var_x, var_u, var_u])) @ m.T
    cov_n = jac @ lam @ jac.T

    back = np.kron(np.linalg.inv(tp), t.T)
    m9 = back @ hn
    cov9 = back @ cov_n @ back.T
    g = np.hstack([np.eye(8) / m9[8], -m9[:8, None] / m9[8] ** 2])
    cov = g @ cov9 @ g.T
    cov = 0.5 * (cov + cov.T)
    return cov + COVARIANCE_FLOOR * np.eye(STATE_DIM)


def _frame_jacobian(t: np.ndarray, tp: np.ndarray, h: np.ndarray) -> np.ndarray:
    """d params8(tp H t^-1) / d params8(H) at H = h (h33 = 1)."""
    k9 = np.kron(tp, np.linalg.inv(t).T)
    m9 = k9 @ h.reshape(-1)
    g = np.hstack([np.eye(8) / m9[8], -m9[:8, None] / m9[8] ** 2])
    return g @ k9[:, :8]


def _mean_error(h: np.ndarray, x: np.ndarray, xp: np.ndarray) -> float:
    return float(np.mean(reprojection_errors(h, x, xp)))


def refine_homography(
    h0: Homography,
    corr: CorrespondenceSet,
    cfg: UkfConfig,
    max_iters: int = 10,
    tol: float = 1e-3,
    return_history: bool = False,
) -> Union[Tuple[Homography, float], Tuple[Homography, float, List[float]]]:
    """Iterate ``ukf_step`` from ``h0`` on a fixed correspondence set.

    Stops when the mean reprojection error changes by less than ``tol`` px
    or after ``max_iters`` steps; an ``h0`` whose error is already below
    ``tol`` is returned unchanged. The initial covariance comes from
    ``init_covariance`` with the point noise raised to the RMS residual of
    ``h0`` when that is larger; at a zero-residual start the two agree.
    Non-convergence shows up in the returned
    error, not as an exception.
    """
    h0 = h0.normalized()
    if len(corr) < 4:
        raise TooFewFeatures(f"refinement needs 4 correspondences, got {len(corr)}", len(corr))
    x, xp = corr.x, corr.x_prime

    residual = reprojection_errors(h0.h, x, xp)
    if np.all(np.isfinite(residual)) and float(np.mean(residual)) < tol:
        error = float(np.mean(residual))
        logger.debug(f"UKF: start error {error:.2e} px already below tolerance")
        if return_history:
            return h0, error, [error]
        return h0, error

    rms = float(np.sqrt(np.mean(residual ** 2))) if np.all(np.isfinite(residual)) else 0.0
    sigma_eff = max(corr.point_noise_sigma, rms)
    p0 = init_covariance(replace(corr, point_noise_sigma=sigma_eff), h0)

    t = normalizing_transform(x)
    tp = normalizing_transform(xp)
    hn = tp @ h0.h @ np.linalg.inv(t)
    hn = hn / hn[2, 2]
    jac = _frame_jacobian(t, tp, h0.h)
    p0n = jac @ p0 @ jac.T
    p0n = 0.5 * (p0n + p0n.T)

    ncorr = CorrespondenceSet.from_arrays(
        x @ t[:2, :2].T + t[:2, 2],
        xp @ tp[:2, :2].T + tp[:2, 2],
        corr.scores,
        corr.point_noise_sigma,
    )
    tp_inv = np.linalg.inv(tp)

    def to_pixels(params: np.ndarray) -> np.ndarray:
        m = tp_inv @ np.append(params, 1.0).reshape(3, 3) @ t
        return m / m[2, 2]

    state = UkfState(hn.reshape(-1)[:8], p0n)
    current = h0.h
    error = _mean_error(current, x, xp)
    history = [error]
    for it in range(max_iters):
        state = ukf_step(state, ncorr, cfg, measurement_scale=tp[0, 0])
        current = to_pixels(state.h)
        new_error = _mean_error(current, x, xp)
        history.append(new_error)
        converged = abs(error - new_error) < tol
        error = new_error
        if converged:
            break
    logger.debug(
        f"UKF: error {history[0]:.4f} -> {error:.4f} px in {len(history) - 1} iterations"
    )

    result = Homography(current)
    if return_history:
        return result, error, history
    return result, error
