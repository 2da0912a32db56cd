"""Fixed-size geometry: rotations, intrinsics, homographies and their plane decomposition.

Every type here is an immutable value; arrays are copied on construction and
marked read-only. Homographies are stored unnormalized and only brought to
h33 = 1 on request (``Homography.normalized``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.linalg import polar
from scipy.spatial.transform import Rotation

from .errors import (
    DegenerateHomography,
    NonFiniteResult,
    NonUnitNormal,
    PointAtInfinity,
    PreconditionError,
)

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-9
SINGULAR_TOL = 1e-12
NORMALIZE_TOL = 1e-9
DENOMINATOR_TOL = 1e-12
UNIT_NORMAL_TOL = 1e-9
PURE_ROTATION_TOL = 1e-9


def _frozen(values, shape: Optional[tuple] = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if shape is not None and arr.shape != shape:
        raise PreconditionError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def skew(w: Sequence[float]) -> np.ndarray:
    """Cross-product matrix [w]x."""
    wx, wy, wz = (float(v) for v in w)
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Closest proper rotation to ``m`` in the Frobenius sense (polar factor)."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NonFiniteResult("cannot orthonormalize a non-finite matrix")
    u, _ = polar(m)
    if np.linalg.det(u) < 0:
        # polar factor is a reflection; flip the weakest singular direction
        uu, _, vt = np.linalg.svd(m)
        d = np.diag([1.0, 1.0, -1.0])
        u = uu @ d @ vt
    return u


@dataclass(frozen=True, eq=False)
class RotationMatrix:
    """Proper 3x3 rotation; orthonormal to 1e-9 by construction."""
    m: np.ndarray

    def __post_init__(self) -> None:
        m = _frozen(self.m, (3, 3))
        if not np.all(np.isfinite(m)):
            raise NonFiniteResult("rotation has non-finite entries")
        err = np.linalg.norm(m.T @ m - np.eye(3))
        det = np.linalg.det(m)
        if err >= ORTHONORMAL_TOL or abs(det - 1.0) > ORTHONORMAL_TOL:
            raise PreconditionError(
                f"matrix is not a rotation (orthonormality error {err:.3e}, det {det:.12f})"
            )
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "RotationMatrix":
        return cls(np.eye(3))

    @classmethod
    def nearest(cls, m: np.ndarray) -> "RotationMatrix":
        return cls(nearest_rotation(m))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float]) -> "RotationMatrix":
        return cls.nearest(Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix())

    def as_rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.m).as_rotvec()

    @property
    def T(self) -> "RotationMatrix":
        return RotationMatrix(self.m.T)

    def __matmul__(self, other: "RotationMatrix") -> "RotationMatrix":
        return RotationMatrix.nearest(self.m @ other.m)

    def angle_to(self, other: "RotationMatrix") -> float:
        """Geodesic distance in radians."""
        return geodesic_distance(self, other)

    def tolist(self) -> List[List[float]]:
        return self.m.tolist()


def rot_x(theta: float) -> RotationMatrix:
    return RotationMatrix.from_rotvec([theta, 0.0, 0.0])


def rot_y(theta: float) -> RotationMatrix:
    return RotationMatrix.from_rotvec([0.0, theta, 0.0])


def rot_z(theta: float) -> RotationMatrix:
    return RotationMatrix.from_rotvec([0.0, 0.0, theta])


def geodesic_distance(a: RotationMatrix, b: RotationMatrix) -> float:
    return float(Rotation.from_matrix(a.m.T @ b.m).magnitude())


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise PreconditionError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise PreconditionError("focal lengths must be positive")

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> "CameraIntrinsics":
        return cls(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @property
    def inverse(self) -> np.ndarray:
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])

    def to_dict(self) -> Dict[str, float]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "CameraIntrinsics":
        return cls(fx=data["fx"], fy=data["fy"], cx=data["cx"], cy=data["cy"])


@dataclass(frozen=True, eq=False)
class Homography:
    """Projective map x' ~ h x between two views, stored unnormalized."""
    h: np.ndarray

    def __post_init__(self) -> None:
        h = _frozen(self.h, (3, 3))
        if not np.all(np.isfinite(h)):
            raise NonFiniteResult("homography has non-finite entries")
        if abs(np.linalg.det(h)) <= SINGULAR_TOL:
            raise DegenerateHomography("homography is singular")
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    @classmethod
    def from_params8(cls, params: Sequence[float]) -> "Homography":
        p = np.asarray(params, dtype=np.float64)
        if p.shape != (8,):
            raise PreconditionError("expected 8 homography parameters")
        return cls(np.append(p, 1.0).reshape(3, 3))

    @classmethod
    def from_list(cls, rows: Iterable[Iterable[float]]) -> "Homography":
        return cls(np.asarray(list(rows), dtype=np.float64).reshape(3, 3))

    def normalized(self) -> "Homography":
        h33 = self.h[2, 2]
        if abs(h33) <= NORMALIZE_TOL:
            raise PreconditionError(f"cannot normalize homography with h33 = {h33:.3e}")
        return Homography(self.h / h33)

    def params8(self) -> np.ndarray:
        """h1..h8 of the normalized form (h9 = 1)."""
        return self.normalized().h.reshape(-1)[:8].copy()

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def __matmul__(self, other: "Homography") -> "Homography":
        """Composition: ``(a @ b)`` applies ``b`` first."""
        return Homography(self.h @ other.h)

    def apply(self, p: Sequence[float]) -> np.ndarray:
        return apply_homography(self, p)

    def project(self, points: np.ndarray) -> np.ndarray:
        return project_points(self, points)

    def tolist(self) -> List[List[float]]:
        return self.h.tolist()


@dataclass(frozen=True, eq=False)
class PlaneDecomposition:
    """H ~ r + t n^T, with n a unit normal and n_z >= 0."""
    r: RotationMatrix
    t: np.ndarray
    n: np.ndarray
    degenerate: bool = False
    scale: float = 1.0

    def __post_init__(self) -> None:
        t = _frozen(self.t, (3,))
        n = _frozen(self.n, (3,))
        if abs(np.linalg.norm(n) - 1.0) > UNIT_NORMAL_TOL:
            raise NonUnitNormal(f"plane normal has norm {np.linalg.norm(n):.12f}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "n", n)

    def recompose(self) -> np.ndarray:
        return self.r.m + np.outer(self.t, self.n)


def to_camera_frame(r_gyro: RotationMatrix, k: CameraIntrinsics) -> Homography:
    """Conjugate a camera-coordinate rotation into pixel coordinates: K R K^-1."""
    return Homography(k.matrix @ r_gyro.m @ k.inverse)


def compose_initial_homography(r0: Homography, t0: Sequence[float], n0: Sequence[float]) -> Homography:
    """H0 = R0 + T0 n0^T."""
    t = np.asarray(t0, dtype=np.float64).reshape(3)
    n = np.asarray(n0, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(n)
    if abs(norm - 1.0) > UNIT_NORMAL_TOL:
        raise NonUnitNormal(f"plane normal has norm {norm:.12f}")
    return Homography(r0.h + np.outer(t, n))


def decompose_homography(
    h: Homography,
    r_hint: RotationMatrix,
    strict: bool = False,
) -> PlaneDecomposition:
    """Split a calibrated homography into rotation, scaled translation and plane normal.

    The homography is scaled so its middle singular value is one and its
    determinant positive. Of the analytic solutions the one whose rotation is
    geodesically nearest ``r_hint`` is returned; (t, n) is signed so n_z >= 0.
    A pure rotation (equal singular values) yields t = 0, n = e_z and the
    ``degenerate`` flag; with ``strict=True`` it raises DegenerateHomography.
    """
    m = h.h
    _, s, vt = np.linalg.svd(m)
    if s[1] <= SINGULAR_TOL:
        raise DegenerateHomography("homography has rank < 2")
    scale = s[1]
    hn = m / scale
    if np.linalg.det(hn) < 0:
        hn = -hn
        scale = -scale
    sig1 = s[0] / s[1]
    sig3 = s[2] / s[1]

    if sig1 - sig3 < PURE_ROTATION_TOL:
        decomposition = PlaneDecomposition(
            r=RotationMatrix.nearest(hn),
            t=np.zeros(3),
            n=np.array([0.0, 0.0, 1.0]),
            degenerate=True,
            scale=float(scale),
        )
        if strict:
            raise DegenerateHomography("homography is a pure rotation", decomposition)
        logger.debug("Pure-rotation homography; translation set to zero")
        return decomposition

    v1, v2, v3 = vt[0], vt[1], vt[2]
    spread = np.sqrt(sig1 ** 2 - sig3 ** 2)
    a = np.sqrt(max(1.0 - sig3 ** 2, 0.0))
    b = np.sqrt(max(sig1 ** 2 - 1.0, 0.0))

    best = None
    for u in ((a * v1 + b * v3) / spread, (a * v1 - b * v3) / spread):
        basis = np.column_stack([v2, u, np.cross(v2, u)])
        hv2, hu = hn @ v2, hn @ u
        image = np.column_stack([hv2, hu, np.cross(hv2, hu)])
        r = RotationMatrix.nearest(image @ basis.T)
        n = np.cross(v2, u)
        n = n / np.linalg.norm(n)
        t = (hn - r.m) @ n
        if n[2] < 0:
            n, t = -n, -t
        distance = geodesic_distance(r, r_hint)
        if best is None or distance < best[0]:
            best = (distance, r, t, n)

    _, r, t, n = best
    return PlaneDecomposition(r=r, t=t, n=n, degenerate=False, scale=float(scale))


def apply_homography(h: Homography, p: Sequence[float]) -> np.ndarray:
    """Perspective image of one pixel."""
    x, y = float(p[0]), float(p[1])
    v = h.h @ np.array([x, y, 1.0])
    if abs(v[2]) < DENOMINATOR_TOL:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
    return np.array([v[0] / v[2], v[1] / v[2]])


def project_points(h: Homography, points: np.ndarray) -> np.ndarray:
    """Vectorized ``apply_homography`` over an (n, 2) array."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    hom = pts @ h.h[:, :2].T + h.h[:, 2]
    den = hom[:, 2]
    if np.any(np.abs(den) < DENOMINATOR_TOL):
        raise PointAtInfinity("at least one point maps to infinity")
    return hom[:, :2] / den[:, None]
