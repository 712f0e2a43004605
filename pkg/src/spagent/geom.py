"""Plane geometry in the tangent-point parameterization.

A plane that does not pass through the origin touches exactly one
origin-centred sphere.  The touching point ``t`` identifies the plane:
every point ``x`` on it satisfies ``t . x = |t|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint

R_MIN = 1e-3  # mm

# |normal . z| above this switches the frame reference axis to world-x
_FRAME_SWITCH = 0.9


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TangentPoint:
    t_x: float
    t_y: float
    t_z: float

    def __post_init__(self):
        if self.radius < R_MIN:
            raise DegeneratePoint(
                f"tangent point radius {self.radius:.3g} mm is below R_MIN={R_MIN}"
            )

    @classmethod
    def from_array(cls, a) -> "TangentPoint":
        x, y, z = (float(c) for c in np.asarray(a, dtype=np.float64).reshape(3))
        return cls(x, y, z)

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.t_x**2 + self.t_y**2 + self.t_z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y, self.t_z], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Plane:
    """Normal / signed-distance form ``normal . x = d``."""

    normal: np.ndarray
    d: float

    def __post_init__(self):
        n = _as_vec3(self.normal)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("plane normal must be a finite non-zero vector")
        if abs(norm - 1.0) > 1e-12:
            n = _as_vec3(n / norm)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "d", float(self.d))

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return bool(np.array_equal(self.normal, other.normal)) and self.d == other.d

    def __hash__(self):
        return hash((tuple(self.normal), self.d))


@dataclass(frozen=True, eq=False)
class PlaneFrame:
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray
    pixel_pitch: float
    extent: int

    def __eq__(self, other):
        if not isinstance(other, PlaneFrame):
            return NotImplemented
        return (
            all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("origin", "u", "v", "normal")
            )
            and self.pixel_pitch == other.pixel_pitch
            and self.extent == other.extent
        )

    def __hash__(self):
        return hash((tuple(self.origin), self.pixel_pitch, self.extent))

    def pixel_points(self) -> np.ndarray:
        """World coordinates of every pixel centre, shape (extent, extent, 3).

        Pixel (i, j) sits at ``origin + (i - c) * pitch * u + (j - c) * pitch * v``
        with ``c = extent // 2``, so pixel (c, c) is the tangent point itself.
        """
        c = self.extent // 2
        offs = (np.arange(self.extent, dtype=np.float64) - c) * self.pixel_pitch
        return (
            self.origin[None, None, :]
            + offs[:, None, None] * self.u[None, None, :]
            + offs[None, :, None] * self.v[None, None, :]
        )


def tangent_to_plane(p: TangentPoint) -> Plane:
    t = p.as_array()
    r = np.linalg.norm(t)
    if r < R_MIN:
        raise DegeneratePoint(f"radius {r:.3g} below R_MIN")
    return Plane(normal=t / r, d=r)


def plane_to_tangent(pl: Plane) -> TangentPoint:
    if pl.d < R_MIN:
        raise DegeneratePoint(f"plane distance {pl.d:.3g} below R_MIN")
    return TangentPoint.from_array(pl.normal * pl.d)


def tangents_to_planes(points) -> tuple[np.ndarray, np.ndarray]:
    """Batch form of ``tangent_to_plane``: (N, 3) points to unit normals (N, 3) and distances (N,)."""
    t = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    r = np.linalg.norm(t, axis=1)
    if r.size and r.min() < R_MIN:
        raise DegeneratePoint(f"{int(np.sum(r < R_MIN))} points have radius below R_MIN")
    return t / r[:, None], r


def planes_to_tangents(normals, d) -> np.ndarray:
    """Batch form of ``plane_to_tangent``; normals must already be unit length."""
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if d.size and d.min() < R_MIN:
        raise DegeneratePoint(f"{int(np.sum(d < R_MIN))} plane distances below R_MIN")
    return n * d[:, None]


def build_frame(p: TangentPoint, pixel_pitch: float, extent: int) -> PlaneFrame:
    n = tangent_to_plane(p).normal
    if abs(n[2]) > _FRAME_SWITCH:
        ref = np.array([1.0, 0.0, 0.0])
    else:
        ref = np.array([0.0, 0.0, 1.0])
    u = np.cross(ref, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return PlaneFrame(
        origin=_as_vec3(p.as_array()),
        u=_as_vec3(u),
        v=_as_vec3(v),
        normal=_as_vec3(n),
        pixel_pitch=float(pixel_pitch),
        extent=int(extent),
    )


def plane_metrics(pred: Plane, gt: Plane) -> tuple[float, float]:
    """Angle between normals (degrees) and difference of origin distances (mm).

    The dot product is signed: a plane with a flipped normal is 180 degrees off.
    """
    cos = float(np.clip(np.dot(pred.normal, gt.normal), -1.0, 1.0))
    ang = float(np.degrees(np.arccos(cos)))
    dis = abs(pred.d - gt.d)
    return ang, dis
