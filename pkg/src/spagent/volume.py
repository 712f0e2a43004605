"""Synthetic phantom volumes, trilinear sampling, reslicing and the volume file format.

World coordinates are millimetres with the origin at voxel (0, 0, 0); voxel
(i, j, k) sits at ``(i, j, k) * spacing``.  Arrays are indexed ``[i, j, k]``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import Reader
from .errors import ConfigError, FormatError
from .geom import R_MIN, PlaneFrame, TangentPoint, build_frame

VOLUME_MAGIC = b"SPVOL1"

RESLICE_EXTENT = 64
RESLICE_PITCH = 0.5  # mm / pixel

DEFAULT_HEATMAP_SIGMA = 4.0  # mm


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Volume:
    spacing: float
    voxels: np.ndarray
    landmarks: np.ndarray
    gt_tangent: TangentPoint
    heatmap: np.ndarray
    heatmap_sigma: float = DEFAULT_HEATMAP_SIGMA

    def __post_init__(self):
        vox = _frozen(self.voxels, np.float32)
        hm = _frozen(self.heatmap, np.float32)
        if vox.ndim != 3 or min(vox.shape) < 2:
            raise ConfigError(f"voxel grid must be 3D with every side >= 2, got {vox.shape}")
        if hm.shape != vox.shape:
            raise ConfigError("heatmap and voxel grids differ in shape")
        if not self.spacing > 0:
            raise ConfigError("spacing must be positive")
        lm = _frozen(np.reshape(self.landmarks, (-1, 3)), np.float64)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "heatmap", hm)
        object.__setattr__(self, "landmarks", lm)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "heatmap_sigma", float(self.heatmap_sigma))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    @property
    def physical_size(self) -> np.ndarray:
        """Extent of the sampled box along each axis, (n - 1) * spacing."""
        return (np.array(self.dims, dtype=np.float64) - 1.0) * self.spacing

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.heatmap_sigma == other.heatmap_sigma
            and self.gt_tangent == other.gt_tangent
            and np.array_equal(self.voxels, other.voxels)
            and np.array_equal(self.heatmap, other.heatmap)
            and np.array_equal(self.landmarks, other.landmarks)
        )

    __hash__ = None


@dataclass(frozen=True)
class PhantomConfig:
    seed: int = 0
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: float = 1.0
    landmark_count: int = 3
    rotation_range: float = 30.0  # degrees
    noise_level: float = 0.2
    heatmap_sigma: float = DEFAULT_HEATMAP_SIGMA
    # organ centre as a fraction of the physical box, per axis
    organ_center: float = 0.22
    organ_radius: float = 11.0  # mm, largest semi-axis
    center_jitter: float = 1.0  # mm, uniform per-axis offset of the organ centre

    def validate(self) -> None:
        if len(self.dims) != 3 or any(int(n) < 2 for n in self.dims):
            raise ConfigError(f"dims must be three integers >= 2, got {self.dims}")
        if not self.spacing > 0:
            raise ConfigError("spacing must be positive")
        if self.landmark_count < 3:
            raise ConfigError("landmark_count must be >= 3")
        if not 0.0 <= self.rotation_range <= 180.0:
            raise ConfigError("rotation_range must lie in [0, 180] degrees")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")
        if not self.heatmap_sigma > 0:
            raise ConfigError("heatmap_sigma must be positive")
        if not self.organ_radius > 0:
            raise ConfigError("organ_radius must be positive")
        if self.center_jitter < 0:
            raise ConfigError("center_jitter must be >= 0")
        size = (np.array(self.dims, dtype=np.float64) - 1.0) * self.spacing
        center = self.organ_center * size
        if np.any(center - self.organ_radius < 0) or np.any(center + self.organ_radius > size):
            raise ConfigError("organ does not fit inside the volume")


# ---------------------------------------------------------------------------
# sampling


def sample_points(grid: np.ndarray, spacing: float, points) -> np.ndarray:
    """Trilinear interpolation of ``grid`` at world points (..., 3); zero outside."""
    pts = np.asarray(points, dtype=np.float64)
    shape = pts.shape[:-1]
    idx = pts.reshape(-1, 3) / spacing
    dims = np.array(grid.shape)
    inside = np.all((idx >= 0.0) & (idx <= dims - 1), axis=1)
    out = np.zeros(idx.shape[0], dtype=np.float64)
    if not inside.any():
        return out.reshape(shape)
    q = idx[inside]
    i0 = np.minimum(np.floor(q).astype(np.int64), dims - 2)
    f = q - i0
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    g = grid
    c00 = g[x0, y0, z0] * (1 - fx) + g[x0 + 1, y0, z0] * fx
    c10 = g[x0, y0 + 1, z0] * (1 - fx) + g[x0 + 1, y0 + 1, z0] * fx
    c01 = g[x0, y0, z0 + 1] * (1 - fx) + g[x0 + 1, y0, z0 + 1] * fx
    c11 = g[x0, y0 + 1, z0 + 1] * (1 - fx) + g[x0 + 1, y0 + 1, z0 + 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out[inside] = c0 * (1 - fz) + c1 * fz
    return out.reshape(shape)


def sample_trilinear(vol: Volume, point) -> float:
    return float(sample_points(vol.voxels, vol.spacing, np.asarray(point, dtype=np.float64)))


def reslice(vol: Volume, frame: PlaneFrame, grid: np.ndarray | None = None) -> np.ndarray:
    """Sample ``grid`` (default: the voxels) on the frame's pixel lattice."""
    if grid is None:
        grid = vol.voxels
    return sample_points(grid, vol.spacing, frame.pixel_points())


def build_heatmap(vol_or_dims, landmarks, sigma: float, spacing: float | None = None) -> np.ndarray:
    """Max-merged Gaussian kernels centred on the landmarks.

    Accepts either a :class:`Volume` (dims and spacing taken from it) or a dims
    tuple plus ``spacing``.  Returns float64; no landmarks gives all zeros.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if isinstance(vol_or_dims, Volume):
        dims, spacing = vol_or_dims.dims, vol_or_dims.spacing
    else:
        dims = tuple(int(n) for n in vol_or_dims)
        if spacing is None:
            raise ValueError("spacing required when dims are given")
    lm = np.asarray(landmarks, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(dims, dtype=np.float64)
    if lm.shape[0] == 0:
        return out
    axes = [np.arange(n, dtype=np.float64) * spacing for n in dims]
    inv = 1.0 / (2.0 * sigma * sigma)
    for L in lm:
        dx = (axes[0] - L[0]) ** 2
        dy = (axes[1] - L[1]) ** 2
        dz = (axes[2] - L[2]) ** 2
        d2 = dx[:, None, None] + dy[None, :, None] + dz[None, None, :]
        np.maximum(out, np.exp(-d2 * inv), out=out)
    return out


def plane_heatmap_sum(
    vol: Volume, p: TangentPoint, pixel_pitch: float = RESLICE_PITCH, extent: int = RESLICE_EXTENT
) -> float:
    frame = build_frame(p, pixel_pitch, extent)
    return float(reslice(vol, frame, vol.heatmap).sum())


# ---------------------------------------------------------------------------
# phantom generation


def _random_rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.uniform(0.0, max_deg)) if max_deg > 0 else 0.0
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def _canonical_basis(n0: np.ndarray) -> np.ndarray:
    """Columns (e1, e2, n0): right-handed, n0 is the organ's plane normal."""
    ref = np.array([1.0, 0.0, 0.0]) if abs(n0[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(ref, n0)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n0, e1)
    return np.column_stack([e1, e2, n0])


def generate_phantom(cfg: PhantomConfig) -> Volume:
    """Ellipsoidal organ with bright lobes centred on its standard plane.

    The organ is built in its own frame, where the standard plane is the local
    z = 0 plane, then rotated rigidly about its centre by a random rotation of
    at most ``cfg.rotation_range`` degrees.  The unrotated plane faces the
    volume origin, so its tangent point is the organ centre.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    dims = tuple(int(n) for n in cfg.dims)
    size = (np.array(dims, dtype=np.float64) - 1.0) * cfg.spacing
    center = cfg.organ_center * size + rng.uniform(-1.0, 1.0, size=3) * cfg.center_jitter
    n0 = center / np.linalg.norm(center)
    base = _canonical_basis(n0)

    semi = cfg.organ_radius * np.array(
        [rng.uniform(0.85, 1.0), rng.uniform(0.7, 0.85), rng.uniform(0.55, 0.7)]
    )

    n_lobes = int(rng.integers(2, 5))
    phase = rng.uniform(0, 2 * np.pi)
    lobes = []
    for k in range(n_lobes):
        ang = phase + 2 * np.pi * k / n_lobes + rng.uniform(-0.3, 0.3)
        rad = rng.uniform(0.35, 0.6)
        pos = np.array([rad * semi[0] * np.cos(ang), rad * semi[1] * np.sin(ang), 0.0])
        lobes.append((pos, rng.uniform(1.4, 2.4), rng.uniform(0.55, 0.85)))

    # in-plane landmark positions (local frame): lobe centres first, then rim points
    local_lm = [pos for pos, _, _ in lobes[: cfg.landmark_count]]
    extra = cfg.landmark_count - len(local_lm)
    for k in range(extra):
        ang = phase + np.pi / n_lobes + 2 * np.pi * k / max(extra, 1)
        local_lm.append(np.array([0.8 * semi[0] * np.cos(ang), 0.8 * semi[1] * np.sin(ang), 0.0]))
    local_lm = np.array(local_lm)

    for _ in range(1000):
        rot = _random_rotation(rng, cfg.rotation_range)
        axes = rot @ base
        normal = axes[:, 2]
        d = float(normal @ center)
        if d < 0:
            normal, d = -normal, -d
        if d >= max(R_MIN, cfg.spacing):
            break
    else:  # pragma: no cover - only reachable with pathological configs
        raise ConfigError("could not draw a rotation keeping the plane off the origin")

    grid_axes = [np.arange(n, dtype=np.float64) * cfg.spacing for n in dims]
    world = np.stack(np.meshgrid(*grid_axes, indexing="ij"), axis=-1)
    local = (world - center) @ axes  # coordinates in the rotated organ frame

    rho = np.sqrt(np.sum((local / semi) ** 2, axis=-1))
    shell_width = 1.2 / cfg.organ_radius
    intensity = 0.08 + 0.17 / (1.0 + np.exp((rho - 1.0) / 0.03))  # tissue + organ fill
    intensity += 0.55 * np.exp(-(((rho - 1.0) / shell_width) ** 2))
    for pos, sigma, amp in lobes:
        d2 = np.sum((local - pos) ** 2, axis=-1)
        intensity += amp * np.exp(-d2 / (2 * sigma * sigma))

    if cfg.noise_level > 0:
        speckle = rng.rayleigh(scale=np.sqrt(2.0 / np.pi), size=intensity.shape)  # mean 1
        intensity = intensity * ((1.0 - cfg.noise_level) + cfg.noise_level * speckle)
        intensity += 0.1 * cfg.noise_level * rng.normal(size=intensity.shape)
    voxels = np.clip(intensity, 0.0, 1.0)

    landmarks = center + local_lm @ axes.T
    gt = TangentPoint.from_array(normal * d)
    heat = build_heatmap(dims, landmarks, cfg.heatmap_sigma, spacing=cfg.spacing)
    return Volume(
        spacing=cfg.spacing,
        voxels=voxels,
        landmarks=landmarks,
        gt_tangent=gt,
        heatmap=heat,
        heatmap_sigma=cfg.heatmap_sigma,
    )


def with_landmarks(vol: Volume, landmarks, sigma: float | None = None) -> Volume:
    """Copy of ``vol`` with new landmarks and a rebuilt heatmap."""
    sigma = vol.heatmap_sigma if sigma is None else sigma
    heat = build_heatmap(vol.dims, landmarks, sigma, spacing=vol.spacing)
    return Volume(
        spacing=vol.spacing,
        voxels=vol.voxels,
        landmarks=landmarks,
        gt_tangent=vol.gt_tangent,
        heatmap=heat,
        heatmap_sigma=sigma,
    )


# ---------------------------------------------------------------------------
# file format


def save_volume(vol: Volume, path) -> None:
    nx, ny, nz = vol.dims
    lm = vol.landmarks
    parts = [
        VOLUME_MAGIC,
        struct.pack("<3I", nx, ny, nz),
        struct.pack("<d", vol.spacing),
        struct.pack("<I", lm.shape[0]),
        lm.astype("<f8").tobytes(),
        struct.pack("<3d", *vol.gt_tangent.as_array()),
        vol.voxels.astype("<f4").tobytes(order="F"),
        struct.pack("<d", vol.heatmap_sigma),
        vol.heatmap.astype("<f4").tobytes(order="F"),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_volume(path) -> Volume:
    r = Reader(Path(path).read_bytes())
    if r.take(len(VOLUME_MAGIC)) != VOLUME_MAGIC:
        raise FormatError("not a volume file (bad magic)")
    nx, ny, nz = r.unpack("<3I")
    (spacing,) = r.unpack("<d")
    (n_lm,) = r.unpack("<I")
    lm = r.array("<f8", 3 * n_lm).reshape(n_lm, 3)
    gt = r.unpack("<3d")
    n = nx * ny * nz
    vox = r.array("<f4", n).reshape((nx, ny, nz), order="F")
    (sigma,) = r.unpack("<d")
    heat = r.array("<f4", n).reshape((nx, ny, nz), order="F")
    r.done()
    try:
        return Volume(
            spacing=spacing,
            voxels=vox,
            landmarks=lm,
            gt_tangent=TangentPoint(*gt),
            heatmap=heat,
            heatmap_sigma=sigma,
        )
    except (ConfigError, ValueError) as exc:
        raise FormatError(f"invalid volume contents: {exc}") from exc
