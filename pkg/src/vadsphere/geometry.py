"""Emotion-space geometry: VAD scaling, spherical transforms and angular regions.

Axis convention: valence, arousal and dominance map to x, y and z. Azimuth is
measured in the valence-arousal plane from the +valence axis, elevation is the
polar angle from the +dominance pole. Both are in degrees.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DomainError

__all__ = [
    "Scale",
    "VadPoint",
    "SphericalPoint",
    "RegionPartition",
    "normalize_vad",
    "denormalize_vad",
    "to_spherical",
    "to_cartesian",
    "make_partition",
    "assign_region",
    "region_centroid",
    "normalize_array",
    "denormalize_array",
    "spherical_array",
    "cartesian_array",
    "assign_regions",
]

DIMENSIONS = ("valence", "arousal", "dominance")
RAW_MIN, RAW_MAX, RAW_MID = 1.0, 7.0, 4.0
RAW_HALF_RANGE = 3.0
DEGENERATE_RADIUS = 1e-9


class Scale(Enum):
    RAW17 = "raw17"
    NORM_UNIT = "norm_unit"


@dataclass(frozen=True)
class VadPoint:
    v: float
    a: float
    d: float
    scale: Scale = Scale.NORM_UNIT

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.a, self.d], dtype=np.float64)


@dataclass(frozen=True)
class SphericalPoint:
    r: float
    azimuth_deg: float
    elevation_deg: float


@dataclass(frozen=True)
class RegionPartition:
    """Equal-width grid over azimuth [0, 360) and elevation [0, 180]."""

    n_phi: int
    n_theta: int

    @property
    def n_regions(self) -> int:
        return self.n_phi * self.n_theta

    @property
    def azimuth_width(self) -> float:
        return 360.0 / self.n_phi

    @property
    def elevation_width(self) -> float:
        return 180.0 / self.n_theta


def _check_range(values, lo, hi, names=DIMENSIONS, tol=0.0):
    values = np.asarray(values, dtype=np.float64)
    bad = ~((values >= lo - tol) & (values <= hi + tol))
    if np.any(bad):
        cols = sorted(set(np.nonzero(bad)[-1].tolist()))
        dims = ", ".join(names[c] for c in cols)
        raise DomainError(f"{dims} outside [{lo:g}, {hi:g}]")


# ---------------------------------------------------------------------------
# array API (rows are (v, a, d) triples)
# ---------------------------------------------------------------------------


def normalize_array(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    _check_range(raw, RAW_MIN, RAW_MAX)
    return (raw - RAW_MID) / RAW_HALF_RANGE


def denormalize_array(norm) -> np.ndarray:
    norm = np.asarray(norm, dtype=np.float64)
    _check_range(norm, -1.0, 1.0)
    return RAW_HALF_RANGE * norm + RAW_MID


def spherical_array(xyz):
    """Cartesian rows -> (r, azimuth_deg, elevation_deg) arrays.

    Points with r below 1e-9 get azimuth 0 and elevation 0.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    azimuth = np.degrees(np.arctan2(y, x)) % 360.0
    # tiny negative angles round up to exactly 360.0
    azimuth = np.where(azimuth >= 360.0, 0.0, azimuth)
    degenerate = r < DEGENERATE_RADIUS
    safe_r = np.where(degenerate, 1.0, r)
    elevation = np.degrees(np.arccos(np.clip(z / safe_r, -1.0, 1.0)))
    azimuth = np.where(degenerate, 0.0, azimuth)
    elevation = np.where(degenerate, 0.0, elevation)
    return r, azimuth, elevation


def cartesian_array(r, azimuth_deg, elevation_deg) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("negative radius")
    phi = np.radians(azimuth_deg)
    theta = np.radians(elevation_deg)
    sin_t = np.sin(theta)
    return np.stack(
        [r * sin_t * np.cos(phi), r * sin_t * np.sin(phi), r * np.cos(theta)],
        axis=-1,
    )


def assign_regions(part: RegionPartition, azimuth_deg, elevation_deg) -> np.ndarray:
    """Region labels for arrays of angles (half-open cells, last cell closed)."""
    return _kernels.bin_regions(azimuth_deg, elevation_deg, part.n_phi, part.n_theta)


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------


def normalize_vad(p: VadPoint) -> VadPoint:
    """Map a raw 1..7 annotation affinely onto [-1, 1] per dimension."""
    if p.scale is not Scale.RAW17:
        raise DomainError("normalize_vad expects a raw-scale point")
    v, a, d = normalize_array(p.as_array())
    return VadPoint(float(v), float(a), float(d), Scale.NORM_UNIT)


def denormalize_vad(p: VadPoint) -> VadPoint:
    if p.scale is not Scale.NORM_UNIT:
        raise DomainError("denormalize_vad expects a normalized point")
    v, a, d = denormalize_array(p.as_array())
    return VadPoint(float(v), float(a), float(d), Scale.RAW17)


def to_spherical(p: VadPoint) -> SphericalPoint:
    if p.scale is not Scale.NORM_UNIT:
        raise DomainError("to_spherical expects a normalized point")
    r, az, el = spherical_array(p.as_array())
    return SphericalPoint(float(r), float(az), float(el))


def to_cartesian(s: SphericalPoint) -> VadPoint:
    if s.r < 0:
        raise DomainError(f"negative radius {s.r}")
    if not 0.0 <= s.elevation_deg <= 180.0:
        raise DomainError(f"elevation {s.elevation_deg} outside [0, 180]")
    v, a, d = cartesian_array(s.r, s.azimuth_deg, s.elevation_deg)
    return VadPoint(float(v), float(a), float(d), Scale.NORM_UNIT)


def _valid_angles_near(angle_deg):
    m = 180.0 / angle_deg
    lo, hi = max(1, math.floor(m)), max(1, math.ceil(m))
    return sorted({180.0 / hi, 180.0 / lo})


def make_partition(angle_deg: float) -> RegionPartition:
    """Build the grid whose azimuth and elevation cells are both ``angle_deg`` wide.

    Raises ConfigurationError unless the angle divides 180 (and hence 360).
    """
    if not angle_deg > 0 or not math.isfinite(angle_deg):
        raise ConfigurationError(f"angle must be positive, got {angle_deg}")
    n_theta = 180.0 / angle_deg
    if abs(n_theta - round(n_theta)) > 1e-9 or round(n_theta) < 1:
        near = ", ".join(f"{a:g}" for a in _valid_angles_near(angle_deg))
        raise ConfigurationError(
            f"angle {angle_deg:g} does not divide 360 and 180; nearest valid: {near}"
        )
    n_theta = int(round(n_theta))
    return RegionPartition(n_phi=2 * n_theta, n_theta=n_theta)


def assign_region(part: RegionPartition, s: SphericalPoint) -> int:
    return int(assign_regions(part, np.array([s.azimuth_deg]), np.array([s.elevation_deg]))[0])


def region_centroid(part: RegionPartition, label: int, r: float = 1.0) -> SphericalPoint:
    """Point at the middle of a cell's azimuth and elevation intervals."""
    if not 0 <= label < part.n_regions:
        raise IndexError(f"label {label} outside [0, {part.n_regions})")
    a_idx, e_idx = divmod(int(label), part.n_theta)
    return SphericalPoint(
        float(r),
        (a_idx + 0.5) * part.azimuth_width,
        (e_idx + 0.5) * part.elevation_width,
    )
