"""2D scene geometry: device placements, path angles and wall reflection.

Everything lives in the azimuth plane.  Angles are stored in radians and are
measured from a device's reference axis (array boresight for the BS and the
UEs, surface normal for a reflecting surface), counter-clockwise positive.
Config files may use degrees; conversion happens at the parsing layer.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi


class DegenerateGeometryError(ValueError):
    """Raised for coincident points or zero-length path legs."""


class NotIlluminatedWarning(UserWarning):
    """A path hits the back side of a one-sided radiator; its gain is zeroed."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def is_front(angle: float) -> bool:
    """True when the angle falls on the front half-plane of the device."""
    return abs(angle) < math.pi / 2


@dataclass(frozen=True)
class Point2:
    """A point in the azimuth plane, coordinates in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def bearing(origin: Point2, axis: float, target: Point2) -> float:
    """Signed angle of ``target`` as seen from ``origin``'s reference axis."""
    dx = target.x - origin.x
    dy = target.y - origin.y
    if dx == 0.0 and dy == 0.0:
        raise DegenerateGeometryError("bearing between coincident points")
    return wrap_angle(math.atan2(dy, dx) - axis)


@dataclass(frozen=True)
class PathAngles:
    """Departure/arrival angles and total length of a propagation path.

    ``departure`` is measured from the source axis, ``arrival`` from the
    destination axis.  For a one-sided device the path only carries power
    when the corresponding angle lies within (-pi/2, pi/2).
    """

    departure: float
    arrival: float
    length: float

    def __post_init__(self) -> None:
        if self.length <= 0.0:
            raise DegenerateGeometryError(f"path length {self.length} must be positive")

    @property
    def departure_front(self) -> bool:
        return is_front(self.departure)

    @property
    def arrival_front(self) -> bool:
        return is_front(self.arrival)

    @property
    def illuminated(self) -> bool:
        return self.departure_front and self.arrival_front


@dataclass(frozen=True)
class RadioParams:
    """Carrier and power constants shared by every link."""

    wavelength_m: float
    bandwidth_hz: float
    noise_density_dbm_hz: float
    tx_power_w: float
    absorption_per_m: float = 0.0
    irs_reflection: complex = 1.0 + 0.0j

    def __post_init__(self) -> None:
        if self.wavelength_m <= 0.0:
            raise ValueError("wavelength must be positive")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth must be positive")
        if self.absorption_per_m < 0.0:
            raise ValueError("absorption coefficient must be >= 0")
        if self.tx_power_w <= 0.0:
            raise ValueError("transmit power must be positive")

    @property
    def noise_power_w(self) -> float:
        """Thermal noise power over the signal bandwidth, in watts."""
        return 10.0 ** ((self.noise_density_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz


@dataclass(frozen=True)
class BsSpec:
    """Base-station ULA: position, boresight and element grid."""

    position: Point2
    boresight: float
    elements: int
    spacing_wl: float = 0.5

    def __post_init__(self) -> None:
        if self.elements < 1:
            raise ValueError("BS needs at least one element")
        if self.spacing_wl <= 0.0:
            raise ValueError("element spacing must be positive")

    @property
    def axis(self) -> float:
        return self.boresight


@dataclass(frozen=True)
class UeSpec:
    """User-equipment ULA; analog beamforming only."""

    position: Point2
    boresight: float
    elements: int
    spacing_wl: float = 0.5

    def __post_init__(self) -> None:
        if self.elements < 1:
            raise ValueError("UE needs at least one element")
        if self.spacing_wl <= 0.0:
            raise ValueError("element spacing must be positive")

    @property
    def axis(self) -> float:
        return self.boresight

    def at(self, position: Point2) -> "UeSpec":
        """Same array, relocated (used when trial positions are random)."""
        return UeSpec(position, self.boresight, self.elements, self.spacing_wl)


@dataclass(frozen=True)
class IrsSpec:
    """A square reflecting surface characterised by center, normal and area."""

    center: Point2
    normal: float
    area_m2: float

    def __post_init__(self) -> None:
        if self.area_m2 <= 0.0:
            raise ValueError("surface area must be positive")

    @property
    def axis(self) -> float:
        return self.normal

    @classmethod
    def from_grid(cls, center: Point2, normal: float, grid: int,
                  spacing_wl: float, wavelength_m: float) -> "IrsSpec":
        """Build from an LxL meta-atom grid; area is (L * spacing * wavelength)^2."""
        if grid < 1:
            raise ValueError("grid side must be >= 1")
        side = grid * spacing_wl * wavelength_m
        return cls(center, normal, side * side)

    def grid_spacing_wl(self, grid: int, wavelength_m: float) -> float:
        """Meta-atom pitch (in wavelengths) for an LxL grid with this area."""
        return math.sqrt(self.area_m2) / (grid * wavelength_m)


# --- wall materials ---------------------------------------------------------


@dataclass(frozen=True)
class ConstantReflection:
    """Angle-independent complex reflection coefficient."""

    value: complex

    def reflection(self, incidence: float) -> complex:
        return complex(self.value)


@dataclass(frozen=True)
class FresnelReflection:
    """TE (perpendicular polarisation) reflection off a dielectric half-space."""

    permittivity: complex

    def reflection(self, incidence: float) -> complex:
        c = math.cos(incidence)
        root = np.sqrt(self.permittivity - math.sin(incidence) ** 2 + 0j)
        return complex((c - root) / (c + root))


@dataclass(frozen=True)
class TabulatedReflection:
    """Measured-style table of complex coefficients vs incidence angle."""

    angles_rad: tuple
    values: tuple

    def __post_init__(self) -> None:
        a = np.asarray(self.angles_rad, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("table needs at least two angles")
        if np.any(np.diff(a) <= 0.0):
            raise ValueError("table angles must be strictly increasing")
        if a[0] < 0.0 or a[-1] > math.pi / 2:
            raise ValueError("table angles must lie in [0, pi/2]")
        if len(self.values) != a.size:
            raise ValueError("table angle/value length mismatch")

    def reflection(self, incidence: float) -> complex:
        a = np.asarray(self.angles_rad, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if incidence < a[0] or incidence > a[-1]:
            warnings.warn(
                f"incidence {math.degrees(incidence):.1f} deg outside table range; clamped",
                stacklevel=2,
            )
            incidence = min(max(incidence, a[0]), a[-1])
        re = np.interp(incidence, a, v.real)
        im = np.interp(incidence, a, v.imag)
        return complex(re, im)


WallMaterial = Union[ConstantReflection, FresnelReflection, TabulatedReflection]


def _plasterboard_table() -> TabulatedReflection:
    # Effective single-layer TE response of a light drywall panel at 0.1 THz.
    # Absolute wall-vs-surface gain levels reported by the harness depend on
    # this choice; swap the material in the config to model other panels.
    eps = 1.55 - 0.05j
    angles = [math.radians(a) for a in range(0, 90, 5)]
    fresnel = FresnelReflection(eps)
    values = [fresnel.reflection(a) for a in angles]
    return TabulatedReflection(tuple(angles), tuple(values))


DEFAULT_PLASTERBOARD = _plasterboard_table()


@dataclass(frozen=True)
class WallSpec:
    """A flat reflecting wall segment with an associated material."""

    p0: Point2
    p1: Point2
    material: WallMaterial = DEFAULT_PLASTERBOARD

    def __post_init__(self) -> None:
        if self.p0.x == self.p1.x and self.p0.y == self.p1.y:
            raise DegenerateGeometryError("wall endpoints coincide")

    @property
    def direction(self) -> np.ndarray:
        d = self.p1.as_array() - self.p0.as_array()
        return d / np.linalg.norm(d)

    @property
    def unit_normal(self) -> np.ndarray:
        dx, dy = self.direction
        return np.array([-dy, dx])


def wall_reflection_coefficient(material: WallMaterial, incidence: float) -> complex:
    """Complex wall reflection coefficient at the given incidence angle.

    Incidence is measured from the wall normal and must lie in [0, pi/2).
    """
    if incidence < 0.0 or incidence >= math.pi / 2:
        raise ValueError("incidence angle must lie in [0, pi/2)")
    return material.reflection(incidence)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle used for random UE / reflector placement."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("rectangle must have positive extent")

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Draw ``n`` i.i.d. uniform points; shape (n, 2)."""
        x = rng.uniform(self.x_min, self.x_max, size=n)
        y = rng.uniform(self.y_min, self.y_max, size=n)
        return np.stack([x, y], axis=-1)

    def contains(self, p: Point2) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max


@dataclass(frozen=True)
class Scene:
    """Immutable description of one deployment: radio constants plus geometry.

    The UE entries carry nominal positions; Monte Carlo trials relocate them
    via :class:`~irssim.channel.ChannelRealization`.
    """

    radio: RadioParams
    bs: BsSpec
    irs: tuple
    ues: tuple
    wall: Optional[WallSpec] = None
    ue_region: Optional[Rect] = None

    def __post_init__(self) -> None:
        if len(self.irs) < 1:
            raise ValueError("need at least one reflecting surface")
        if len(self.ues) < 1:
            raise ValueError("need at least one UE")
        if min(self.bs.elements, len(self.irs)) < len(self.ues):
            raise ValueError(
                f"zero-forcing needs min(M1, N) >= K; got M1={self.bs.elements}, "
                f"N={len(self.irs)}, K={len(self.ues)}"
            )

    @property
    def n_irs(self) -> int:
        return len(self.irs)

    @property
    def n_ues(self) -> int:
        return len(self.ues)


# --- path construction ------------------------------------------------------


def los_path(source, destination) -> PathAngles:
    """Line-of-sight path between two devices exposing ``position``/``axis``.

    Departure is measured from the source axis, arrival from the destination
    axis; the length is the Euclidean distance.
    """
    d = source.position.distance_to(destination.position)
    if d == 0.0:
        raise DegenerateGeometryError("source and destination coincide")
    dep = bearing(source.position, source.axis, destination.position)
    arr = bearing(destination.position, destination.axis, source.position)
    return PathAngles(dep, arr, d)


def reflector_path(irs: IrsSpec, reflector: Point2, ue: UeSpec) -> PathAngles:
    """Two-leg path surface -> point reflector -> UE.

    The reflector is an idealised point: the path loss downstream uses the
    total length in a single inverse-distance factor.
    """
    leg_a = irs.center.distance_to(reflector)
    leg_b = reflector.distance_to(ue.position)
    if leg_a == 0.0 or leg_b == 0.0:
        raise DegenerateGeometryError("reflector coincides with a path endpoint")
    dep = bearing(irs.center, irs.normal, reflector)
    arr = bearing(ue.position, ue.boresight, reflector)
    return PathAngles(dep, arr, leg_a + leg_b)


def wall_image_path(bs: BsSpec, ue: UeSpec, wall: WallSpec):
    """Specular bounce BS -> wall -> UE built with the image construction.

    Returns ``(PathAngles, incidence)`` where incidence is measured from the
    wall normal, or ``None`` when the specular point misses the wall segment
    or one endpoint sits behind the wall plane.
    """
    p0 = wall.p0.as_array()
    t_hat = wall.direction
    n_hat = wall.unit_normal

    b = bs.position.as_array()
    u = ue.position.as_array()
    h_b = float(np.dot(b - p0, n_hat))
    h_u = float(np.dot(u - p0, n_hat))
    # Both endpoints must sit on the same side of the wall, off the plane.
    if h_b == 0.0 or h_u == 0.0 or (h_b > 0) != (h_u > 0):
        return None

    image = b - 2.0 * h_b * n_hat
    chord = u - image
    denom = float(np.dot(chord, n_hat))
    if denom == 0.0:
        return None
    t = -float(np.dot(image - p0, n_hat)) / denom
    hit = image + t * chord
    along = float(np.dot(hit - p0, t_hat))
    if along < 0.0 or along > wall.p0.distance_to(wall.p1):
        return None

    hit_point = Point2(float(hit[0]), float(hit[1]))
    dep = bearing(bs.position, bs.boresight, hit_point)
    arr = bearing(ue.position, ue.boresight, hit_point)
    length = float(np.linalg.norm(chord))

    ray = hit - b
    cos_inc = abs(float(np.dot(ray, n_hat))) / float(np.linalg.norm(ray))
    incidence = math.acos(min(1.0, cos_inc))
    return PathAngles(dep, arr, length), incidence
