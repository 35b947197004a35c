"""Array geometry, frequency grid, image window and scatterer scene.

Units
-----
All lengths are stored in central wavelengths (lambda0). Angular frequencies
are stored in units of ``omega0 = 2*pi*c0/lambda0``, so a frequency ``f`` is
stored as ``f/f0``. In this system the wave speed is ``C0 = 1/(2*pi)`` and the
wavenumber at stored frequency ``w`` is ``w/C0 = 2*pi*w``. Conversions from
physical units (THz, nm) happen only when parsing configuration files.

Composite index
---------------
Multifrequency illumination vectors and interferometric matrices use the
composite index ``i = s + (l-1)*N`` (1-based, source ``s``, frequency ``l``).
Internally arrays are 0-based: ``i0 = s0 + l0*N``.

Grid enumeration
----------------
Image-window points are cell centers, enumerated row-major with range
fastest: ``k = ix*nz + iz``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

C0 = 1.0 / (2.0 * np.pi)
"""Wave speed in the dimensionless (lambda0, 1/omega0) system."""


class ValidationError(ValueError):
    """A constructed object violates one of its invariants."""


def linear_index(s: int, l: int, n: int, s_count: int | None = None) -> int:
    """Composite index ``s + (l-1)*n`` for source ``s`` and frequency ``l`` (1-based)."""
    if n < 1:
        raise IndexError(f"array size must be >= 1, got {n}")
    if not 1 <= s <= n:
        raise IndexError(f"source index {s} outside 1..{n}")
    if l < 1 or (s_count is not None and l > s_count):
        raise IndexError(f"frequency index {l} outside 1..{s_count}")
    return s + (l - 1) * n


def split_index(i: int, n: int, s_count: int | None = None) -> tuple[int, int]:
    """Inverse of :func:`linear_index`: returns ``(s, l)``, both 1-based."""
    if n < 1:
        raise IndexError(f"array size must be >= 1, got {n}")
    upper = None if s_count is None else n * s_count
    if i < 1 or (upper is not None and i > upper):
        raise IndexError(f"composite index {i} out of range")
    l, s0 = divmod(i - 1, n)
    return s0 + 1, l + 1


@dataclass(frozen=True)
class ArrayGeometry:
    """Transducer positions ``(N, 2)`` as (cross-range, range) in lambda0."""

    positions: np.ndarray
    colocated: bool = True

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValidationError("positions must be a non-empty (N, 2) array")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("positions must be finite")
        if pos.shape[0] > 1:
            d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() <= 0.0:
                raise ValidationError("transducer positions must be pairwise distinct")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def linear(cls, aperture: float, n: int, center: Sequence[float] = (0.0, 0.0),
               colocated: bool = True) -> "ArrayGeometry":
        """Equispaced array along cross-range, centered at ``center``."""
        if n < 1:
            raise ValidationError("array needs at least one transducer")
        if n > 1 and aperture <= 0:
            raise ValidationError("aperture must be positive")
        xs = np.linspace(-aperture / 2, aperture / 2, n) if n > 1 else np.zeros(1)
        pos = np.column_stack([xs + center[0], np.full(n, float(center[1]))])
        return cls(pos, colocated)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def aperture(self) -> float:
        """Cross-range extent of the array."""
        x = self.positions[:, 0]
        return float(x.max() - x.min())

    @property
    def center(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def center_index(self) -> int:
        """0-based index of the element closest to the array center."""
        d = np.linalg.norm(self.positions - self.center, axis=1)
        return int(np.argmin(d))


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing frequencies.

    ``omegas`` are the stored angular frequencies (units of omega0, i.e.
    ``f/f0``). ``f0_thz`` and ``freqs_thz`` keep the physical values for
    reporting.
    """

    freqs_thz: np.ndarray
    f0_thz: float = 600.0

    def __post_init__(self):
        f = np.atleast_1d(np.array(self.freqs_thz, dtype=float))
        if f.ndim != 1 or f.size < 1:
            raise ValidationError("need at least one frequency")
        if np.any(f <= 0) or self.f0_thz <= 0:
            raise ValidationError("frequencies must be positive")
        if np.any(np.diff(f) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        f.setflags(write=False)
        object.__setattr__(self, "freqs_thz", f)

    @classmethod
    def band(cls, fmin_thz: float, fmax_thz: float, count: int,
             f0_thz: float = 600.0) -> "FrequencyGrid":
        if count == 1:
            return cls(np.array([0.5 * (fmin_thz + fmax_thz)]), f0_thz)
        return cls(np.linspace(fmin_thz, fmax_thz, count), f0_thz)

    @property
    def s(self) -> int:
        return self.freqs_thz.size

    @property
    def omegas(self) -> np.ndarray:
        return self.freqs_thz / self.f0_thz

    @property
    def bandwidth_thz(self) -> float:
        return float(self.freqs_thz[-1] - self.freqs_thz[0])

    @property
    def bandwidth(self) -> float:
        """Bandwidth in stored (omega0) units."""
        return self.bandwidth_thz / self.f0_thz


@dataclass(frozen=True)
class ImageWindow:
    """Rectangular window of cell-centered pixels.

    ``origin`` is the lower corner (min cross-range, min range); ``extent``
    and ``pixel`` are (cross-range, range) pairs in lambda0.
    """

    origin: tuple[float, float]
    extent: tuple[float, float]
    pixel: tuple[float, float]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        extent = tuple(float(v) for v in self.extent)
        pixel = tuple(float(v) for v in self.pixel)
        if len(origin) != 2 or len(extent) != 2 or len(pixel) != 2:
            raise ValidationError("window origin/extent/pixel must be pairs")
        if min(pixel) <= 0 or min(extent) <= 0:
            raise ValidationError("window extent and pixel pitch must be positive")
        for e, p in zip(extent, pixel):
            ratio = e / p
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValidationError(f"extent {e} is not an integer multiple of pitch {p}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "pixel", pixel)

    @classmethod
    def centered(cls, center: Sequence[float], extent: Sequence[float],
                 pixel: Sequence[float]) -> "ImageWindow":
        origin = (center[0] - extent[0] / 2, center[1] - extent[1] / 2)
        return cls(origin, tuple(extent), tuple(pixel))

    @property
    def shape(self) -> tuple[int, int]:
        return (int(round(self.extent[0] / self.pixel[0])),
                int(round(self.extent[1] / self.pixel[1])))

    @property
    def k(self) -> int:
        nx, nz = self.shape
        return nx * nz

    @property
    def center(self) -> np.ndarray:
        return np.array([self.origin[0] + self.extent[0] / 2,
                         self.origin[1] + self.extent[1] / 2])

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates along cross-range and range."""
        nx, nz = self.shape
        xs = self.origin[0] + self.pixel[0] * (np.arange(nx) + 0.5)
        zs = self.origin[1] + self.pixel[1] * (np.arange(nz) + 0.5)
        return xs, zs

    def index_of(self, ix: int, iz: int) -> int:
        nx, nz = self.shape
        if not (0 <= ix < nx and 0 <= iz < nz):
            raise IndexError(f"cell ({ix}, {iz}) outside window {self.shape}")
        return ix * nz + iz

    def cell_of(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.k:
            raise IndexError(f"grid index {k} outside 0..{self.k - 1}")
        return divmod(k, self.shape[1])

    def nearest_index(self, point: Sequence[float]) -> int:
        """Grid index of the cell containing ``point`` (clamped to the window)."""
        nx, nz = self.shape
        ix = int(np.floor((point[0] - self.origin[0]) / self.pixel[0]))
        iz = int(np.floor((point[1] - self.origin[1]) / self.pixel[1]))
        return self.index_of(min(max(ix, 0), nx - 1), min(max(iz, 0), nz - 1))


def grid_points(iw: ImageWindow) -> np.ndarray:
    """The ``K`` cell centers of ``iw`` as a ``(K, 2)`` array (range fastest)."""
    xs, zs = iw.axes()
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    return np.column_stack([X.ravel(), Z.ravel()])


@dataclass(frozen=True)
class Scatterer:
    position: tuple[float, float]
    reflectivity: complex


@dataclass(frozen=True)
class Scene:
    scatterers: tuple[Scatterer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        sc = tuple(Scatterer((float(s.position[0]), float(s.position[1])), complex(s.reflectivity))
                   for s in self.scatterers)
        if len(sc) < 1:
            raise ValidationError("scene needs at least one scatterer")
        for s in sc:
            if s.reflectivity == 0:
                raise ValidationError(f"scatterer at {s.position} has zero reflectivity")
            if not np.all(np.isfinite(s.position)):
                raise ValidationError("scatterer positions must be finite")
        object.__setattr__(self, "scatterers", sc)

    @classmethod
    def from_arrays(cls, positions, reflectivities) -> "Scene":
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        refl = np.broadcast_to(np.asarray(reflectivities, dtype=complex), (positions.shape[0],))
        return cls(tuple(Scatterer(tuple(p), a) for p, a in zip(positions, refl)))

    @property
    def m(self) -> int:
        return len(self.scatterers)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.scatterers], dtype=float)

    @property
    def reflectivities(self) -> np.ndarray:
        return np.array([s.reflectivity for s in self.scatterers], dtype=complex)

    def __add__(self, other: "Scene") -> "Scene":
        return Scene(self.scatterers + other.scatterers)


def parse_experiment_config(text):
    """Parse a TOML experiment description; see :mod:`phaseless.config`."""
    from .config import parse_experiment_config as parse
    return parse(text)
