"""Uniform planar array geometry and far-field steering vectors.

Positions are in wavelengths. An array lies in its local y-z plane with its
boresight along the local +x axis; columns run along y and rows along z.
Elements are ordered row-major, top row first.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np


class DegenerateGeometryError(ValueError):
    """Raised when two antenna elements coincide."""


@dataclass(frozen=True)
class ArrayGeometry:
    """A rows x cols uniform planar array.

    Args:
        rows: Number of element rows (vertical).
        cols: Number of element columns (horizontal).
        spacing: Inter-element spacing in wavelengths.
        center: Array centroid, 3-vector in wavelengths.
        azimuth: Boresight azimuth in radians.
        elevation: Boresight elevation in radians.
    """

    rows: int
    cols: int
    spacing: float = 0.5
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    azimuth: float = 0.0
    elevation: float = 0.0

    def __post_init__(self):
        if int(self.rows) != self.rows or int(self.cols) != self.cols:
            raise ValueError("rows and cols must be integers")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array must have at least one element, got {self.rows}x{self.cols}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if len(self.center) != 3:
            raise ValueError("center must be a 3-vector")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def rotation(self) -> np.ndarray:
        """Matrix taking local array coordinates to global coordinates."""
        ca, sa = np.cos(self.azimuth), np.sin(self.azimuth)
        ce, se = np.cos(self.elevation), np.sin(self.elevation)
        rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
        # tilts local +x toward +z by the boresight elevation
        ry = np.array([[ce, 0.0, -se], [0.0, 1.0, 0.0], [se, 0.0, ce]])
        return rz @ ry


def direction(azimuth, elevation) -> np.ndarray:
    """Unit propagation direction(s) for the given angles, shape (..., 3)."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack(
        [ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1
    )


def _local_offsets(geom: ArrayGeometry) -> np.ndarray:
    r = np.arange(geom.rows)
    c = np.arange(geom.cols)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    y = (cc.ravel() - (geom.cols - 1) / 2) * geom.spacing
    z = ((geom.rows - 1) / 2 - rr.ravel()) * geom.spacing
    return np.stack([np.zeros_like(y), y, z], axis=-1)


@functools.lru_cache(maxsize=64)
def _offsets_cached(geom: ArrayGeometry) -> np.ndarray:
    out = _local_offsets(geom) @ geom.rotation().T
    out.setflags(write=False)
    return out


def element_offsets(geom: ArrayGeometry) -> np.ndarray:
    """Element positions relative to the array center, shape (N, 3)."""
    return _offsets_cached(geom).copy()


def element_positions(geom: ArrayGeometry) -> np.ndarray:
    """Global element positions in wavelengths, shape (N, 3), row-major order."""
    return element_offsets(geom) + np.asarray(geom.center)


def steering_vector(geom: ArrayGeometry, azimuth, elevation) -> np.ndarray:
    """Far-field array response toward (azimuth, elevation).

    Phases are referenced to the array center, so the broadside response is
    the all-ones vector. Vectorized angles give shape (..., N).
    """
    u = direction(azimuth, elevation)
    phase = 2 * np.pi * (u @ _offsets_cached(geom).T)
    out = np.empty(phase.shape, dtype=complex)
    np.cos(phase, out=out.real)
    np.sin(phase, out=out.imag)
    return out
