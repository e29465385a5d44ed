"""Domain records and practical units.

Lengths are in km, densities in g/cm^3 (numerically 10^9 t per km^3),
masses in 10^9 t and vertical intensities in mGal. The depth axis points
downward with its origin on the surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# G = 6.674e-11 m^3 kg^-1 s^-2 expressed in mGal * km^2 / (10^9 t).
GAMMA = 6.674


class GravityDomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


def _finite(*values):
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class Station:
    x: float
    y: float
    vz: float | None = None

    def __post_init__(self):
        if not _finite(self.x, self.y):
            raise ValueError(f"station coordinates must be finite: {self.x}, {self.y}")
        if self.vz is not None and not math.isfinite(self.vz):
            raise ValueError(f"station vz must be finite, got {self.vz}")

    def with_vz(self, vz: float) -> Station:
        return Station(self.x, self.y, float(vz))


@dataclass(frozen=True)
class BarCell:
    """Vertical column over a rectangular footprint.

    ``segments`` holds sorted, disjoint ``(z_min, z_max)`` intervals; more
    than one segment means the column crosses a void of the body.
    """

    xc: float
    yc: float
    dx: float
    dy: float
    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(lo), float(hi)) for lo, hi in self.segments)
        object.__setattr__(self, "segments", segs)
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("cell footprint widths must be positive")
        if not segs:
            raise ValueError("cell needs at least one segment")
        prev_top = 0.0
        for lo, hi in segs:
            if not (0 < lo < hi):
                raise ValueError(f"bad segment ({lo}, {hi}): need 0 < z_min < z_max")
            if lo < prev_top:
                raise ValueError("segments must be sorted and disjoint")
            prev_top = hi


@dataclass(frozen=True)
class BarBody:
    rho: float
    cells: tuple[BarCell, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not math.isfinite(self.rho):
            raise ValueError("density must be finite")
        if not self.cells:
            raise ValueError("a bar body needs at least one cell")

    @cached_property
    def segment_arrays(self):
        """Flattened per-segment arrays ``(xc, yc, area, z_min, z_max)``."""
        rows = [
            (c.xc, c.yc, c.dx * c.dy, lo, hi) for c in self.cells for lo, hi in c.segments
        ]
        arr = np.array(rows, dtype=float)
        return tuple(arr[:, k].copy() for k in range(5))

    @property
    def volume(self) -> float:
        _, _, area, zmin, zmax = self.segment_arrays
        return float(np.sum(area * (zmax - zmin)))

    @property
    def mass(self) -> float:
        return self.rho * self.volume


@dataclass(frozen=True)
class Spheroid:
    """Homogeneous ellipsoid of revolution about the vertical axis.

    ``a`` is the horizontal semiaxis and ``eps = c / a`` the aspect ratio,
    so ``eps < 1`` is oblate and ``eps > 1`` prolate.
    """

    a: float
    eps: float
    rho: float
    x0: float
    y0: float
    z0: float

    def __post_init__(self):
        if not _finite(self.a, self.eps, self.rho, self.x0, self.y0, self.z0):
            raise ValueError("spheroid parameters must be finite")
        if not (self.a > 0 and self.eps > 0 and self.z0 > 0):
            raise ValueError(f"need a > 0, eps > 0, z0 > 0: {self}")
        if not self.z0 > self.c:
            raise GravityDomainError(
                f"spheroid top at depth {self.z0 - self.c:.6g} km is not buried"
            )

    @property
    def c(self) -> float:
        return self.eps * self.a

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.eps * self.a**3

    @property
    def mass(self) -> float:
        return spheroid_mass(self)


@dataclass(frozen=True)
class PhysicalConstants:
    gamma: float = GAMMA

    @property
    def mass_factor(self) -> float:
        """1/gamma, the 0.15 of the practical mass formulas."""
        return 1.0 / self.gamma


def spheroid_mass(s: Spheroid) -> float:
    return 4.0 / 3.0 * math.pi * s.eps * s.rho * s.a**3


def semiaxis_from_mass(mass: float, eps: float, rho: float) -> float:
    """Horizontal semiaxis of a spheroid with the given mass, shape and density."""
    if not (mass > 0 and eps > 0 and rho > 0):
        raise GravityDomainError(
            f"mass, eps and rho must be positive (got {mass}, {eps}, {rho})"
        )
    return (mass / (4.0 / 3.0 * math.pi * eps * rho)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"empty domain {self}")

    @classmethod
    def square(cls, lo: float, hi: float) -> Domain:
        return cls(lo, hi, lo, hi)


__all__ = [
    "GAMMA",
    "GravityDomainError",
    "Station",
    "BarCell",
    "BarBody",
    "Spheroid",
    "PhysicalConstants",
    "Domain",
    "spheroid_mass",
    "semiaxis_from_mass",
]
