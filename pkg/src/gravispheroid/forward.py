"""Vertical gravity intensity of bar assemblies and spheroids on the surface."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import GAMMA, BarBody, BarCell, Domain, GravityDomainError, Spheroid, Station

SPHERE_BAND = 1e-9
_T_FLOOR = 1e-300


def _xy(stations):
    if isinstance(stations, Station):
        stations = [stations]
    x = np.fromiter((s.x for s in stations), dtype=float)
    y = np.fromiter((s.y for s in stations), dtype=float)
    return x, y


def bar_vz(cell: BarCell, rho: float, p: Station) -> float:
    """Field of one vertical bar at a surface station (midpoint rule)."""
    d2 = (p.x - cell.xc) ** 2 + (p.y - cell.yc) ** 2
    acc = 0.0
    for zmin, zmax in cell.segments:
        acc += 1.0 / math.sqrt(d2 + zmin * zmin) - 1.0 / math.sqrt(d2 + zmax * zmax)
    return GAMMA * rho * acc * cell.dx * cell.dy


def body_vz_xy(body: BarBody, x, y, chunk: int = 256) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    xc, yc, area, zmin, zmax = body.segment_arrays
    out = np.empty(x.shape, dtype=float)
    for lo in range(0, x.size, chunk):
        xs = x[lo : lo + chunk, None]
        ys = y[lo : lo + chunk, None]
        d2 = (xs - xc) ** 2 + (ys - yc) ** 2
        kern = 1.0 / np.sqrt(d2 + zmin**2) - 1.0 / np.sqrt(d2 + zmax**2)
        out[lo : lo + chunk] = kern @ area
    return GAMMA * body.rho * out


def body_vz(body: BarBody, p: Station) -> float:
    return float(body_vz_xy(body, [p.x], [p.y])[0])


def spheroid_vz_xy(s: Spheroid, x, y) -> np.ndarray:
    """Closed-form V_z of a buried spheroid at surface points ``(x, y)``.

    Oblate and prolate shapes use the confocal-coordinate forms; shapes
    within ``SPHERE_BAND`` of ``eps = 1`` use the point-mass form.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    h2 = (x - s.x0) ** 2 + (y - s.y0) ** 2
    z0 = s.z0
    c = s.c
    if np.any(h2 / s.a**2 + z0**2 / c**2 <= 1.0):
        raise GravityDomainError("station lies inside or on the spheroid")
    r2 = h2 + z0 * z0
    eps = s.eps
    if abs(eps - 1.0) <= SPHERE_BAND:
        return 4.0 / 3.0 * math.pi * GAMMA * s.rho * s.a**3 * z0 / (r2 * np.sqrt(r2))

    if eps < 1.0:
        e = math.sqrt(1.0 - eps * eps)
        q2 = (e * s.a) ** 2 / r2
        tau = 0.5 * (1.0 - q2 + np.sqrt((1.0 - q2) ** 2 + 4.0 * q2 * z0 * z0 / r2))
        p = np.sqrt(q2 / tau)
        # p - arctan(p) loses all digits for small p; use the series there.
        small = p < 1e-3
        shape = np.where(
            small,
            p**3 / 3.0 - p**5 / 5.0 + p**7 / 7.0,
            p - np.arctan(p),
        )
    else:
        e = math.sqrt(eps * eps - 1.0)
        q2 = (e * s.a) ** 2 / r2
        t = 0.5 * (1.0 - q2 + np.sqrt((1.0 - q2) ** 2 + 4.0 * q2 * h2 / r2))
        t = np.maximum(t, _T_FLOOR)
        p = np.sqrt(q2 / t)
        root = np.sqrt(1.0 + p * p)
        small = p < 1e-3
        shape = np.where(
            small,
            p**3 / 3.0 - 3.0 * p**5 / 10.0 + 15.0 * p**7 / 56.0,
            np.arcsinh(p) - p / root,
        )
    return 4.0 * math.pi * GAMMA * s.rho * (eps / e**3) * shape * z0


def spheroid_vz(s: Spheroid, p: Station) -> float:
    return float(spheroid_vz_xy(s, [p.x], [p.y])[0])


def body_field_xy(body, x, y) -> np.ndarray:
    if isinstance(body, Spheroid):
        return spheroid_vz_xy(body, x, y)
    if isinstance(body, BarBody):
        return body_vz_xy(body, x, y)
    raise TypeError(f"unsupported body type {type(body).__name__}")


def field_xy(model, x, y) -> np.ndarray:
    """Superposed field of ``model`` at arrays of surface coordinates.

    Bodies are summed in model order so results are reproducible bit for bit.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    total = np.zeros(x.shape, dtype=float)
    for k, body in enumerate(model):
        try:
            total = total + body_field_xy(body, x, y)
        except GravityDomainError as exc:
            raise GravityDomainError(f"body {k}: {exc}") from exc
    return total


def field_at(model, stations) -> np.ndarray:
    x, y = _xy(stations)
    return field_xy(model, x, y)


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Regular raster of V_z; ``values[j, i]`` sits at ``(xs[i], ys[j])``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ValueError(f"grid needs at least 2x2 values, got shape {v.shape}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("grid extent is empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    def scaled(self, k: float) -> FieldGrid:
        return FieldGrid(self.x_min, self.x_max, self.y_min, self.y_max, self.values * k)

    def sample(self, x, y) -> np.ndarray:
        """Bilinear interpolation; points are clamped into the grid extent."""
        x = np.clip(np.asarray(x, dtype=float), self.x_min, self.x_max)
        y = np.clip(np.asarray(y, dtype=float), self.y_min, self.y_max)
        fx = (x - self.x_min) / self.dx
        fy = (y - self.y_min) / self.dy
        i0 = np.clip(np.floor(fx).astype(int), 0, self.nx - 2)
        j0 = np.clip(np.floor(fy).astype(int), 0, self.ny - 2)
        tx = fx - i0
        ty = fy - j0
        v = self.values
        return (
            v[j0, i0] * (1 - tx) * (1 - ty)
            + v[j0, i0 + 1] * tx * (1 - ty)
            + v[j0 + 1, i0] * (1 - tx) * ty
            + v[j0 + 1, i0 + 1] * tx * ty
        )


def field_grid(model, domain: Domain, nx: int, ny: int) -> FieldGrid:
    if nx < 2 or ny < 2:
        raise ValueError("grid needs nx >= 2 and ny >= 2")
    xs = np.linspace(domain.x_min, domain.x_max, nx)
    ys = np.linspace(domain.y_min, domain.y_max, ny)
    gx, gy = np.meshgrid(xs, ys)
    vals = field_xy(model, gx.ravel(), gy.ravel()).reshape(ny, nx)
    return FieldGrid(domain.x_min, domain.x_max, domain.y_min, domain.y_max, vals)
