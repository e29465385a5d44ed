"""Synthetic deposits, survey layouts and seeded measurement noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import forward
from .model import BarBody, BarCell, Spheroid, Station

DEFAULT_SEED = 20130717
SURVEY_EXTENT = (0.0, 15.0)


def discretize_spheroid_to_bars(s: Spheroid, step: float) -> BarBody:
    """Cover the footprint disc of ``s`` with square bars of pitch ``step``.

    The lattice is anchored on the spheroid axis, so a step of at least
    ``2a`` leaves a single bar through the centre.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    n = int(math.ceil(s.a / step))
    cells = []
    for j in range(-n, n + 1):
        for i in range(-n, n + 1):
            d = math.hypot(i * step, j * step)
            if d >= s.a:
                continue
            half = s.c * math.sqrt(1.0 - (d / s.a) ** 2)
            cells.append(
                BarCell(s.x0 + i * step, s.y0 + j * step, step, step, ((s.z0 - half, s.z0 + half),))
            )
    return BarBody(s.rho, tuple(cells))


def gaussian_deviates(n: int, seed: int) -> np.ndarray:
    """Standard normal deviates by Box-Muller over PCG64 uniforms."""
    rng = np.random.Generator(np.random.PCG64(seed))
    m = (n + 1) // 2
    u = rng.random(2 * m)  # interleaved pairs, so a prefix never depends on n
    u1 = 1.0 - u[0::2]  # (0, 1]; keeps log finite
    u2 = u[1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * math.pi * u2
    z = np.empty(2 * m)
    z[0::2] = rad * np.cos(ang)
    z[1::2] = rad * np.sin(ang)
    return z[:n]


def add_noise(values, sigma, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Add zero-mean Gaussian errors; ``sigma`` may be a scalar or per-value."""
    values = np.asarray(values, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), values.shape)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    if not np.any(sigma):
        return values.copy()
    return values + sigma * gaussian_deviates(values.size, seed).reshape(values.shape)


def stratified_layout(n: int, seed: int, extent=SURVEY_EXTENT) -> np.ndarray:
    """Scrambled Halton points over the square survey extent, shape ``(n, 2)``."""
    from scipy.stats import qmc

    lo, hi = extent
    pts = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    return lo + (hi - lo) * pts


@dataclass(frozen=True)
class ExactBody:
    """Generating spheroid of a scenario together with its reference volume and mass."""

    a: float
    eps: float
    rho: float
    x0: float
    y0: float
    z0: float
    v: float
    M: float

    @property
    def spheroid(self) -> Spheroid:
        return Spheroid(self.a, self.eps, self.rho, self.x0, self.y0, self.z0)

    @property
    def params(self) -> tuple[float, float, float, float, float]:
        return (self.eps, self.rho, self.x0, self.y0, self.z0)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    bodies: tuple[BarBody, ...]
    stations: tuple[Station, ...]
    exact_params: tuple[ExactBody, ...]
    noise_sigma: float
    seed: int
    noise_relative: float = 0.0

    def clean_values(self) -> np.ndarray:
        return forward.field_at(self.bodies, self.stations)

    def noise_scale(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return self.noise_sigma + self.noise_relative * np.abs(values)

    def survey(self) -> list[Station]:
        clean = self.clean_values()
        noisy = add_noise(clean, self.noise_scale(clean), self.seed)
        return [Station(s.x, s.y, float(v)) for s, v in zip(self.stations, noisy)]

    @property
    def noise_level(self) -> float:
        """Noise standard deviation relative to the strongest clean value."""
        clean = self.clean_values()
        peak = float(np.max(np.abs(clean)))
        return float(np.max(self.noise_scale(clean))) / peak


# Rows: (nominal a, eps, rho, x0, y0, z0, v, M, bar step).
_EXAMPLE1 = (
    (2.75, 0.51, 1.6, 5.7, 5.3, 4.2, 39.67, 63.48, 0.25),
    (1.375, 1.96, 2.6, 10.7, 11.1, 3.8, 19.06, 49.55, 0.125),
)
_EXAMPLE2 = (
    (2.5, 0.51, 1.6, 2.8, 3.3, 4.2, 29.81, 47.69, 0.125),
    (1.375, 1.56, 2.3, 10.3, 11.7, 3.8, 15.17, 34.89, 0.125),
    (1.8, 1.0, 1.5, 2.8, 11.8, 4.0, 21.81, 32.72, 0.125),
    (1.3, 1.4, 2.7, 10.8, 1.2, 4.4, 11.51, 31.06, 0.125),
    (1.4, 0.7, 3.3, 13.5, 6.3, 3.9, 7.18, 23.71, 0.125),
)

# Constraint corridors (p_min, p_max) for (eps, rho, x0, y0, z0), example 1.
EXAMPLE1_BOXES = (
    ((0.2, 0.6), (1.1, 1.7), (5.4, 6.0), (5.2, 6.0), (4.0, 5.8)),
    ((1.8, 2.2), (2.3, 2.9), (10.3, 11.0), (10.2, 12.0), (2.3, 4.3)),
)

# Reference solution rows (eps, rho, x0, y0, z0, v, M, a).
EXAMPLE1_SOLUTION = (
    (0.595, 1.69, 5.75, 5.48, 4.40, 39.86, 67.50, 2.52),
    (2.035, 2.65, 10.71, 11.90, 3.81, 18.28, 48.50, 1.29),
)

# Reference solution rows for example 2, same column order.
EXAMPLE2_SOLUTION = (
    (0.54, 1.64, 2.84, 3.34, 4.40, 29.02, 47.60, 2.341),
    (1.60, 2.34, 10.38, 12.00, 4.00, 14.91, 34.90, 1.306),
    (1.04, 1.54, 2.84, 12.00, 4.20, 21.23, 32.70, 1.696),
    (1.44, 2.74, 11.00, 1.24, 4.60, 11.35, 31.10, 1.235),
    (0.74, 3.34, 13.70, 6.50, 4.10, 7.13, 23.80, 1.320),
)

_SCENARIOS = {
    "example1": dict(rows=_EXAMPLE1, n=45, sigma=1.0, relative=0.0, seed=DEFAULT_SEED),
    "example2": dict(rows=_EXAMPLE2, n=73, sigma=0.0, relative=0.03, seed=DEFAULT_SEED + 2),
}


def available_scenarios() -> list[str]:
    return sorted(_SCENARIOS)


def exact_bodies(name: str) -> tuple[ExactBody, ...]:
    """Generating bodies of a named scenario.

    The reference volumes are bar sums over non-ideal bodies and
    sit below ``4/3 pi eps a^3`` of the nominal semiaxis, so the
    generating semiaxis is taken from the reference volume instead.
    """
    cfg = _config(name)
    out = []
    for a_tab, eps, rho, x0, y0, z0, v, mass, _step in cfg["rows"]:
        a = (3.0 * v / (4.0 * math.pi * eps)) ** (1.0 / 3.0)
        out.append(ExactBody(a, eps, rho, x0, y0, z0, v, mass))
    return tuple(out)


def _config(name):
    try:
        return _SCENARIOS[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; available: {', '.join(available_scenarios())}"
        ) from None


def load_layout(name: str) -> np.ndarray:
    text = resources.files("gravispheroid.data").joinpath(f"{name}_stations.txt").read_text()
    return np.loadtxt(text.splitlines(), ndmin=2)


def scenario(name: str) -> Scenario:
    cfg = _config(name)
    exact = exact_bodies(name)
    bodies = tuple(
        discretize_spheroid_to_bars(e.spheroid, row[-1]) for e, row in zip(exact, cfg["rows"])
    )
    xy = load_layout(name)
    stations = tuple(Station(float(x), float(y)) for x, y in xy)
    _check_coverage(exact, xy)
    return Scenario(
        name=name,
        bodies=bodies,
        stations=stations,
        exact_params=exact,
        noise_sigma=cfg["sigma"],
        seed=cfg["seed"],
        noise_relative=cfg["relative"],
    )


def _check_coverage(exact, xy, min_count=4):
    for k, e in enumerate(exact):
        h = np.hypot(xy[:, 0] - e.x0, xy[:, 1] - e.y0)
        if np.count_nonzero(h <= 2.0 * e.z0) < min_count:
            raise ValueError(f"body {k} has fewer than {min_count} stations within 2*z0")
