"""Locate anomaly poles and decide how many bodies a field resolves."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .forward import FieldGrid
from .model import Station

VALLEY_THRESHOLD = 0.20
NOISE_THRESHOLD = 0.20
CHORD_SAMPLES = 65
CENTROID_LEVEL = 0.8
CENTROID_PASSES = 40
DEFAULT_RASTER = 61


class DegeneratePairError(ValueError):
    pass


@dataclass(frozen=True)
class PeakCandidate:
    x0: float
    y0: float
    vz_peak: float
    accepted: bool = True
    valley_to_nearest: float | None = None
    on_boundary: bool = False


def _station_arrays(stations):
    xs = np.array([s.x for s in stations], dtype=float)
    ys = np.array([s.y for s in stations], dtype=float)
    if any(s.vz is None for s in stations):
        raise ValueError("all stations must carry a measured vz")
    vz = np.array([s.vz for s in stations], dtype=float)
    return xs, ys, vz


def grid_from_stations(stations, nx: int = DEFAULT_RASTER, ny: int = DEFAULT_RASTER,
                       method: str = "tps", power: float = 2.0) -> FieldGrid:
    """Raster scattered measurements over their bounding box.

    ``method="tps"`` interpolates with a thin-plate spline, which is smooth
    between stations. ``method="idw"`` uses inverse-distance weighting with
    the given power; note it flattens out at every station, so it tends to
    produce a spurious local maximum on many of them.
    """
    xs, ys, vz = _station_arrays(stations)
    gx = np.linspace(xs.min(), xs.max(), nx)
    gy = np.linspace(ys.min(), ys.max(), ny)
    px, py = np.meshgrid(gx, gy)
    if method == "tps":
        from scipy.interpolate import RBFInterpolator

        interp = RBFInterpolator(np.column_stack([xs, ys]), vz, kernel="thin_plate_spline")
        vals = interp(np.column_stack([px.ravel(), py.ravel()]))
        return FieldGrid(gx[0], gx[-1], gy[0], gy[-1], vals.reshape(ny, nx))
    if method != "idw":
        raise ValueError(f"unknown gridding method {method!r}")
    d2 = (px.ravel()[:, None] - xs) ** 2 + (py.ravel()[:, None] - ys) ** 2
    hit = d2 == 0.0
    with np.errstate(divide="ignore"):
        w = 1.0 / d2 ** (power / 2.0)
    # grid nodes that coincide with a station take its value exactly
    rows = hit.any(axis=1)
    w[rows] = hit[rows].astype(float)
    vals = (w @ vz) / w.sum(axis=1)
    return FieldGrid(gx[0], gx[-1], gy[0], gy[-1], vals.reshape(ny, nx))


def _local_maxima(v: np.ndarray) -> list[tuple[int, int]]:
    ny, nx = v.shape
    padded = np.pad(v, 1, constant_values=-np.inf)
    is_max = np.ones_like(v, dtype=bool)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == 0 and di == 0:
                continue
            nb = padded[1 + dj : 1 + dj + ny, 1 + di : 1 + di + nx]
            is_max &= v > nb
    jj, ii = np.nonzero(is_max)
    return list(zip(jj.tolist(), ii.tolist()))


def find_peaks(grid: FieldGrid, min_separation: float) -> list[PeakCandidate]:
    """Strict 8-neighbour maxima, thinned by ``min_separation`` and centroid-refined.

    Returned candidates are ordered by decreasing peak value.
    """
    if not min_separation > 0:
        raise ValueError("min_separation must be positive")
    v = grid.values
    xs, ys = grid.xs, grid.ys
    gx, gy = np.meshgrid(xs, ys)
    maxima = sorted(_local_maxima(v), key=lambda ji: (-v[ji], ji))
    kept: list[tuple[int, int]] = []
    for j, i in maxima:
        if v[j, i] <= 0:
            continue
        if any(np.hypot(xs[i] - xs[ki], ys[j] - ys[kj]) < min_separation for kj, ki in kept):
            continue
        kept.append((j, i))

    peaks = []
    for j, i in kept:
        top = v[j, i]
        cx, cy = float(xs[i]), float(ys[j])
        # re-centre the window so its cut-off falls symmetrically about the pole
        for _ in range(CENTROID_PASSES):
            d2 = ((gx - cx) ** 2 + (gy - cy) ** 2) / min_separation**2
            # excess over the 80% level, tapered to zero at the window edge
            w = np.maximum(v - CENTROID_LEVEL * top, 0.0) * np.maximum(1.0 - d2, 0.0)
            total = np.sum(w)
            if not total > 0:
                break
            nx_, ny_ = float(np.sum(w * gx) / total), float(np.sum(w * gy) / total)
            moved = np.hypot(nx_ - cx, ny_ - cy)
            cx, cy = nx_, ny_
            if moved <= 1e-9 * min_separation:
                break
        edge = i in (0, grid.nx - 1) or j in (0, grid.ny - 1)
        peaks.append(PeakCandidate(cx, cy, float(top), on_boundary=edge))
    return peaks


def valley_fraction(pa: PeakCandidate, pb: PeakCandidate, grid: FieldGrid,
                    samples: int = CHORD_SAMPLES) -> float:
    """Relative dip of the field along the chord joining two poles."""
    if pa.x0 == pb.x0 and pa.y0 == pb.y0:
        raise DegeneratePairError("valley between a peak and itself is undefined")
    t = np.linspace(0.0, 1.0, samples)
    line = grid.sample(pa.x0 + t * (pb.x0 - pa.x0), pa.y0 + t * (pb.y0 - pa.y0))
    pole = 0.5 * (pa.vz_peak + pb.vz_peak)
    return float((pole - np.min(line)) / pole)


def resolve_bodies(peaks, grid: FieldGrid, noise_level: float,
                   valley_threshold: float = VALLEY_THRESHOLD,
                   noise_threshold: float = NOISE_THRESHOLD) -> list[PeakCandidate]:
    """Keep the poles that both selection conditions resolve as separate bodies.

    ``noise_level`` is the noise standard deviation relative to the strongest
    pole. A weaker pole must stand clear of the noise by the noise threshold
    and dip by at least the valley threshold toward its nearest accepted pole;
    otherwise it is merged into that stronger pole.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    ordered = sorted(peaks, key=lambda p: -p.vz_peak)
    if not ordered:
        return []
    top = ordered[0].vz_peak
    accepted: list[PeakCandidate] = []
    for p in ordered:
        noise_ok = noise_level * top <= noise_threshold * p.vz_peak
        if not accepted:
            accepted.append(dataclasses.replace(p, accepted=True))
            continue
        nearest = min(accepted, key=lambda q: np.hypot(q.x0 - p.x0, q.y0 - p.y0))
        try:
            valley = valley_fraction(p, nearest, grid)
        except DegeneratePairError:
            continue
        if noise_ok and valley >= valley_threshold:
            accepted.append(dataclasses.replace(p, accepted=True, valley_to_nearest=valley))
    return accepted


def detect(stations, noise_level: float, nx: int = DEFAULT_RASTER, ny: int = DEFAULT_RASTER,
           min_separation: float | None = None, method: str = "tps",
           valley_threshold: float = VALLEY_THRESHOLD,
           noise_threshold: float = NOISE_THRESHOLD):
    """Raster scattered stations and return ``(grid, raw peaks, accepted peaks)``."""
    grid = grid_from_stations(stations, nx, ny, method=method)
    if min_separation is None:
        min_separation = default_separation(stations)
    raw = find_peaks(grid, min_separation)
    accepted = resolve_bodies(raw, grid, noise_level, valley_threshold, noise_threshold)
    return grid, raw, accepted


def default_separation(stations) -> float:
    """Median nearest-neighbour distance between stations."""
    return median_spacing(stations)


def median_spacing(stations) -> float:
    xy = np.array([(s.x, s.y) for s in stations], dtype=float)
    if len(xy) < 2:
        raise ValueError("need at least two stations")
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    np.fill_diagonal(d, np.inf)
    return float(np.median(d.min(axis=1)))
