"""Depth and mass of a body from surface intensities, sphere assumption.

Two readings suffice for a homogeneous sphere: one at (or near) the pole
and one at a probe point some distance away. The ratio of the two fixes
depth/distance, after which the mass follows from either reading.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detect import median_spacing
from .model import GAMMA, GravityDomainError, Station

# probe distances accepted around the depth hint, as multiples of it
PROBE_WINDOW = (0.5, 2.0)
STRIP_PASSES = 2


class EstimationError(RuntimeError):
    """No usable probe pair was found for a body."""


def mu_of_v(v: float) -> float:
    """Depth-to-distance ratio z0/s for an intensity ratio ``v`` measured from the pole."""
    if not 0.0 < v < 1.0:
        raise GravityDomainError(f"intensity ratio must lie in (0, 1), got {v}")
    w = v ** (2.0 / 3.0)
    return math.sqrt(w / (1.0 - w))


def mu_general(v: float, psi: float) -> float:
    """Depth-to-distance ratio when the reference reading sits ``psi * s`` off the pole."""
    if not 0.0 < v < 1.0:
        raise GravityDomainError(f"intensity ratio must lie in (0, 1), got {v}")
    if not 0.0 <= psi < 1.0:
        raise GravityDomainError(f"offset ratio must lie in [0, 1), got {psi}")
    w = v ** (2.0 / 3.0)
    if w <= psi * psi:
        raise GravityDomainError(
            f"ratio {v} is inconsistent with a sphere for offset ratio {psi}"
        )
    return math.sqrt((w - psi * psi) / (1.0 - w))


def ratio_from_mu(mu: float, psi: float = 0.0) -> float:
    """Forward relation: intensity ratio produced by depth ratio ``mu``."""
    return ((mu * mu + psi * psi) / (mu * mu + 1.0)) ** 1.5


def depth_from_pair(vz_probe: float, vz_ref: float, s: float, delta: float = 0.0) -> float:
    """Depth from a probe at distance ``s`` and a reference at ``delta`` from the pole."""
    if not (0.0 < vz_probe < vz_ref):
        raise GravityDomainError("need 0 < probe intensity < reference intensity")
    if not (0.0 <= delta < s):
        raise GravityDomainError("need 0 <= delta < s")
    return mu_general(vz_probe / vz_ref, delta / s) * s


def mass_from_point(z0: float, delta: float, vz: float, gamma: float = GAMMA) -> float:
    """Sphere mass from one reading at horizontal offset ``delta`` from the pole."""
    if not (z0 > 0 and delta >= 0 and vz > 0):
        raise GravityDomainError("need z0 > 0, delta >= 0 and vz > 0")
    return (z0 * z0 + delta * delta) ** 1.5 / z0 * vz / gamma


@dataclass(frozen=True)
class DepthMassEstimate:
    z0: float
    mass: float
    n_pairs: int
    spread: float
    z0_min: float = 0.0
    z0_max: float = 0.0
    rejected: int = 0
    depths: tuple[float, ...] = field(default=(), repr=False)


def _single_pass(x0, y0, xs, ys, vz, others, z0_hint, far_side=True):
    h = np.hypot(xs - x0, ys - y0)
    c = int(np.argmin(h))
    delta, vz_c = float(h[c]), float(vz[c])
    if vz_c <= 0:
        raise EstimationError("reference reading is not positive")

    owner = np.ones(xs.shape, dtype=bool)
    for ox, oy in others:
        to_other = np.hypot(xs - ox, ys - oy)
        owner &= h <= to_other
        if far_side:
            # skip the side facing the other pole
            owner &= to_other >= math.hypot(x0 - ox, y0 - oy)
    lo, hi = PROBE_WINDOW
    window = (h >= lo * z0_hint) & (h <= hi * z0_hint) & (vz < vz_c) & owner
    window[c] = False

    depths, masses, rejected = [], [], 0
    for k in np.flatnonzero(window):
        try:
            z = depth_from_pair(float(vz[k]), vz_c, float(h[k]), delta)
            m = mass_from_point(z, delta, vz_c)
        except GravityDomainError:
            rejected += 1
            continue
        # the pair only informs depths comparable to its probe distance
        if not lo * h[k] <= z <= hi * h[k]:
            rejected += 1
            continue
        depths.append(z)
        masses.append(m)
    if not depths:
        raise EstimationError(
            f"no valid probe pair near ({x0:.3f}, {y0:.3f}) with depth hint {z0_hint:.3f}"
        )
    d = np.array(depths)
    return DepthMassEstimate(
        z0=float(np.mean(d)),
        mass=float(np.mean(masses)),
        n_pairs=len(depths),
        spread=float(d.max() - d.min()),
        z0_min=float(d.min()),
        z0_max=float(d.max()),
        rejected=rejected,
        depths=tuple(depths),
    )


def _arrays(stations):
    xs = np.array([s.x for s in stations], dtype=float)
    ys = np.array([s.y for s in stations], dtype=float)
    vz = np.array([np.nan if s.vz is None else s.vz for s in stations], dtype=float)
    ok = np.isfinite(vz)
    if np.count_nonzero(ok) < 2:
        raise EstimationError("need at least two measured stations")
    return xs[ok], ys[ok], vz[ok]


def estimate_body(peak, stations, z0_hint: float | None = None, others=()) -> DepthMassEstimate:
    """Average depth and mass over probe pairs around one detected pole.

    ``others`` holds the ``(x, y)`` of the remaining accepted poles. Probes
    closer to one of them than to this pole, or closer to it than this pole
    is, are left out. Without a hint the median station spacing is used
    (grown until some pair qualifies) and the estimate is repeated once from
    the first depth. When crowded neighbours leave no probe at all, the
    side-facing rule is dropped and then the ownership rule too.
    """
    xs, ys, vz = _arrays(stations)
    others = [(float(o[0]), float(o[1])) for o in others]
    if z0_hint is not None:
        return _single_pass(peak.x0, peak.y0, xs, ys, vz, others, z0_hint)

    span = float(np.hypot(np.ptp(xs), np.ptp(ys)))
    for nbrs, far_side in ((others, True), (others, False), ([], False)):
        hint = median_spacing(stations)
        while hint <= span:
            try:
                first = _single_pass(peak.x0, peak.y0, xs, ys, vz, nbrs, hint, far_side)
            except EstimationError:
                hint *= 1.5
                continue
            try:
                return _single_pass(peak.x0, peak.y0, xs, ys, vz, nbrs, first.z0, far_side)
            except EstimationError:
                return first
    raise EstimationError(f"no valid probe pair near ({peak.x0:.3f}, {peak.y0:.3f})")


def sphere_vz(x0, y0, z0, mass, xs, ys, gamma: float = GAMMA):
    r2 = (np.asarray(xs) - x0) ** 2 + (np.asarray(ys) - y0) ** 2 + z0 * z0
    return gamma * mass * z0 / r2**1.5


def estimate_bodies(peaks, stations, strip_passes: int = STRIP_PASSES) -> list[DepthMassEstimate]:
    """Estimate every accepted pole, then re-estimate with neighbours removed.

    After the first round each body is re-estimated on data from which the
    point-mass fields of all other current estimates have been subtracted.
    """
    peaks = list(peaks)
    xs, ys, vz = _arrays(stations)

    def others_of(k):
        return [(q.x0, q.y0) for j, q in enumerate(peaks) if j != k]

    ests = [estimate_body(p, stations, others=others_of(k)) for k, p in enumerate(peaks)]
    for _ in range(strip_passes):
        fields = [sphere_vz(p.x0, p.y0, e.z0, e.mass, xs, ys) for p, e in zip(peaks, ests)]
        new = []
        for k, p in enumerate(peaks):
            resid = vz - sum(f for j, f in enumerate(fields) if j != k)
            own = [Station(float(x), float(y), float(v)) for x, y, v in zip(xs, ys, resid)]
            try:
                new.append(estimate_body(p, own, others=others_of(k)))
            except EstimationError:
                new.append(ests[k])
        ests = new
    return ests
