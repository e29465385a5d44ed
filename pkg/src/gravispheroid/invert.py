"""Spheroid parameter refinement under box constraints.

Each body contributes five free parameters ``(eps, rho, x0, y0, z0)``. The
horizontal semiaxis is not free: it follows from the body's current mass
estimate, ``a = cbrt(M / (4/3 pi eps rho))``. The smoothing functional is
minimised by cyclic coordinate descent with golden-section line searches,
and the corridors are narrowed between rounds around the current solution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import bulakh, detect
from .forward import spheroid_vz_xy
from .model import GravityDomainError, Spheroid, semiaxis_from_mass

log = logging.getLogger(__name__)

KINDS = ("eps", "rho", "x0", "y0", "z0")
K = len(KINDS)
HALF_WIDTH_FLOORS = {"eps": 0.01, "rho": 0.01, "x0": 0.05, "y0": 0.05, "z0": 0.05}

ALPHA = 1e-8
GOLDEN_ITERATIONS = 48
SWEEP_TOL = 1e-6
MAX_SWEEPS = 200
ROUNDS = 10
SHRINK = 0.7
EDGE_FRACTION = 0.01
MASS_PASSES = 4
MASS_RTOL = 1e-3

XY_HALF_WIDTH = 1.0
Z0_FACTORS = (0.6, 1.4)
EPS_RANGE = (0.2, 2.2)
RHO_RANGE = (1.0, 3.5)

_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ParameterBox:
    """Per-parameter corridors ``p_min <= p <= p_max`` for ``m`` bodies."""

    p_min: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.p_min, dtype=float)
        hi = np.array(self.p_max, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size % K:
            raise ValueError(f"box bounds must be flat arrays of length 5*m, got {lo.shape}")
        if not np.all(lo < hi):
            bad = np.flatnonzero(~(lo < hi))
            raise ValueError(f"empty corridor for {[self._name(j) for j in bad]}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "p_min", lo)
        object.__setattr__(self, "p_max", hi)

    @classmethod
    def from_corridors(cls, corridors) -> ParameterBox:
        """Build from per-body rows of five ``(lo, hi)`` pairs in ``KINDS`` order."""
        flat = [pair for body in corridors for pair in body]
        lo, hi = zip(*flat)
        return cls(np.array(lo), np.array(hi))

    @staticmethod
    def _name(j):
        return f"{KINDS[j % K]}[{j // K + 1}]"

    @property
    def names(self) -> list[str]:
        return [self._name(j) for j in range(self.p_min.size)]

    @property
    def m(self) -> int:
        return self.p_min.size // K

    @property
    def p_mid(self) -> np.ndarray:
        return 0.5 * (self.p_min + self.p_max)

    @property
    def q(self) -> np.ndarray:
        return 1.0 / self.p_mid**2

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.p_max - self.p_min)

    def contains(self, params) -> bool:
        p = np.asarray(params, dtype=float)
        return bool(np.all(p >= self.p_min) and np.all(p <= self.p_max))

    def clip(self, params) -> np.ndarray:
        return np.clip(np.asarray(params, dtype=float), self.p_min, self.p_max)

    def corridors(self) -> list[list[tuple[float, float]]]:
        return [
            [(float(self.p_min[b * K + i]), float(self.p_max[b * K + i])) for i in range(K)]
            for b in range(self.m)
        ]

    def permuted(self, order) -> ParameterBox:
        idx = np.concatenate([np.arange(b * K, b * K + K) for b in order])
        return ParameterBox(self.p_min[idx], self.p_max[idx])

    def buried(self, masses, margin: float = 1e-3) -> ParameterBox:
        """Lift depth floors so every point of the box is a buried spheroid.

        The largest vertical semiaxis in a body's corridor occurs at the
        largest ``eps`` and the smallest ``rho``.
        """
        lo = self.p_min.copy()
        for b, mass in enumerate(masses):
            eps_hi = self.p_max[b * K]
            rho_lo = self.p_min[b * K + 1]
            c_max = eps_hi * semiaxis_from_mass(mass, eps_hi, rho_lo)
            j = b * K + 4
            if lo[j] <= c_max * (1.0 + margin):
                lo[j] = c_max * (1.0 + margin)
                if lo[j] >= self.p_max[j]:
                    raise GravityDomainError(
                        f"body {b + 1}: depth corridor cannot hold a buried spheroid "
                        f"(needs z0 > {c_max:.4g} km, corridor max {self.p_max[j]:.4g})"
                    )
        return ParameterBox(lo, self.p_max)


def body_rows(params) -> np.ndarray:
    p = np.asarray(params, dtype=float)
    if p.size % K:
        raise ValueError("parameter vector length must be a multiple of 5")
    return p.reshape(-1, K)


def spheroids_from(params, masses) -> list[Spheroid]:
    out = []
    for (eps, rho, x0, y0, z0), mass in zip(body_rows(params), masses):
        a = semiaxis_from_mass(mass, eps, rho)
        out.append(Spheroid(a, eps, rho, x0, y0, z0))
    return out


def _measured(stations):
    xs = np.array([s.x for s in stations], dtype=float)
    ys = np.array([s.y for s in stations], dtype=float)
    if any(s.vz is None for s in stations):
        raise ValueError("misfit needs measured vz at every station")
    vz = np.array([s.vz for s in stations], dtype=float)
    return xs, ys, vz


def misfit(params, stations, masses) -> float:
    """Sum of squared residuals between measured and modelled V_z (mGal^2)."""
    xs, ys, vz = _measured(stations)
    model = np.zeros_like(vz)
    for s in spheroids_from(params, masses):
        model = model + spheroid_vz_xy(s, xs, ys)
    return float(np.sum((vz - model) ** 2))


def stabilizer(params, box: ParameterBox, functional: str = "F1") -> float:
    p = np.asarray(params, dtype=float)
    if functional == "F1":
        return float(np.sum(box.q * (p - box.p_mid) ** 2))
    if functional == "F2":
        return float(np.sum(box.q * p**2))
    raise ValueError(f"unknown functional {functional!r}; expected F1 or F2")


def tikhonov_f1(params, box, alpha, stations, masses) -> float:
    return misfit(params, stations, masses) + alpha * stabilizer(params, box, "F1")


def tikhonov_f2(params, box, alpha, stations, masses) -> float:
    return misfit(params, stations, masses) + alpha * stabilizer(params, box, "F2")


class Functional:
    """Smoothing functional as a callable of the flat parameter vector.

    The field of each body is cached against its own five parameters, so a
    line search over one coordinate re-evaluates a single body only.
    Configurations that are not buried evaluate to ``inf``.
    """

    def __init__(self, stations, masses, box: ParameterBox, alpha: float = ALPHA,
                 functional: str = "F1"):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        if functional not in ("F1", "F2"):
            raise ValueError(f"unknown functional {functional!r}")
        self.xs, self.ys, self.vz = _measured(stations)
        self.masses = tuple(float(m) for m in masses)
        self.box = box
        self.alpha = float(alpha)
        self.functional = functional
        self._cache: dict[int, tuple[tuple, np.ndarray]] = {}
        self.evaluations = 0

    def body_field(self, b: int, row) -> np.ndarray:
        key = tuple(float(v) for v in row)
        hit = self._cache.get(b)
        if hit is not None and hit[0] == key:
            return hit[1]
        eps, rho, x0, y0, z0 = key
        s = Spheroid(semiaxis_from_mass(self.masses[b], eps, rho), eps, rho, x0, y0, z0)
        f = spheroid_vz_xy(s, self.xs, self.ys)
        self._cache[b] = (key, f)
        return f

    def model(self, params) -> np.ndarray:
        total = np.zeros_like(self.vz)
        for b, row in enumerate(body_rows(params)):
            total = total + self.body_field(b, row)
        return total

    def misfit(self, params) -> float:
        return float(np.sum((self.vz - self.model(params)) ** 2))

    def __call__(self, params) -> float:
        self.evaluations += 1
        try:
            data = self.misfit(params)
        except GravityDomainError:
            return math.inf
        return data + self.alpha * stabilizer(params, self.box, self.functional)


@dataclass
class DescentResult:
    x: np.ndarray
    fun: float
    sweeps: int
    history: list[float] = field(default_factory=list)


def golden_section(fun, lo: float, hi: float, iterations: int = GOLDEN_ITERATIONS):
    """Minimise a 1-D function on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _INVGOLD * (b - a)
    d = a + _INVGOLD * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVGOLD * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVGOLD * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def coordinate_descent(objective, lower, upper, start, tol: float = SWEEP_TOL,
                       max_sweeps: int = MAX_SWEEPS, iterations: int = GOLDEN_ITERATIONS,
                       callback=None, order=None) -> DescentResult:
    """Cyclic coordinate descent confined to the box ``[lower, upper]``.

    Each coordinate is minimised by golden section over its full corridor
    and the move is taken only if it does not raise the objective, so the
    value never increases. ``order`` fixes the visiting sequence (default:
    index order). ``callback(x, j)`` runs after every line search.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(start, dtype=float), lower, upper)
    fx = objective(x)
    history = [fx]
    sweeps = 0
    order = range(x.size) if order is None else list(order)
    for sweeps in range(1, max_sweeps + 1):
        f_before = fx
        for j in order:
            trial = x.copy()

            def along(t):
                trial[j] = t
                return objective(trial)

            t, ft = golden_section(along, lower[j], upper[j], iterations)
            if ft < fx:
                x[j] = t
                fx = ft
            if callback is not None:
                callback(x, j)
        history.append(fx)
        if not math.isfinite(f_before) and math.isfinite(fx):
            continue
        if f_before - fx <= tol * abs(f_before):
            break
    return DescentResult(x=x, fun=fx, sweeps=sweeps, history=history)


def shrink_box(box: ParameterBox, x, shrink: float = SHRINK, floors=None,
               edge_fraction: float = EDGE_FRACTION) -> ParameterBox:
    """Narrow every corridor around ``x`` inside the previous box.

    A side is kept where ``x`` sits within ``edge_fraction`` of the corridor
    width from it, since the optimum may then lie beyond that side.
    """
    x = np.asarray(x, dtype=float)
    floor = _floors(box.m, floors)
    width = box.p_max - box.p_min
    half = np.maximum(shrink * box.half_width, floor)
    lo = np.maximum(box.p_min, x - half)
    hi = np.minimum(box.p_max, x + half)
    lo = np.where(x - box.p_min <= edge_fraction * width, box.p_min, lo)
    hi = np.where(box.p_max - x <= edge_fraction * width, box.p_max, hi)
    return ParameterBox(lo, hi)


def _floors(m, floors=None):
    floors = {**HALF_WIDTH_FLOORS, **(floors or {})}
    return np.tile([floors[k] for k in KINDS], m)


@dataclass
class InversionResult:
    params: np.ndarray
    masses: tuple[float, ...]
    box: ParameterBox
    f_initial: float
    f_final: float
    misfit_final: float
    rounds: int
    alpha: float
    functional: str = "F1"
    round_values: list[float] = field(default_factory=list)
    boxes: list[ParameterBox] = field(default_factory=list, repr=False)

    @property
    def spheroids(self) -> list[Spheroid]:
        return spheroids_from(self.params, self.masses)

    @property
    def m(self) -> int:
        return len(self.masses)

    def body_table(self) -> list[dict]:
        rows = []
        for s in self.spheroids:
            rows.append(dict(eps=s.eps, rho=s.rho, x0=s.x0, y0=s.y0, z0=s.z0,
                             a=s.a, v=s.volume, M=s.mass))
        return rows


def rescale_masses(params, masses, stations, limits=(0.5, 2.0)) -> tuple[float, ...]:
    """Joint least-squares rescaling of all body masses against the data.

    Each body's modelled field is multiplied by its own non-negative scale
    and the scales are fitted together, so overlapping anomalies share the
    measured intensity. For spheres the field is proportional to the mass,
    making this the peak-intensity mass rule using all stations at once.
    Scales are clamped to ``limits`` per update.
    """
    from scipy.optimize import nnls

    xs, ys, vz = _measured(stations)
    basis = np.column_stack([spheroid_vz_xy(s, xs, ys) for s in spheroids_from(params, masses)])
    scales, _ = nnls(basis, vz)
    scales = np.clip(scales, *limits)
    return tuple(float(m * k) for m, k in zip(masses, scales))


def pole_masses(params, masses, poles) -> tuple[float, ...]:
    """Point-mass rule ``M = z0^2 Vz_max / gamma`` from each pole intensity."""
    out = []
    for row, vmax in zip(body_rows(params), poles):
        out.append(bulakh.mass_from_point(float(row[4]), 0.0, float(vmax)))
    return tuple(out)


def decremental_solve(stations, masses, initial_box: ParameterBox, alpha: float = ALPHA,
                      rounds: int = ROUNDS, functional: str = "F1", shrink: float = SHRINK,
                      floors=None, tol: float = SWEEP_TOL, max_sweeps: int = MAX_SWEEPS,
                      start=None, mass_update=None, callback=None,
                      mass_passes: int = MASS_PASSES) -> InversionResult:
    """Coordinate descent repeated over progressively narrower corridors.

    ``mass_update(params, masses)`` refreshes the masses from the latest
    solution; within a round descent and refresh alternate up to
    ``mass_passes`` times, or until the masses settle. Without it the masses
    stay fixed. Stops early once every corridor half-width is at its floor.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    masses = tuple(float(m) for m in masses)
    if len(masses) != initial_box.m:
        raise ValueError(f"box describes {initial_box.m} bodies but {len(masses)} masses given")
    floor = _floors(initial_box.m, floors)
    box = initial_box.buried(masses)
    x = box.clip(box.p_mid if start is None else start)
    f_initial = None
    round_values = []
    boxes = [box]
    done = 0
    for r in range(rounds):
        for k in range(mass_passes if mass_update is not None else 1):
            if (r or k) and mass_update is not None:
                new = tuple(mass_update(x, masses))
                settled = all(abs(a - b) <= MASS_RTOL * b for a, b in zip(new, masses))
                if k and settled:
                    break
                masses = new
                box = box.buried(masses)
                x = box.clip(x)
            objective = Functional(stations, masses, box, alpha, functional)
            if f_initial is None:
                f_initial = objective(x)
            res = coordinate_descent(objective, box.p_min, box.p_max, x, tol, max_sweeps,
                                     callback=callback)
            x = res.x
        round_values.append(res.fun)
        done = r + 1
        log.debug("round %d: F=%.6g after %d sweeps", done, res.fun, res.sweeps)
        if done == rounds or np.all(box.half_width <= floor * (1 + 1e-12)):
            break
        box = shrink_box(box, x, shrink, floors)
        boxes.append(box)
    objective = Functional(stations, masses, box, alpha, functional)
    return InversionResult(
        params=x.copy(),
        masses=masses,
        box=box,
        f_initial=float(f_initial),
        f_final=float(round_values[-1]),
        misfit_final=objective.misfit(x),
        rounds=done,
        alpha=alpha,
        functional=functional,
        round_values=round_values,
        boxes=boxes,
    )


def solution_error(params, exact, weights) -> float:
    """Weighted root-mean-square deviation of a solution from reference values."""
    p = np.asarray(params, dtype=float)
    e = np.asarray(exact, dtype=float)
    q = np.asarray(weights, dtype=float)
    if not (p.shape == e.shape == q.shape):
        raise ValueError("params, exact and weights must have equal length")
    return float(np.sqrt(np.mean(q * (p - e) ** 2)))


def initial_box(peaks, estimates, eps_range=EPS_RANGE, rho_range=RHO_RANGE,
                xy_half_width: float = XY_HALF_WIDTH, z0_factors=Z0_FACTORS) -> ParameterBox:
    """Corridors around detected poles and their depth estimates.

    Horizontal corridors shrink to half the distance to the nearest other
    pole so neighbouring bodies cannot slide onto the same anomaly.
    """
    rows = []
    for k, (p, e) in enumerate(zip(peaks, estimates)):
        gaps = [math.hypot(p.x0 - q.x0, p.y0 - q.y0) for j, q in enumerate(peaks) if j != k]
        hw = min([xy_half_width] + [0.5 * g for g in gaps])
        z_lo = min(z0_factors[0] * e.z0, e.z0_min or e.z0)
        z_hi = max(z0_factors[1] * e.z0, e.z0_max or e.z0)
        rows.append([
            tuple(eps_range),
            tuple(rho_range),
            (p.x0 - hw, p.x0 + hw),
            (p.y0 - hw, p.y0 + hw),
            (z_lo, z_hi),
        ])
    return ParameterBox.from_corridors(rows)


def match_peaks(peaks, box: ParameterBox) -> list:
    """Reorder poles so the k-th one sits nearest the k-th body's corridor centre."""
    from scipy.optimize import linear_sum_assignment

    mid = box.p_mid.reshape(-1, K)
    cost = np.array([[math.hypot(p.x0 - c[2], p.y0 - c[3]) for p in peaks] for c in mid])
    _, cols = linear_sum_assignment(cost)
    return [peaks[j] for j in cols]


@dataclass
class PipelineResult:
    spheroids: list[Spheroid]
    inversion: InversionResult | None
    peaks: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    raw_peaks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def refine_pipeline(stations, noise_level: float, alpha: float = ALPHA, functional: str = "F1",
                    rounds: int = ROUNDS, shrink: float = SHRINK, tol: float = SWEEP_TOL,
                    max_sweeps: int = MAX_SWEEPS, valley_threshold: float = detect.VALLEY_THRESHOLD,
                    noise_threshold: float = detect.NOISE_THRESHOLD, boxes=None,
                    rho_range=RHO_RANGE, eps_range=EPS_RANGE, mass_rule: str = "rescale",
                    gridding: str = "tps") -> PipelineResult:
    """Poles, sphere estimates, then constrained refinement of every body.

    ``boxes`` replaces the automatically built corridors (a ParameterBox or
    per-body corridor rows). Poles are paired with the corridors whose
    horizontal centres lie nearest, and results follow the corridor order.
    ``mass_rule`` picks how masses are refreshed between rounds: "rescale"
    (least-squares against the data), "pole" (point-mass rule from the pole
    intensity) or "fixed".
    """
    _, raw, peaks = detect.detect(stations, noise_level, method=gridding,
                                  valley_threshold=valley_threshold,
                                  noise_threshold=noise_threshold)
    diag = {"raw_peaks": len(raw), "bodies": len(peaks)}
    if not peaks:
        diag["reason"] = "no anomaly pole detected"
        return PipelineResult([], None, [], [], raw, diag)

    box = None
    if boxes is not None:
        box = boxes if isinstance(boxes, ParameterBox) else ParameterBox.from_corridors(boxes)
        if box.m != len(peaks):
            raise ValueError(f"constraint box has {box.m} bodies but {len(peaks)} were detected")
        peaks = match_peaks(peaks, box)
    estimates = bulakh.estimate_bodies(peaks, stations)
    masses = [e.mass for e in estimates]
    if box is None:
        box = initial_box(peaks, estimates, eps_range, rho_range)
    if rho_range == RHO_RANGE and boxes is None:
        log.warning("density corridors default to %s g/cm^3; density bounds carry the "
                    "uniqueness of the solution", RHO_RANGE)

    if mass_rule == "rescale":
        def update(x, current):
            return rescale_masses(x, current, stations)
    elif mass_rule == "pole":
        poles = [p.vz_peak for p in peaks]

        def update(x, current):
            return pole_masses(x, current, poles)
    elif mass_rule == "fixed":
        update = None
    else:
        raise ValueError(f"unknown mass rule {mass_rule!r}")

    result = decremental_solve(stations, masses, box, alpha, rounds, functional, shrink,
                               tol=tol, max_sweeps=max_sweeps, mass_update=update)
    if update is not None:
        # final mass refresh from the refined depths
        result.masses = tuple(update(result.params, result.masses))
        result.misfit_final = misfit(result.params, stations, result.masses)
    return PipelineResult(result.spheroids, result, peaks, estimates, raw, diag)
