import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gravispheroid import forward, synth
from gravispheroid.forward import FieldGrid
from gravispheroid.model import GAMMA, BarBody, BarCell, Domain, GravityDomainError, Spheroid, Station

# frozen: (4/3) pi * 6.674 * a^3 * z0 / z0^3 with a=2, z0=4
SPHERE_ON_AXIS = 13.977992913372185


def spheroids(min_eps=0.3, max_eps=2.2):
    return st.builds(
        lambda a, eps, rho, x0, y0, gap: Spheroid(a, eps, rho, x0, y0, eps * a + gap),
        st.floats(0.3, 3.0),
        st.floats(min_eps, max_eps),
        st.floats(0.5, 4.0),
        st.floats(-5, 5),
        st.floats(-5, 5),
        st.floats(0.2, 5.0),
    )


def test_bar_cell_hand_value():
    cell = BarCell(0, 0, 1, 1, ((1, 2),))
    assert forward.bar_vz(cell, 1.0, Station(0, 0)) == pytest.approx(GAMMA * 0.5, rel=1e-15)
    assert forward.bar_vz(cell, 1.0, Station(0, 0)) == pytest.approx(3.337)


@given(z1=st.floats(0.1, 3), dz=st.floats(0.1, 3), frac=st.floats(0.05, 0.95),
       x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_split_segment_telescopes(z1, dz, frac, x, y):
    z2 = z1 + dz
    zm = z1 + frac * dz
    whole = BarCell(0.3, -0.2, 0.5, 0.7, ((z1, z2),))
    split = BarCell(0.3, -0.2, 0.5, 0.7, ((z1, zm), (zm, z2)))
    p = Station(x, y)
    assert forward.bar_vz(split, 2.0, p) == pytest.approx(forward.bar_vz(whole, 2.0, p), rel=1e-12)


def test_void_reduces_field():
    full = BarBody(1.0, (BarCell(0, 0, 1, 1, ((1, 4),)),))
    holed = BarBody(1.0, (BarCell(0, 0, 1, 1, ((1, 2), (3, 4))),))
    gap = BarBody(1.0, (BarCell(0, 0, 1, 1, ((2, 3),)),))
    p = Station(0.4, 0.1)
    assert forward.body_vz(holed, p) == pytest.approx(forward.body_vz(full, p) - forward.body_vz(gap, p))


def test_zero_density_body_is_silent():
    body = BarBody(0.0, (BarCell(0, 0, 1, 1, ((1, 2),)),))
    assert forward.body_vz(body, Station(3, 4)) == 0.0


def test_body_vz_equals_cell_sum():
    cells = tuple(BarCell(i * 0.5, 0.0, 0.5, 0.5, ((1.0 + i * 0.1, 2.0),)) for i in range(5))
    body = BarBody(1.7, cells)
    p = Station(1.1, 0.7)
    assert forward.body_vz(body, p) == pytest.approx(sum(forward.bar_vz(c, 1.7, p) for c in cells))


def test_sphere_on_axis_value():
    s = Spheroid(2.0, 1.0, 1.0, 0.0, 0.0, 4.0)
    assert forward.spheroid_vz(s, Station(0, 0)) == pytest.approx(SPHERE_ON_AXIS, rel=1e-14)
    assert forward.spheroid_vz(s, Station(0, 0)) == pytest.approx(13.98, abs=5e-3)


def test_oblate_on_axis_closed_form():
    a, eps, rho, z0 = 2.0, 0.5, 1.3, 3.0
    s = Spheroid(a, eps, rho, 1.0, 2.0, z0)
    e = math.sqrt(1 - eps**2)
    p = e * a / z0  # the confocal root is exactly 1 above the centre
    expected = 4 * math.pi * GAMMA * rho * eps / e**3 * (p - math.atan(p)) * z0
    assert forward.spheroid_vz(s, Station(1.0, 2.0)) == pytest.approx(expected, rel=1e-13)


def test_prolate_on_axis_closed_form():
    a, eps, rho, z0 = 1.0, 2.0, 2.0, 3.0
    s = Spheroid(a, eps, rho, 0.0, 0.0, z0)
    e = math.sqrt(eps**2 - 1)
    p = e * a / math.sqrt(z0**2 - (e * a) ** 2)
    expected = 4 * math.pi * GAMMA * rho * eps / e**3 * (math.asinh(p) - p / math.sqrt(1 + p * p)) * z0
    assert forward.spheroid_vz(s, Station(0, 0)) == pytest.approx(expected, rel=1e-12)


def test_station_inside_raises():
    # bypass the burial check to plant a station inside the body
    s = Spheroid(2.0, 0.5, 1.0, 0, 0, 2.0)
    object.__setattr__(s, "z0", 0.5)
    with pytest.raises(GravityDomainError):
        forward.spheroid_vz(s, Station(0, 0))


@pytest.mark.parametrize("eps", [1 - 1e-6, 1 + 1e-6])
def test_sphere_limit_continuity(eps):
    rng = np.random.default_rng(5)
    x = rng.uniform(-20, 20, 100)
    y = rng.uniform(-20, 20, 100)
    near = forward.spheroid_vz_xy(Spheroid(1.5, eps, 2.0, 0.5, -0.5, 3.0), x, y)
    sphere = forward.spheroid_vz_xy(Spheroid(1.5, 1.0, 2.0, 0.5, -0.5, 3.0), x, y)
    assert np.max(np.abs(near / sphere - 1)) < 1e-4


@pytest.mark.parametrize("eps", [0.4, 1.7])
def test_small_argument_series_joins_smoothly(eps):
    # far stations push the shape argument below the series switch
    s = Spheroid(1.0, eps, 1.0, 0.0, 0.0, 3.0)
    h = np.linspace(200.0, 2000.0, 400)
    v = forward.spheroid_vz_xy(s, h, np.zeros_like(h))
    point = 4 / 3 * math.pi * GAMMA * eps * 3.0 / (h**2 + 9.0) ** 1.5
    assert np.max(np.abs(v / point - 1)) < 1e-3


@given(spheroids(), st.floats(0.1, 10), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_axial_symmetry(s, r, t1, t2):
    a = forward.spheroid_vz(s, Station(s.x0 + r * math.cos(t1), s.y0 + r * math.sin(t1)))
    b = forward.spheroid_vz(s, Station(s.x0 + r * math.cos(t2), s.y0 + r * math.sin(t2)))
    assert a == pytest.approx(b, rel=1e-12)


@given(spheroids(), st.floats(0.1, 5))
def test_linear_in_density(s, k):
    p = Station(s.x0 + 1.3, s.y0 - 0.4)
    scaled = Spheroid(s.a, s.eps, s.rho * k, s.x0, s.y0, s.z0)
    assert forward.spheroid_vz(scaled, p) == pytest.approx(k * forward.spheroid_vz(s, p), rel=1e-12)


@given(spheroids(), st.floats(0, 2 * math.pi))
def test_positive_and_decaying_along_ray(s, theta):
    h = np.linspace(0.0, 30.0, 120)
    v = forward.spheroid_vz_xy(s, s.x0 + h * math.cos(theta), s.y0 + h * math.sin(theta))
    assert np.all(v > 0)
    assert np.all(np.diff(v) < 0)


@given(spheroids(), spheroids())
def test_superposition_is_ordered_sum(s1, s2):
    x = np.linspace(-8, 8, 7)
    y = np.linspace(3, -3, 7)
    total = forward.field_xy([s1, s2], x, y)
    parts = np.zeros(7) + forward.spheroid_vz_xy(s1, x, y) + forward.spheroid_vz_xy(s2, x, y)
    assert np.array_equal(total, parts)


def test_field_at_empty_and_single():
    stations = [Station(0, 0), Station(1, 2)]
    assert np.array_equal(forward.field_at([], stations), np.zeros(2))
    s = Spheroid(1.0, 0.7, 2.0, 0.0, 0.0, 2.0)
    assert forward.field_at([s], stations)[1] == forward.spheroid_vz(s, stations[1])


def test_field_error_names_body():
    good = Spheroid(1.0, 0.7, 2.0, 0.0, 0.0, 2.0)
    bad = Spheroid(2.0, 0.5, 1.0, 0, 0, 2.0)
    object.__setattr__(bad, "z0", 0.5)
    with pytest.raises(GravityDomainError, match="body 1"):
        forward.field_at([good, bad], [Station(0, 0)])


def test_bar_sphere_matches_closed_form_far_out():
    s = Spheroid(1.0, 1.0, 2.0, 0.0, 0.0, 2.5)
    bars = synth.discretize_spheroid_to_bars(s, s.a / 40)
    h = np.array([2.0, 3.0, 5.0, 8.0])
    closed = forward.spheroid_vz_xy(s, h, 0 * h)
    assert np.max(np.abs(forward.body_vz_xy(bars, h, 0 * h) / closed - 1)) < 0.01


def test_grid_corners_and_symmetry():
    s = Spheroid(1.0, 1.3, 2.0, 1.0, -1.0, 3.0)
    g = forward.field_grid([s], Domain(-2, 4, -4, 2), 2, 2)
    corners = forward.field_xy([s], [-2, 4, -2, 4], [-4, -4, 2, 2])
    assert np.array_equal(g.values.ravel(), corners)
    g = forward.field_grid([s], Domain(-2, 4, -4, 2), 31, 31)
    assert np.allclose(g.values, g.values[::-1, ::-1], rtol=1e-12)
    assert np.allclose(g.values, g.values.T, rtol=1e-12)


def test_field_grid_validation():
    with pytest.raises(ValueError):
        FieldGrid(0, 1, 0, 1, np.zeros((1, 3)))
    with pytest.raises(ValueError):
        FieldGrid(0, 1, 0, 1, np.full((2, 2), np.nan))
    with pytest.raises(ValueError):
        FieldGrid(1, 1, 0, 1, np.zeros((2, 2)))
    g = FieldGrid(0, 2, 0, 1, np.array([[0.0, 1.0, 2.0], [1.0, 2.0, 3.0]]))
    assert g.sample(1.5, 0.5) == pytest.approx(2.0)
    assert g.sample(10.0, -3.0) == pytest.approx(2.0)
    assert np.array_equal(g.scaled(2).values, 2 * g.values)
    with pytest.raises(ValueError):
        g.values[0, 0] = 1.0


def test_example1_grid_shows_two_maxima(example1):
    from gravispheroid import detect

    g = forward.field_grid(example1.bodies, Domain.square(0, 15), 61, 61)
    peaks = detect.find_peaks(g, 1.0)
    assert len(peaks) == 2
    for p, e in zip(sorted(peaks, key=lambda p: p.x0), example1.exact_params):
        assert math.hypot(p.x0 - e.x0, p.y0 - e.y0) <= g.dx * math.sqrt(2)


@given(st.floats(0.3, 3.0), st.floats(0.2, 2.5), st.floats(0.2, 2.5), st.floats(-6, 6), st.floats(-6, 6))
def test_confocal_equal_mass_spheroids_share_field(focal, eps1, eps2, x, y):
    # equal mass and equal focal distance give identical outside fields
    oblate = (eps1 < 1) == (eps2 < 1)
    if not oblate or min(abs(eps1 - 1), abs(eps2 - 1)) < 0.05:
        return
    a1 = focal / math.sqrt(abs(1 - eps1**2))
    a2 = focal / math.sqrt(abs(1 - eps2**2))
    z0 = 1.05 * max(eps1 * a1, eps2 * a2, a1, a2)
    s1 = Spheroid(a1, eps1, 1.0, 0.0, 0.0, z0)
    rho2 = (eps1 * a1**3) / (eps2 * a2**3)
    s2 = Spheroid(a2, eps2, rho2, 0.0, 0.0, z0)
    assert forward.spheroid_vz(s1, Station(x, y)) == pytest.approx(
        forward.spheroid_vz(s2, Station(x, y)), rel=1e-9)
