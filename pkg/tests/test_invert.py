import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gravispheroid import forward, invert, synth
from gravispheroid.detect import PeakCandidate
from gravispheroid.invert import ParameterBox
from gravispheroid.model import GravityDomainError, Spheroid, Station, spheroid_mass

TRUE = Spheroid(1.5, 0.7, 2.0, 7.2, 6.8, 3.0)
OFFSET_BOX = [[(0.55, 1.15), (1.5, 2.3), (6.9, 8.1), (6.2, 7.2), (2.6, 3.9)]]


def _grid_stations(bodies, n=13):
    xy = np.array([(x, y) for x in np.linspace(0, 15, n) for y in np.linspace(0, 15, n)])
    vz = forward.field_xy(bodies, xy[:, 0], xy[:, 1])
    return [Station(float(x), float(y), float(v)) for (x, y), v in zip(xy, vz)]


def _focal(s):
    return s.a * math.sqrt(abs(1 - s.eps**2))


corridor = st.tuples(st.floats(-10, 10), st.floats(0.01, 5)).map(lambda t: (t[0], t[0] + t[1]))


@given(st.lists(st.tuples(*[corridor] * 5), min_size=1, max_size=3))
def test_box_invariants(rows):
    box = ParameterBox.from_corridors(rows)
    assert box.m == len(rows)
    assert box.contains(box.p_mid)
    assert np.all(box.half_width > 0)
    nz = box.p_mid != 0
    assert np.allclose((box.q * box.p_mid**2)[nz], 1.0)
    assert box.corridors() == [[(float(a), float(b)) for a, b in r] for r in rows]
    back = box.permuted(list(reversed(range(box.m)))).permuted(list(reversed(range(box.m))))
    assert np.array_equal(back.p_min, box.p_min)


def test_box_rejects_bad_bounds():
    with pytest.raises(ValueError):
        ParameterBox(np.zeros(4), np.ones(4))
    with pytest.raises(ValueError, match="rho"):
        ParameterBox.from_corridors([[(0, 1), (2, 2), (0, 1), (0, 1), (0, 1)]])
    box = ParameterBox.from_corridors(OFFSET_BOX)
    with pytest.raises(ValueError):
        box.p_min[0] = 3.0
    assert box.names[4] == "z0[1]"


def test_burial_lift():
    box = ParameterBox.from_corridors([[(0.5, 2.0), (1.0, 2.0), (0, 1), (0, 1), (0.1, 10.0)]])
    mass = 30.0
    lifted = box.buried([mass])
    a = (mass / (4 / 3 * math.pi * 2.0 * 1.0)) ** (1 / 3)
    assert lifted.p_min[4] == pytest.approx(2.0 * a * 1.001)
    assert np.array_equal(lifted.p_max, box.p_max)
    # every corner of the lifted box is a buried body
    for eps in (0.5, 2.0):
        for rho in (1.0, 2.0):
            row = [eps, rho, 0.5, 0.5, lifted.p_min[4]]
            invert.spheroids_from(row, [mass])
    with pytest.raises(GravityDomainError):
        ParameterBox.from_corridors([[(0.5, 2.0), (1.0, 2.0), (0, 1), (0, 1), (0.1, 0.5)]]).buried([mass])


def test_golden_section_parabola():
    x, f = invert.golden_section(lambda t: (t - 0.3) ** 2, -2.0, 5.0)
    assert x == pytest.approx(0.3, abs=1e-8)
    # an offset flattens f below sqrt(machine eps) relative resolution
    x, f = invert.golden_section(lambda t: (t - 0.3) ** 2 + 1.0, -2.0, 5.0)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert f == pytest.approx(1.0)
    x, _ = invert.golden_section(lambda t: (t - 9.0) ** 2, -2.0, 5.0)
    assert x == pytest.approx(5.0, abs=1e-8)


def test_descent_on_separable_quadratic():
    c = np.array([0.5, -1.0, 2.0])
    res = invert.coordinate_descent(lambda x: float(np.sum((x - c) ** 2)), [-3] * 3, [3] * 3, [0, 0, 0])
    assert np.allclose(res.x, c, atol=1e-7)
    assert res.sweeps <= 3
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_descent_stops_on_box_face():
    c = np.array([5.0, -5.0])
    res = invert.coordinate_descent(lambda x: float(np.sum((x - c) ** 2)), [-1, -1], [1, 1], [0, 0])
    assert np.allclose(res.x, [1.0, -1.0], atol=1e-7)
    assert res.sweeps <= 3


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=4), st.floats(0.1, 1.0))
def test_descent_never_rises(c, coupling):
    c = np.array(c)

    def f(x):
        return float(np.sum((x - c) ** 2) + coupling * np.sum(x[:-1] * x[1:]))

    res = invert.coordinate_descent(f, [-3] * c.size, [3] * c.size, np.zeros(c.size), max_sweeps=20)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert res.fun <= f(np.zeros(c.size))


def test_stabilizers_at_midpoint():
    box = ParameterBox.from_corridors(OFFSET_BOX + OFFSET_BOX)
    assert invert.stabilizer(box.p_mid, box, "F1") == 0.0
    assert invert.stabilizer(box.p_mid, box, "F2") == pytest.approx(10.0)
    with pytest.raises(ValueError):
        invert.stabilizer(box.p_mid, box, "F3")


def test_tikhonov_is_misfit_plus_penalty():
    st_ = _grid_stations([TRUE], n=5)
    box = ParameterBox.from_corridors(OFFSET_BOX)
    p = box.p_mid
    m = [spheroid_mass(TRUE)]
    mis = invert.misfit(p, st_, m)
    assert invert.tikhonov_f1(p, box, 0.3, st_, m) == pytest.approx(mis)
    assert invert.tikhonov_f2(p, box, 0.3, st_, m) == pytest.approx(mis + 0.3 * 5)
    f = invert.Functional(st_, m, box, 0.3, "F2")
    assert f(p) == pytest.approx(mis + 0.3 * 5)
    assert f.evaluations == 1


def test_single_station_misfit():
    s = Spheroid(1.0, 1.0, 2.0, 0.0, 0.0, 3.0)
    vz = forward.spheroid_vz(s, Station(0.0, 0.0))
    st_ = [Station(0.0, 0.0, vz + 0.5)]
    assert invert.misfit([1.0, 2.0, 0.0, 0.0, 3.0], st_, [s.mass]) == pytest.approx(0.25)


def test_functional_flags_unburied_as_infinite():
    st_ = _grid_stations([TRUE], n=4)
    box = ParameterBox.from_corridors(OFFSET_BOX)
    f = invert.Functional(st_, [spheroid_mass(TRUE)], box)
    assert f([2.0, 1.0, 7.0, 7.0, 0.5]) == math.inf


def test_body_order_does_not_change_misfit():
    other = Spheroid(1.0, 1.4, 2.5, 3.0, 11.0, 3.5)
    st_ = _grid_stations([TRUE, other], n=6)
    p = [0.8, 2.1, 7.0, 7.0, 3.2, 1.3, 2.4, 3.1, 10.8, 3.6]
    m = [TRUE.mass, other.mass]
    swapped = p[5:] + p[:5]
    assert invert.misfit(p, st_, m) == pytest.approx(invert.misfit(swapped, st_, m[::-1]), rel=1e-12)


def test_noise_free_single_body_recovered():
    st_ = _grid_stations([TRUE])
    box = ParameterBox.from_corridors(OFFSET_BOX)
    res = invert.decremental_solve(st_, [TRUE.mass], box, alpha=0.0, rounds=6)
    assert res.rounds <= 6
    (s,) = res.spheroids
    for got, want in ((s.x0, TRUE.x0), (s.y0, TRUE.y0), (s.z0, TRUE.z0), (_focal(s), _focal(TRUE))):
        assert got == pytest.approx(want, rel=0.01)
    assert res.f_final <= res.f_initial
    assert res.misfit_final < 1e-8


def test_one_round_equals_plain_descent():
    st_ = _grid_stations([TRUE], n=7)
    m = [TRUE.mass]
    box = ParameterBox.from_corridors(OFFSET_BOX)
    res = invert.decremental_solve(st_, m, box, alpha=1e-3, rounds=1, max_sweeps=5)
    buried = box.buried(m)
    plain = invert.coordinate_descent(invert.Functional(st_, m, buried, 1e-3), buried.p_min,
                                      buried.p_max, buried.p_mid, max_sweeps=5)
    assert np.array_equal(res.params, plain.x)
    assert res.rounds == 1 and res.f_final == plain.fun


@given(st.floats(0.1, 0.95))
def test_shrink_nests_and_keeps_point(shrink):
    box = ParameterBox.from_corridors(OFFSET_BOX)
    rng = np.random.default_rng(int(shrink * 1e6))
    x = box.p_min + rng.random(5) * (box.p_max - box.p_min)
    inner = invert.shrink_box(box, x, shrink)
    assert np.all(inner.p_min >= box.p_min) and np.all(inner.p_max <= box.p_max)
    assert inner.contains(x)
    assert np.all(inner.half_width <= box.half_width + 1e-15)


def test_shrink_keeps_edge_side():
    box = ParameterBox.from_corridors([[(0, 1), (0, 1), (0, 1), (0, 1), (0, 1)]])
    inner = invert.shrink_box(box, [0.0, 0.5, 1.0, 0.5, 0.5], 0.5, floors={k: 0.0 for k in invert.KINDS})
    assert inner.p_min[0] == 0.0 and inner.p_max[0] == pytest.approx(0.25)
    assert inner.p_max[2] == 1.0
    assert inner.p_min[1] == pytest.approx(0.25) and inner.p_max[1] == pytest.approx(0.75)


def test_solution_error_examples():
    assert invert.solution_error([1, 2], [1, 2], [1, 1]) == 0.0
    assert invert.solution_error([2.0, 0.0], [0.0, 0.0], [1.0, 0.0]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        invert.solution_error([1], [1, 2], [1, 1])


def test_rescale_masses_recovers_scale():
    other = Spheroid(1.0, 1.4, 2.5, 3.0, 11.0, 3.5)
    st_ = _grid_stations([TRUE, other], n=9)
    p = [TRUE.eps, TRUE.rho, TRUE.x0, TRUE.y0, TRUE.z0,
         other.eps, other.rho, other.x0, other.y0, other.z0]
    got = invert.rescale_masses(p, [0.8 * TRUE.mass, 1.25 * other.mass], st_)
    # field at fixed eps, rho, position is not exactly linear in mass, so allow 2%
    assert got[0] == pytest.approx(TRUE.mass, rel=0.02)
    assert got[1] == pytest.approx(other.mass, rel=0.02)


def test_match_peaks_follows_corridors():
    box = ParameterBox.from_corridors(
        [[(0, 1), (1, 2), (9, 11), (9, 11), (1, 3)], [(0, 1), (1, 2), (1, 3), (1, 3), (1, 3)]])
    peaks = [PeakCandidate(2.1, 1.9, 9.0), PeakCandidate(10.2, 9.8, 5.0)]
    assert [p.vz_peak for p in invert.match_peaks(peaks, box)] == [5.0, 9.0]


def test_initial_box_respects_neighbour_gap():
    from gravispheroid.bulakh import DepthMassEstimate

    peaks = [PeakCandidate(5.0, 5.0, 3.0), PeakCandidate(6.2, 5.0, 2.0)]
    ests = [DepthMassEstimate(3.0, 20.0, 4, 0.5, 2.8, 3.3), DepthMassEstimate(2.0, 10.0, 4, 0.1, 1.0, 2.1)]
    box = invert.initial_box(peaks, ests)
    rows = box.corridors()
    assert rows[0][2] == pytest.approx((4.4, 5.6))
    assert rows[1][4][0] == pytest.approx(1.0)
    assert rows[0][4] == pytest.approx((1.8, 4.2))


def test_pipeline_with_no_poles():
    flat = [Station(float(x), float(y), 0.0) for x in range(5) for y in range(5)]
    res = invert.refine_pipeline(flat, 0.0)
    assert res.inversion is None and "reason" in res.diagnostics


def test_body_permutation_permutes_solution():
    other = Spheroid(1.0, 1.4, 2.5, 3.0, 11.0, 3.5)
    st_ = _grid_stations([TRUE, other], n=9)
    box = ParameterBox.from_corridors(OFFSET_BOX + [[(1.1, 1.7), (2.2, 2.9), (2.6, 3.5), (10.5, 11.6), (3.0, 4.2)]])
    m = [TRUE.mass, other.mass]
    a = invert.decremental_solve(st_, m, box, alpha=1e-8, rounds=4)
    b = invert.decremental_solve(st_, m[::-1], box.permuted([1, 0]), alpha=1e-8, rounds=4)
    back = np.concatenate([b.params[5:], b.params[:5]])
    x = np.array([[s.x0, s.y0, s.z0, _focal(s)] for s in a.spheroids])
    y = np.array([[s.x0, s.y0, s.z0, _focal(s)] for s in b.spheroids[::-1]])
    assert np.allclose(x, y, rtol=1e-4)
    assert np.allclose(back[[2, 3, 4, 7, 8, 9]], a.params[[2, 3, 4, 7, 8, 9]], rtol=1e-4)


def test_example1_solution_beats_sphere_start(example1, survey1):
    box = ParameterBox.from_corridors(synth.EXAMPLE1_BOXES)
    res = invert.refine_pipeline(survey1, example1.noise_level, boxes=box)
    exact = np.concatenate([e.params for e in example1.exact_params])
    start = box.p_mid.copy()
    for k, (p, e) in enumerate(zip(res.peaks, res.estimates)):
        start[k * 5 + 2 : k * 5 + 5] = (p.x0, p.y0, e.z0)
    start = box.clip(start)
    solved = invert.solution_error(res.inversion.params, exact, box.q)
    assert solved <= invert.solution_error(start, exact, box.q)

