import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from suspension_ddpg.errors import SpecError
from suspension_ddpg.road_excitation import (
    ISO_CLASS_PSD,
    Iso8608,
    MultiHump,
    RoadSpec,
    RoadTrace,
    SingleBump,
    feature_end_time,
    flat_road,
    generate,
    generate_iso8608,
    generate_multi_hump,
    generate_single_bump,
    iso_components,
    iso_variance,
    read_csv,
    write_csv,
)

BUMP = RoadSpec(SingleBump(0.1, 5.0, 25.0), vehicle_speed=20.0, duration=3.0)


def trapezoid(y, dx):
    return dx * (np.sum(y) - 0.5 * (y[0] + y[-1]))


# -- spec validation ---------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(kind=SingleBump(height=0.0)),
    dict(kind=SingleBump(length=-1.0)),
    dict(kind=MultiHump(spacing=-1.0)),
    dict(kind=Iso8608(spatial_freq_range=(0.5, 0.5))),
    dict(kind=Iso8608(spatial_freq_range=(0.0, 1.0))),
    dict(kind=Iso8608(road_class="F")),
    dict(vehicle_speed=0.0),
    dict(duration=-1.0),
    dict(dt=0.0),
])
def test_invalid_specs_raise(kwargs):
    with pytest.raises(SpecError):
        RoadSpec(**kwargs)


def test_sample_count():
    assert len(generate(RoadSpec(duration=2.0, dt=1e-3))) == 2001
    assert len(generate(BUMP)) == round(3.0 / 1e-3) + 1


def test_trace_arrays_are_read_only():
    tr = generate(BUMP)
    with pytest.raises(ValueError):
        tr.x_r[0] = 1.0


# -- single bump -------------------------------------------------------------------

def test_bump_zero_before_support():
    tr = generate_single_bump(BUMP)
    i_start = int(25.0 / 20.0 / 1e-3)
    assert not np.any(tr.x_r[:i_start])
    assert not np.any(tr.v_r[:i_start])


def test_bump_crest():
    tr = generate_single_bump(BUMP)
    i_mid = int(round(27.5 / 20.0 / 1e-3))
    assert tr.x_r[i_mid] == 0.1
    assert abs(tr.v_r[i_mid]) < 1e-12
    assert tr.x_r.max() == 0.1


def test_bump_peak_rate():
    tr = generate_single_bump(BUMP)
    expected = math.pi * 0.1 * 20.0 / 5.0
    peak = np.max(np.abs(tr.v_r))
    # the 1 ms grid straddles the analytic peak, so allow the grid's offset
    assert expected * math.cos(2 * math.pi * 0.5 * 20.0 * 1e-3 / 5.0) <= peak <= expected


def test_bump_is_c1_at_edges():
    tr = generate_single_bump(BUMP)
    i_end = int(round(30.0 / 20.0 / 1e-3))
    assert abs(tr.x_r[i_end]) < 1e-15
    assert abs(tr.v_r[i_end]) < 1e-12
    assert np.max(np.abs(np.diff(tr.v_r))) < 0.05  # no jump in the rate


def test_bump_past_trace_raises():
    with pytest.raises(SpecError):
        generate(RoadSpec(SingleBump(start_position=50.0), duration=2.0))


# -- multi hump ---------------------------------------------------------------------

def test_multi_hump_single_equals_bump():
    a = generate_multi_hump(RoadSpec(MultiHump(1, 0.1, 5.0, 15.0, 25.0), duration=3.0))
    b = generate_single_bump(BUMP)
    assert np.array_equal(a.x_r, b.x_r) and np.array_equal(a.v_r, b.v_r)


def test_multi_hump_gap_is_flat():
    tr = generate(RoadSpec(MultiHump(3, 0.1, 5.0, 15.0, 25.0), duration=5.0))
    # between the end of hump 1 (30 m) and start of hump 2 (40 m)
    lo, hi = int(round(30.5 / 20 / 1e-3)), int(round(39.5 / 20 / 1e-3))
    assert not np.any(tr.x_r[lo:hi]) and not np.any(tr.v_r[lo:hi])


def test_multi_hump_area():
    spec = RoadSpec(MultiHump(3, 0.1, 5.0, 15.0, 25.0), duration=5.0)
    tr = generate(spec)
    area = trapezoid(tr.x_r, 20.0 * 1e-3)  # over distance
    assert area == pytest.approx(3 * 0.1 * 5.0 / 2, rel=1e-9)


def test_multi_hump_overlap_rejected():
    with pytest.raises(SpecError):
        generate(RoadSpec(MultiHump(2, 0.1, 5.0, 4.0, 25.0), duration=5.0))


def test_feature_end_time():
    assert feature_end_time(BUMP) == pytest.approx(1.5)
    assert feature_end_time(RoadSpec(MultiHump(3, 0.1, 5.0, 15.0, 25.0), duration=5.0)) == pytest.approx(3.0)
    assert feature_end_time(RoadSpec()) is None


# -- ISO 8608 ---------------------------------------------------------------------------

def iso(seed=0, cls="E", duration=10.0, **kw):
    return generate_iso8608(RoadSpec(Iso8608(cls, seed=seed, **kw), duration=duration))


def test_iso_same_seed_bit_identical():
    a, b = iso(7), iso(7)
    assert np.array_equal(a.x_r, b.x_r) and a.checksum() == b.checksum()
    assert iso(8).checksum() != a.checksum()


def test_iso_components_follow_psd():
    kind = Iso8608("C", n_components=50, spatial_freq_range=(0.1, 1.1))
    n, amp, phase = iso_components(kind)
    dn = 1.0 / 50
    assert n[0] == pytest.approx(0.1 + dn / 2) and n[-1] == pytest.approx(1.1 - dn / 2)
    g = 256e-6 * (n / 0.1) ** -2
    assert np.allclose(amp, np.sqrt(2 * g * dn), rtol=1e-14)
    assert np.all((phase >= 0) & (phase < 2 * np.pi))


def test_iso_matches_direct_superposition():
    kind = Iso8608("E", n_components=30, seed=3)
    tr = iso(3, n_components=30, duration=1.0)
    n, amp, phase = iso_components(kind)
    t = tr.t[::97]
    s = 20.0 * t
    x = np.array([sum(a * math.cos(2 * math.pi * ni * si + p) for ni, a, p in zip(n, amp, phase)) for si in s])
    v = np.array([sum(-a * 2 * math.pi * ni * 20.0 * math.sin(2 * math.pi * ni * si + p)
                      for ni, a, p in zip(n, amp, phase)) for si in s])
    assert np.allclose(tr.x_r[::97], x, atol=1e-12)
    assert np.allclose(tr.v_r[::97], v, atol=1e-10)


def test_iso_slope_and_variance():
    from scipy.signal import welch

    kind = Iso8608("E")
    fs = 1.0 / (20.0 * 1e-3)  # samples per metre
    slopes, variances = [], []
    for seed in range(10):
        tr = iso(seed)
        f, p = welch(tr.x_r, fs=fs, nperseg=5000)
        band = (f >= 0.02) & (f <= 2.0)
        slopes.append(np.polyfit(np.log(f[band]), np.log(p[band]), 1)[0])
        variances.append(np.var(tr.x_r))
    assert -2.3 <= np.mean(slopes) <= -1.7
    assert np.mean(variances) == pytest.approx(iso_variance(kind), rel=0.10)


def test_iso_variance_sum_matches_psd_integral():
    # the discrete sum approximates the integral of G_d over the band
    kind = Iso8608("E", n_components=4000)
    low, high = kind.spatial_freq_range
    integral = 4096e-6 * 0.1**2 * (1 / low - 1 / high)
    assert iso_variance(kind) == pytest.approx(integral, rel=0.02)


def test_iso_class_ordering():
    variances = [np.var(iso(11, cls).x_r) for cls in "ABCDE"]
    assert all(a < b for a, b in zip(variances, variances[1:]))
    assert list(ISO_CLASS_PSD) == list("ABCDE")


def test_iso_mean_tends_to_zero():
    kind = Iso8608("E")
    n, amp, _ = iso_components(kind)
    duration = 10.0
    omega_T = 2 * np.pi * n * 20.0 * duration
    # variance of the time average of a random-phase cosine over [0, T]
    var_mean = np.sum(amp**2 * (1 - np.cos(omega_T)) / omega_T**2)
    means = [np.mean(iso(seed, duration=duration).x_r) for seed in range(10)]
    sigma = math.sqrt(var_mean / len(means))
    assert abs(np.mean(means)) < 3 * sigma


def fd_error(dt):
    tr = generate(RoadSpec(Iso8608("E"), duration=2.0, dt=dt))
    fd = (tr.x_r[2:] - tr.x_r[:-2]) / (2 * dt)
    return np.max(np.abs(fd - tr.v_r[1:-1]))


def test_iso_rate_is_analytic_derivative():
    # central differences agree to their own truncation bound dt^2/6 max|x'''|
    n, amp, _ = iso_components(Iso8608("E"))
    jerk_bound = np.sum(amp * (2 * np.pi * n * 20.0) ** 3)
    err = fd_error(1e-3)
    assert err <= (1e-3) ** 2 / 6 * jerk_bound
    # and converge at second order
    ratio = fd_error(1e-3) / fd_error(5e-4)
    assert 3.5 < ratio < 4.5


@pytest.mark.xfail(strict=True, reason="central-difference truncation at 1 ms exceeds 1e-4 m/s "
                                       "for the 2.83 cycles/m upper band edge at 20 m/s")
def test_iso_rate_central_difference_below_1e4():
    assert fd_error(1e-3) < 1e-4


def test_bump_rate_is_analytic_derivative():
    tr = generate(BUMP)
    s = 20.0 * tr.t
    expected = np.where((s >= 25) & (s <= 30), 0.05 * (2 * np.pi / 5) * np.sin(2 * np.pi * (s - 25) / 5) * 20, 0)
    assert np.allclose(tr.v_r, expected, rtol=0, atol=1e-12)
    # away from the edges, where x'' jumps, central differences meet their dt^2 bound
    fd = (tr.x_r[2:] - tr.x_r[:-2]) / 2e-3
    interior = (np.abs(s[1:-1] - 25) > 0.05) & (np.abs(s[1:-1] - 30) > 0.05)
    jerk = 0.05 * (2 * np.pi / 5) ** 3 * 20**3
    assert np.max(np.abs(fd - tr.v_r[1:-1])[interior]) <= 1e-6 / 6 * jerk


# -- trace interpolation and CSV ---------------------------------------------------

def test_at_returns_samples_exactly():
    tr = iso(2, duration=1.0)
    for i in (0, 1, 500, 1000):
        assert tr.at(i * 1e-3) == (tr.x_r[i], tr.v_r[i])


def test_at_midpoints_are_accurate():
    fine = iso(2, duration=1.0, n_components=400)
    coarse = generate(RoadSpec(Iso8608("E", seed=2), duration=1.0, dt=2e-3))
    errs = [abs(coarse.at(i * 2e-3 + 1e-3).x_r - fine.x_r[2 * i + 1]) for i in range(500)]
    n, amp, _ = iso_components(Iso8608("E", seed=2))
    # cubic Hermite midpoint error: h^4 / 384 * max|x''''|
    assert max(errs) <= (2e-3) ** 4 / 384 * np.sum(amp * (2 * np.pi * n * 20.0) ** 4)


def test_at_outside_raises():
    tr = flat_road(1.0)
    with pytest.raises(IndexError):
        tr.at(1.0 + 1e-3)
    with pytest.raises(IndexError):
        tr.at(-1e-3)


def test_csv_round_trip(tmp_path):
    tr = iso(4, duration=0.5)
    path = tmp_path / "road.csv"
    write_csv(tr, path)
    back = read_csv(path)
    assert np.array_equal(back.x_r, tr.x_r) and np.array_equal(back.v_r, tr.v_r)
    assert back.dt == pytest.approx(tr.dt, rel=1e-12)
    assert path.read_text().splitlines()[0] == "t,x_r,v_r"


@pytest.mark.parametrize("body,row", [
    ("t,x_r,v_r\n0,0,0\n0.001,nan?,0\n", 3),
    ("t,x_r,v_r\n0,0,0\n0.001,0\n", 3),
    ("time,x,v\n0,0,0\n", 1),
])
def test_csv_malformed_names_row(tmp_path, body, row):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(SpecError, match=f"row {row}"):
        read_csv(path)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(1.0, 10.0), st.floats(0.0, 20.0), st.floats(5.0, 30.0))
def test_bump_properties(height, length, start, speed):
    spec = RoadSpec(SingleBump(height, length, start), vehicle_speed=speed,
                    duration=(start + length) / speed + 0.1, dt=1e-3)
    tr = generate(spec)
    assert np.all(tr.x_r >= 0) and np.all(tr.x_r <= height)
    assert np.max(np.abs(tr.v_r)) <= math.pi * height * speed / length * (1 + 1e-12)


def test_road_trace_validation():
    with pytest.raises(SpecError):
        RoadTrace(1e-3, np.zeros(3), np.zeros(4))
