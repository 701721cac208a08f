import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csi_rendezvous.aoa import compute_profile, extract_peaks, wrap_angle
from csi_rendezvous.channel import (
    PathComponent,
    QuarterTurn,
    RadioEnvironment,
    esnr,
    propagation_paths,
    rate_from_esnr,
    snapshots_to_csv,
    synthesize_csi,
)
from csi_rendezvous.obstacles import ObstacleSet, Rect

from oracles import analytic_single_path_ratio, mirror_reflection

ENV = RadioEnvironment()


def test_esnr_reference_and_slope():
    assert esnr(ENV, [0, 0, 0], [1, 0, 0]) == pytest.approx(30.0)
    assert esnr(ENV, [0, 0, 0], [10, 0, 0]) == pytest.approx(8.0)
    assert esnr(ENV, [0, 0, 0], [10, 0, 0], walls_crossed=2) == pytest.approx(8.0 - 12.0)
    assert esnr(ENV, [1, 1, 0], [1, 1, 0]) == pytest.approx(30.0)


@given(st.floats(0.1, 100), st.floats(0.1, 100))
def test_esnr_monotone_in_distance(d1, d2):
    d1, d2 = sorted((d1, d2))
    assert esnr(ENV, [0, 0, 0], [d1, 0, 0]) >= esnr(ENV, [0, 0, 0], [d2, 0, 0])


def test_esnr_shadowing_seeded():
    a = esnr(ENV, [0, 0, 0], [5, 0, 0], rng=np.random.default_rng(3))
    b = esnr(ENV, [0, 0, 0], [5, 0, 0], rng=np.random.default_rng(3))
    assert a == b


def test_rate_values():
    assert rate_from_esnr(0.0) == pytest.approx(1.0)
    assert rate_from_esnr(10.0) == pytest.approx(np.log2(11))
    assert rate_from_esnr(-400.0) == pytest.approx(0.0, abs=1e-30)


@given(st.floats(-50, 60), st.floats(0.01, 10))
def test_rate_increasing(e, gap):
    assert rate_from_esnr(e + gap) > rate_from_esnr(e)


def test_free_space_has_one_path():
    paths = propagation_paths(ENV, [5, 7, 0], [2, 3, 0], ObstacleSet())
    assert len(paths) == 1
    assert paths[0].azimuth == np.arctan2(4.0, 3.0)
    assert paths[0].length == pytest.approx(5.0)


def test_wall_reflection_matches_image_method():
    wall = Rect(0.0, 8.0, 20.0, 9.0)
    obs = ObstacleSet(Rect(0, 0, 20, 20), (wall,))
    tx, rx = np.array([3.0, 5.0, 0.0]), np.array([12.0, 5.0, 0.0])
    paths = propagation_paths(ENV, tx, rx, obs)
    assert len(paths) == 2
    direct, refl = paths
    length, az, _ = mirror_reflection(tx, rx, "y", 8.0)
    assert refl.length == pytest.approx(length)
    assert refl.azimuth == pytest.approx(az)
    assert abs(refl.gain) < abs(direct.gain)
    assert refl.length >= direct.length


@given(
    st.floats(1, 19), st.floats(1, 7), st.floats(1, 19), st.floats(1, 7),
)
@settings(max_examples=50)
def test_reflections_never_shorter(x1, y1, x2, y2):
    if np.hypot(x1 - x2, y1 - y2) < 0.1:
        return
    obs = ObstacleSet(Rect(0, 0, 20, 20), (Rect(0.0, 8.0, 20.0, 9.0), Rect(15.0, 12.0, 18.0, 16.0)))
    paths = propagation_paths(ENV, [x1, y1, 0], [x2, y2, 0], obs)
    assert paths[0].azimuth == np.arctan2(y1 - y2, x1 - x2)
    assert all(p.length >= paths[0].length - 1e-12 for p in paths)


def test_zero_noise_is_phase_exact():
    rx, tx = np.array([4.0, 4.0, 0.0]), np.array([7.0, 9.0, 0.5])
    arc = QuarterTurn(tuple(rx), 0.7)
    snaps = synthesize_csi(ENV, propagation_paths(ENV, tx, rx), arc, noise=False)
    ref = analytic_single_path_ratio(tx, rx, 0.7, arc.nominal_headings(), ENV.wavelength, ENV.antenna_separation)
    assert np.max(np.abs(snaps.ratios - ref)) < 1e-9


def test_oracle_mirror_symmetry_conjugates_phase():
    rx = (0.0, 0.0, 0.0)
    offs = np.linspace(0, np.pi / 2, 90, endpoint=False)
    a = analytic_single_path_ratio([3.0, 2.0, 0.0], rx, 0.0, offs, 0.06, 0.22)
    b = analytic_single_path_ratio([3.0, -2.0, 0.0], rx, 0.0, -offs, 0.06, 0.22)
    assert np.allclose(a, np.conj(b))


def test_colocated_antennas_give_unit_ratios():
    env = RadioEnvironment(antenna_separation=0.0)
    rx = np.zeros(3)
    snaps = synthesize_csi(env, propagation_paths(env, [3, 1, 0], rx), QuarterTurn(tuple(rx)), noise=False)
    assert np.allclose(snaps.ratios, 1.0)
    ref = analytic_single_path_ratio([3, 1, 0], rx, 0.0, QuarterTurn((0, 0, 0)).nominal_headings(), 0.06, 0.0)
    assert np.allclose(ref, 1.0)


def test_snapshot_shape_and_csv():
    rx = np.zeros(3)
    snaps = synthesize_csi(ENV, propagation_paths(ENV, [3, 1, 0], rx), QuarterTurn(tuple(rx)), np.random.default_rng(0))
    assert snaps.count == 90
    assert np.isclose(snaps.headings[-1] - snaps.headings[0], np.radians(89))
    lines = snapshots_to_csv(snaps).splitlines()
    assert lines[0] == "index,heading_rad,re_ratio,im_ratio" and len(lines) == 91


def test_needs_paths_and_snapshots():
    with pytest.raises(ValueError):
        synthesize_csi(ENV, [], QuarterTurn((0, 0, 0)))
    p = PathComponent(0.0, 0.0, 1.0, 1.0 + 0j, (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        synthesize_csi(ENV, [p], QuarterTurn((0, 0, 0), count=4), noise=False)


def _median_theta_error(snr_db, seeds):
    env = RadioEnvironment(noise_snr_db=snr_db)
    errs = []
    for s in seeds:
        rng = np.random.default_rng(s)
        rx = np.array([10.0, 10.0, 0.0])
        th = rng.uniform(-np.pi, np.pi)
        tx = rx + 4.0 * np.array([np.cos(th), np.sin(th), 0.0])
        snaps = synthesize_csi(env, propagation_paths(env, tx, rx), QuarterTurn(tuple(rx), 0.0, heading_jitter=np.radians(2)), rng)
        top = extract_peaks(compute_profile(snaps), 1).top
        errs.append(abs(wrap_angle(top.theta - th)))
    return float(np.median(errs))


def test_cleaner_channel_never_worse():
    seeds = range(100)
    m = [_median_theta_error(snr, seeds) for snr in (0.0, 10.0, 30.0)]
    assert m[0] >= m[1] >= m[2]
