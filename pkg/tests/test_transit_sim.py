import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from cavityqed import bistability as bs
from cavityqed.transit_sim import (DISCRETE, CloudModel, DetectorModel, TransmissionTrace, apply_detector,
                                   calibrate_input_coupling, calibration_for, drive_to_output_power,
                                   effective_atom_number, jc_transmission, mode_coupling,
                                   normal_mode_peaks, power_to_drive, simulate_transit, trace_digest,
                                   transverse_overlap)


def test_mode_coupling_examples(system):
    _, cav, dq = system
    assert mode_coupling((0, 0, 0), cav) == 1.0
    assert mode_coupling((cav.lambda_cav / 4, 0, 0), cav) == pytest.approx(0.0, abs=1e-15)
    assert mode_coupling((0, dq.mode_waist, 0), cav) == pytest.approx(np.exp(-1))


def test_transverse_overlap_vs_quadrature(system):
    _, _, dq = system
    w = dq.mode_waist
    for sr in (1e-6, 10e-6, 50e-6):
        dens = lambda y: np.exp(-y * y / (2 * sr * sr)) / np.sqrt(2 * np.pi * sr * sr)
        val, _ = integrate.quad(lambda y: dens(y) * np.exp(-2 * y * y / w**2), -10 * sr, 10 * sr)
        assert transverse_overlap(sr, w) == pytest.approx(0.5 * val, rel=1e-10)


def test_ensemble_peak_and_tails(system):
    atom, cav, dq = system
    cloud = CloudModel.for_peak(5400, dq.c1, dq.mode_waist, 0.0, 1.5e-3, 10e-6)
    s = effective_atom_number(cloud, [0.0, 6.01 * cloud.sigma_t], cav, atom)
    assert s.coop[0] == pytest.approx(5400, rel=1e-12)
    assert s.n_eff[0] == pytest.approx(5400 / 50.625, rel=1e-12)
    assert s.n_eff[1] < 1e-6 * cloud.n_atoms
    assert np.allclose(s.coop / s.n_eff, dq.c1, rtol=1e-15)
    assert cloud.fwhm == pytest.approx(1.5e-3)


def test_discrete_single_atom_peak(system):
    atom, cav, dq = system
    peaks = []
    for seed in range(300):
        cl = CloudModel(1.0, 0.0, 1e-3, 1e-9, mode=DISCRETE, poisson=False)
        stretch = np.sqrt(1 + 4 * (cl.v_fall * cl.sigma_t) ** 2 / dq.mode_waist**2)
        cl = CloudModel(1.0 / stretch, 0.0, 1e-3, 1e-9, mode=DISCRETE, poisson=False)
        t = np.linspace(-5e-3, 5e-3, 20001)
        peaks.append(effective_atom_number(cl, t, cav, atom, rng_seed=seed).n_eff.max())
    peaks = np.array(peaks)
    # one atom: axial weight cos^2 between node and antinode, averaging 1/2
    assert np.all(peaks <= 1.0) and np.all(peaks >= 0.0)
    assert peaks.mean() == pytest.approx(0.5, abs=0.05)


def test_discrete_mean_matches_ensemble(system):
    atom, cav, dq = system
    kw = dict(n_atoms=20.0, t_center=0.0, sigma_t=0.6e-3, sigma_r=15e-6)
    ens = effective_atom_number(CloudModel(**kw), [0.0, 0.5e-3], cav, atom).n_eff
    draws = np.array([effective_atom_number(CloudModel(**kw, mode=DISCRETE), [0.0, 0.5e-3], cav, atom,
                                            rng_seed=s).n_eff for s in range(400)])
    assert draws.mean(axis=0) == pytest.approx(ens, rel=0.05)


def test_power_calibration(system):
    atom, cav, _ = system
    cal = calibration_for(cav, atom)
    assert cal.photons_from_power(1.9e-12) == pytest.approx(1.0, rel=1e-14)
    assert cal.epsilon == pytest.approx(2.0206, abs=1e-4)
    raw = calibration_for(cav, atom, DetectorModel(input_coupling=1.0))
    assert raw.photons_from_power(1.9e-12) == pytest.approx(0.4949, abs=1e-4)
    assert power_to_drive(0.0, cav, atom) == 0.0
    assert calibrate_input_coupling(cav, atom) == cal.epsilon


@given(st.floats(1e-15, 1e-6))
def test_drive_linear_in_power(p):
    from cavityqed.core_params import preset
    atom, cav = preset("paper-2003")
    assert power_to_drive(2 * p, cav, atom) == pytest.approx(2 * power_to_drive(p, cav, atom), rel=1e-14)


def test_output_power_band(system):
    atom, cav, _ = system
    p = drive_to_output_power(7e5, cav, atom)
    assert 3.2e-9 <= p <= 20e-9
    assert p == pytest.approx(16.589e-9, rel=1e-4)
    assert drive_to_output_power(0.0, cav, atom) == 0.0
    xs = np.logspace(-3, 7, 50)
    assert np.all(np.diff(drive_to_output_power(xs, cav, atom)) > 0)
    with pytest.raises(ValueError):
        drive_to_output_power(-1.0, cav, atom)


def test_empty_cloud_is_flat(system):
    atom, cav, dq = system
    cal = calibration_for(cav, atom)
    tr = simulate_transit(CloudModel(0.0, 0.0, 1e-3, 1e-5), 20e-12, cav, atom)
    d = cav.detuning_ratio
    assert np.allclose(tr.p_out, 20e-12 * cal.transfer / (1 + d * d), rtol=1e-10)


def test_weak_field_consistency(system):
    atom, cav, dq = system
    cal = calibration_for(cav, atom)
    d = abs(cav.detuning_ratio)
    p = float(cal.power_from_y(5e-7))
    cloud = CloudModel.for_peak(50.0, dq.c1, dq.mode_waist, 0.0, 1.0, 10e-6)
    tr = simulate_transit(cloud, p, cav, atom, t_span=(-1e-4, 1e-4))
    ratio = tr.p_out / (p * cal.transfer / (1 + d * d))
    expected = (1 + d * d) / ((1 + 2 * tr.coop) ** 2 + d * d)
    assert np.allclose(ratio, expected, rtol=1e-4)

    one = CloudModel.for_peak(dq.c1, dq.mode_waist and dq.c1, dq.mode_waist, 0.0, 1e4, 10e-6)
    tr1 = simulate_transit(one, p, cav, atom, t_span=(0.0, 2e-5))
    jc = jc_transmission(cav.g0, cav.delta_c, 0.0, cav, atom)
    assert tr1.n_eff[0] == pytest.approx(1.0, rel=1e-9)
    assert tr1.p_out[0] / (p * cal.transfer) == pytest.approx(jc, rel=1e-4)
    tj = simulate_transit(one, p, cav, atom, t_span=(0.0, 2e-5), model="jc")
    assert tj.p_out[0] == pytest.approx(tr1.p_out[0], rel=1e-4)
    assert set(tj.branch) == {"single"}


def test_energy_bound_and_branches(system):
    atom, cav, dq = system
    cal = calibration_for(cav, atom)
    cloud = CloudModel.for_peak(2000, dq.c1, dq.mode_waist, 0.0, 1.5e-3, 10e-6)
    for p in (2e-12, 758e-12, 3e-8):
        tr = simulate_transit(cloud, p, cav, atom)
        assert np.all(tr.p_out >= 0)
        assert np.all(tr.p_out <= tr.p_in * cal.transfer * (1 + 1e-12))
        assert set(tr.branch) <= {bs.LOWER, bs.UPPER}


def test_switched_off_window_shrinks_with_power(system):
    atom, cav, dq = system
    cloud = CloudModel.for_peak(200, dq.c1, dq.mode_waist, 0.0, 1.5e-3, 10e-6)
    durs = []
    for p in (2e-12, 6.4e-12, 20e-12, 30e-12):
        tr = simulate_transit(cloud, p, cav, atom, DetectorModel())
        base = np.median(tr.p_out[:50])
        durs.append(np.count_nonzero(tr.p_out < 0.1 * base) * tr.dt)
    assert all(b < a for a, b in zip(durs, durs[1:]))
    assert durs[-1] > 0


def test_branch_memory_over_cooperativity_bump(system):
    atom, cav, dq = system
    cal = calibration_for(cav, atom)
    d = abs(cav.detuning_ratio)
    y = 5e4
    cloud = CloudModel.for_peak(3000, dq.c1, dq.mode_waist, 0.0, 1.5e-3, 10e-6)
    tr = simulate_transit(cloud, float(cal.power_from_y(y)), cav, atom, dt=1e-6)
    lab = tr.branch
    i_down = np.nonzero((lab[:-1] == bs.UPPER) & (lab[1:] == bs.LOWER))[0][0] + 1
    i_up = np.nonzero((lab[:-1] == bs.LOWER) & (lab[1:] == bs.UPPER))[0][0] + 1
    c_down, c_up = tr.coop[i_down], tr.coop[i_up]
    # the output drops at the larger cooperativity and recovers at the smaller one
    assert c_down > c_up
    # the fold cooperativity is crossed between the two samples around each transition
    assert tr.coop[i_down - 1] <= bs.cooperativity_at_switch(y, d, bs.UPPER) <= c_down
    assert c_up <= bs.cooperativity_at_switch(y, d, bs.LOWER) <= tr.coop[i_up - 1]


def test_triangular_probe_on_static_cloud_traces_loop(system):
    atom, cav, dq = system
    cal = calibration_for(cav, atom)
    d = abs(cav.detuning_ratio)
    static = CloudModel.for_peak(200, dq.c1, dq.mode_waist, 0.0, 1e4, 10e-6)
    ya = bs.turning_points(200.0, d)[0][1]
    p = float(cal.power_from_y(1.5 * ya)) * np.concatenate([np.linspace(0, 1, 401), np.linspace(1, 0, 401)[1:]])
    tr = simulate_transit(static, p, cav, atom, t_span=(-8e-4, 8e-4))
    y = cal.y_from_power(tr.p_in)
    x = cal.x_from_power(tr.p_out)
    pos = y > 0
    assert np.max(np.abs(bs.input_for_output(x[pos], tr.coop[pos], d) / y[pos] - 1)) < 1e-6
    loop = bs.hysteresis_sweep(200.0, d, y)
    xl = np.array([r[1] for r in loop.response])
    assert np.max(np.abs(xl[pos] / x[pos] - 1)) < 1e-6


def test_detector_rise_time():
    t = np.arange(0, 200e-6, 0.05e-6)
    p = np.where(t >= 50e-6, 1.0, 0.0)
    tr = TransmissionTrace(t=t, p_out=p, branch=np.full(t.shape, "upper"), p_in=1.0)
    out = apply_detector(tr, DetectorModel(bandwidth=30e3))
    t10 = np.interp(0.1, out.p_out, t)
    t90 = np.interp(0.9, out.p_out, t)
    assert (t90 - t10) == pytest.approx(np.log(9) / (2 * np.pi * 30e3), rel=5e-3)
    assert (t90 - t10) * 1e6 == pytest.approx(11.7, abs=0.05)


def test_detector_rejects_undersampled():
    t = np.arange(0, 1e-3, 10e-6)
    tr = TransmissionTrace(t=t, p_out=np.ones_like(t), branch=np.full(t.shape, "upper"), p_in=1.0)
    with pytest.raises(ValueError, match="dt"):
        apply_detector(tr, DetectorModel(bandwidth=30e3))


def test_noise_is_seeded(system):
    atom, cav, dq = system
    cloud = CloudModel.for_peak(200, dq.c1, dq.mode_waist, 0.0, 1.5e-3, 10e-6, mode=DISCRETE)
    det = DetectorModel(noise_floor=1e-13)
    a = simulate_transit(cloud, 20e-12, cav, atom, det, rng_seed=5)
    b = simulate_transit(cloud, 20e-12, cav, atom, det, rng_seed=5)
    c = simulate_transit(cloud, 20e-12, cav, atom, det, rng_seed=6)
    assert trace_digest(a) == trace_digest(b)
    assert trace_digest(a) != trace_digest(c)
    quiet = simulate_transit(cloud, 20e-12, cav, atom, DetectorModel(), rng_seed=5)
    raw = simulate_transit(cloud, 20e-12, cav, atom, None, rng_seed=5)
    assert np.array_equal(quiet.n_eff, raw.n_eff)
    assert not np.array_equal(quiet.p_out, raw.p_out)


def test_simulate_validation(system):
    atom, cav, _ = system
    cl = CloudModel(1.0, 0.0, 1e-3, 1e-5)
    with pytest.raises(ValueError):
        simulate_transit(cl, 1e-12, cav, atom, dt=20e-6)
    with pytest.raises(ValueError):
        simulate_transit(cl, -1e-12, cav, atom)
    with pytest.raises(ValueError):
        simulate_transit(cl, 1e-12, cav, atom, model="maxwell")
    with pytest.raises(ValueError):
        CloudModel(-1.0, 0.0, 1e-3, 1e-5)


def test_csv_round_trip(tmp_path, system):
    atom, cav, dq = system
    cloud = CloudModel.for_peak(200, dq.c1, dq.mode_waist, 0.0, 1.5e-3, 10e-6)
    tr = simulate_transit(cloud, 6.4e-12, cav, atom, DetectorModel(), t_span=(-2e-3, 2e-3))
    path = tmp_path / "trace.csv"
    tr.to_csv(path, ["a header"])
    back = TransmissionTrace.from_csv(path)
    assert np.allclose(back.p_out, tr.p_out, rtol=1e-9, atol=0)
    assert np.allclose(back.t, tr.t, rtol=1e-9, atol=1e-15)
    assert list(back.branch) == list(tr.branch)
    assert back.metadata["scenario"] == "transit"


def test_jc_transmission(system):
    atom, cav, dq = system
    assert jc_transmission(0.0, 0.0, 0.0, cav, atom) == 1.0
    assert jc_transmission(cav.g0, 0.0, 0.0, cav, atom) == pytest.approx((1 + 2 * dq.c1) ** -2, rel=1e-12)
    assert jc_transmission(cav.g0, 0.0, 0.0, cav, atom) == pytest.approx(9.5647e-5, rel=1e-4)


def test_normal_mode_peaks(system):
    atom, cav, _ = system
    lo, hi = normal_mode_peaks(cav, atom)
    scan = np.linspace(0.5 * cav.g0, 1.5 * cav.g0, 2_000_001)
    ref = scan[np.argmax(jc_transmission(cav.g0, scan, scan, cav, atom))]
    assert hi == pytest.approx(ref, rel=1e-6)
    assert lo == pytest.approx(-hi, rel=1e-9)
    assert hi / cav.g0 == pytest.approx(1.0, abs=0.01)
