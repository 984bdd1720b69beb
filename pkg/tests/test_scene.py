import numpy as np
import pytest

from bisense.scene import Scene, beamforming_gain, derive_propagation
from bisense.waveform import SPEED_OF_LIGHT


def make_scene(**kw):
    base = dict(
        p_tx=[-1000.0, 0.0],
        p_rx=[1000.0, 0.0],
        p_target=[0.0, -1000.0],
        speed=20.0,
        heading_offset=0.0,
    )
    base.update(kw)
    return Scene(**base)


def test_perpendicular_bisector_geometry(ref_cfg):
    # target on the perpendicular bisector: equal legs, right bistatic angle
    prop = derive_propagation(make_scene(), ref_cfg)
    assert prop.d_tx == pytest.approx(1414.2136, abs=1e-3)
    assert prop.d_rx == pytest.approx(1414.2136, abs=1e-3)
    assert prop.bistatic_angle == pytest.approx(np.pi / 2, abs=1e-12)
    assert prop.aoa == pytest.approx(np.pi / 4, abs=1e-12)
    assert prop.aod == pytest.approx(np.pi / 4, abs=1e-12)
    assert prop.bistatic_range == pytest.approx(2 * 1414.21356, abs=1e-3)
    assert prop.delay_nlos == pytest.approx(prop.bistatic_range / SPEED_OF_LIGHT)


def test_doppler_collinear_outside_baseline(ref_cfg):
    # target on the baseline extension: beta = 0, doppler = 2*speed/lambda
    scene = make_scene(p_target=[2000.0, 0.0], speed=30.0)
    prop = derive_propagation(scene, ref_cfg)
    assert prop.bistatic_angle == pytest.approx(0.0, abs=1e-6)
    assert prop.doppler == pytest.approx(6000.0, rel=1e-9)
    assert prop.collinear


def test_collinear_between_terminals_reports_pi(ref_cfg):
    prop = derive_propagation(make_scene(p_target=[100.0, 0.0]), ref_cfg)
    assert prop.bistatic_angle == pytest.approx(np.pi)
    assert prop.collinear
    # velocity projection collapses: cos(beta/2) ~ 0
    assert abs(prop.doppler) < 1e-6 * prop.v_bis / ref_cfg.wavelength


def test_los_gain_magnitude(ref_cfg):
    prop = derive_propagation(make_scene(los_blocked=False), ref_cfg)
    assert prop.gain_los is not None
    assert abs(prop.gain_los) == pytest.approx(3.9789e-7, rel=1e-4)
    # blocked scenes carry no LOS gain
    assert derive_propagation(make_scene(), ref_cfg).gain_los is None


def test_nlos_gain_carrier_phase_and_magnitude(ref_cfg):
    prop = derive_propagation(make_scene(rcs=2.5), ref_cfg)
    lam = ref_cfg.wavelength
    expected_mag = lam * np.sqrt(2.5) / ((4 * np.pi) ** 1.5 * prop.d_tx * prop.d_rx)
    assert abs(prop.gain_nlos) == pytest.approx(expected_mag, rel=1e-12)
    expected_phase = -2 * np.pi * ref_cfg.carrier_freq * prop.delay_nlos
    assert np.angle(prop.gain_nlos) == pytest.approx(
        np.angle(np.exp(1j * expected_phase)), abs=1e-9
    )


def test_nlos_gain_decreases_with_leg_product(ref_cfg):
    mags = []
    for y in (-500.0, -1000.0, -2000.0):
        prop = derive_propagation(make_scene(p_target=[0.0, y]), ref_cfg)
        mags.append(abs(prop.gain_nlos))
    assert mags[0] > mags[1] > mags[2]


def test_doppler_even_in_heading_offset(ref_cfg):
    a = derive_propagation(make_scene(heading_offset=0.3), ref_cfg)
    b = derive_propagation(make_scene(heading_offset=-0.3), ref_cfg)
    assert a.doppler == pytest.approx(b.doppler, rel=1e-12)
    assert a.v_bis == pytest.approx(b.v_bis, rel=1e-12)


def test_delay_invariant_on_confocal_ellipse(ref_cfg):
    # points with equal leg sums share the bistatic delay
    a_semi = 1500.0
    c_half = 1000.0
    b_semi = np.sqrt(a_semi**2 - c_half**2)
    delays = []
    for ang in (0.3, 1.2, 2.0):
        p = [a_semi * np.cos(ang), -abs(b_semi * np.sin(ang))]
        prop = derive_propagation(make_scene(p_target=p), ref_cfg)
        delays.append(prop.delay_nlos)
    assert np.ptp(delays) < 1e-15


def test_degenerate_positions_raise(ref_cfg):
    with pytest.raises(ValueError):
        derive_propagation(make_scene(p_target=[-1000.0, 0.0]), ref_cfg)
    with pytest.raises(ValueError):
        derive_propagation(
            make_scene(p_tx=[0.0, 0.0], p_rx=[0.0, 0.0]), ref_cfg
        )


def test_scene_validation():
    with pytest.raises(ValueError):
        make_scene(rcs=0.0)
    with pytest.raises(ValueError):
        make_scene(speed=-1.0)
    with pytest.raises(ValueError):
        make_scene(n_rx_antennas=0)


def test_beam_gain_matched_is_unity():
    assert beamforming_gain(make_scene()) == pytest.approx(1.0)
    scene = make_scene(n_tx_antennas=8, n_rx_antennas=4)
    g = beamforming_gain(scene)
    assert abs(g) == pytest.approx(1.0, abs=1e-12)


def test_beam_gain_null_and_mismatch_loss():
    n = 8
    scene = make_scene(n_rx_antennas=n)
    true_aoa = np.pi / 4
    # steer the receive beam to the first array null relative to the path
    null_sin = np.sin(true_aoa) - 2.0 / n
    scene.aoa_pointed = float(np.arcsin(null_sin))
    g = beamforming_gain(scene)
    assert abs(g) < 1e-10
    # small mismatch loses some gain but stays within the main lobe
    scene.aoa_pointed = true_aoa + 0.01
    g_small = beamforming_gain(scene)
    assert 0.5 < abs(g_small) < 1.0


def test_single_antenna_gain_is_exactly_one_any_pointing():
    scene = make_scene(aoa_pointed=0.7, aod_pointed=-0.2)
    assert beamforming_gain(scene) == 1.0 + 0j
