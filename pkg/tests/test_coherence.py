import math

import numpy as np
import pytest
from scipy.special import lambertw

from radqec.coherence import (
    CoherenceSchedule,
    TransmonParams,
    baseline_schedule,
    build_schedule,
    coherence_times,
    concat_schedules,
    constant_schedule,
    delta_gamma1,
    delta_gamma_phi,
    delta_gamma_phi_direct,
    delta_gamma_phi_from_temperature,
    density_at_temperature,
    effective_temperature,
    lambert_w0,
    lambert_w0_log,
    sample_density,
)
from radqec.qp_dynamics import QpDensity


def test_lambert_w_matches_scipy():
    z = np.concatenate([np.linspace(-1 / math.e + 1e-12, 3, 500), np.logspace(0, 300, 500)])
    np.testing.assert_allclose(lambert_w0(z), lambertw(z).real, rtol=1e-13, atol=1e-13)


def test_lambert_w_special_values():
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-15)
    assert lambert_w0(-1 / math.e) == pytest.approx(-1.0, abs=1e-7)
    with pytest.raises(ValueError):
        lambert_w0(-1.0)


def test_lambert_w_log_form_agrees_with_direct():
    L = np.linspace(1.5, 600, 200)
    w = lambert_w0_log(L)
    np.testing.assert_allclose(w + np.log(w), L, rtol=1e-14)
    small = L[L < 700]
    np.testing.assert_allclose(w[: small.size], lambertw(np.exp(small)).real, rtol=1e-13)


def test_temperature_density_round_trip():
    T = np.linspace(0.1, 0.4, 50)
    np.testing.assert_allclose(effective_temperature(density_at_temperature(T)), T, rtol=1e-12)


def test_relaxation_is_linear_in_density():
    x = np.array([1e-8, 1e-6, 1e-4])
    g = delta_gamma1(x)
    np.testing.assert_allclose(g / x, g[0] / x[0], rtol=1e-14)
    assert delta_gamma1(0.0) == 0.0


def test_relaxation_prefactor_from_constants():
    from scipy import constants as c

    p = TransmonParams()
    omega = 2 * math.pi * 5e9
    gap = 191e-6 * c.eV
    assert delta_gamma1(1e-6, p) == pytest.approx(1e-6 / math.pi * math.sqrt(2 * omega * gap / c.hbar), rel=1e-12)


@pytest.mark.parametrize("x", [1e-10, 1e-7, 1e-5, 1e-3])
def test_dephasing_forms_agree(x):
    stable = delta_gamma_phi(x)
    assert delta_gamma_phi_direct(x) == pytest.approx(stable, rel=1e-10)
    assert delta_gamma_phi_from_temperature(effective_temperature(x)) == pytest.approx(stable, rel=1e-10)


def test_tiny_density_stays_finite():
    x = np.array([1e-300, 1e-100, 1e-20])
    g = delta_gamma_phi(x)
    assert np.all(np.isfinite(g)) and np.all(g >= 0) and np.all(g < 1e-6)
    assert delta_gamma_phi(0.0) == 0.0


def test_dephasing_is_subdominant():
    x = np.logspace(-12, -2, 400)
    T1, _ = coherence_times(x)
    assert np.all(2 * T1 * delta_gamma_phi(x) < 1)


def test_baseline_times_at_zero_density():
    T1, T2 = coherence_times(0.0)
    assert T1 == pytest.approx(100e-6)
    assert T2 == pytest.approx(200e-6)


def test_times_decrease_with_density():
    x = np.logspace(-9, -3, 30)
    T1, T2 = coherence_times(x)
    assert np.all(np.diff(T1) < 0) and np.all(np.diff(T2) < 0)
    assert np.all(T2 <= 2 * T1 * (1 + 1e-12))


def test_params_validation():
    with pytest.raises(ValueError):
        TransmonParams(T1_base=10e-6, T2_base=30e-6)
    with pytest.raises(ValueError):
        TransmonParams(f01_hz=-1)


def _density(values, dt=0.5e-6):
    x = np.atleast_2d(values)
    t = np.arange(x.shape[1]) * dt
    return QpDensity(t, x, 4.38e6, tuple(f"q{i}" for i in range(x.shape[0])))


def test_sampling_start_and_average():
    x = np.linspace(0, 1e-5, 21)  # linear ramp, 0.5 μs grid
    d = _density(x)
    start = sample_density(d, cycle=1e-6, sampling="start")
    avg = sample_density(d, cycle=1e-6, sampling="average")
    np.testing.assert_allclose(start[:, 0], x[::2][: start.shape[0]])
    np.testing.assert_allclose(avg[:, 0], (x[:-2:2] + x[2::2]) / 2, rtol=1e-12)


def test_sampling_requires_alignment_or_resample():
    d = _density(np.zeros(30), dt=0.3e-6)
    with pytest.raises(ValueError, match="resampling"):
        sample_density(d, cycle=1e-6)
    assert sample_density(d, cycle=1e-6, resample=True).shape == (9, 1)


def test_schedule_build_and_concat():
    d = _density(np.full((17, 41), 1e-6))
    hot = build_schedule(d, n_cycles=10)
    cold = baseline_schedule(3)
    both = concat_schedules(cold, hot)
    assert both.n_cycles == 13 and both.n_qubits == 17
    assert np.all(both.T1[:3] == 100e-6)
    assert np.all(both.T1[3:] < 100e-6)
    assert both[3:].digest() == hot.digest()


def test_schedule_rejects_unphysical():
    with pytest.raises(ValueError):
        CoherenceSchedule(np.ones((2, 2)) * 1e-6, np.ones((2, 2)) * 3e-6)


def test_schedule_csv(tmp_path):
    s = constant_schedule(2, 3)
    text = s.to_csv(tmp_path / "s.csv")
    assert text.splitlines()[0] == "cycle,qubit,T1_s,T2_s"
    assert len(text.splitlines()) == 1 + 2 * 3
