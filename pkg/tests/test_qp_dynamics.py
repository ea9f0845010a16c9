import math

import numpy as np
import pytest

from radqec.qp_dynamics import (
    IntegrationError,
    QpRates,
    QpTrace,
    SyntheticProfile,
    TraceFormatError,
    compute_ncp,
    integrate_qp,
    load_trace,
    save_trace,
    steady_state,
    synthesize_trace,
)
from radqec.surface_code import build_layout, qubit_labels


def _flat_trace(g=0.0, n=1001, dt_us=1.0, nq=1):
    t = np.arange(n) * (dt_us * 1e-6)
    return QpTrace(t, np.full((nq, n), g), tuple(f"q{i}" for i in range(nq)))


def test_zero_generation_stays_zero():
    d = integrate_qp(_flat_trace(0.0))
    assert np.all(d.x_qp == 0)


def test_pure_decay_matches_exponential():
    n0 = 50.0
    d = integrate_qp(_flat_trace(), QpRates(r=0.0, s=0.05), initial=n0)
    t = d.time_grid * 1e6
    np.testing.assert_allclose(d.n_qp[0], n0 * np.exp(-0.05 * t), rtol=1e-6)


def test_pure_recombination_matches_hyperbola():
    n0 = 2000.0
    r = 25e-6
    d = integrate_qp(_flat_trace(), QpRates(r=r, s=0.0), initial=n0)
    t = d.time_grid * 1e6
    np.testing.assert_allclose(d.n_qp[0], n0 / (1 + r * n0 * t), rtol=1e-6)


def test_constant_generation_reaches_steady_state():
    rates = QpRates()
    d = integrate_qp(_flat_trace(5.0, n=2001), rates)
    assert d.n_qp[0, -1] == pytest.approx(steady_state(5.0, rates), rel=1e-6)


def test_fixed_step_converges_to_adaptive():
    tr = synthesize_trace(duration_us=100.0)
    a = integrate_qp(tr)
    f = integrate_qp(tr, fixed_step=0.05)
    np.testing.assert_allclose(f.x_qp, a.x_qp, rtol=1e-6, atol=1e-15)


def test_ncp_matches_quoted_value():
    # free-electron density of states at 11.3 eV and a 191 μeV gap
    assert compute_ncp() == pytest.approx(4.38e6, abs=0.09e6)


def test_ncp_rejects_nonpositive_gap():
    with pytest.raises(ValueError):
        compute_ncp(gap=0.0)


def test_negative_initial_density_rejected():
    with pytest.raises(ValueError):
        integrate_qp(_flat_trace(), initial=-1.0)


def test_density_beyond_one_rejected():
    with pytest.raises(IntegrationError):
        integrate_qp(_flat_trace(0.0, n=11), initial=5e6)


def test_trace_validation_errors():
    t = np.arange(5) * 1e-6
    with pytest.raises(TraceFormatError, match="uniform"):
        QpTrace(np.array([0, 1, 3, 4, 5]) * 1e-6, np.zeros((1, 5)), ("a",))
    with pytest.raises(TraceFormatError, match="negative"):
        QpTrace(t, -np.ones((1, 5)), ("a",))
    with pytest.raises(TraceFormatError, match="non-finite"):
        QpTrace(t, np.full((1, 5), np.nan), ("a",))
    with pytest.raises(TraceFormatError, match="samples"):
        QpTrace(t, np.zeros((1, 4)), ("a",))


@pytest.mark.parametrize("suffix", [".qptrace", ".csv"])
def test_trace_round_trip_is_bit_exact(tmp_path, suffix):
    tr = synthesize_trace(mitigation=0.2, duration_us=50.0)
    p = tmp_path / f"t{suffix}"
    save_trace(tr, p)
    back = load_trace(p)
    assert np.array_equal(back.time_grid, tr.time_grid)
    assert np.array_equal(back.generation, tr.generation)
    assert back.qubit_ids == tr.qubit_ids


def test_malformed_trace_reports_line(tmp_path):
    p = tmp_path / "bad.qptrace"
    p.write_text('{"t0_s": 0}\n')
    with pytest.raises(TraceFormatError):
        load_trace(p)
    p.write_text("not json\n")
    with pytest.raises(TraceFormatError, match=":1:"):
        load_trace(p)


def test_synthetic_trace_is_monotone_in_mitigation():
    peaks = [synthesize_trace(mitigation=m, duration_us=20.0).generation.max() for m in (0.0, 0.2, 0.5, 13.0)]
    assert all(a > b for a, b in zip(peaks, peaks[1:]))
    assert synthesize_trace(mitigation=math.inf, duration_us=5.0).generation.max() == 0.0


def test_synthetic_trace_decays_with_distance():
    chip = build_layout(1.0)
    tr = synthesize_trace(strike=(4.0, 3.0), chip=chip, duration_us=10.0)
    d = np.hypot(*(chip.positions - np.array([4.0, 3.0])).T)
    peak = tr.generation.max(axis=1)
    assert np.argmax(peak) == np.argmin(d)
    assert tr.qubit_ids == qubit_labels()


def test_strike_outside_chip_rejected():
    with pytest.raises(ValueError, match="outside"):
        synthesize_trace(strike=(-1.0, 2.0))


def test_profile_amplitude_is_linear():
    p = SyntheticProfile()
    d = np.array([1.0, 3.0])
    np.testing.assert_allclose(
        SyntheticProfile(amplitude=2 * p.amplitude).amplitudes(d, 0.5), 2 * p.amplitudes(d, 0.5)
    )
