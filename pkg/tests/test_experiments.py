import json
import math

import numpy as np
import pytest

from radqec.experiments import (
    ConfigError,
    RunConfig,
    compose_pl,
    compose_pl_cumulative,
    estimate_pl,
    find_recovery_dip,
    geometric_lengths,
    load_curves,
    performance_gap,
    relative_efficacy,
    run_sweep,
    simulate,
    sobol_strikes,
    wilson_interval,
)
from radqec.surface_code import build_layout

SMALL = dict(seed=1, shots=64, cycles=20)
SMALL_WIDE = dict(SMALL, shots=1500)


def test_compose_examples():
    assert compose_pl([0.01, 0.01]) == pytest.approx(0.0198, abs=1e-15)
    assert compose_pl([0.5, 0.01]) == 0.5
    assert compose_pl([]) == 0.0
    np.testing.assert_allclose(compose_pl_cumulative([0.01, 0.01, 0.0]), [0.01, 0.0198, 0.0198])
    with pytest.raises(ValueError):
        compose_pl([0.6])
    with pytest.raises(ValueError):
        compose_pl_cumulative([-0.1])


def test_compose_matches_monte_carlo():
    rng = np.random.default_rng(0)
    eps = np.array([0.05, 0.2, 0.1])
    flips = rng.random((200_000, 3)) < eps
    p = np.bitwise_xor.reduce(flips, axis=1).mean()
    assert p == pytest.approx(compose_pl(eps), abs=4 * math.sqrt(0.25 / 200_000))


def test_performance_gap_dense_and_sparse():
    c = np.arange(1, 11)
    a = 0.1 + 0.01 * c
    b = np.full(10, 0.1)
    assert performance_gap(a, b) == pytest.approx(0.055)
    sparse = np.array([1, 4, 10])
    # linear difference, so interpolation is exact
    assert performance_gap(a[sparse - 1], b[sparse - 1], sparse) == pytest.approx(0.055)
    with pytest.raises(ValueError):
        performance_gap(a, b[:5])


def test_relative_efficacy():
    eff = relative_efficacy({0.0: 0.4, 0.5: 0.3, 13.0: 0.1})
    assert eff == pytest.approx({0.0: 0.0, 0.5: -0.25, 13.0: -0.75})
    with pytest.raises(ValueError):
        relative_efficacy({0.5: 0.1})
    with pytest.raises(ValueError):
        relative_efficacy({0.0: 0.0, 1.0: 0.1})


def _sobol_gray_code(n):
    """Unscrambled 2-D Sobol points by the Gray-code recurrence, from scratch."""
    bits = 30
    v1 = [1 << (bits - 1 - k) for k in range(bits)]  # van der Corput directions
    m = [1]
    for _ in range(1, bits):  # primitive polynomial x + 1: m_k = 2 m_{k-1} xor m_{k-1}
        m.append((m[-1] << 1) ^ m[-1])
    v2 = [m[k] << (bits - 1 - k) for k in range(bits)]
    x = [0, 0]
    out = [(0.0, 0.0)]
    for i in range(1, n):
        c = 0  # index of the lowest zero bit of i - 1
        j = i - 1
        while j & 1:
            j >>= 1
            c += 1
        x[0] ^= v1[c]
        x[1] ^= v2[c]
        out.append((x[0] / 2**bits, x[1] / 2**bits))
    return np.array(out)


def test_sobol_strikes_match_gray_code_oracle():
    pts = sobol_strikes(63, 10.0)
    ref = _sobol_gray_code(64)[1:] * 10.0
    np.testing.assert_allclose(pts, ref, rtol=0, atol=1e-12)
    assert tuple(pts[0]) == (5.0, 5.0)
    chip = build_layout(2.0)
    assert np.all(sobol_strikes(10, chip) < chip.chip_width)
    with pytest.raises(ValueError):
        sobol_strikes(0, 10.0)


def test_wilson_interval_coverage():
    rng = np.random.default_rng(12)
    p, n = 0.08, 300
    k = rng.binomial(n, p, 1000)
    lo, hi = wilson_interval(k, n)
    coverage = np.mean((lo <= p) & (p <= hi))
    assert coverage >= 0.93
    lo0, hi0 = wilson_interval(0, 100)
    assert lo0 == 0 and 0 < hi0 < 0.05


def test_estimate_pl():
    v = np.array([[0, 1], [1, 1], [0, 0], [0, 1]])
    est = estimate_pl(v, [3, 7])
    np.testing.assert_allclose(est.p_L, [0.25, 0.75])
    assert est.shots == 4 and list(est.cycles) == [3, 7]


def test_recovery_dip_detector():
    t = np.arange(300)
    dip = 0.3 + 0.2 * np.exp(-t / 10) - 0.15 * np.exp(-((t - 60) / 30) ** 2) + 0.001 * t
    assert find_recovery_dip(dip, 0, margin=0.01) is not None
    rising = 0.5 * (1 - np.exp(-t / 40))
    assert find_recovery_dip(rising, 0, margin=0.0) is None
    falling = 0.5 * np.exp(-t / 40)
    assert find_recovery_dip(falling, 0, margin=0.0) is None
    # a wiggle smaller than the binomial noise is not a dip
    wiggle = 0.03 + 0.0005 * np.sin(t / 8.0)
    assert find_recovery_dip(wiggle, 0) is not None
    assert find_recovery_dip(wiggle, 0, shots=4096) is None
    assert find_recovery_dip(dip, 0, shots=4096) is not None


def test_geometric_lengths():
    g = geometric_lengths(1500, 32)
    assert g[0] == 1 and g[-1] == 1500 and np.all(np.diff(g) > 0)


def test_config_from_toml(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('seed = 3\nshots = 10\n[transmon]\nT1_base = 5e-5\nT2_base = 6e-5\n[qp]\ns_per_us = 0.1\n')
    cfg = RunConfig.from_toml(p)
    assert cfg.seed == 3 and cfg.T1_base == 5e-5 and cfg.s_per_us == 0.1
    p.write_text("seed = 3\nbogus = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.from_toml(p)
    p.write_text("seed = \n")
    with pytest.raises(ConfigError):
        RunConfig.from_toml(p)


@pytest.mark.parametrize(
    "kw", [dict(protocol=3), dict(engine="x"), dict(engine="gad", protocol=2), dict(shots=0),
           dict(strike_offset=30, cycles=20), dict(terminals="some"), dict(mitigation_um=-1.0)]
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_simulate_is_deterministic_across_workers():
    a = simulate(RunConfig(**SMALL_WIDE, workers=1))
    b = simulate(RunConfig(**SMALL_WIDE, workers=2))
    assert a.curves_csv() == b.curves_csv() and a.to_json() == b.to_json()
    assert "workers" not in json.loads(a.to_json())["config"]


def test_report_round_trip(tmp_path):
    rep = simulate(RunConfig(**SMALL))
    rep.write(tmp_path)
    back = load_curves(tmp_path / "curves.csv")
    np.testing.assert_array_equal(back.p_mu, rep.p_mu)
    assert back.zeta == rep.zeta


def test_single_cell_sweep_equals_direct_run():
    base = RunConfig(**SMALL)
    res = run_sweep(base, {"mitigation_um": [0.5]})
    direct = simulate(RunConfig(**SMALL, mitigation_um=0.5))
    assert res.cells[0].status == "ok"
    assert res.cells[0].zeta_mean == direct.zeta


def test_sweep_isolates_failures(tmp_path):
    res = run_sweep(RunConfig(**SMALL), {"spacing_scale": [1.0, -1.0]})
    ok, bad = res.cells
    assert ok.status == "ok" and bad.status == "failed" and bad.error
    res.write(tmp_path)
    assert "failed" in (tmp_path / "sweep.csv").read_text()


def test_sweep_relative_efficacy():
    res = run_sweep(RunConfig(**SMALL), {"mitigation_um": [0.0, 13.0]})
    (eff,) = res.delta_zeta().values()
    assert eff[0.0] == 0.0 and eff[13.0] < 0


def test_protocol_two_curve():
    rep = simulate(RunConfig(seed=2, shots=256, cycles=10, protocol=2))
    assert rep.p_mu.shape == (10,) and np.all(np.diff(rep.p_nomu) >= 0)


def test_reference_trace_config():
    rep = simulate(RunConfig(seed=2, shots=32, cycles=8, trace="reference:cu-13um"))
    assert rep.config["trace"] == "reference:cu-13um"
    with pytest.raises(ConfigError):
        simulate(RunConfig(seed=2, shots=32, cycles=8, trace="reference:nope"))
