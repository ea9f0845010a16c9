import numpy as np
import pytest

from radqec.coherence import baseline_schedule, constant_schedule
from radqec.pauli_sim import keyed_rng, noise_tables, run_protocol_I, run_protocol_II
from radqec.records import RecordFormatError, SyndromeRecord
from radqec import frames


def test_keyed_streams_are_independent_of_order():
    a = keyed_rng(5, "cycle", 2, 7).random(4)
    keyed_rng(5, "cycle", 0, 0).random(100)
    b = keyed_rng(5, "cycle", 2, 7).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, keyed_rng(5, "final", 2, 7).random(4))
    assert not np.array_equal(a, keyed_rng(6, "cycle", 2, 7).random(4))


def test_result_does_not_depend_on_workers(circuit):
    sched = baseline_schedule(4)
    a = run_protocol_I(circuit, sched, 4, 2500, seed=3, workers=1)
    b = run_protocol_I(circuit, sched, 4, 2500, seed=3, workers=3)
    for name in ("z_syndromes", "x_syndromes", "prep_z", "terminal_data"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.manifest == b.manifest


def test_negligible_noise_gives_no_failures(circuit):
    sched = constant_schedule(5, T1=1e6, T2=2e6)
    rec = run_protocol_I(circuit, sched, 5, 500, seed=1)
    corrected, raw = rec.decode()
    assert not corrected.any() and not raw.any()
    assert not rec.detector_layers().any()


def test_noise_tables_shapes_and_values(circuit):
    cc = frames.compile_cycle(circuit)
    t = noise_tables(cc, constant_schedule(2, T1=50e-6, T2=60e-6), 2)
    assert t.px.shape == (2, cc.n_locations)
    dur = cc.loc_duration_ns[0] * 1e-9
    assert t.px[0, 0] == pytest.approx(-np.expm1(-dur / 50e-6) / 4)
    assert t.readout_flip.shape == (2, 9)


def test_corrected_below_uncorrected(circuit):
    rec = run_protocol_I(circuit, baseline_schedule(20), 20, 2048, seed=8)
    corrected, raw = rec.decode()
    assert corrected[:, -1].mean() < raw[:, -1].mean()


def test_record_round_trip(tmp_path, circuit):
    rec = run_protocol_I(circuit, baseline_schedule(3), 3, 50, seed=2, terminal_lengths=[1, 3])
    p = tmp_path / "r.rec"
    rec.save(p)
    back = SyndromeRecord.load(p)
    for name in ("z_syndromes", "x_syndromes", "prep_z", "prep_x", "terminal_lengths", "terminal_data"):
        assert np.array_equal(getattr(back, name), getattr(rec, name))
    assert back.manifest == rec.manifest


def test_corrupt_record_reports_line(tmp_path, circuit):
    rec = run_protocol_I(circuit, baseline_schedule(2), 2, 3, seed=2)
    p = tmp_path / "r.rec"
    rec.save(p)
    lines = p.read_text().splitlines()
    lines[2] = "zz"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordFormatError, match=":3:"):
        SyndromeRecord.load(p)


def test_terminal_lengths_validated(circuit):
    with pytest.raises(ValueError):
        run_protocol_I(circuit, baseline_schedule(3), 3, 10, seed=0, terminal_lengths=[4])


def test_schedule_too_short(circuit):
    with pytest.raises(ValueError):
        run_protocol_I(circuit, baseline_schedule(2), 3, 10, seed=0)


def test_protocol_ii_shapes_and_determinism(circuit):
    sched = baseline_schedule(3)
    a = run_protocol_II(circuit, sched, 3, 1500, seed=4)
    b = run_protocol_II(circuit, sched, 3, 1500, seed=4, workers=2)
    assert a.epsilon.shape == (3,)
    assert np.array_equal(a.failures, b.failures)
    assert np.all(a.epsilon <= a.uncorrected / a.shots + 0.05)
