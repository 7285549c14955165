"""Synthetic toneburst generator and dataset round-tripping."""
import dataclasses
import json
import math
import os

import numpy as np
import pytest

from aubase import signals
from aubase.errors import DataFormatError, InvalidArgumentError


def tiny_config(**kw) -> signals.ScenarioConfig:
    base = dict(
        n_transducers=2,
        temperatures_c=[35.0, 45.0],
        echoes=[(100e-6, 1.0), (700e-6, 0.5)],
        noise_snr_db=40.0,
        n_repeats=2,
        n_samples=4096,
        sample_rate_hz=1e6,
        seed=7,
    )
    base.update(kw)
    return signals.ScenarioConfig(**base)


# ---------------------------------------------------------------------------
# make_toneburst
# ---------------------------------------------------------------------------


def test_toneburst_reference_shape():
    burst = signals.make_toneburst(50e3, 5, 12.0, 1e6)
    assert len(burst) == 100
    assert np.max(np.abs(burst)) <= 12.0 + 1e-12
    assert burst[0] == 0.0


def test_toneburst_zero_amplitude_is_all_zero():
    burst = signals.make_toneburst(50e3, 5, 0.0, 1e6)
    assert np.all(burst == 0.0)


def test_toneburst_matches_closed_form():
    carrier, cycles, amp, rate = 1e3, 1, 2.5, 1e5
    burst = signals.make_toneburst(carrier, cycles, amp, rate)
    duration = cycles / carrier
    n = len(burst)
    assert n == 100
    t = np.arange(n) / rate
    expected = (
        amp
        * 0.5
        * (1.0 - np.cos(2.0 * np.pi * t / duration))
        * np.cos(2.0 * np.pi * carrier * t)
    )
    assert np.allclose(burst, expected, atol=1e-12)
    # window peak sits mid-burst where the carrier phase is pi
    assert abs(burst[50] - (-amp)) < 1e-12


def test_toneburst_validation():
    with pytest.raises(InvalidArgumentError):
        signals.make_toneburst(-1.0, 5, 12.0, 1e6)
    with pytest.raises(InvalidArgumentError):
        signals.make_toneburst(50e3, 0, 12.0, 1e6)
    with pytest.raises(InvalidArgumentError):
        signals.make_toneburst(50e3, 5, 12.0, 400e3)  # below 10x carrier
    with pytest.raises(InvalidArgumentError):
        signals.make_toneburst(50e3, 5, -2.0, 1e6)


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def test_synthesize_clean_superposition():
    cfg = tiny_config(noise_snr_db=None, temp_stretch_per_c=1e-3, temp_gain_per_c=0.01)
    rng = np.random.default_rng(0)
    got = signals.synthesize(cfg, 1, 2, 35.0, 0.0, rng)  # T_ref, severity 0
    burst = signals.make_toneburst(
        cfg.carrier_freq_hz, cfg.n_cycles, cfg.amplitude, cfg.sample_rate_hz
    )
    expected = np.zeros(cfg.n_samples)
    for delay, gain in cfg.echoes:
        k = int(round(delay * cfg.sample_rate_hz))
        expected[k : k + len(burst)] += gain * burst
    assert np.allclose(got, expected, atol=1e-9)


def test_synthesize_same_seed_bit_identical():
    cfg = tiny_config()
    a = signals.synthesize(cfg, 1, 2, 45.0, 0.0, np.random.default_rng(33))
    b = signals.synthesize(cfg, 1, 2, 45.0, 0.0, np.random.default_rng(33))
    assert np.array_equal(a, b)


def test_synthesize_stretch_shifts_crosscorrelation_peak():
    cfg = tiny_config(
        noise_snr_db=None,
        temp_stretch_per_c=1e-3,
        temperatures_c=[35.0, 75.0],
        echoes=[(1.0e-3, 1.0)],
    )
    ref = signals.synthesize(cfg, 1, 2, 35.0, 0.0, np.random.default_rng(0))
    hot = signals.synthesize(cfg, 1, 2, 75.0, 0.0, np.random.default_rng(0))
    # alpha = 1 + 1e-3 * 40 = 1.04 stretches the 1 ms delay to 1.04 ms
    lags = np.arange(-200, 201)
    corr = [float(np.dot(np.roll(ref, k), hot)) for k in lags]
    best = int(lags[int(np.argmax(corr))])
    want = int(round(1.0e-3 * 0.04 * cfg.sample_rate_hz))
    assert abs(best - want) <= 1


def test_synthesize_noise_matches_snr():
    cfg = tiny_config(noise_snr_db=40.0, n_samples=16384)
    clean_cfg = dataclasses.replace(cfg, noise_snr_db=None)
    clean = signals.synthesize(clean_cfg, 1, 2, 35.0, 0.0, np.random.default_rng(1))
    noisy = signals.synthesize(cfg, 1, 2, 35.0, 0.0, np.random.default_rng(1))
    noise = noisy - clean
    snr_db = 10.0 * math.log10(np.mean(clean**2) / np.mean(noise**2))
    assert abs(snr_db - 40.0) < 0.5


def test_synthesize_severity_monotone_without_noise():
    cfg = tiny_config(noise_snr_db=None, damage_severities=[1.0, 2.0, 3.0])
    rng = np.random.default_rng(0)
    base = signals.synthesize(cfg, 1, 2, 35.0, 0.0, rng)
    dists = [
        float(np.linalg.norm(signals.synthesize(cfg, 1, 2, 35.0, s, rng) - base))
        for s in (1.0, 2.0, 3.0)
    ]
    assert dists[0] > 0.0
    assert dists[0] < dists[1] < dists[2]


def test_synthesize_rejects_bad_pair():
    cfg = tiny_config()
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidArgumentError):
        signals.synthesize(cfg, 1, 1, 35.0, 0.0, rng)
    with pytest.raises(InvalidArgumentError):
        signals.synthesize(cfg, 1, 9, 35.0, 0.0, rng)
    with pytest.raises(InvalidArgumentError):
        signals.synthesize(cfg, 0, 2, 35.0, 0.0, rng)


def test_temperature_lag_monotone_in_delta_t():
    cfg = tiny_config(
        noise_snr_db=None,
        temp_stretch_per_c=1e-3,
        temperatures_c=[35.0, 45.0, 55.0, 65.0, 75.0],
        echoes=[(1.0e-3, 1.0)],
    )
    ref = signals.synthesize(cfg, 1, 2, 35.0, 0.0, np.random.default_rng(0))
    lags = []
    search = np.arange(0, 120)
    for t in (45.0, 55.0, 65.0, 75.0):
        sig = signals.synthesize(cfg, 1, 2, t, 0.0, np.random.default_rng(0))
        corr = [float(np.dot(np.roll(ref, k), sig)) for k in search]
        lags.append(int(search[int(np.argmax(corr))]))
    assert lags == sorted(lags)
    assert len(set(lags)) == len(lags)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------


def test_generate_dataset_counts_baseline_only():
    cfg = signals.ScenarioConfig(
        n_transducers=4,
        temperatures_c=[35.0, 45.0, 55.0, 65.0, 75.0],
        n_repeats=10,
        n_samples=64,
        sample_rate_hz=1e6,
        echoes=[(10e-6, 1.0)],
        damage_echo=(20e-6, 0.25),
    )
    records = signals.generate_dataset(cfg)
    # 4 steps x 3 sensors x 5 temps x 10 repeats
    assert len(records) == 600
    assert len({r.id for r in records}) == 600
    assert all(r.state == "baseline" for r in records)


def test_generate_dataset_damage_states_present():
    cfg = tiny_config(
        damage_severities=[1.0, 2.0, 3.0, 4.0], damage_temperatures_c=[35.0]
    )
    records = signals.generate_dataset(cfg)
    states = {(r.state, r.severity) for r in records}
    assert ("baseline", 0.0) in states
    for s in (1.0, 2.0, 3.0, 4.0):
        assert ("damage", s) in states
    damage = [r for r in records if r.state == "damage"]
    assert all(r.temperature_c == 35.0 for r in damage)
    # 2 steps x 1 sensor x 4 severities x 2 repeats
    assert len(damage) == 16


def test_generate_dataset_deterministic():
    cfg = tiny_config()
    a = signals.generate_dataset(cfg)
    b = signals.generate_dataset(cfg)
    assert [r.id for r in a] == [r.id for r in b]
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.samples, rb.samples)


def test_generate_dataset_empty_temperatures_rejected():
    with pytest.raises(InvalidArgumentError):
        signals.generate_dataset(tiny_config(temperatures_c=[]))


def test_actuation_jitter_shared_across_sensors():
    cfg = signals.ScenarioConfig(
        n_transducers=3,
        temperatures_c=[35.0, 45.0],
        temp_jitter_c=0.5,
        temp_stretch_per_c=5e-3,
        noise_snr_db=None,
        n_repeats=3,
        n_samples=2048,
        sample_rate_hz=1e6,
        echoes=[(1.0e-3, 1.0)],
    )
    specs = list(signals._iter_record_specs(cfg))
    jitter = signals._actuation_jitter(cfg, specs)
    # keyed by actuation event: no sensor component in the key
    keys = set(jitter)
    assert all(len(k) == 5 for k in keys)
    draws = np.array(list(jitter.values()))
    assert np.std(draws) > 0.0
    # same (actuator, temp, state, severity, repeat) across sensors shares a draw:
    # sensors of one actuation see identical plate temperature, so records of
    # one event at different sensors are identical signals here
    records = signals.generate_dataset(cfg)
    by_event = {}
    for r in records:
        by_event.setdefault((r.actuator_id, r.temperature_c, r.severity), []).append(r)
    for group in by_event.values():
        reps = {}
        for r in group:
            reps.setdefault(r.id.rsplit("-", 1)[1], []).append(r.samples)
        for samples in reps.values():
            for s in samples[1:]:
                assert np.array_equal(s, samples[0])


def test_actuation_jitter_zero_when_disabled():
    cfg = tiny_config()
    specs = list(signals._iter_record_specs(cfg))
    jitter = signals._actuation_jitter(cfg, specs)
    assert all(v == 0.0 for v in jitter.values())


def test_metadata_keeps_nominal_setpoint():
    cfg = tiny_config(temp_jitter_c=0.4)
    records = signals.generate_dataset(cfg)
    assert {r.temperature_c for r in records} == {35.0, 45.0}


# ---------------------------------------------------------------------------
# save / load
# ---------------------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    cfg = tiny_config()
    records = signals.generate_dataset(cfg)
    manifest = signals.save_dataset(records, str(tmp_path / "d"))
    loaded = signals.load_dataset(manifest)
    assert len(loaded) == len(records)
    by_id = {r.id: r for r in loaded}
    for rec in records:
        other = by_id[rec.id]
        assert np.array_equal(rec.samples, other.samples)
        assert other.actuator_id == rec.actuator_id
        assert other.sensor_id == rec.sensor_id
        assert other.temperature_c == rec.temperature_c
        assert other.state == rec.state
        assert other.severity == rec.severity
        assert other.sample_rate_hz == rec.sample_rate_hz


def test_load_missing_signal_file_names_record(tmp_path):
    cfg = tiny_config(n_repeats=1)
    records = signals.generate_dataset(cfg)
    manifest = signals.save_dataset(records, str(tmp_path / "d"))
    victim = records[0].id
    with open(manifest) as fh:
        rows = json.load(fh)
    assert isinstance(rows, list)
    path = [row["path"] for row in rows if row["id"] == victim][0]
    os.remove(tmp_path / "d" / path)
    with pytest.raises(DataFormatError) as err:
        signals.load_dataset(manifest)
    assert victim in str(err.value)


def test_load_truncated_sample_file_rejected(tmp_path):
    cfg = tiny_config(n_repeats=1)
    records = signals.generate_dataset(cfg)
    manifest = signals.save_dataset(records, str(tmp_path / "d"))
    with open(manifest) as fh:
        rows = json.load(fh)
    path = tmp_path / "d" / rows[0]["path"]
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[: len(lines) // 2]) + "\n")
    with pytest.raises(DataFormatError):
        signals.load_dataset(manifest)


def test_scenario_config_round_trip():
    cfg = signals.reference_scenario(seed=3, with_damage=True)
    back = signals.scenario_from_dict(signals.scenario_to_dict(cfg))
    assert back == cfg


def test_reference_scenario_sampling_keeps_carrier_in_deep_band():
    cfg = signals.reference_scenario()
    # deepest approximation band is [0, rate / 2^9]
    assert cfg.sample_rate_hz / 2.0**9 > cfg.carrier_freq_hz
