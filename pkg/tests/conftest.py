"""Session fixtures: one small trained bank shared by serialization and
pipeline mechanics tests."""
import numpy as np
import pytest

from aubase import pipeline, signals


def small_scenario(seed=0, with_damage=False) -> signals.ScenarioConfig:
    cfg = signals.ScenarioConfig(
        n_transducers=2,
        temperatures_c=[35.0, 45.0],
        echoes=[(100e-6, 1.0), (700e-6, 0.5)],
        noise_snr_db=40.0,
        n_repeats=6,
        n_samples=4096,
        sample_rate_hz=1e6,
        seed=seed,
    )
    if with_damage:
        cfg.damage_severities = [1.0, 2.0]
        cfg.damage_temperatures_c = [35.0]
    return cfg


@pytest.fixture(scope="session")
def small_records():
    return signals.generate_dataset(small_scenario())


@pytest.fixture(scope="session")
def small_bank(small_records):
    return pipeline.train_phase1(small_records, pipeline.PipelineConfig(seed=0))


@pytest.fixture(scope="session")
def damage_records():
    return signals.generate_dataset(small_scenario(with_damage=True))
