from dataclasses import replace

import numpy as np
import pytest

from pulsemark import synth
from pulsemark.core import HeartbeatSequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    profiles = [synth.PROFILES_BY_ID["npb-cg"], synth.PROFILES_BY_ID["jacobi"]]
    profiles = [replace(p, n_samples=64) for p in profiles]
    return synth.generate_dataset(profiles, per_class_count=6, seed=5)


def make_seq(rates, times=None, trace_id="t", thread_id=0):
    rates = np.asarray(rates, dtype=float)
    if times is None:
        times = np.arange(rates.size, dtype=float)
    return HeartbeatSequence(trace_id, thread_id, np.asarray(times, dtype=float), rates)
