"""Synthetic labelled heartbeat traces with injected anomalies.

Normal traces are a noisy, optionally periodic rate around a base level.
Memory leaks sag the rate linearly and dilate the sample spacing, and
shutdowns truncate the trace after a short run of zero-rate samples.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import AnomalyLabel, Dataset, HeartbeatSequence, LabeledTrace

# Leak and shutdown magnitudes are our calibration; nothing upstream fixes them.
DEFAULT_LEAK_DECAY = 0.5
DEFAULT_LEAK_STRETCH = 0.3
DEFAULT_CUT_RANGE = (0.2, 0.8)
DEFAULT_SHUTDOWN_TAIL = 3


@dataclass(frozen=True)
class WorkloadProfile:
    workload_id: str
    base_rate: float
    noise_sd: float = 0.0
    n_samples: int = 128
    sample_interval: float = 0.1
    phase_amplitude: float = 0.0
    phase_period: float = 16.0

    def __post_init__(self):
        if not self.workload_id:
            raise ValueError("workload_id must be non-empty")
        if not self.base_rate > 0:
            raise ValueError(f"base_rate must be positive, got {self.base_rate}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.n_samples < 8:
            raise ValueError(f"n_samples must be >= 8, got {self.n_samples}")
        # Timestamps are stored in whole milliseconds.
        if not self.sample_interval >= 0.001:
            raise ValueError(f"sample_interval must be >= 1 ms, got {self.sample_interval}")
        if not 0 <= self.phase_amplitude < 1:
            raise ValueError(f"phase_amplitude must be in [0, 1), got {self.phase_amplitude}")
        if not self.phase_period > 0:
            raise ValueError(f"phase_period must be positive, got {self.phase_period}")

    def noise_free(self) -> "WorkloadProfile":
        return replace(self, noise_sd=0.0)


@dataclass(frozen=True)
class InjectionSpec:
    label: AnomalyLabel = AnomalyLabel.NORMAL
    leak_decay: float = DEFAULT_LEAK_DECAY
    leak_stretch: float = DEFAULT_LEAK_STRETCH
    shutdown_cut: float = 0.5
    shutdown_tail: int = DEFAULT_SHUTDOWN_TAIL
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "label", AnomalyLabel(self.label))
        if self.label is AnomalyLabel.MEMLEAK:
            if not 0.1 <= self.leak_decay <= 0.9:
                raise ValueError(f"leak_decay must be in [0.1, 0.9], got {self.leak_decay}")
            if not 0 <= self.leak_stretch <= 1:
                raise ValueError(f"leak_stretch must be in [0, 1], got {self.leak_stretch}")
        elif self.label is AnomalyLabel.SHUTDOWN:
            if not 0.1 < self.shutdown_cut < 0.9:
                raise ValueError(f"shutdown_cut must be in (0.1, 0.9), got {self.shutdown_cut}")
            if self.shutdown_tail < 0:
                raise ValueError(f"shutdown_tail must be >= 0, got {self.shutdown_tail}")


# Distinct levels and phase patterns, one per benchmark family.
DEFAULT_PROFILES: tuple[WorkloadProfile, ...] = (
    WorkloadProfile("npb-sp", base_rate=120.0, noise_sd=6.0, phase_amplitude=0.15, phase_period=16),
    WorkloadProfile("npb-lu", base_rate=90.0, noise_sd=5.0, phase_amplitude=0.25, phase_period=24),
    WorkloadProfile("npb-bt", base_rate=150.0, noise_sd=9.0, phase_amplitude=0.10, phase_period=32),
    WorkloadProfile("npb-cg", base_rate=60.0, noise_sd=4.0, phase_amplitude=0.30, phase_period=12),
    WorkloadProfile("epcc-array", base_rate=200.0, noise_sd=10.0, phase_amplitude=0.05, phase_period=8),
    WorkloadProfile("jacobi", base_rate=75.0, noise_sd=6.0, phase_amplitude=0.20, phase_period=20),
)

PROFILES_BY_ID = {p.workload_id: p for p in DEFAULT_PROFILES}


def _ms_grid(seconds: np.ndarray) -> np.ndarray:
    return np.rint(seconds * 1000.0) / 1000.0


def generate_trace(profile: WorkloadProfile, spec: InjectionSpec, trace_id: str | None = None,
                   thread_id: int = 0) -> LabeledTrace:
    rng = np.random.default_rng(spec.seed)
    n = profile.n_samples
    i = np.arange(n)
    mu = profile.base_rate
    rates = mu * (1.0 + profile.phase_amplitude * np.sin(2.0 * math.pi * i / profile.phase_period))
    rates = rates + rng.normal(0.0, profile.noise_sd, n) if profile.noise_sd > 0 else rates
    rates = np.maximum(rates, 0.0)
    times = i * profile.sample_interval

    if spec.label is AnomalyLabel.MEMLEAK:
        rates = rates * (1.0 - spec.leak_decay * i / n)
        steps = profile.sample_interval * (1.0 + spec.leak_stretch * i / n)
        times = np.concatenate(([0.0], np.cumsum(steps[1:])))
    elif spec.label is AnomalyLabel.SHUTDOWN:
        cut = math.floor(spec.shutdown_cut * n)
        rates = np.concatenate((rates[:cut], np.zeros(spec.shutdown_tail)))
        times = np.arange(rates.size) * profile.sample_interval

    if trace_id is None:
        trace_id = f"{profile.workload_id}-{spec.label.value}-{spec.seed}"
    seq = HeartbeatSequence(trace_id, thread_id, _ms_grid(times), rates)
    return LabeledTrace(seq, profile.workload_id, spec.label)


def trace_seed(master: int, profile_index: int, label_index: int, replicate: int) -> int:
    """Per-trace seed: first word of SeedSequence([master, profile, label, replicate])."""
    ss = np.random.SeedSequence([master, profile_index, label_index, replicate])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_dataset(profiles=DEFAULT_PROFILES, per_class_count: int = 50, seed: int = 0,
                     leak_decay: float = DEFAULT_LEAK_DECAY, leak_stretch: float = DEFAULT_LEAK_STRETCH,
                     cut_range: tuple[float, float] = DEFAULT_CUT_RANGE,
                     shutdown_tail: int = DEFAULT_SHUTDOWN_TAIL) -> Dataset:
    """``len(profiles) * 3 * per_class_count`` traces, class-balanced per workload."""
    if per_class_count < 1:
        raise ValueError(f"per_class_count must be >= 1, got {per_class_count}")
    profiles = list(profiles)
    traces = []
    for p_idx, profile in enumerate(profiles):
        for l_idx, label in enumerate(AnomalyLabel):
            for rep in range(per_class_count):
                s = trace_seed(seed, p_idx, l_idx, rep)
                cut = 0.5
                if label is AnomalyLabel.SHUTDOWN:
                    cut = float(np.random.default_rng([s, 1]).uniform(*cut_range))
                spec = InjectionSpec(label, leak_decay, leak_stretch, cut, shutdown_tail, s)
                trace_id = f"{profile.workload_id}-{label.value}-{rep:03d}"
                traces.append(generate_trace(profile, spec, trace_id))
    metadata = {
        "generator": "pulsemark.synth",
        "seed": seed,
        "per_class_count": per_class_count,
        "leak_decay": leak_decay,
        "leak_stretch": leak_stretch,
        "cut_range": list(cut_range),
        "shutdown_tail": shutdown_tail,
        "profiles": [asdict(p) for p in profiles],
    }
    return Dataset(traces, metadata)
