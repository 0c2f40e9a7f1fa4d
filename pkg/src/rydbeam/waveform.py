"""Sampled probe-power traces."""
from dataclasses import dataclass, field

import numpy as np

from rydbeam._io import atomic_write_text, read_csv_columns

CSV_HEADER = "t_s,delta_p"


@dataclass
class Waveform:
    """Uniformly sampled AC component of the transmitted probe power.

    Attributes
    ----------
    sample_rate : float
        Samples per second.
    samples : ndarray
        Real samples, arbitrary linear power units.
    metadata : dict
        Free-form provenance of the synthesis (IFs, model, ...).
    """

    sample_rate: float
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    @property
    def times(self):
        return np.arange(self.samples.size) / self.sample_rate

    def __add__(self, other):
        if other.sample_rate != self.sample_rate or other.samples.size != self.samples.size:
            raise ValueError("waveforms differ in sampling")
        return Waveform(self.sample_rate, self.samples + other.samples, dict(self.metadata))

    def to_csv(self, path):
        t = self.times
        rows = "".join(f"{a:.9e},{b:.12e}\n" for a, b in zip(t, self.samples))
        atomic_write_text(path, CSV_HEADER + "\n" + rows)

    @classmethod
    def from_csv(cls, path):
        t, x = read_csv_columns(path, CSV_HEADER)
        t = np.asarray(t)
        if t.size < 2:
            raise ValueError(f"{path}: need at least two samples")
        dt = np.diff(t)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-6 * dt.mean():
            raise ValueError(f"{path}: samples are not uniformly spaced")
        return cls(1.0 / dt.mean(), np.asarray(x))
