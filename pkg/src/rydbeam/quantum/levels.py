"""Parameter containers for the four-level ladder model."""
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import atomic_mass, e, hbar, physical_constants
from scipy.constants import k as k_B

TWO_PI = 2.0 * np.pi
_A0 = physical_constants["Bohr radius"][0]


@dataclass(frozen=True)
class LevelScheme:
    """Atomic constants of the 6S1/2 -> 6P3/2 -> nD5/2 -> n'P/F ladder in Cs.

    Rates are angular (rad/s). Defaults are engineering choices; see README.
    """

    gamma2: float = TWO_PI * 5.2e6
    gamma3: float = TWO_PI * 1.0e4
    gamma4: float = TWO_PI * 1.0e4
    mu12: float = 4.4837 * e * _A0
    mu34: float = 1500.0 * e * _A0
    lambda_p: float = 852.347e-9
    lambda_c: float = 509.0e-9
    n0: float = 4.9e16
    mass: float = 132.905 * atomic_mass
    t_env: float = 300.0

    def __post_init__(self):
        for name in ("gamma2", "gamma3", "gamma4", "mu12", "mu34", "lambda_p",
                     "lambda_c", "n0", "mass", "t_env"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"LevelScheme.{name} must be finite and > 0, got {value!r}")

    @property
    def u(self):
        """Most probable speed sqrt(2 k_B T / m) in m/s."""
        return float(np.sqrt(2.0 * k_B * self.t_env / self.mass))

    @property
    def k_p(self):
        return TWO_PI / self.lambda_p

    @property
    def k_c(self):
        return TWO_PI / self.lambda_c

    @property
    def gammas(self):
        return (self.gamma2, self.gamma3, self.gamma4)

    def rabi(self, field):
        """LO/SIG Rabi frequency (rad/s) for a field amplitude in V/m."""
        return self.mu34 * np.asarray(field) / hbar

    def with_temperature(self, t_env):
        return replace(self, t_env=t_env)


@dataclass(frozen=True)
class DriveParams:
    """Laser and RF drive of the ladder (all rad/s).

    ``omega_rf`` is the composite RF Rabi frequency entering the |3>-|4>
    coupling and may be complex.
    """

    omega_p: float = TWO_PI * 5.0e6
    omega_c: float = TWO_PI * 1.0e6
    delta_p: float = 0.0
    delta_c: float = 0.0
    delta_l: float = 0.0
    omega_rf: complex = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.omega_p) and self.omega_p >= 0):
            raise ValueError(f"omega_p must be >= 0, got {self.omega_p!r}")
        if not (np.isfinite(self.omega_c) and self.omega_c >= 0):
            raise ValueError(f"omega_c must be >= 0, got {self.omega_c!r}")
        for name in ("delta_p", "delta_c", "delta_l"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not np.isfinite(abs(self.omega_rf)):
            raise ValueError("omega_rf must be finite")

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class DopplerSpec:
    """Velocity-averaging settings.

    node_count and truncation define the Gauss rule on [-truncation*u,
    truncation*u]. Velocity poles of the steady-state coherence narrower
    than ``pole_cut * u`` are integrated analytically; set ``pole_cut=0``
    for the plain quadrature sum.
    """

    node_count: int = 64
    truncation: float = 4.0
    pole_cut: float = 1.0

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 8:
            raise ValueError("node_count must be an integer >= 8")
        if self.truncation < 3:
            raise ValueError("truncation must be >= 3")
        if self.pole_cut < 0:
            raise ValueError("pole_cut must be >= 0")
