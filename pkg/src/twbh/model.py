"""Open inline Bose-Hubbard chain: configuration and truncated-Wigner drift.

Wells are labelled 1..n in every public signature; arrays are 0-based.
Units: rates in gamma, time in 1/gamma.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Rejected physical configuration."""


class NonZeroChi(ConfigError):
    pass


class Singular(ArithmeticError):
    pass


class Diverged(FloatingPointError):
    pass


def _on_dt_grid(t: float, dt: float) -> bool:
    k = round(t / dt)
    return abs(k * dt - t) <= 1e-9 * max(1.0, abs(t))


@dataclass(frozen=True)
class ChainConfig:
    n_wells: int = 3
    chi: float = 0.0
    tunneling: float = 1.0
    pump_rate: float = 10.0
    damp_rate: float = 1.0
    pump_well: int = 1
    damp_well: int = 3
    dt: float = 1e-3
    t_final: float = 40.0
    sample_times: tuple[float, ...] = field(default=(0.0,))

    def __post_init__(self):
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        if self.n_wells < 2:
            raise ConfigError(f"n_wells must be >= 2, got {self.n_wells}")
        for name in ("chi", "pump_rate", "damp_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("pump_well", "damp_well"):
            w = getattr(self, name)
            if not 1 <= w <= self.n_wells:
                raise ConfigError(f"{name}={w} outside 1..{self.n_wells}")
        if not (self.dt > 0 and self.t_final > 0):
            raise ConfigError("dt and t_final must be positive")
        fastest = max(abs(self.tunneling), self.damp_rate, self.chi * self.n_estimate)
        if fastest > 0 and self.dt > 0.1 / fastest * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} does not resolve the fastest rate {fastest:g}")
        ts = self.sample_times
        if not ts:
            raise ConfigError("sample_times is empty")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("sample_times must be strictly increasing")
        if ts[0] < 0 or ts[-1] > self.t_final * (1 + 1e-12):
            raise ConfigError("sample_times must lie in [0, t_final]")
        for t in ts:
            if not _on_dt_grid(t, self.dt):
                raise ConfigError(f"sample time {t} is not a multiple of dt={self.dt}")
        if not _on_dt_grid(self.t_final, self.dt):
            raise ConfigError("t_final is not a multiple of dt")

    @property
    def n_estimate(self) -> float:
        """Rough peak population used for the step-size check."""
        if self.damp_rate > 0:
            return (self.pump_rate / self.damp_rate) ** 2
        return (self.pump_rate * self.t_final) ** 2

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def sample_steps(self) -> np.ndarray:
        return np.array([round(t / self.dt) for t in self.sample_times], dtype=np.int64)

    @property
    def divergence_limit(self) -> float:
        scale = self.pump_rate / self.damp_rate if self.damp_rate > 0 else self.pump_rate * self.t_final
        return 1e6 * (scale + 1.0)

    def replace(self, **changes) -> "ChainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sample_times"] = list(self.sample_times)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def check_state(alpha, cfg: ChainConfig) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.shape != (cfg.n_wells,):
        raise ValueError(f"expected {cfg.n_wells} amplitudes, got shape {alpha.shape}")
    if not np.all(np.isfinite(alpha)):
        raise Diverged(f"non-finite amplitude in {alpha}")
    return alpha


def drift(alpha, cfg: ChainConfig) -> np.ndarray:
    """Deterministic part of d(alpha)/dt for one state."""
    a = check_state(alpha, cfg)
    out = -2j * cfg.chi * (a.real**2 + a.imag**2) * a
    out[:-1] += 1j * cfg.tunneling * a[1:]
    out[1:] += 1j * cfg.tunneling * a[:-1]
    out[cfg.pump_well - 1] += cfg.pump_rate
    out[cfg.damp_well - 1] -= cfg.damp_rate * a[cfg.damp_well - 1]
    return out


def noise_vector(cfg: ChainConfig) -> np.ndarray:
    """Per-well amplitude multiplying the unit complex white noise."""
    b = np.zeros(cfg.n_wells)
    b[cfg.damp_well - 1] = math.sqrt(cfg.damp_rate)
    return b


def pump_vector(cfg: ChainConfig) -> np.ndarray:
    e = np.zeros(cfg.n_wells, dtype=complex)
    e[cfg.pump_well - 1] = cfg.pump_rate
    return e


def coupling_matrix(cfg: ChainConfig) -> np.ndarray:
    """Linear part A of the chi=0 drift, so that drift = A @ alpha + pump."""
    n = cfg.n_wells
    A = np.zeros((n, n), dtype=complex)
    idx = np.arange(n - 1)
    A[idx, idx + 1] = 1j * cfg.tunneling
    A[idx + 1, idx] = 1j * cfg.tunneling
    A[cfg.damp_well - 1, cfg.damp_well - 1] = -cfg.damp_rate
    return A


def classical_fixed_point(cfg: ChainConfig) -> np.ndarray:
    """Stationary amplitudes of the non-interacting classical equations.

    Raises NonZeroChi for chi != 0 and Singular when A has no inverse
    (e.g. damping at the middle well of a trimer).
    """
    if cfg.chi != 0:
        raise NonZeroChi("closed-form fixed point only exists for chi = 0")
    A = coupling_matrix(cfg)
    if np.linalg.matrix_rank(A) < cfg.n_wells:
        raise Singular("coupling matrix is not invertible")
    return np.linalg.solve(A, -pump_vector(cfg))


def mirror(cfg: ChainConfig) -> ChainConfig:
    """Relabel wells i -> n+1-i."""
    n = cfg.n_wells
    return cfg.replace(pump_well=n + 1 - cfg.pump_well, damp_well=n + 1 - cfg.damp_well)
