"""Noise-free mean-field curves and exact chi=0 moment evolution.

For chi = 0 the truncated-Wigner equations are linear with additive noise, so
the first and second moments obey closed linear ODEs:

    m' = A m + eps
    C' = A C + C A^T
    D' = A^H D + D A + gamma e_d e_d^T

integrated here with the same RK4 step as the stochastic engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .correlations import CorrelationSnapshot
from .engine import CHUNK_STEPS, MomentAccumulator, _evolve, batch_snapshots, snapshot
from .model import ChainConfig, Diverged, NonZeroChi, coupling_matrix, pump_vector


class ConfigMismatch(ValueError):
    pass


def _steps_for(cfg: ChainConfig, t_grid) -> np.ndarray:
    steps = np.array([round(t / cfg.dt) for t in t_grid], dtype=np.int64)
    if np.any(np.abs(steps * cfg.dt - np.asarray(t_grid, float)) > 1e-9 * np.maximum(1.0, np.abs(t_grid))):
        raise ValueError("t_grid entries must be multiples of dt")
    if np.any(np.diff(steps) <= 0) or steps[0] < 0:
        raise ValueError("t_grid must be increasing and non-negative")
    return steps


def meanfield_evolve(cfg: ChainConfig, t_grid, alpha0=None) -> np.ndarray:
    """Classical trajectory from alpha(0) = 0 (default); shape (len(t_grid), n_wells)."""
    record = _steps_for(cfg, t_grid)
    n = cfg.n_wells
    a0 = np.zeros(n, dtype=complex) if alpha0 is None else np.asarray(alpha0, dtype=complex)
    ar = a0.real.reshape(n, 1).copy()
    ai = a0.imag.reshape(n, 1).copy()
    out = np.empty((1, len(record), n), dtype=complex)
    status = np.full(1, -1, dtype=np.int64)
    r = 0
    while r < len(record) and record[r] == 0:
        out[0, r] = a0
        r += 1
    s0, last = 0, int(record[-1])
    while s0 < last:
        m = min(CHUNK_STEPS, last - s0)
        r = _evolve(ar, ai, cfg.chi, cfg.tunneling, cfg.pump_rate, cfg.damp_rate, cfg.pump_well - 1,
                    cfg.damp_well - 1, cfg.dt, np.zeros((1, m, 2)), 0.0, s0, record, out, r,
                    cfg.divergence_limit ** 2, status)
        s0 += m
    if status[0] >= 0:
        raise Diverged(f"mean-field solution diverged at t={status[0] * cfg.dt:g}")
    return out[0]


@dataclass
class LinearMoments:
    cfg: ChainConfig
    times: np.ndarray
    m: np.ndarray
    C: np.ndarray
    D: np.ndarray
    stationary: CorrelationSnapshot | None

    def index(self, t: float) -> int:
        k = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, abs(t)))
        if not len(k):
            raise KeyError(f"t={t} not on the oracle grid")
        return int(k[0])

    def snapshot(self, t: float) -> CorrelationSnapshot:
        k = self.index(t)
        C = 0.5 * (self.C[k] + self.C[k].T)
        D = 0.5 * (self.D[k] + self.D[k].conj().T)
        return CorrelationSnapshot(self.m[k], C, D)

    def populations(self) -> np.ndarray:
        """Shape (n_times, n_wells)."""
        return np.abs(self.m) ** 2 + np.einsum("tii->ti", self.D).real - 0.5


def _generator(cfg: ChainConfig):
    """Linear ODE y' = M y + b on y = [m, vec C, vec D] (row-major vec)."""
    n = cfg.n_wells
    A = coupling_matrix(cfg)
    I = np.eye(n)
    N = n + 2 * n * n
    M = np.zeros((N, N), dtype=complex)
    M[:n, :n] = A
    M[n:n + n * n, n:n + n * n] = np.kron(A, I) + np.kron(I, A)
    M[n + n * n:, n + n * n:] = np.kron(A.conj().T, I) + np.kron(I, A.T)
    b = np.zeros(N, dtype=complex)
    b[:n] = pump_vector(cfg)
    Q = np.zeros((n, n))
    Q[cfg.damp_well - 1, cfg.damp_well - 1] = cfg.damp_rate
    b[n + n * n:] = Q.ravel()
    return M, b


def _stationary(cfg: ChainConfig) -> CorrelationSnapshot | None:
    A = coupling_matrix(cfg)
    if np.linalg.matrix_rank(A) < cfg.n_wells:
        return None
    n = cfg.n_wells
    Q = np.zeros((n, n))
    Q[cfg.damp_well - 1, cfg.damp_well - 1] = cfg.damp_rate
    m = np.linalg.solve(A, -pump_vector(cfg))
    C = linalg.solve_sylvester(A, A.T, np.zeros((n, n), dtype=complex))
    D = linalg.solve_continuous_lyapunov(A.conj().T, -Q)
    return CorrelationSnapshot(m, 0.5 * (C + C.T), 0.5 * (D + D.conj().T))


def linear_moments(cfg: ChainConfig, t_grid) -> LinearMoments:
    """Exact (up to RK4) moments of the chi = 0 Wigner equations from vacuum."""
    if cfg.chi != 0:
        raise NonZeroChi("linear moments need chi = 0")
    record = _steps_for(cfg, t_grid)
    n = cfg.n_wells
    M, b = _generator(cfg)
    h = cfg.dt
    # one RK4 step of a linear ODE is the affine map y -> P y + R b
    hM = h * M
    I = np.eye(len(b))
    hM2 = hM @ hM
    hM3 = hM2 @ hM
    P = I + hM + hM2 / 2 + hM3 / 6 + hM3 @ hM / 24
    R = h * (I + hM / 2 + hM2 / 6 + hM3 / 24)
    Rb = R @ b
    y = np.zeros(len(b), dtype=complex)
    y[n + n * n:] = (0.5 * np.eye(n)).ravel()
    out = np.empty((len(record), len(b)), dtype=complex)
    s, r = 0, 0
    while r < len(record):
        while s < record[r]:
            y = P @ y + Rb
            s += 1
        out[r] = y
        r += 1
    return LinearMoments(
        cfg=cfg,
        times=np.asarray(t_grid, dtype=float),
        m=out[:, :n],
        C=out[:, n:n + n * n].reshape(-1, n, n),
        D=out[:, n + n * n:].reshape(-1, n, n),
        stationary=_stationary(cfg),
    )


@dataclass
class Deviation:
    time: float
    max_abs_z: float
    worst: str
    z: dict

    def passed(self, threshold: float = 5.0) -> bool:
        return self.max_abs_z < threshold


def _components(snap: CorrelationSnapshot) -> dict:
    n = snap.n_modes
    comp = {}
    for i in range(n):
        comp[f"m{i + 1}.re"] = snap.m[i].real
        comp[f"m{i + 1}.im"] = snap.m[i].imag
        for j in range(i, n):
            comp[f"C{i + 1}{j + 1}.re"] = snap.C[i, j].real
            comp[f"C{i + 1}{j + 1}.im"] = snap.C[i, j].imag
            comp[f"D{i + 1}{j + 1}.re"] = snap.D[i, j].real
            if j != i:
                comp[f"D{i + 1}{j + 1}.im"] = snap.D[i, j].imag
    return comp


def compare(acc: MomentAccumulator, oracle: LinearMoments, t: float) -> Deviation:
    """Element-wise z-scores of Monte Carlo moments against the exact linear ones."""
    if acc.cfg.replace(sample_times=(0.0,)) != oracle.cfg.replace(sample_times=(0.0,)):
        raise ConfigMismatch("engine and oracle were built from different configurations")
    est = _components(snapshot(acc, t))
    exact = _components(oracle.snapshot(t))
    batches = [_components(s) for s in batch_snapshots(acc, t)]
    nb = len(batches)
    z = {}
    for key, v in est.items():
        spread = np.std([b[key] for b in batches], ddof=1) / math.sqrt(nb) if nb > 1 else math.nan
        diff = v - exact[key]
        if spread > 0:
            z[key] = diff / spread
        else:
            z[key] = 0.0 if abs(diff) < 1e-12 else math.inf
    worst = max(z, key=lambda k: abs(z[k]))
    return Deviation(time=t, max_abs_z=float(abs(z[worst])), worst=worst, z=z)
