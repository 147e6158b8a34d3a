"""Truncated-Wigner ensemble integration with batch-mergeable moment sums.

Each trajectory owns a Philox stream derived from (base_seed, trajectory index),
so results never depend on how batches are scheduled across threads.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .correlations import CorrelationSnapshot
from .model import ChainConfig, Diverged, check_state, drift

CHECKPOINT_FORMAT = "twbh-accumulator"
CHECKPOINT_VERSION = 1


class UnknownSampleTime(KeyError):
    pass


class EnsembleDiverged(Diverged):
    def __init__(self, n_diverged: int, first_index: int):
        super().__init__(f"{n_diverged} trajectories diverged (first: index {first_index})")
        self.n_diverged = n_diverged
        self.first_index = first_index


@dataclass(frozen=True)
class EnsemblePlan:
    n_trajectories: int
    base_seed: int = 0
    n_batches: int = 100

    def __post_init__(self):
        if self.n_trajectories < 1 or self.n_batches < 1:
            raise ValueError("n_trajectories and n_batches must be >= 1")
        if self.n_trajectories % self.n_batches:
            raise ValueError(f"n_batches={self.n_batches} does not divide n_trajectories={self.n_trajectories}")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    @property
    def batch_size(self) -> int:
        return self.n_trajectories // self.n_batches

    def batch_range(self, b: int) -> range:
        return range(b * self.batch_size, (b + 1) * self.batch_size)


def trajectory_rng(base_seed: int, traj_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(base_seed, spawn_key=(traj_index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_vacuum(n_wells: int, rng: np.random.Generator) -> np.ndarray:
    """Wigner sample of the vacuum: <|a|^2> = 1/2, <a> = <a^2> = 0."""
    g = rng.standard_normal((n_wells, 2))
    return 0.5 * (g[:, 0] + 1j * g[:, 1])


def _rk4(a, cfg, dt):
    k1 = drift(a, cfg)
    k2 = drift(a + 0.5 * dt * k1, cfg)
    k3 = drift(a + 0.5 * dt * k2, cfg)
    k4 = drift(a + dt * k3, cfg)
    return a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state, cfg: ChainConfig, rng: np.random.Generator | None) -> np.ndarray:
    """One RK4 drift step followed by the additive bath noise on the damped well.

    Reference implementation; ensembles use the compiled kernel, which performs
    the same arithmetic. ``rng=None`` skips the noise (deterministic flow).
    """
    a = _rk4(check_state(state, cfg), cfg, cfg.dt)
    if rng is not None and cfg.damp_rate > 0:
        g = rng.standard_normal(2)
        a[cfg.damp_well - 1] += math.sqrt(cfg.damp_rate * cfg.dt / 2) * (g[0] + 1j * g[1])
    if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > cfg.divergence_limit:
        raise Diverged(f"amplitude exceeded {cfg.divergence_limit:g}")
    return a


CHUNK_STEPS = 4096
LANES = 64


@njit(cache=True, nogil=True)
def _evolve(ar, ai, chi, J, eps, gamma, p, d, dt, noise, amp, s0, record, out, r, lim2, status):
    """Advance a lane-batch of trajectories through ``noise.shape[1]`` steps.

    ar, ai: (n, B) real and imaginary parts, updated in place.
    noise: (B, steps, 2) standard normals for this chunk.
    record: absolute step indices to store in out[b, k, :]; r is the next
    record slot, returned updated. status[b] receives the first step at which
    trajectory b left the guard radius.
    Lanes never interact, so every trajectory's arithmetic is independent of B.
    """
    n, B = ar.shape
    k = np.empty((4, 2, n, B))
    tr = np.empty((n, B))
    ti = np.empty((n, B))
    e = np.zeros(n)
    g = np.zeros(n)
    e[p] = eps
    g[d] = gamma
    h = 0.5 * dt
    c = dt / 6.0
    n_rec = record.shape[0]
    for s in range(noise.shape[1]):
        for stage in range(4):
            if stage == 0:
                xr = ar
                xi = ai
            else:
                w = h if stage < 3 else dt
                for i in range(n):
                    for b in range(B):
                        tr[i, b] = ar[i, b] + w * k[stage - 1, 0, i, b]
                        ti[i, b] = ai[i, b] + w * k[stage - 1, 1, i, b]
                xr = tr
                xi = ti
            fr = k[stage, 0]
            fi = k[stage, 1]
            for i in range(n):
                for b in range(B):
                    x = xr[i, b]
                    y = xi[i, b]
                    q = 2.0 * chi * (x * x + y * y)
                    sr = 0.0
                    si = 0.0
                    if i > 0:
                        sr += xr[i - 1, b]
                        si += xi[i - 1, b]
                    if i < n - 1:
                        sr += xr[i + 1, b]
                        si += xi[i + 1, b]
                    fr[i, b] = q * y - J * si + e[i] - g[i] * x
                    fi[i, b] = -q * x + J * sr - g[i] * y
        for i in range(n):
            for b in range(B):
                ar[i, b] += c * (k[0, 0, i, b] + 2.0 * k[1, 0, i, b] + 2.0 * k[2, 0, i, b] + k[3, 0, i, b])
                ai[i, b] += c * (k[0, 1, i, b] + 2.0 * k[1, 1, i, b] + 2.0 * k[2, 1, i, b] + k[3, 1, i, b])
        if amp > 0.0:
            for b in range(B):
                ar[d, b] += amp * noise[b, s, 0]
                ai[d, b] += amp * noise[b, s, 1]
        for i in range(n):
            for b in range(B):
                if not (ar[i, b] * ar[i, b] + ai[i, b] * ai[i, b] <= lim2) and status[b] < 0:
                    status[b] = s0 + s + 1
        while r < n_rec and record[r] == s0 + s + 1:
            for b in range(B):
                for i in range(n):
                    out[b, r, i] = ar[i, b] + 1j * ai[i, b]
            r += 1
    return r


def _integrate_lanes(indices, cfg: ChainConfig, base_seed: int, noise_scale: float = 1.0):
    """Integrate trajectories ``indices`` side by side.

    Returns (states of shape (len(indices), n_times, n_wells), status array).
    """
    B = len(indices)
    n = cfg.n_wells
    rngs = [trajectory_rng(base_seed, int(i)) for i in indices]
    a0 = np.stack([sample_vacuum(n, g) for g in rngs])
    ar = np.ascontiguousarray(a0.real.T)
    ai = np.ascontiguousarray(a0.imag.T)
    record = cfg.sample_steps
    out = np.empty((B, len(record), n), dtype=complex)
    status = np.full(B, -1, dtype=np.int64)
    r = 0
    while r < len(record) and record[r] == 0:
        out[:, r, :] = a0
        r += 1
    last = int(record[-1])
    amp = noise_scale * math.sqrt(cfg.damp_rate * cfg.dt / 2)
    noisy = cfg.damp_rate > 0
    s0 = 0
    while s0 < last:
        m = min(CHUNK_STEPS, last - s0)
        noise = np.zeros((B, m, 2))
        if noisy:
            for b, g in enumerate(rngs):
                g.standard_normal(out=noise[b])
        r = _evolve(ar, ai, cfg.chi, cfg.tunneling, cfg.pump_rate, cfg.damp_rate,
                    cfg.pump_well - 1, cfg.damp_well - 1, cfg.dt, noise, amp if noisy else 0.0,
                    s0, record, out, r, cfg.divergence_limit ** 2, status)
        s0 += m
    return out, status


def run_trajectory(traj_index: int, cfg: ChainConfig, base_seed: int = 0, noise_scale: float = 1.0) -> np.ndarray:
    """States at ``cfg.sample_times`` for one trajectory, shape (n_times, n_wells).

    A pure function of (base_seed, traj_index, cfg); bit-identical to the same
    trajectory integrated inside a batch. ``noise_scale`` exists only for
    fault-injection tests of the validation path.
    """
    out, status = _integrate_lanes([traj_index], cfg, base_seed, noise_scale)
    if status[0] >= 0:
        raise Diverged(f"trajectory {traj_index} diverged at step {status[0]} (t={status[0] * cfg.dt:g})")
    return out[0]


class MomentAccumulator:
    """Per-batch sums of a, a_i a_j and conj(a_i) a_j at every sample time.

    Arrays are indexed [batch, time, ...]; totals are always summed over the
    batch axis in index order, so merge order never changes the result.
    """

    def __init__(self, cfg: ChainConfig, plan: EnsemblePlan):
        self.cfg = cfg
        self.plan = plan
        nb, nt, n = plan.n_batches, len(cfg.sample_times), cfg.n_wells
        self.counts = np.zeros(nb, dtype=np.int64)
        self.s1 = np.zeros((nb, nt, n), dtype=complex)
        self.s2 = np.zeros((nb, nt, n, n), dtype=complex)
        self.h2 = np.zeros((nb, nt, n, n), dtype=complex)
        self.filled = np.zeros(nb, dtype=bool)

    @property
    def count(self) -> int:
        return int(self.counts.sum())

    @property
    def times(self) -> tuple[float, ...]:
        return self.cfg.sample_times

    def add_batch(self, b: int, states: np.ndarray) -> None:
        """Accumulate ``states`` of shape (n_traj, n_times, n_wells) into batch b."""
        if self.filled[b]:
            raise ValueError(f"batch {b} already accumulated")
        self.counts[b] = states.shape[0]
        self.s1[b] = states.sum(axis=0)
        self.s2[b] = np.einsum("kti,ktj->tij", states, states)
        self.h2[b] = np.einsum("kti,ktj->tij", states.conj(), states)
        self.filled[b] = True

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if self.cfg != other.cfg or self.plan != other.plan:
            raise ValueError("cannot merge accumulators of different experiments")
        if np.any(self.filled & other.filled):
            raise ValueError("accumulators share batches")
        out = MomentAccumulator(self.cfg, self.plan)
        for src in (self, other):
            m = src.filled
            out.counts[m] = src.counts[m]
            out.s1[m] = src.s1[m]
            out.s2[m] = src.s2[m]
            out.h2[m] = src.h2[m]
            out.filled[m] = True
        return out

    def time_index(self, t: float) -> int:
        for k, ts in enumerate(self.cfg.sample_times):
            if abs(ts - t) <= 1e-9 * max(1.0, abs(t)):
                return k
        raise UnknownSampleTime(f"t={t} is not a sample time")

    def _totals(self, k: int, batches=None):
        sel = self.filled if batches is None else batches
        n = self.counts[sel].sum()
        if n == 0:
            raise ValueError("accumulator is empty")
        return n, self.s1[sel, k].sum(axis=0), self.s2[sel, k].sum(axis=0), self.h2[sel, k].sum(axis=0)

    def equals(self, other: "MomentAccumulator") -> bool:
        return (
            self.cfg == other.cfg and self.plan == other.plan
            and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("counts", "s1", "s2", "h2", "filled"))
        )

    # checkpoint format: numpy .npz; "meta" holds a JSON header, the other
    # entries are the raw per-batch arrays described in README.
    def save(self, path) -> None:
        path = Path(path)
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.cfg.to_dict(),
            "config_digest": self.cfg.digest(),
            "plan": {"n_trajectories": self.plan.n_trajectories, "base_seed": self.plan.base_seed,
                     "n_batches": self.plan.n_batches},
        }
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), counts=self.counts, filled=self.filled,
                     s1=self.s1, s2=self.s2, h2=self.h2)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "MomentAccumulator":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path} is not an accumulator checkpoint")
            if meta["version"] > CHECKPOINT_VERSION:
                raise ValueError(f"checkpoint version {meta['version']} is newer than supported")
            cfg = ChainConfig.from_dict(meta["config"])
            if cfg.digest() != meta["config_digest"]:
                raise ValueError("checkpoint config digest mismatch")
            acc = cls(cfg, EnsemblePlan(**meta["plan"]))
            for f in ("counts", "filled", "s1", "s2", "h2"):
                getattr(acc, f)[...] = z[f]
        return acc


def _run_batch(cfg, plan, b, noise_scale):
    idx = np.array(plan.batch_range(b))
    states = np.empty((len(idx), len(cfg.sample_times), cfg.n_wells), dtype=complex)
    bad = []
    for lo in range(0, len(idx), LANES):
        lanes = idx[lo:lo + LANES]
        states[lo:lo + len(lanes)], status = _integrate_lanes(lanes, cfg, plan.base_seed, noise_scale)
        bad.extend(int(i) for i in lanes[status >= 0])
    return b, states, bad


def run_ensemble(cfg: ChainConfig, plan: EnsemblePlan, workers: int = 1, checkpoint=None,
                 noise_scale: float = 1.0, progress=None) -> MomentAccumulator:
    """Integrate all trajectories of ``plan`` and return their moment sums.

    With ``checkpoint`` set, already-finished batches are loaded from that file
    and the file is rewritten after each new batch (resume support).
    ``progress(done, total, elapsed_s)`` is called after every batch.
    """
    acc = None
    if checkpoint is not None and Path(checkpoint).exists():
        acc = MomentAccumulator.load(checkpoint)
        if acc.cfg != cfg or acc.plan != plan:
            raise ValueError(f"checkpoint {checkpoint} belongs to a different experiment")
    if acc is None:
        acc = MomentAccumulator(cfg, plan)
    todo = [b for b in range(plan.n_batches) if not acc.filled[b]]
    diverged = []
    t0 = time.perf_counter()

    def absorb(result):
        b, states, bad = result
        if bad:
            diverged.extend(bad)
            return
        acc.add_batch(b, states)
        if checkpoint is not None:
            acc.save(checkpoint)
        if progress is not None:
            progress(int(acc.filled.sum()), plan.n_batches, time.perf_counter() - t0)

    if workers <= 1:
        for b in todo:
            absorb(_run_batch(cfg, plan, b, noise_scale))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(lambda b: _run_batch(cfg, plan, b, noise_scale), todo):
                absorb(result)
    if diverged:
        raise EnsembleDiverged(len(diverged), min(diverged))
    return acc


def population(acc: MomentAccumulator, well: int, t: float) -> tuple[float, float]:
    """Mean atom number in ``well`` (1-based) at time t, with batch-means error."""
    k = acc.time_index(t)
    i = well - 1
    n, _, _, h2 = acc._totals(k)
    value = h2[i, i].real / n - 0.5
    sel = acc.filled
    per_batch = acc.h2[sel, k, i, i].real / acc.counts[sel]
    err = per_batch.std(ddof=1) / math.sqrt(len(per_batch)) if len(per_batch) > 1 else math.nan
    return float(value), float(err)


def populations(acc: MomentAccumulator) -> tuple[np.ndarray, np.ndarray]:
    """All populations, shape (n_times, n_wells), and their standard errors."""
    sel = acc.filled
    n = acc.counts[sel].sum()
    diag = np.einsum("btii->bti", acc.h2[sel]).real
    value = diag.sum(axis=0) / n - 0.5
    per_batch = diag / acc.counts[sel][:, None, None]
    nb = per_batch.shape[0]
    err = per_batch.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.full_like(value, math.nan)
    return value, err


def _snap_from(n, s1, s2, h2) -> CorrelationSnapshot:
    m = s1 / n
    C = s2 / n - np.outer(m, m)
    D = h2 / n - np.outer(m.conj(), m)
    return CorrelationSnapshot(m=m, C=C, D=D, n=int(n))


def snapshot(acc: MomentAccumulator, t: float) -> CorrelationSnapshot:
    """Means and central second moments at sample time t."""
    return _snap_from(*acc._totals(acc.time_index(t)))


def batch_snapshots(acc: MomentAccumulator, t: float) -> list[CorrelationSnapshot]:
    k = acc.time_index(t)
    return [_snap_from(acc.counts[b], acc.s1[b, k], acc.s2[b, k], acc.h2[b, k])
            for b in np.flatnonzero(acc.filled)]
