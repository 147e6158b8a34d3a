"""Experiment definitions: YAML specs, built-in reproduction runs, cached ensembles."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import yaml

from .correlations import ALL_CRITERIA, LEGACY_Y_OFFSET, Y_OFFSET, criterion
from .engine import EnsemblePlan, MomentAccumulator, run_ensemble
from .model import ChainConfig, ConfigError

log = logging.getLogger(__name__)


@dataclass
class ExperimentSpec:
    chain: ChainConfig
    plan: EnsemblePlan
    out_dir: Path = Path("runs/default")
    times: tuple[float, ...] = ()
    criteria: tuple[str, ...] = tuple(ALL_CRITERIA)
    workers: int = 1
    y_offset: float = Y_OFFSET

    def __post_init__(self):
        if not self.times:
            self.times = (self.chain.sample_times[-1],)
        for t in self.times:
            if not any(abs(t - s) <= 1e-9 * max(1.0, t) for s in self.chain.sample_times):
                raise ConfigError(f"measurement time {t} is not among the sample times")
        for c in self.criteria:
            try:
                criterion(c, self.chain.n_wells)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def checkpoint(self) -> Path:
        return self.out_dir / "checkpoint.npz"


def default_batches(n_trajectories: int, most: int = 100, min_size: int = 100) -> int:
    """Largest divisor of n up to ``most`` that leaves ``min_size`` trajectories per batch (at least 2 batches)."""
    cap = max(2, min(most, n_trajectories // min_size))
    for nb in range(min(cap, n_trajectories), 1, -1):
        if n_trajectories % nb == 0:
            return nb
    return 1


def sample_grid(t_final: float, every: float, dt: float) -> tuple[float, ...]:
    k = round(every / dt)
    if k < 1:
        raise ConfigError("sample_every must be at least dt")
    n = round(t_final / dt)
    return tuple(s * dt for s in range(0, n + 1, k)) + (() if n % k == 0 else (n * dt,))


def resolve_y_offset(value) -> float:
    if value in (None, "standard"):
        return Y_OFFSET
    if value == "legacy":
        return LEGACY_Y_OFFSET
    return float(value)


def spec_from_dict(doc: dict, base: Path | None = None) -> ExperimentSpec:
    doc = dict(doc)
    chain = dict(doc.pop("chain", {}))
    if "sample_every" in chain:
        every = chain.pop("sample_every")
        if "sample_times" in chain:
            raise ConfigError("give either sample_times or sample_every, not both")
        chain["sample_times"] = sample_grid(chain.get("t_final", 40.0), every, chain.get("dt", 1e-3))
    elif "sample_times" not in chain:
        chain["sample_times"] = (chain.get("t_final", 40.0),)
    cfg = ChainConfig.from_dict(chain)
    ens = dict(doc.pop("ensemble", {}))
    workers = int(ens.pop("workers", 1))
    plan = EnsemblePlan(**{"n_trajectories": 10_000, **ens})
    ana = dict(doc.pop("analysis", {}))
    out = dict(doc.pop("output", {}))
    if doc:
        raise ConfigError(f"unknown spec sections: {sorted(doc)}")
    crit = ana.pop("criteria", "all")
    crit = tuple(ALL_CRITERIA) if crit in ("all", None) else tuple(crit)
    times = tuple(float(t) for t in ana.pop("times", ()))
    y_offset = resolve_y_offset(ana.pop("y_offset_deg", None))
    if ana:
        raise ConfigError(f"unknown analysis keys: {sorted(ana)}")
    out_dir = Path(out.pop("dir", "runs/default"))
    if base is not None and not out_dir.is_absolute():
        out_dir = base / out_dir
    return ExperimentSpec(chain=cfg, plan=plan, out_dir=out_dir, times=times, criteria=crit,
                          workers=workers, y_offset=y_offset)


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return spec_from_dict(doc)


def ensemble(spec: ExperimentSpec, checkpoint: Path | None = None, noise_scale: float = 1.0,
             quiet: bool = False) -> MomentAccumulator:
    """Run (or resume from checkpoint) the ensemble of ``spec``."""
    ckpt = spec.checkpoint if checkpoint is None else Path(checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)

    def progress(done, total, elapsed):
        if not quiet and (done == total or done % max(1, total // 10) == 0):
            log.info("%s: %d/%d batches (%.0f s)", ckpt, done, total, elapsed)

    return run_ensemble(spec.chain, spec.plan, workers=spec.workers, checkpoint=ckpt,
                        noise_scale=noise_scale, progress=progress)


# ---- built-in configurations for the reference tables----------------------

CHI_LABEL = {1e-3: "chi1e-3", 1e-2: "chi1e-2"}


def measurement_time(chi: float) -> float:
    return 80.0 if chi >= 1e-2 else 40.0


def builtin_spec(damp_well: int, chi: float, n_trajectories: int = 100_000, seed: int = 20240501,
                 root: Path = Path("runs"), sample_every: float = 0.5, workers: int = 1,
                 y_offset: float = Y_OFFSET) -> ExperimentSpec:
    t = measurement_time(chi)
    if damp_well == 2 and chi < 1e-2:
        t = 40.0
    n_batches = default_batches(n_trajectories)
    cfg = ChainConfig(chi=chi, damp_well=damp_well, dt=1e-3, t_final=t,
                      sample_times=sample_grid(t, sample_every, 1e-3))
    return ExperimentSpec(
        chain=cfg,
        plan=EnsemblePlan(n_trajectories, seed, n_batches),
        out_dir=root / f"loss{damp_well}-{CHI_LABEL.get(chi, f'chi{chi:g}')}-n{n_trajectories}",
        times=(t,),
        workers=workers,
        y_offset=y_offset,
    )


def spec_to_dict(spec: ExperimentSpec) -> dict:
    chain = spec.chain.to_dict()
    return {
        "chain": chain,
        "ensemble": {"n_trajectories": spec.plan.n_trajectories, "base_seed": spec.plan.base_seed,
                     "n_batches": spec.plan.n_batches, "workers": spec.workers},
        "analysis": {"times": list(spec.times), "criteria": list(spec.criteria), "y_offset_deg": spec.y_offset},
        "output": {"dir": str(spec.out_dir)},
    }


def dump_spec(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)
