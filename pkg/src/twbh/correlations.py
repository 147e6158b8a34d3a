"""Gaussian quadrature criteria on a moment snapshot.

Quadrature convention: X_j(theta) = a_j e^{-i theta} + a_j^dag e^{i theta},
Y_j(theta) = X_j(theta + 90 deg) (the ``y_offset`` keyword, kept for
reproducing tables computed with another offset). All public angles are in degrees and wells
are 1-based. A linear combination sum_k c_k X_k(theta_k) is represented by the
complex vector u_k = c_k e^{-i theta_k}; then

    Cov(Q_u, Q_v) = 2 Re(u^T C v) + 2 Re(u^H D v)

with C = <da da^T>, D = <da^* da^T> the central moment blocks.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
DEGENERATE_FLOOR = 1e-12

Y_OFFSET = 90.0
# pi/2 added to an angle held in degrees: a unit mix-up under which Y sits 1.57
# degrees from X. Tables produced that way are reproduced with this offset.
LEGACY_Y_OFFSET = math.pi / 2


class DegenerateInferrer(ArithmeticError):
    pass


def below(value: float, bound: float) -> bool:
    """Strict violation test; a margin of 1e-9 keeps rounding at the boundary from counting."""
    return value < bound * (1.0 - 1e-9)


@dataclass(frozen=True)
class CorrelationSnapshot:
    m: np.ndarray
    C: np.ndarray
    D: np.ndarray
    n: int = 0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=complex)
        C = np.asarray(self.C, dtype=complex)
        D = np.asarray(self.D, dtype=complex)
        k = m.shape[0]
        if C.shape != (k, k) or D.shape != (k, k):
            raise ValueError("moment blocks do not match the mean vector")
        scale = 1e-9 * max(1.0, np.abs(C).max(initial=0.0), np.abs(D).max(initial=0.0))
        if np.abs(C - C.T).max(initial=0.0) > scale:
            raise ValueError("C is not symmetric")
        if np.abs(D - D.conj().T).max(initial=0.0) > scale:
            raise ValueError("D is not Hermitian")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_modes(self) -> int:
        return self.m.shape[0]

    @classmethod
    def vacuum(cls, n_modes: int = 3, m=None) -> "CorrelationSnapshot":
        """Coherent state (vacuum noise) with optional mean amplitudes."""
        m = np.zeros(n_modes, dtype=complex) if m is None else m
        return cls(m=m, C=np.zeros((n_modes, n_modes)), D=0.5 * np.eye(n_modes))

    @classmethod
    def from_samples(cls, alpha: np.ndarray) -> "CorrelationSnapshot":
        """Moments of Wigner samples, shape (n_samples, n_modes)."""
        alpha = np.asarray(alpha, dtype=complex)
        n = alpha.shape[0]
        m = alpha.mean(axis=0)
        d = alpha - m
        return cls(m=m, C=d.T @ d / n, D=d.conj().T @ d / n, n=n)

    def permuted(self, order: Sequence[int]) -> "CorrelationSnapshot":
        """Snapshot with modes relabelled: new mode k is old mode order[k] (0-based)."""
        p = np.asarray(order)
        return CorrelationSnapshot(self.m[p], self.C[np.ix_(p, p)], self.D[np.ix_(p, p)], self.n)

    def mirrored(self) -> "CorrelationSnapshot":
        return self.permuted(range(self.n_modes - 1, -1, -1))

    def populations(self) -> np.ndarray:
        return np.abs(self.m) ** 2 + self.D.diagonal().real - 0.5


def _vec(snap: CorrelationSnapshot, terms) -> np.ndarray:
    """terms: iterable of (well, coefficient, angle_deg)."""
    u = np.zeros(snap.n_modes, dtype=complex)
    for well, c, theta in terms:
        u[well - 1] += c * np.exp(-1j * math.radians(theta))
    return u


def _cov(snap: CorrelationSnapshot, u: np.ndarray, v: np.ndarray) -> float:
    return 2.0 * float((u @ snap.C @ v).real + (u.conj() @ snap.D @ v).real)


def quad_cov(snap: CorrelationSnapshot, i: int, theta_i: float, j: int, theta_j: float) -> float:
    """V(X_i(theta_i), X_j(theta_j))."""
    return _cov(snap, _vec(snap, [(i, 1.0, theta_i)]), _vec(snap, [(j, 1.0, theta_j)]))


def quad_var(snap: CorrelationSnapshot, i: int, theta: float) -> float:
    return quad_cov(snap, i, theta, i, theta)


def duan_simon(snap: CorrelationSnapshot, i: int, j: int, theta: float, theta_j: float | None = None,
               y_offset: float = Y_OFFSET) -> float:
    """V(X_i + X_j) + V(Y_i - Y_j); >= 4 for separable states."""
    tj = theta if theta_j is None else theta_j
    x = _vec(snap, [(i, 1.0, theta), (j, 1.0, tj)])
    y = _vec(snap, [(i, 1.0, theta + y_offset), (j, -1.0, tj + y_offset)])
    return _cov(snap, x, x) + _cov(snap, y, y)


def _inferred(snap, target, helper):
    vh = _cov(snap, helper, helper)
    if vh < DEGENERATE_FLOOR:
        raise DegenerateInferrer(f"inferring variance {vh:.3g} is degenerate")
    return _cov(snap, target, target) - _cov(snap, target, helper) ** 2 / vh


def reid_epr(snap: CorrelationSnapshot, i: int, j: int, theta: float, theta_j: float | None = None,
             y_offset: float = Y_OFFSET) -> float:
    """EPR_ij: product of the inferred X and Y variances of mode i given mode j."""
    tj = theta if theta_j is None else theta_j
    vx = _inferred(snap, _vec(snap, [(i, 1.0, theta)]), _vec(snap, [(j, 1.0, tj)]))
    vy = _inferred(snap, _vec(snap, [(i, 1.0, theta + y_offset)]), _vec(snap, [(j, 1.0, tj + y_offset)]))
    return vx * vy


def vlf_gain(snap: CorrelationSnapshot, i: int, j: int, k: int, theta: float, y_offset: float = Y_OFFSET) -> float:
    """Gain on Y_k minimising V(Y_i + Y_j + g Y_k)."""
    ty = theta + y_offset
    yk = _vec(snap, [(k, 1.0, ty)])
    vk = _cov(snap, yk, yk)
    if vk < DEGENERATE_FLOOR:
        raise DegenerateInferrer(f"V(Y_{k}) = {vk:.3g} is degenerate")
    yij = _vec(snap, [(i, 1.0, ty), (j, 1.0, ty)])
    return -_cov(snap, yk, yij) / vk


def vlf_pair(snap: CorrelationSnapshot, i: int, j: int, k: int, theta: float, gain: float | None = None,
             y_offset: float = Y_OFFSET):
    """(V_ij, g_k) with V_ij = V(X_i - X_j) + V(Y_i + Y_j + g_k Y_k)."""
    g = vlf_gain(snap, i, j, k, theta, y_offset) if gain is None else gain
    ty = theta + y_offset
    x = _vec(snap, [(i, 1.0, theta), (j, -1.0, theta)])
    y = _vec(snap, [(i, 1.0, ty), (j, 1.0, ty), (k, g, ty)])
    return _cov(snap, x, x) + _cov(snap, y, y), g


def vlf_triple(snap: CorrelationSnapshot, i: int, j: int, k: int, theta: float, y_offset: float = Y_OFFSET) -> float:
    r = 1.0 / math.sqrt(2.0)
    ty = theta + y_offset
    x = _vec(snap, [(i, 1.0, theta), (j, -r, theta), (k, -r, theta)])
    y = _vec(snap, [(i, 1.0, ty), (j, r, ty), (k, r, ty)])
    return _cov(snap, x, x) + _cov(snap, y, y)


def obr(snap: CorrelationSnapshot, i: int, j: int, k: int, theta: float, sign: int | None = None,
        y_offset: float = Y_OFFSET) -> float:
    """Product of the inferred variances of mode i given X_j +/- X_k.

    sign=None takes the smaller of the two sign choices; sign=0 drops mode k,
    which reduces to reid_epr(i, j).
    """
    if sign is None:
        return min(obr(snap, i, j, k, theta, +1, y_offset), obr(snap, i, j, k, theta, -1, y_offset))
    ty = theta + y_offset
    vx = _inferred(snap, _vec(snap, [(i, 1.0, theta)]), _vec(snap, [(j, 1.0, theta), (k, sign, theta)]))
    vy = _inferred(snap, _vec(snap, [(i, 1.0, ty)]), _vec(snap, [(j, 1.0, ty), (k, sign, ty)]))
    return vx * vy


def obr_sign(snap: CorrelationSnapshot, i: int, j: int, k: int, theta: float, y_offset: float = Y_OFFSET) -> int:
    return +1 if obr(snap, i, j, k, theta, +1, y_offset) <= obr(snap, i, j, k, theta, -1, y_offset) else -1


def teh_reid_classify(pairwise: Sequence[float] | None = None, triple: Sequence[float] | None = None,
                      obr_values: Sequence[float] | None = None) -> dict:
    """Threshold flags for tripartite inseparability, entanglement and steering."""
    flags = {"tripartite_inseparable": False, "genuine_entanglement": False, "genuine_steering": False}
    if pairwise is not None:
        pw = list(pairwise)
        total = sum(pw)
        flags["pairwise_violations"] = sum(below(v, 4) for v in pw)
        flags["pairwise_sum"] = total
        flags["tripartite_inseparable"] |= flags["pairwise_violations"] >= 2
        flags["genuine_entanglement"] |= below(total, 8)
        flags["genuine_steering"] |= below(total, 4)
    if triple is not None:
        best = min(triple)
        flags["tripartite_inseparable"] |= below(best, 4)
        flags["genuine_entanglement"] |= below(best, 2)
        flags["genuine_steering"] |= below(best, 1)
    if obr_values is not None and below(min(obr_values), 1):
        # steering is a subset of entanglement
        flags["genuine_steering"] = True
        flags["genuine_entanglement"] = True
        flags["tripartite_inseparable"] = True
    return flags


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float):
    """Minimise a unimodal f on [a, b] to bracket width ``tol``; returns (x, f(x))."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def angle_grid(step: float = 0.5) -> np.ndarray:
    return np.arange(0.0, 180.0, step)


def optimize_angle(f: Callable[[float], float], step: float = 0.5, tol: float = 0.01):
    """Minimise a 180-degree periodic criterion over the quadrature angle.

    Grid scan, then golden-section refinement inside the neighbouring grid
    cells. Near-ties resolve to the smallest angle. Returns (theta_deg, value).
    """
    grid = angle_grid(step)
    vals = np.array([f(t) for t in grid])
    best = vals.min()
    eps = 1e-12 * max(1.0, abs(best))
    k = int(np.flatnonzero(vals <= best + eps)[0])
    theta, value = golden_section(f, grid[k] - step, grid[k] + step, tol)
    if not value < vals[k] - eps:
        return float(grid[k]), float(vals[k])
    return float(theta % 180.0), float(value)


# ---- named criteria and reports -------------------------------------------

_NAME = re.compile(r"^(VX|DS|EPR|OBR|V)(\d+)$")

CLASSICAL_BOUND = {"VX": 1.0, "DS": 4.0, "EPR": 1.0, "V": 4.0, "OBR": 1.0}


def _third(n_modes, i, j):
    rest = [m for m in range(1, n_modes + 1) if m not in (i, j)]
    if len(rest) != 1:
        raise ValueError("pairwise tripartite criteria need exactly three modes")
    return rest[0]


def criterion(name: str, n_modes: int = 3,
              y_offset: float = Y_OFFSET) -> tuple[str, Callable[[CorrelationSnapshot, float], float]]:
    """Resolve a table label (VX1, DS12, EPR21, V12, V231, OBR123) to (kind, f(snap, theta))."""
    m = _NAME.match(name)
    if not m:
        raise ValueError(f"unknown criterion {name!r}")
    kind, digits = m.group(1), [int(c) for c in m.group(2)]
    if any(not 1 <= d <= n_modes for d in digits) or len(set(digits)) != len(digits):
        raise ValueError(f"bad mode labels in {name!r}")
    if kind == "VX" and len(digits) == 1:
        (i,) = digits
        return kind, lambda s, t: quad_var(s, i, t)
    if kind in ("DS", "EPR") and len(digits) == 2:
        i, j = digits
        fn = duan_simon if kind == "DS" else reid_epr
        return kind, lambda s, t: fn(s, i, j, t, y_offset=y_offset)
    if kind == "V" and len(digits) == 2:
        i, j = digits
        k = _third(n_modes, i, j)
        return kind, lambda s, t: vlf_pair(s, i, j, k, t, y_offset=y_offset)[0]
    if kind == "V" and len(digits) == 3:
        i, j, k = digits
        return "Vijk", lambda s, t: vlf_triple(s, i, j, k, t, y_offset)
    if kind == "OBR" and len(digits) == 3:
        i, j, k = digits
        return kind, lambda s, t: obr(s, i, j, k, t, y_offset=y_offset)
    raise ValueError(f"unknown criterion {name!r}")


def bound_for(name: str) -> float:
    kind = _NAME.match(name).group(1)
    return CLASSICAL_BOUND[kind]


TABLE_CRITERIA = {
    "bipartite": ["VX1", "VX2", "VX3", "DS12", "DS13", "DS23"],
    "epr": ["EPR12", "EPR21", "EPR23", "EPR32", "EPR13", "EPR31"],
    "tripartite": ["V12", "V13", "V23", "V123", "V231", "V312"],
    "obr": ["OBR123", "OBR231", "OBR312"],
}
ALL_CRITERIA = [c for group in TABLE_CRITERIA.values() for c in group]


@dataclass
class CriterionResult:
    name: str
    value: float
    angle: float
    error: float
    bound: float
    violated: bool
    extra: dict = field(default_factory=dict)

    def label(self) -> str:
        return f"{self.value:.2f}@{round(self.angle) % 180}"


@dataclass
class CriteriaReport:
    time: float
    n_samples: int
    results: list[CriterionResult]
    classification: dict
    y_offset: float = Y_OFFSET

    def __getitem__(self, name: str) -> CriterionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(
            {"time": self.time, "n_samples": self.n_samples, "y_offset_deg": self.y_offset,
             "results": [asdict(r) for r in self.results], "classification": self.classification},
            indent=2, default=_jsonable,
        )

    CSV_COLUMNS = ("criterion", "value", "angle", "error", "bound", "violated", "table_entry", "extra")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.results:
            w.writerow([r.name, repr(r.value), repr(r.angle), repr(r.error), r.bound, int(r.violated),
                        r.label(), json.dumps(r.extra, default=_jsonable, sort_keys=True)])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    raise TypeError(type(x))


def batch_error(f: Callable[[CorrelationSnapshot, float], float], batches: Sequence[CorrelationSnapshot],
                theta: float) -> float:
    if len(batches) < 2:
        return math.nan
    vals = []
    for b in batches:
        try:
            vals.append(f(b, theta))
        except DegenerateInferrer:
            continue
    if len(vals) < 2:
        return math.nan
    return float(np.std(vals, ddof=1) / math.sqrt(len(vals)))


def evaluate(name: str, snap: CorrelationSnapshot, batches: Sequence[CorrelationSnapshot] = (),
             y_offset: float = Y_OFFSET) -> CriterionResult:
    kind, f = criterion(name, snap.n_modes, y_offset)
    theta, value = optimize_angle(lambda t: f(snap, t))
    extra = {}
    digits = [int(c) for c in _NAME.match(name).group(2)]
    if kind == "V":
        i, j = digits
        extra["gain"] = vlf_gain(snap, i, j, _third(snap.n_modes, i, j), theta, y_offset)
    elif kind == "OBR":
        extra["sign"] = obr_sign(snap, *digits, theta, y_offset)
    bound = bound_for(name)
    return CriterionResult(name=name, value=value, angle=theta, error=batch_error(f, batches, theta),
                           bound=bound, violated=below(value, bound), extra=extra)


def analyze(snap: CorrelationSnapshot, batches: Sequence[CorrelationSnapshot] = (),
            names: Sequence[str] | None = None, time: float = math.nan,
            y_offset: float = Y_OFFSET) -> CriteriaReport:
    """Optimise every requested criterion over the common quadrature angle."""
    names = list(ALL_CRITERIA if names is None else names)
    results = [evaluate(nm, snap, batches, y_offset) for nm in names]
    by = {r.name: r for r in results}
    cls: dict = {
        "squeezed": {nm: by[nm].violated for nm in by if nm.startswith("VX")},
        "ds_inseparable": {nm: by[nm].violated for nm in by if nm.startswith("DS")},
        "epr_steerable": {nm: by[nm].violated for nm in by if nm.startswith("EPR")},
    }
    pair = [by[nm].value for nm in ("V12", "V13", "V23") if nm in by]
    triple = [by[nm].value for nm in ("V123", "V231", "V312") if nm in by]
    obrs = [by[nm].value for nm in ("OBR123", "OBR231", "OBR312") if nm in by]
    cls["tripartite"] = teh_reid_classify(pair if len(pair) == 3 else None, triple or None, obrs or None)
    return CriteriaReport(time=time, n_samples=snap.n, results=results, classification=cls, y_offset=y_offset)
