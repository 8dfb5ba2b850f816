"""Local-spin dynamics for MAXCUT: the tanh (LT) update, the clipped
gradient-descent (GD) update and the mean-field imaginary-time (IMAG) update.

Every round updates all spins from a snapshot of the previous state. A run
stops when the largest per-spin displacement drops below ``threshold`` or
after ``max_rounds`` rounds, then rounds the soft spins to their signs.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .instance import CouplingMatrix, Instance

VARIANTS = ("lt", "gd", "imag")
IMAG_EPS = 1e-12
DEFAULT_THRESHOLD = 1e-6
DEFAULT_MAX_ROUNDS = 10000


@dataclass(frozen=True)
class Hyperparams:
    """Solver settings. ``eta`` is the response in units of ``cbar``."""

    eta: float = 1.0
    beta: float = 0.5
    max_rounds: int = DEFAULT_MAX_ROUNDS
    threshold: float = DEFAULT_THRESHOLD
    variant: str = "lt"
    dtau: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).lower())
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.max_rounds) != self.max_rounds or self.max_rounds < 1:
            raise ValueError(f"max_rounds must be a positive integer, got {self.max_rounds}")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be nonnegative, got {self.threshold}")
        if self.variant == "imag":
            if self.dtau is None or not (self.dtau > 0 and math.isfinite(self.dtau)):
                raise ValueError("the imag variant needs a positive dtau")
        elif self.dtau is not None and not self.dtau > 0:
            raise ValueError(f"dtau must be positive, got {self.dtau}")

    def replace(self, **changes) -> "Hyperparams":
        values = {**self.to_json(), **changes}
        return Hyperparams(**values)

    def to_json(self) -> dict:
        return {"eta": self.eta, "beta": self.beta, "max_rounds": int(self.max_rounds),
                "threshold": self.threshold, "variant": self.variant, "dtau": self.dtau}


@dataclass
class RunResult:
    spins: np.ndarray
    cut: float
    energy: float
    rounds_used: int
    converged: bool
    displacement_trace: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    seed: Optional[int] = None

    def to_json(self, trace: bool = False, timing: bool = True) -> dict:
        out = {"spins": [int(s) for s in self.spins], "cut": self.cut, "energy": self.energy,
               "rounds": self.rounds_used, "converged": self.converged}
        if timing:
            out["wall_time_s"] = self.wall_time
        if trace:
            out["trace"] = list(self.displacement_trace)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "RunResult":
        return cls(spins=np.asarray(data["spins"], dtype=np.int64), cut=float(data["cut"]),
                   energy=float(data["energy"]), rounds_used=int(data["rounds"]),
                   converged=bool(data["converged"]),
                   displacement_trace=list(data.get("trace", [])),
                   wall_time=float(data.get("wall_time_s", 0.0)))


# ---------------------------------------------------------------------------
# Objective and force


def _matrix(J):
    return J.matrix if isinstance(J, CouplingMatrix) else J


def _check_len(v, n):
    if v.shape[0] != n:
        raise ValueError(f"spin vector has length {v.shape[0]}, expected {n}")


def cut_value(inst: Instance, s) -> float:
    """Total weight of edges whose endpoints carry opposite spins."""
    s = np.asarray(s)
    _check_len(s, inst.n)
    rows, cols, w = inst.arrays
    return float(np.sum(w[s[rows] != s[cols]]))


def maxcut_hamiltonian(inst: Instance, s) -> float:
    """``1/4 sum_{i,j} w_ij (s_i s_j - 1)`` over ordered pairs; equals ``-cut``."""
    s = np.asarray(s, dtype=np.float64)
    _check_len(s, inst.n)
    rows, cols, w = inst.arrays
    return float(0.5 * np.sum(w * (s[rows] * s[cols] - 1.0)))


def energy_offset(inst: Instance) -> float:
    """``1/4 sum_{i,j} w_ij``: ``energy(J, s) - offset`` is the MAXCUT Hamiltonian."""
    return 0.5 * inst.total_weight


def energy(J, v) -> float:
    """``1/2 v^T J v`` for soft or hard spins."""
    v = np.asarray(v, dtype=np.float64)
    M = _matrix(J)
    _check_len(v, M.shape[0])
    return float(0.5 * v @ (M @ v))


def force(J, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    M = _matrix(J)
    _check_len(v, M.shape[0])
    return -(M @ v)


def cutoff(x):
    """``sgn(x) * min(1, |x|)``."""
    return np.clip(x, -1.0, 1.0)


def lt_step(v, J, c: float, beta: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.tanh(beta * (v + c * force(J, v)))


def gd_step(v, J, c: float, beta: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return cutoff(beta * (v + c * force(J, v)))


def imag_step(v, J, dtau: float) -> np.ndarray:
    """One mean-field imaginary-time step ``tanh(2 dtau F + artanh v)``.

    Entries at exactly +-1 (floating-point saturation of tanh) are pulled in
    to ``+-(1 - 1e-12)``; anything beyond that range is rejected. The output
    is kept strictly inside (-1, 1) the same way.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.abs(v) <= 1.0):
        raise ValueError("imag_step needs |v_i| <= 1 (artanh diverges outside)")
    return _imag_update(v, _matrix(J) @ v, dtau)


def _imag_update(v, Jv, dtau):
    lim = 1.0 - IMAG_EPS
    u = np.arctanh(np.clip(v, -lim, lim)) - 2.0 * dtau * Jv
    return np.clip(np.tanh(u), -lim, lim)


def round_spins(v) -> np.ndarray:
    """Sign of each soft spin, with exact zeros sent to +1."""
    v = np.asarray(v)
    return np.where(v < 0, -1, 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Runs


def derive_seed(master_seed: int, index: int) -> int:
    """Seed for restart/trial ``index`` of ``master_seed`` (64-bit)."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def initial_state(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-1.0, 1.0, n)


def _update_fn(inst: Instance, hp: Hyperparams):
    if hp.variant == "imag":
        J = inst.coupling.matrix
        return lambda V: _imag_update(V, J @ V, hp.dtau)
    K = inst.normalized_coupling
    act = np.tanh if hp.variant == "lt" else cutoff
    eta, beta = hp.eta, hp.beta
    return lambda V: act(beta * (V - eta * (K @ V)))


def evolve(inst: Instance, hp: Hyperparams, V0: np.ndarray, record_trace: bool = True):
    """Iterate the update on the columns of ``V0`` (shape ``(n, M)``).

    Columns stop independently once converged; a column's result does not
    depend on which other columns share the batch.
    Returns ``(V, rounds, converged, traces)``.
    """
    step = _update_fn(inst, hp)
    V = np.array(V0, dtype=np.float64, order="C", copy=True)
    if V.ndim != 2 or V.shape[0] != inst.n:
        raise ValueError(f"initial states must have shape (n={inst.n}, M)")
    M = V.shape[1]
    rounds = np.zeros(M, dtype=np.int64)
    converged = np.zeros(M, dtype=bool)
    history = []
    active = np.arange(M)
    thr = hp.threshold
    for _ in range(int(hp.max_rounds)):
        if active.size == 0:
            break
        cur = np.ascontiguousarray(V[:, active])
        new = step(cur)
        disp = np.max(np.abs(new - cur), axis=0)
        V[:, active] = new
        rounds[active] += 1
        if record_trace:
            history.append((active, disp))
        done = (disp < thr) | (disp == 0.0)
        converged[active[done]] = True
        active = active[~done]
    traces = [[] for _ in range(M)]
    for idx, disp in history:
        for k, d in zip(idx.tolist(), disp.tolist()):
            traces[k].append(d)
    return V, rounds, converged, traces


def run_batch(inst: Instance, hp: Hyperparams, seeds: Sequence[int], record_trace: bool = True,
              initial: Optional[np.ndarray] = None) -> List[RunResult]:
    """Independent runs, one per seed, evaluated together."""
    if initial is None:
        V0 = np.column_stack([initial_state(inst.n, s) for s in seeds]) if len(seeds) else np.zeros((inst.n, 0))
    else:
        V0 = np.asarray(initial, dtype=np.float64).reshape(inst.n, -1)
    start = time.perf_counter()
    V, rounds, conv, traces = evolve(inst, hp, V0, record_trace)
    elapsed = time.perf_counter() - start
    J = inst.coupling
    total_rounds = max(int(rounds.sum()), 1)
    out = []
    for k in range(V.shape[1]):
        s = round_spins(V[:, k])
        out.append(RunResult(spins=s, cut=cut_value(inst, s), energy=energy(J, s),
                             rounds_used=int(rounds[k]), converged=bool(conv[k]),
                             displacement_trace=traces[k],
                             wall_time=elapsed * int(rounds[k]) / total_rounds,
                             seed=None if initial is not None else int(seeds[k])))
    return out


def run(inst: Instance, hp: Hyperparams, seed: int, record_trace: bool = True,
        initial: Optional[np.ndarray] = None) -> RunResult:
    """Single seeded run from ``v0 ~ Uniform[-1, 1]^n`` (or ``initial``)."""
    return run_batch(inst, hp, [seed], record_trace, initial)[0]


def run_restarts(inst: Instance, hp: Hyperparams, master_seed: int, restarts: int,
                 threads: int = 1, record_trace: bool = False) -> List[RunResult]:
    """``restarts`` independent runs; restart ``k`` uses ``derive_seed(master_seed, k)``.

    Results are in restart order and identical for any ``threads``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    seeds = [derive_seed(master_seed, k) for k in range(restarts)]
    threads = max(1, min(int(threads), restarts))
    if threads == 1:
        return run_batch(inst, hp, seeds, record_trace)
    chunks = [c.tolist() for c in np.array_split(np.asarray(seeds, dtype=np.uint64), threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda c: run_batch(inst, hp, [int(s) for s in c], record_trace), chunks)
    return [r for part in parts for r in part]


def best_result(results: Sequence[RunResult]) -> RunResult:
    """Largest cut; ties go to the earliest restart."""
    best = results[0]
    for r in results[1:]:
        if r.cut > best.cut:
            best = r
    return best
