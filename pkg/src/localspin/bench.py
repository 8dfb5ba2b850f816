"""Benchmark harness: median energy, time to solution, and how well simple
instance statistics predict runtime (normalized conditional entropy).
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .instance import FamilySpec, Instance, generate, stats
from .oracle import MAX_N, brute_force
from .solver import Hyperparams, derive_seed, run, run_restarts
from .tuner import default_hyperparams, median, refine_beta

log = logging.getLogger(__name__)

TIMEOUT = math.inf
PREDICTORS = ("n", "m", "m_bar", "mu")
# reference LT entropies shown next to measured values; not a target
REFERENCE_ENTROPY = {"n": 0.69, "m": 0.63, "m_bar": 0.59, "mu": 0.53}


@dataclass(frozen=True)
class BenchConfig:
    restarts_for_median: int = 30
    timeout: float = 1000.0
    tuning_budget: float = 20.0
    runtime_min: float = 0.01
    runtime_max: float = 1000.0
    runtime_bins: int = 20
    predictor_bins: int = 20
    tts_trials: int = 10
    max_restarts: Optional[int] = None
    tune: bool = True
    tuning_runs: int = 30
    oracle_max_n: int = MAX_N
    base: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        for name in ("restarts_for_median", "timeout", "tuning_budget", "runtime_min", "runtime_max",
                     "runtime_bins", "predictor_bins", "tts_trials", "tuning_runs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.runtime_max <= self.runtime_min:
            raise ValueError("runtime_max must exceed runtime_min")


@dataclass
class BenchRecord:
    instance_id: str
    n: int
    m: float = float("nan")
    m_bar: float = float("nan")
    mu: float = float("nan")
    median_energy: Optional[float] = None
    best_cut: Optional[float] = None
    optimum_known: Optional[float] = None
    hyperparams: Optional[dict] = None
    time_to_solution: Optional[float] = None
    restarts_to_solution: Optional[float] = None
    tuning_time: Optional[float] = None
    error: Optional[str] = None

    TIMING_FIELDS = ("time_to_solution", "restarts_to_solution", "tuning_time")

    def predictor(self, name: str) -> float:
        return float(getattr(self, name))

    def to_json(self, timing: bool = True) -> dict:
        out = {"instance_id": self.instance_id, "n": self.n, "m": self.m, "m_bar": self.m_bar,
               "mu": self.mu, "median_energy": self.median_energy, "best_cut": self.best_cut,
               "optimum_known": self.optimum_known, "hyperparams": self.hyperparams}
        if timing:
            tts = self.time_to_solution
            out["time_to_solution"] = "TIMEOUT" if tts is not None and math.isinf(tts) else tts
            out["restarts_to_solution"] = self.restarts_to_solution
            out["tuning_time"] = self.tuning_time
        out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, data: dict) -> "BenchRecord":
        kw = dict(data)
        if kw.get("time_to_solution") == "TIMEOUT":
            kw["time_to_solution"] = TIMEOUT
        return cls(**kw)


@dataclass
class EntropyReport:
    values: Dict[str, float]
    samples: int

    def to_json(self) -> dict:
        return {"predictors": [{"predictor": p, "normalized_conditional_entropy": self.values.get(p),
                                "reference_lt": REFERENCE_ENTROPY[p]} for p in PREDICTORS],
                "samples": self.samples}


@dataclass
class BenchReport:
    records: List[BenchRecord]
    entropy: Optional[EntropyReport] = None

    def to_json(self, timing: bool = True) -> dict:
        out = {"records": [r.to_json(timing) for r in self.records]}
        if timing:
            out["entropy"] = self.entropy.to_json() if self.entropy is not None else None
        return out

    def to_csv(self, timing: bool = True) -> str:
        return records_csv(self.records, timing)


# ---------------------------------------------------------------------------
# Measurements


def median_energy(inst: Instance, hp: Hyperparams, M: int, master_seed: int, threads: int = 1) -> float:
    """Median final energy of ``M`` seeded restarts (even ``M``: mean of the middle two)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return median([r.energy for r in run_restarts(inst, hp, master_seed, M, threads)])


@dataclass
class TrialOutcome:
    seconds: float
    restarts: Optional[int]


def _solve_trial(inst, hp, optimum, timeout, trial_seed, max_restarts) -> TrialOutcome:
    target = optimum - 1e-9 * max(1.0, abs(optimum))
    start = time.perf_counter()
    k = 0
    while max_restarts is None or k < max_restarts:
        r = run(inst, hp, derive_seed(trial_seed, k), record_trace=False)
        k += 1
        elapsed = time.perf_counter() - start
        if r.cut >= target:
            return TrialOutcome(elapsed, k)
        if elapsed > timeout:
            break
    return TrialOutcome(TIMEOUT, None)


def time_to_solution_trials(inst: Instance, hp: Hyperparams, optimum: float, timeout: float,
                            master_seed: int, trials: int = 10,
                            max_restarts: Optional[int] = None) -> List[TrialOutcome]:
    return [_solve_trial(inst, hp, optimum, timeout, derive_seed(master_seed, t), max_restarts)
            for t in range(trials)]


def time_to_solution(inst: Instance, hp: Hyperparams, optimum: float, timeout: float = 1000.0,
                     master_seed: int = 0, trials: int = 10,
                     max_restarts: Optional[int] = None) -> float:
    """Median wall time over ``trials`` to first reach ``optimum``.

    Each trial runs seeded restarts one after another until a cut reaches
    the optimum. A trial that exceeds ``timeout`` seconds (or
    ``max_restarts``) counts as ``TIMEOUT`` (``inf``), so the median is
    ``TIMEOUT`` once at least half the trials time out.
    """
    outcomes = time_to_solution_trials(inst, hp, optimum, timeout, master_seed, trials, max_restarts)
    return median([o.seconds for o in outcomes])


# ---------------------------------------------------------------------------
# Conditional entropy


def runtime_bin(t: float, cfg: BenchConfig) -> int:
    """Logarithmic bins over ``[runtime_min, runtime_max]``; index ``runtime_bins`` is the timeout bin."""
    if t is None or math.isinf(t) or t > cfg.runtime_max:
        return cfg.runtime_bins
    t = max(t, cfg.runtime_min)
    frac = math.log(t / cfg.runtime_min) / math.log(cfg.runtime_max / cfg.runtime_min)
    return min(int(frac * cfg.runtime_bins), cfg.runtime_bins - 1)


def predictor_bins(y: Sequence[float], bins: int) -> np.ndarray:
    """Equal-width bins over the observed range of ``y``."""
    y = np.asarray(y, dtype=np.float64)
    lo, hi = float(y.min()), float(y.max())
    if hi == lo:
        return np.zeros(y.size, dtype=np.int64)
    idx = np.floor((y - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def conditional_entropy_bits(target_labels: Sequence, given_labels: Sequence) -> float:
    """Empirical ``H(target | given)`` in bits."""
    if len(target_labels) != len(given_labels):
        raise ValueError("label sequences differ in length")
    if len(target_labels) == 0:
        raise ValueError("empty input")
    total = len(target_labels)
    joint: Dict[tuple, int] = {}
    marg: Dict[object, int] = {}
    for x, y in zip(target_labels, given_labels):
        joint[(x, y)] = joint.get((x, y), 0) + 1
        marg[y] = marg.get(y, 0) + 1
    h = 0.0
    for (x, y), c in joint.items():
        h -= (c / total) * math.log2(c / marg[y])
    return max(h, 0.0)


def conditional_entropy(runtimes: Sequence[float], predictor: Sequence[float],
                        cfg: Optional[BenchConfig] = None) -> float:
    """``H(runtime | predictor)`` normalized by ``log2`` of the runtime bin count (21)."""
    cfg = cfg or BenchConfig()
    if len(runtimes) != len(predictor):
        raise ValueError("runtime and predictor lists differ in length")
    if len(runtimes) == 0:
        raise ValueError("empty input")
    rt = [runtime_bin(t, cfg) for t in runtimes]
    pb = predictor_bins(predictor, cfg.predictor_bins).tolist()
    return conditional_entropy_bits(rt, pb) / math.log2(cfg.runtime_bins + 1)


def entropy_report(records: Sequence[BenchRecord], cfg: BenchConfig) -> EntropyReport:
    usable = [r for r in records if r.error is None and r.time_to_solution is not None]
    if not usable:
        return EntropyReport({}, 0)
    rts = [r.time_to_solution for r in usable]
    values = {p: conditional_entropy(rts, [r.predictor(p) for r in usable], cfg) for p in PREDICTORS}
    return EntropyReport(values, len(usable))


# ---------------------------------------------------------------------------
# Suites

SuiteItem = Union[Instance, tuple]


def _materialize(item: SuiteItem):
    if isinstance(item, Instance):
        label = item.family or "instance"
        return (f"{label}#{item.seed}" if item.seed is not None else label), item
    spec, seed = item
    if not isinstance(spec, FamilySpec):
        raise TypeError(f"suite items must be Instance or (FamilySpec, seed), got {item!r}")
    return f"{spec.tag}#{seed}", generate(spec, seed)


def bench_instance(item: SuiteItem, cfg: BenchConfig, master_seed: int) -> BenchRecord:
    try:
        iid, inst = _materialize(item)
    except Exception as exc:  # recorded, not fatal to the suite
        return BenchRecord(instance_id=str(item), n=0, error=f"{type(exc).__name__}: {exc}")
    rec = BenchRecord(instance_id=iid, n=inst.n)
    try:
        st = stats(inst)
        rec.m, rec.m_bar, rec.mu = st.m, st.m_bar, st.mu
        hp = default_hyperparams(inst, base=cfg.base)
        t0 = time.perf_counter()
        if cfg.tune:
            hp = refine_beta(inst, hp, cfg.tuning_runs, master_seed).hyperparams(hp)
        rec.tuning_time = time.perf_counter() - t0
        if rec.tuning_time > cfg.tuning_budget:
            log.warning("%s: tuning took %.1fs, over the %.1fs budget", iid, rec.tuning_time, cfg.tuning_budget)
        rec.hyperparams = hp.to_json()
        results = run_restarts(inst, hp, master_seed, cfg.restarts_for_median)
        rec.median_energy = median([r.energy for r in results])
        rec.best_cut = max(r.cut for r in results)
        if inst.n <= cfg.oracle_max_n:
            rec.optimum_known = brute_force(inst).max_cut
            outcomes = time_to_solution_trials(inst, hp, rec.optimum_known, cfg.timeout,
                                               derive_seed(master_seed, 1), cfg.tts_trials, cfg.max_restarts)
            rec.time_to_solution = median([o.seconds for o in outcomes])
            counts = [math.inf if o.restarts is None else o.restarts for o in outcomes]
            rec.restarts_to_solution = median(counts)
            if math.isinf(rec.restarts_to_solution):
                rec.restarts_to_solution = None
    except Exception as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("%s failed: %s", iid, rec.error)
    return rec


def run_benchmark(suite: Sequence[SuiteItem], cfg: Optional[BenchConfig] = None, master_seed: int = 0,
                  threads: int = 1) -> BenchReport:
    """Benchmark every suite item; records come back in suite order."""
    cfg = cfg or BenchConfig()
    if threads > 1 and len(suite) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda it: bench_instance(it, cfg, master_seed), suite))
    else:
        records = [bench_instance(it, cfg, master_seed) for it in suite]
    return BenchReport(records, entropy_report(records, cfg) if records else None)


# ---------------------------------------------------------------------------
# Serialization

CSV_FIELDS = ("instance_id", "n", "m", "m_bar", "mu", "median_energy", "best_cut", "optimum_known",
              "eta", "beta", "variant", "time_to_solution", "restarts_to_solution", "tuning_time", "error")


def records_csv(records: Sequence[BenchRecord], timing: bool = True) -> str:
    fields = [f for f in CSV_FIELDS if timing or f not in BenchRecord.TIMING_FIELDS]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in records:
        row = r.to_json(timing)
        hp = row.pop("hyperparams") or {}
        row.update(eta=hp.get("eta"), beta=hp.get("beta"), variant=hp.get("variant"))
        writer.writerow({k: ("" if row.get(k) is None else _csv_value(row[k])) for k in fields})
    return buf.getvalue()


def _csv_value(v):
    return repr(v) if isinstance(v, float) else v


def _maybe_float(s: str):
    if s == "":
        return None
    if s == "TIMEOUT":
        return TIMEOUT
    return float(s)


def load_records_csv(text: str) -> List[BenchRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        hp = None
        if row.get("eta"):
            hp = {"eta": float(row["eta"]), "beta": float(row["beta"]), "variant": row["variant"]}
        out.append(BenchRecord(
            instance_id=row["instance_id"], n=int(row["n"]),
            m=float(row["m"]) if row["m"] else float("nan"),
            m_bar=float(row["m_bar"]) if row["m_bar"] else float("nan"),
            mu=float(row["mu"]) if row["mu"] else float("nan"),
            median_energy=_maybe_float(row["median_energy"]), best_cut=_maybe_float(row["best_cut"]),
            optimum_known=_maybe_float(row["optimum_known"]), hyperparams=hp,
            time_to_solution=_maybe_float(row.get("time_to_solution", "")),
            restarts_to_solution=_maybe_float(row.get("restarts_to_solution", "")),
            tuning_time=_maybe_float(row.get("tuning_time", "")),
            error=row["error"] or None))
    return out


def load_report_json(text: str) -> BenchReport:
    data = json.loads(text)
    records = [BenchRecord.from_json(r) for r in data["records"]]
    ent = data.get("entropy")
    entropy = None
    if ent:
        entropy = EntropyReport({p["predictor"]: p["normalized_conditional_entropy"] for p in ent["predictors"]
                                 if p["normalized_conditional_entropy"] is not None}, ent["samples"])
    return BenchReport(records, entropy)
