"""Exact MAXCUT by exhaustive enumeration, for small instances.

Vertex 0 is pinned to +1 (global flip symmetry), leaving ``2**(n-1)``
configurations. The remaining vertices are split into a low block, whose
``2**L`` configurations are tabulated once, and a high block walked in
Gray-code order. Each Gray step flips one high spin and updates the high
block's internal cut and the field it exerts on the low block
incrementally, so every high configuration costs one ``2**L x L`` product.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .instance import Instance
from .solver import cut_value

MAX_N = 28
LOW_BITS = 16
REL_TOL = 1e-9


class OracleCapError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass
class ExactSolution:
    max_cut: float
    argmax_spins: np.ndarray
    num_optima: int

    def to_json(self) -> dict:
        return {"max_cut": self.max_cut, "spins": [int(s) for s in self.argmax_spins],
                "num_optima": self.num_optima}

    @classmethod
    def from_json(cls, data: dict) -> "ExactSolution":
        return cls(float(data["max_cut"]), np.asarray(data["spins"], dtype=np.int64),
                   int(data["num_optima"]))


def _is_integral(w: np.ndarray) -> bool:
    return bool(np.all(np.mod(w, 1.0) == 0.0) and np.all(np.abs(w) < 2**40))


def _tol(value: float, integral: bool) -> float:
    return 0.0 if integral else REL_TOL * max(1.0, abs(value))


def _sign_table(bits: int) -> np.ndarray:
    """``(2**bits, bits)`` array of spins; bit k of the row index set -> -1."""
    codes = np.arange(2**bits, dtype=np.int64)[:, None]
    return np.where((codes >> np.arange(bits)) & 1, -1.0, 1.0)


def _gray(k: int) -> int:
    return k ^ (k >> 1)


class _Layout:
    def __init__(self, inst: Instance, low_bits: int):
        n = inst.n
        self.n = n
        self.L = min(low_bits, n - 1)
        self.H = n - 1 - self.L
        W = inst.coupling.dense() * 2.0
        self.W = W
        low = np.arange(1, 1 + self.L)
        high = np.arange(1 + self.L, n)
        self.low, self.high = low, high
        S = _sign_table(self.L)
        self.S_low = S
        # cut among {0} + low block, for every low configuration
        full = np.hstack([np.ones((S.shape[0], 1)), S])
        Wl = W[np.ix_(np.r_[0, low], np.r_[0, low])]
        self.low_cut = 0.25 * (np.sum(Wl) - np.einsum("ki,ij,kj->k", full, Wl, full))
        # coupling between high vertices and {0} + low
        self.W_hl = W[np.ix_(high, low)]
        self.w_h0 = W[high, 0]
        self.W_hh = W[np.ix_(high, high)]

    def high_spins(self, code: int) -> np.ndarray:
        return np.where((code >> np.arange(self.H)) & 1, -1.0, 1.0)

    def scratch(self, code: int):
        """High-block internal cut plus the field terms for one high config."""
        sh = self.high_spins(code)
        hh = 0.25 * (np.sum(self.W_hh) - sh @ self.W_hh @ sh)
        # edges (h, 0): cut iff s_h = -1
        h0 = float(np.sum(self.w_h0 * (1.0 - sh) / 2.0))
        # edges (h, l): sum w (1 - s_h s_l) / 2 = A - (g . s_low) / 2 with g = W_lh s_h
        A = 0.5 * float(np.sum(self.W_hl))
        g = sh @ self.W_hl
        return sh, hh + h0 + A, g

    def full_spins(self, high_code: int, low_code: int) -> np.ndarray:
        s = np.ones(self.n, dtype=np.int64)
        s[self.low] = np.where((low_code >> np.arange(self.L)) & 1, -1, 1)
        s[self.high] = np.where((high_code >> np.arange(self.H)) & 1, -1, 1)
        return s


def _scan(lay: _Layout, start: int, stop: int, integral: bool,
          checkpoint: Optional[Callable[[int, int, float], None]] = None):
    """Walk Gray indices ``start..stop-1`` of the high block.

    Returns ``(best, count, best_code)`` where ``best_code`` packs the full
    configuration as ``high_code << L | low_code`` and is the smallest code
    attaining ``best``.
    """
    code = _gray(start)
    sh, const, g = lay.scratch(code)
    best, count, best_code = -math.inf, 0, None
    for k in range(start, stop):
        if k > start:
            new = _gray(k)
            bit = (new ^ code).bit_length() - 1
            code = new
            old = sh[bit]
            # flip high spin `bit`: update constant part and low-block field
            row_hh = lay.W_hh[bit]  # zero diagonal
            const += old * float(row_hh @ sh)
            const += old * lay.w_h0[bit]
            g = g - 2.0 * old * lay.W_hl[bit]
            sh[bit] = -old
        cuts = lay.low_cut + const - 0.5 * (lay.S_low @ g)
        if checkpoint is not None:
            checkpoint(code, k, cuts)
        top = float(cuts.max())
        if best == -math.inf or top > best + _tol(best, integral):
            best, count, best_code = top, 0, None
        band = best - _tol(best, integral)
        if top >= band:
            hits = np.flatnonzero(cuts >= band)
            count += int(hits.size)
            cand = (code << lay.L) | int(hits[0])
            if best_code is None or cand < best_code:
                best_code = cand
    return best, count, best_code


def brute_force(inst: Instance, workers: int = 1, low_bits: int = LOW_BITS) -> ExactSolution:
    """Exact maximum cut of ``inst`` (``n <= 28``)."""
    if inst.n > MAX_N:
        raise OracleCapError(f"n={inst.n} exceeds the exhaustive-search cap of {MAX_N}")
    if inst.n == 1:
        return ExactSolution(0.0, np.ones(1, dtype=np.int64), 1)
    integral = _is_integral(inst.arrays[2])
    lay = _Layout(inst, low_bits)
    total = 2**lay.H
    n_chunks = min(total, 16)
    bounds = [(total * c) // n_chunks for c in range(n_chunks + 1)]
    spans = list(zip(bounds[:-1], bounds[1:]))
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda se: _scan(lay, se[0], se[1], integral), spans))
    else:
        parts = [_scan(lay, a, b, integral) for a, b in spans]
    best = max(p[0] for p in parts)
    tol = _tol(best, integral)
    count = 0
    best_code = None
    for value, cnt, code in parts:
        if value >= best - tol:
            count += cnt
            if best_code is None or code < best_code:
                best_code = code
    spins = lay.full_spins(best_code >> lay.L, best_code & ((1 << lay.L) - 1))
    # report the cut recomputed from the spins so it is exact for the argmax
    return ExactSolution(cut_value(inst, spins), spins, count)


def verify_optimum(inst: Instance, claimed_cut: float, solution: Optional[ExactSolution] = None) -> bool:
    sol = solution if solution is not None else brute_force(inst)
    return abs(claimed_cut - sol.max_cut) <= REL_TOL * max(1.0, abs(sol.max_cut))


def ground_state_energy(inst: Instance, solution: ExactSolution) -> float:
    """Minimum of ``1/2 s^T J s``: offset minus the maximum cut."""
    return 0.5 * inst.total_weight - solution.max_cut
