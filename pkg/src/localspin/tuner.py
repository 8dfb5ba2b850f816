"""Hyperparameter heuristics for the local-spin solver.

The response is measured in units of ``cbar`` (``eta = c / cbar``) and the
inverse temperature follows ``beta = a / (1 + b * eta)``. ``a`` is close to
one; ``b`` tracks the spectral radius of ``cbar * J`` and can be predicted
from a linear regression on that quantity.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .instance import Instance, normalized_spectral_radius, stats
from .solver import Hyperparams, run_restarts

DEFAULT_ETA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_BETA_GRID = tuple(np.geomspace(0.05, 2.0, 12).tolist())
# beta0 * 2**(k/4), k = -2..8
REFINE_FACTORS = tuple(2.0 ** (k / 4) for k in range(-2, 9))


class FitError(ValueError):
    pass


@dataclass
class TuneResult:
    eta_star: float
    beta_star: float
    median_energy: float
    grid_evaluations: List[Tuple[float, float, float]] = field(default_factory=list)

    def hyperparams(self, base: Hyperparams) -> Hyperparams:
        return base.replace(eta=self.eta_star, beta=self.beta_star)

    def locus(self) -> List[Tuple[float, float, float]]:
        """Best ``(eta, beta, median_energy)`` per eta.

        Medians of rounded energies are often tied over a run of neighbouring
        betas; the reported beta is then the geometric centre ``sqrt(lo * hi)``
        of the tied set, which is steadier than either end.
        """
        per_eta = {}
        for eta, beta, e in self.grid_evaluations:
            per_eta.setdefault(eta, []).append((beta, e))
        out = []
        for eta in sorted(per_eta):
            pts = per_eta[eta]
            e_min = min(e for _, e in pts)
            tied = [b for b, e in pts if e == e_min]
            out.append((eta, float(np.sqrt(min(tied) * max(tied))), e_min))
        return out

    def to_json(self) -> dict:
        return {"eta_star": self.eta_star, "beta_star": self.beta_star,
                "median_energy": self.median_energy,
                "grid": [list(t) for t in self.grid_evaluations]}


@dataclass
class BetaEtaFit:
    a: float
    b: float
    r_squared: float
    locus: List[Tuple[float, float, float]] = field(default_factory=list)

    def beta(self, eta):
        return self.a / (1.0 + self.b * np.asarray(eta))

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "r_squared": self.r_squared,
                "locus": [list(t) for t in self.locus]}


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r_squared))

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}


def median(values: Sequence[float]) -> float:
    """Median; for an even count the mean of the two middle values."""
    if len(values) == 0:
        raise ValueError("median of an empty sequence")
    return float(np.median(np.asarray(values, dtype=np.float64)))


def median_energy(inst: Instance, hp: Hyperparams, runs: int, master_seed: int, threads: int = 1) -> float:
    return median([r.energy for r in run_restarts(inst, hp, master_seed, runs, threads)])


def grid_search(inst: Instance, eta_grid: Sequence[float], beta_grid: Sequence[float],
                runs_per_point: int = 30, master_seed: int = 0,
                base: Optional[Hyperparams] = None, threads: int = 1) -> TuneResult:
    """Median energy over ``runs_per_point`` restarts at every grid point.

    All points share the same restart seeds, so the outcome does not depend
    on evaluation order. The argmin breaks ties by smaller eta, then beta.
    """
    if len(eta_grid) == 0 or len(beta_grid) == 0:
        raise ValueError("grids must be nonempty")
    if runs_per_point < 1:
        raise ValueError("runs_per_point must be >= 1")
    base = base or Hyperparams()
    evals = []
    for eta in eta_grid:
        for beta in beta_grid:
            hp = base.replace(eta=float(eta), beta=float(beta))
            evals.append((float(eta), float(beta), median_energy(inst, hp, runs_per_point, master_seed, threads)))
    eta, beta, e = min(evals, key=lambda t: (t[2], t[0], t[1]))
    return TuneResult(eta, beta, e, evals)


def fit_beta_eta(locus: Sequence[Sequence[float]]) -> BetaEtaFit:
    """Least-squares fit of ``beta = a / (1 + b eta)`` starting from ``(1, 1)``.

    ``locus`` holds ``(eta, beta_opt)`` or ``(eta, beta_opt, median_energy)``.
    """
    pts = [tuple(p) for p in locus]
    if len(pts) < 3:
        raise FitError("need at least 3 locus points")
    eta = np.array([p[0] for p in pts], dtype=np.float64)
    beta = np.array([p[1] for p in pts], dtype=np.float64)
    if np.unique(eta).size < 2:
        raise FitError("degenerate locus: all points share one eta")

    def resid(x):
        return x[0] / (1.0 + x[1] * eta) - beta

    sol = least_squares(resid, x0=[1.0, 1.0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    a, b = (float(x) for x in sol.x)
    ss_res = float(np.sum(resid(sol.x) ** 2))
    ss_tot = float(np.sum((beta - beta.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    full = [(p[0], p[1], p[2] if len(p) > 2 else float("nan")) for p in pts]
    return BetaEtaFit(a, b, max(0.0, r2), full)


def fit_b_vs_spectral(points: Sequence[Tuple[float, float]]) -> LinearFit:
    """Ordinary least-squares line ``b = slope * x + intercept``."""
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    if x.size < 2:
        raise FitError("need at least 2 points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise FitError("degenerate abscissae: all x values are equal")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(np.sum((y - slope * x - intercept) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(slope, intercept, r2)


def predict_b(spectral_radius_normalized: float, regression) -> float:
    slope, intercept = tuple(regression)[:2]
    return max(0.0, slope * spectral_radius_normalized + intercept)


def default_hyperparams(inst: Instance, regression=None, eta: float = 1.0,
                        base: Optional[Hyperparams] = None) -> Hyperparams:
    """``eta = 1`` and ``beta = 1 / (1 + b eta)``.

    ``b`` comes from ``regression`` (slope, intercept) applied to
    ``||cbar J|| / 2`` when given, otherwise ``b = ||cbar J||``, the value at
    which the all-zero state loses stability.
    """
    # the estimate is only good to ~1e-6; rounding keeps last-bit noise out of beta
    x = float(f"{normalized_spectral_radius(inst):.9g}")
    b = predict_b(x, regression) if regression is not None else 2.0 * x
    return (base or Hyperparams()).replace(eta=float(eta), beta=1.0 / (1.0 + b * eta))


def refine_beta(inst: Instance, hp: Hyperparams, runs_per_point: int = 30, master_seed: int = 0,
                factors: Sequence[float] = REFINE_FACTORS, threads: int = 1) -> TuneResult:
    """Local search in beta around ``hp.beta`` at fixed eta."""
    return grid_search(inst, [hp.eta], [hp.beta * f for f in factors], runs_per_point,
                       master_seed, hp, threads)


def b_calibration_point(inst: Instance, eta_grid=DEFAULT_ETA_GRID, beta_grid=DEFAULT_BETA_GRID,
                        runs_per_point: int = 30, master_seed: int = 0,
                        base: Optional[Hyperparams] = None, threads: int = 1):
    """``(||cbar J|| / 2, fitted b)`` for one instance, plus the fit itself."""
    res = grid_search(inst, eta_grid, beta_grid, runs_per_point, master_seed, base, threads)
    fit = fit_beta_eta(res.locus())
    return (stats(inst).normalized_spectral_radius, fit.b), fit


def locus_csv(locus: Sequence[Sequence[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["eta", "beta_opt", "median_energy"])
    for row in locus:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
