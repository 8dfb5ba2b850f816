"""Quadratic spin problems: weighted graphs, coupling matrices and generators.

Vertices are 0-based inside the library. The Biq Mac text format and the
JSON export are 1-based.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class InstanceError(ValueError):
    """Invalid instance data or generator parameters."""


class InstanceFormatError(InstanceError):
    """Malformed Biq Mac text."""


@dataclass(frozen=True)
class Instance:
    """Undirected weighted graph on ``n`` vertices.

    ``edges`` holds ``(i, j, w)`` with ``0 <= i < j < n``, sorted. Use
    :meth:`from_edges` to build one from arbitrary orientation/order.
    """

    n: int
    edges: tuple
    family: Optional[str] = field(default=None, compare=False)
    seed: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n <= 0:
            raise InstanceError(f"n must be a positive integer, got {self.n!r}")
        seen = set()
        prev = None
        for i, j, w in self.edges:
            if not (0 <= i < j < self.n):
                raise InstanceError(f"edge ({i}, {j}) is not canonical for n={self.n}")
            if not math.isfinite(w):
                raise InstanceError(f"non-finite weight on edge ({i}, {j})")
            if (i, j) in seen:
                raise InstanceError(f"duplicate edge ({i}, {j})")
            if prev is not None and (i, j) < prev:
                raise InstanceError("edges must be sorted by (i, j)")
            seen.add((i, j))
            prev = (i, j)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence], family=None, seed=None) -> "Instance":
        """Build from 0-based ``(i, j, w)`` triples in any orientation."""
        canon = {}
        for i, j, w in edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise InstanceError(f"self-loop at vertex {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InstanceError(f"edge ({i}, {j}) out of range for n={n}")
            key = (i, j) if i < j else (j, i)
            if key in canon:
                raise InstanceError(f"duplicate edge {key}")
            canon[key] = w
        return cls(int(n), tuple((i, j, canon[i, j]) for i, j in sorted(canon)), family, seed)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def arrays(self):
        """Edge endpoints and weights as numpy arrays ``(rows, cols, weights)``."""
        if not self.edges:
            return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
        rows, cols, weights = zip(*self.edges)
        return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
                np.asarray(weights, dtype=np.float64))

    @cached_property
    def coupling(self) -> "CouplingMatrix":
        return coupling_matrix(self)

    @cached_property
    def normalized_coupling(self) -> sp.csr_matrix:
        """``cbar * J`` as CSR, entries ``n * w_ij / sum|w|``.

        Computed straight from the weights so that rescaling all weights by
        an exactly representable factor leaves the entries unchanged.
        """
        rows, cols, w = self.arrays
        abs_total = float(np.sum(np.abs(w)))
        if abs_total == 0.0:
            raise InstanceError("instance has no nonzero weights; cbar is undefined")
        k = (self.n * w) / abs_total
        m = sp.coo_matrix((np.concatenate([k, k]),
                           (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
                          shape=(self.n, self.n)).tocsr()
        m.sort_indices()
        return m

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.arrays[2]))

    def scaled(self, factor: float) -> "Instance":
        return Instance(self.n, tuple((i, j, w * factor) for i, j, w in self.edges),
                        self.family, self.seed)

    def to_json(self) -> dict:
        return {"n": self.n,
                "edges": [[i + 1, j + 1, _json_number(w)] for i, j, w in self.edges],
                "family": self.family,
                "seed": self.seed}

    @classmethod
    def from_json(cls, data: dict) -> "Instance":
        try:
            n = int(data["n"])
            edges = [(int(i) - 1, int(j) - 1, float(w)) for i, j, w in data["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceFormatError(f"bad instance JSON: {exc}") from exc
        return cls.from_edges(n, edges, data.get("family"), data.get("seed"))


def _json_number(w: float):
    if float(w).is_integer() and abs(w) < 2**53:
        return int(w)
    return float(w)


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric zero-diagonal coupling matrix with ``J_ij = w_ij / 2`` (CSR)."""

    n: int
    matrix: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


def coupling_matrix(inst: Instance) -> CouplingMatrix:
    rows, cols, w = inst.arrays
    half = w / 2.0
    m = sp.coo_matrix((np.concatenate([half, half]),
                       (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
                      shape=(inst.n, inst.n)).tocsr()
    m.sort_indices()
    return CouplingMatrix(inst.n, m)


# ---------------------------------------------------------------------------
# Biq Mac text format


def parse_biqmac(text: str) -> Instance:
    """Parse Biq Mac sparse text: header ``n m`` then ``m`` lines ``i j w``.

    Blank lines and lines starting with ``#`` are ignored.
    """
    lines = [ln.split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln[0].startswith("#")]
    if not lines:
        raise InstanceFormatError("empty input: missing 'n m' header")
    header = lines[0]
    if len(header) != 2:
        raise InstanceFormatError(f"malformed header {' '.join(header)!r}")
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise InstanceFormatError(f"malformed header {' '.join(header)!r}") from None
    if n <= 0 or m < 0:
        raise InstanceFormatError(f"invalid header values n={n}, m={m}")
    body = lines[1:]
    if len(body) != m:
        raise InstanceFormatError(f"header declares {m} edges, found {len(body)}")
    edges = []
    seen = set()
    for lineno, parts in enumerate(body, start=2):
        if len(parts) != 3:
            raise InstanceFormatError(f"edge line {lineno}: expected 'i j w', got {' '.join(parts)!r}")
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise InstanceFormatError(f"edge line {lineno}: cannot parse {' '.join(parts)!r}") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise InstanceFormatError(f"edge line {lineno}: index out of range [1, {n}]")
        if i == j:
            raise InstanceFormatError(f"edge line {lineno}: self-loop at vertex {i}")
        if not math.isfinite(w):
            raise InstanceFormatError(f"edge line {lineno}: non-finite weight")
        key = (min(i, j) - 1, max(i, j) - 1)
        if key in seen:
            raise InstanceFormatError(f"edge line {lineno}: duplicate edge ({key[0] + 1}, {key[1] + 1})")
        seen.add(key)
        edges.append((key[0], key[1], w))
    return Instance.from_edges(n, edges)


def format_weight(w: float) -> str:
    w = float(w)
    if w.is_integer() and abs(w) < 2**53:
        return str(int(w))
    return repr(w)


def serialize_biqmac(inst: Instance) -> str:
    out = [f"{inst.n} {inst.num_edges}\n"]
    out.extend(f"{i + 1} {j + 1} {format_weight(w)}\n" for i, j, w in inst.edges)
    return "".join(out)


def read_instance(path) -> Instance:
    """Load a Biq Mac file, or a JSON instance if the text starts with ``{``."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return Instance.from_json(json.loads(text))
    return parse_biqmac(text)


# ---------------------------------------------------------------------------
# Random instance families

FAMILIES = ("g05", "pm1s", "pm1d", "w", "pw", "ising", "torus")


@dataclass(frozen=True)
class FamilySpec:
    """A random instance family and its parameters."""

    family: str
    n: Optional[int] = None
    density: Optional[float] = None
    sigma: Optional[float] = None
    dim: Optional[int] = None
    side: Optional[int] = None

    def __post_init__(self):
        f = self.family
        if f not in FAMILIES:
            raise InstanceError(f"unknown family {f!r}; expected one of {', '.join(FAMILIES)}")
        if f == "torus":
            if self.dim not in (2, 3):
                raise InstanceError(f"torus dimension must be 2 or 3, got {self.dim!r}")
            if self.side is None or self.side < 2:
                raise InstanceError(f"torus side must be >= 2, got {self.side!r}")
            return
        if self.n is None or self.n <= 0:
            raise InstanceError(f"n must be positive, got {self.n!r}")
        if f in ("w", "pw"):
            if self.density is None or not (0.0 < self.density <= 1.0):
                raise InstanceError(f"density must lie in (0, 1], got {self.density!r}")
        if f == "ising" and (self.sigma is None or not math.isfinite(self.sigma)):
            raise InstanceError(f"ising family needs a finite sigma, got {self.sigma!r}")

    @property
    def num_vertices(self) -> int:
        if self.family == "torus":
            return self.side ** self.dim
        return self.n

    @property
    def edge_density(self) -> Optional[float]:
        return {"g05": 0.5, "pm1s": 0.1, "pm1d": 0.5}.get(self.family, self.density)

    @property
    def tag(self) -> str:
        """Name in the Biq Mac style, e.g. ``w05_100`` or ``t2g5``."""
        f = self.family
        if f == "torus":
            return f"t{self.dim}g{self.side}"
        if f in ("w", "pw"):
            return f"{f}{int(round(self.density * 10)):02d}_{self.n}"
        if f == "ising":
            return f"ising{self.sigma:g}_{self.n}"
        return f"{f}_{self.n}"


def g05(n: int) -> FamilySpec:
    return FamilySpec("g05", n=n)


def pm1s(n: int) -> FamilySpec:
    return FamilySpec("pm1s", n=n)


def pm1d(n: int) -> FamilySpec:
    return FamilySpec("pm1d", n=n)


def w(n: int, d: float) -> FamilySpec:
    return FamilySpec("w", n=n, density=d)


def pw(n: int, d: float) -> FamilySpec:
    return FamilySpec("pw", n=n, density=d)


def ising(n: int, sigma: float) -> FamilySpec:
    return FamilySpec("ising", n=n, sigma=sigma)


def torus(dim: int, side: int) -> FamilySpec:
    return FamilySpec("torus", dim=dim, side=side)


def instance_rng(seed: int, tag: str) -> np.random.Generator:
    """PCG64 stream keyed by ``(seed, tag)`` so families never share a stream."""
    if seed < 0 or seed >= 2**64:
        raise InstanceError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())])))


def _upper_pairs(n: int):
    return np.triu_indices(n, k=1)


def generate(spec: FamilySpec, seed: int) -> Instance:
    """Draw one instance of ``spec``; deterministic in ``(spec, seed)``."""
    rng = instance_rng(seed, spec.tag)
    f = spec.family
    if f == "torus":
        edges = _torus_edges(spec.dim, spec.side)
        signs = rng.choice(np.array([-1.0, 1.0]), size=len(edges))
        return Instance.from_edges(spec.num_vertices, [(i, j, s) for (i, j), s in zip(edges, signs)],
                                   spec.tag, seed)
    n = spec.n
    rows, cols = _upper_pairs(n)
    if f == "ising":
        eps = rng.standard_normal(rows.size)
        weights = eps / np.abs(cols - rows).astype(np.float64) ** spec.sigma
        keep = weights != 0.0
    else:
        keep = rng.random(rows.size) < spec.edge_density
        k = int(keep.sum())
        if f == "g05":
            vals = np.ones(k)
        elif f in ("pm1s", "pm1d"):
            vals = rng.choice(np.array([-1.0, 1.0]), size=k)
        elif f == "w":
            vals = rng.integers(1, 11, size=k) * rng.choice(np.array([-1, 1]), size=k)
        else:  # pw
            vals = rng.integers(1, 11, size=k)
        weights = np.zeros(rows.size)
        weights[keep] = vals
    edges = tuple(zip(rows[keep].tolist(), cols[keep].tolist(), weights[keep].astype(float).tolist()))
    return Instance(n, edges, spec.tag, seed)


def _torus_edges(dim: int, side: int):
    edges = set()
    for idx in np.ndindex(*([side] * dim)):
        u = int(np.ravel_multi_index(idx, (side,) * dim))
        for axis in range(dim):
            nb = list(idx)
            nb[axis] = (nb[axis] + 1) % side
            v = int(np.ravel_multi_index(tuple(nb), (side,) * dim))
            edges.add((min(u, v), max(u, v)))
    return sorted(edges)


# ---------------------------------------------------------------------------
# Derived statistics


@dataclass(frozen=True)
class InstanceStats:
    n: int
    m: float
    m_bar: float
    mu: float
    cbar: float
    gershgorin_radius: float
    spectral_radius_estimate: float
    spectral_tolerance: float
    spectral_iterations: int

    @property
    def normalized_spectral_radius(self) -> float:
        """``||cbar * J|| / 2``, the abscissa of the b regression."""
        return self.cbar * self.spectral_radius_estimate / 2.0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def spectral_radius(J, rtol: float = 1e-6, max_iter: Optional[int] = None):
    """Power-iteration estimate of ``max |lambda(J)|``.

    Iterates ``x <- J x / |J x|`` and tracks ``|J x|`` for unit ``x``, which
    never exceeds the spectral radius and does not oscillate when ``J`` has
    a ``+-rho`` eigenvalue pair. ``J`` may be a :class:`CouplingMatrix` or
    any square matrix. Returns ``(estimate, achieved_rtol, iterations)``.
    """
    A = J.matrix if isinstance(J, CouplingMatrix) else J
    n = A.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    x = np.ones(n) + 1e-3 * np.sin(np.arange(1, n + 1))
    x /= np.linalg.norm(x)
    est = 0.0
    change = math.inf
    for it in range(1, max_iter + 1):
        y = A @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0, 0.0, it
        change = abs(new - est) / new
        est = new
        x = y / new
        if change <= rtol:
            return est, change, it
    return est, change, max_iter


def _misfit(w: np.ndarray, abs_total: float) -> float:
    mu = float(np.sum(w)) / abs_total
    # keep +-1 exclusive to sign-definite weights despite rounding
    if mu >= 1.0 and np.any(w < 0):
        return float(np.nextafter(1.0, 0.0))
    if mu <= -1.0 and np.any(w > 0):
        return float(np.nextafter(-1.0, 0.0))
    return max(-1.0, min(1.0, mu))


def stats(inst: Instance) -> InstanceStats:
    _, _, w = inst.arrays
    abs_total = float(np.sum(np.abs(w)))
    if abs_total == 0.0:
        raise InstanceError("instance has no nonzero weights; cbar and mu are undefined")
    J = coupling_matrix(inst)
    row_abs = np.asarray(abs(J.matrix).sum(axis=1)).ravel()
    rho, tol, iters = spectral_radius(J)
    n = inst.n
    return InstanceStats(
        n=n,
        m=float(np.sum(w)) / n,
        m_bar=abs_total / n,
        mu=_misfit(w, abs_total),
        cbar=2.0 * n / abs_total,
        gershgorin_radius=float(row_abs.max()),
        spectral_radius_estimate=rho,
        spectral_tolerance=tol,
        spectral_iterations=iters,
    )


def normalized_spectral_radius(inst: Instance) -> float:
    """``||cbar J|| / 2`` estimated on the normalized matrix itself.

    Unlike ``stats(inst).normalized_spectral_radius`` the result is
    bit-identical under any exact rescaling of the weights.
    """
    return spectral_radius(inst.normalized_coupling)[0] / 2.0
