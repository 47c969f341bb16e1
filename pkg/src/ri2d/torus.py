"""Simple random walk on the torus Z_n^2.

The walk starts from a uniform site and runs for t_alpha = (4 alpha / pi)
n^2 ln^2 n steps (rounded).  Besides the uncovered set, a run records the
excursions between the boundaries of the concentric discs
A = B(n / (3 ln n)) and A' = B(n / 3) centred at 0:

    D_0 = first time on dA',  J_k = first time on dA after D_{k-1},
    D_k = first time on dA' after J_k,

and N_alpha (N'_alpha) counts the J_k (D_k) that are <= t_alpha.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numba import njit, uint64

from .estimators import Estimate
from .kernel import build_kernel
from .lattice import LatticePoint
from .potential import LatticeSet, analyze
from .rng import RngSeed, next_below, next_u64

# full uncovered sets are only materialised up to this many sites
MAX_FULL_SITES = 4096 * 4096
MIN_ACCEPTED = 50
MAX_COVER_N = 512

INNER, OUTER = 1, 2


class InsufficientSamplesError(RuntimeError):
    """Too few replicas survived the rejection step."""


def t_alpha(n: int, alpha: float) -> int:
    return int(round(4.0 * alpha / math.pi * n * n * math.log(n) ** 2))


def predicted_excursions(n: int, alpha: float) -> float:
    """Typical number of excursions by t_alpha: 2 alpha ln^2 n / ln ln n."""
    return 2.0 * alpha * math.log(n) ** 2 / math.log(math.log(n))


@dataclass(frozen=True)
class TorusConfig:
    n: int
    alpha: float
    seed: RngSeed = RngSeed()
    window: float | None = None  # radius of the recorded window; default n / 8
    full: bool = False  # record the whole uncovered set

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise ValueError(f"torus side must be an integer >= 16, got {self.n!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if self.full and self.n * self.n > MAX_FULL_SITES:
            raise MemoryError(f"full uncovered set of a {self.n}x{self.n} torus exceeds the cap; use a window")

    @property
    def t_alpha(self) -> int:
        return t_alpha(self.n, self.alpha)

    @property
    def window_radius(self) -> float:
        return self.n / 8.0 if self.window is None else float(self.window)

    @property
    def inner_radius(self) -> float:
        return self.n / (3.0 * math.log(self.n))

    @property
    def outer_radius(self) -> float:
        return self.n / 3.0


@dataclass(frozen=True, eq=False)
class TorusRun:
    start: LatticePoint
    t_alpha: int
    uncovered: frozenset
    origin_uncovered: bool
    excursion_starts: np.ndarray  # J_1, J_2, ...
    excursion_ends: np.ndarray  # D_1, D_2, ...
    first_outer_hit: int  # D_0, -1 if not reached
    start_sites: np.ndarray = field(default=None, repr=False)  # (k, 2) torus sites at the J_k
    end_sites: np.ndarray = field(default=None, repr=False)
    N_alpha: int = field(init=False)
    N_alpha_prime: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "N_alpha", int(np.sum(self.excursion_starts <= self.t_alpha)))
        object.__setattr__(self, "N_alpha_prime", int(np.sum(self.excursion_ends <= self.t_alpha)))


def _centered(v: int, n: int) -> int:
    """Representative of v mod n in (-n/2, n/2]."""
    v %= n
    return v - n if v > n // 2 else v


def _disc_boundary_mask(n: int, radius: float) -> np.ndarray:
    """Internal boundary of the projection of B(0, radius), as an n x n mask."""
    c = np.array([_centered(i, n) for i in range(n)])
    inside = c[:, None] ** 2 + c[None, :] ** 2 <= radius * radius
    all_nb = np.ones_like(inside)
    for ax in (0, 1):
        for sh in (1, -1):
            all_nb &= np.roll(inside, sh, axis=ax)
    return inside & ~all_nb


def ring_labels(n: int, inner: float, outer: float) -> np.ndarray:
    """Flat int8 labels: INNER on dB(inner), OUTER on dB(outer), 0 elsewhere."""
    if not 1.0 <= inner < outer < n / 2.0:
        raise ValueError(f"need 1 <= inner < outer < n/2, got {inner}, {outer}")
    lab = np.zeros((n, n), dtype=np.int8)
    lab[_disc_boundary_mask(n, inner)] = INNER
    lab[_disc_boundary_mask(n, outer)] = OUTER
    return lab.ravel()


@njit(nogil=True)
def _torus_walk(n, x, y, t_steps, ring, visited, state):
    """Walk t_steps steps from (x, y); marks ``visited`` and returns D_0, the
    J/D times and the flat sites at those times (arrays padded with -1)."""
    cap = 64
    js = np.full((cap, 2), -1, dtype=np.int64)
    ds = np.full((cap, 2), -1, dtype=np.int64)
    dx = np.array([1, 0, -1, 0], dtype=np.int64)
    dy = np.array([0, 1, 0, -1], dtype=np.int64)
    d0 = -1
    k = 0  # completed excursions
    phase = 0  # 0: before D_0, 1: waiting for dA, 2: waiting for dA'
    idx = x * n + y
    visited[idx] = 1
    if ring[idx] == 2:
        d0 = 0
        phase = 1
    bits = uint64(0)
    left = 0
    for t in range(1, t_steps + 1):
        if left == 0:
            bits = next_u64(state)
            left = 32
        d = np.int64(bits & uint64(3))
        bits >>= uint64(2)
        left -= 1
        x += dx[d]
        y += dy[d]
        x += n * ((x < 0) - (x >= n))
        y += n * ((y < 0) - (y >= n))
        idx = x * n + y
        visited[idx] = 1
        lab = ring[idx]
        if lab != 0:
            if phase == 0 and lab == 2:
                d0 = t
                phase = 1
            elif phase == 1 and lab == 1:
                if k == cap:
                    nj = np.full((2 * cap, 2), -1, dtype=np.int64)
                    nd = np.full((2 * cap, 2), -1, dtype=np.int64)
                    nj[:cap] = js
                    nd[:cap] = ds
                    js, ds = nj, nd
                    cap *= 2
                js[k, 0] = t
                js[k, 1] = idx
                phase = 2
            elif phase == 2 and lab == 2:
                ds[k, 0] = t
                ds[k, 1] = idx
                k += 1
                phase = 1
    return d0, js, ds


@njit(nogil=True)
def _uniform_start(n, state):
    return next_below(state, n), next_below(state, n)


@njit(nogil=True)
def _cover_time(n, x, y, state):
    visited = np.zeros(n * n, dtype=np.uint8)
    visited[x * n + y] = 1
    remaining = n * n - 1
    dx = np.array([1, 0, -1, 0], dtype=np.int64)
    dy = np.array([0, 1, 0, -1], dtype=np.int64)
    t = 0
    bits = uint64(0)
    left = 0
    while remaining > 0:
        if left == 0:
            bits = next_u64(state)
            left = 32
        d = np.int64(bits & uint64(3))
        bits >>= uint64(2)
        left -= 1
        x += dx[d]
        y += dy[d]
        x += n * ((x < 0) - (x >= n))
        y += n * ((y < 0) - (y >= n))
        t += 1
        idx = x * n + y
        if visited[idx] == 0:
            visited[idx] = 1
            remaining -= 1
    return t


def run_torus(cfg: TorusConfig, replica: int = 0, ring: np.ndarray | None = None) -> TorusRun:
    """One walk of t_alpha steps; ``replica`` selects the random stream."""
    n = cfg.n
    if ring is None:
        ring = ring_labels(n, cfg.inner_radius, cfg.outer_radius)
    state = cfg.seed.jit_state(replica)
    x0, y0 = _uniform_start(n, state)
    visited = np.zeros(n * n, dtype=np.uint8)
    d0, js, ds = _torus_walk(n, x0, y0, cfg.t_alpha, ring, visited, state)
    grid = visited.reshape(n, n)
    if cfg.full:
        xs, ys = np.nonzero(grid == 0)
        uncovered = frozenset(LatticePoint(int(a), int(b)) for a, b in zip(xs, ys))
    else:
        r = cfg.window_radius
        w = int(math.floor(r))
        pts = []
        for i in range(-w, w + 1):
            for j in range(-w, w + 1):
                if i * i + j * j <= r * r and grid[i % n, j % n] == 0:
                    pts.append(LatticePoint(i, j))
        uncovered = frozenset(pts)
    return TorusRun(
        start=LatticePoint(int(x0), int(y0)),
        t_alpha=cfg.t_alpha,
        uncovered=uncovered,
        origin_uncovered=bool(grid[0, 0] == 0),
        excursion_starts=js[js[:, 0] >= 0, 0],
        excursion_ends=ds[ds[:, 0] >= 0, 0],
        first_outer_hit=int(d0),
        start_sites=np.stack(np.divmod(js[js[:, 0] >= 0, 1], n), axis=1),
        end_sites=np.stack(np.divmod(ds[ds[:, 0] >= 0, 1], n), axis=1),
    )


def _replicas(cfg: TorusConfig, replicas: int, threads: int, fn):
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(replicas)))
    return [fn(i) for i in range(replicas)]


@dataclass(frozen=True)
class ExcursionReport:
    n: int
    alpha: float
    replicas: int
    counts: tuple[int, ...]
    counts_prime: tuple[int, ...]
    predicted: float
    mean: float
    sd: float
    relative_deviation: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def excursion_count_check(n: int, alpha: float, replicas: int, seed: RngSeed = RngSeed(),
                          threads: int = 1) -> ExcursionReport:
    """Empirical N_alpha over independent replicas against 2 alpha ln^2 n / ln ln n."""
    cfg = TorusConfig(n, alpha, seed, window=0.0)
    ring = ring_labels(n, cfg.inner_radius, cfg.outer_radius)
    runs = _replicas(cfg, replicas, threads, lambda i: run_torus(cfg, i, ring))
    counts = np.array([r.N_alpha for r in runs])
    pred = predicted_excursions(n, alpha)
    mean = float(counts.mean())
    return ExcursionReport(
        n, float(alpha), replicas,
        tuple(int(c) for c in counts), tuple(r.N_alpha_prime for r in runs),
        pred, mean, float(counts.std(ddof=1)) if replicas > 1 else 0.0, (mean - pred) / pred,
    )


@dataclass(frozen=True)
class ConditionalEstimate:
    estimate: Estimate
    accepted: int
    replicas: int
    predicted: float

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.replicas

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate.mean,
            "ci": list(self.estimate.ci()),
            "stderr": self.estimate.stderr,
            "accepted": self.accepted,
            "replicas": self.replicas,
            "acceptance_rate": self.acceptance_rate,
            "predicted": self.predicted,
        }


def conditional_uncovered_estimate(n: int, alpha: float, points: LatticeSet | Iterable, replicas: int,
                                   seed: RngSeed = RngSeed(), threads: int = 1,
                                   ci_level: float = 0.99) -> ConditionalEstimate:
    """P[projection of A uncovered at t_alpha | 0 uncovered], by rejection.

    ``predicted`` is the limit exp(-pi alpha cap(A)).
    """
    s = points if isinstance(points, LatticeSet) else LatticeSet(points)
    if not s.contains_origin:
        raise ValueError("the set must contain the origin")
    cfg = TorusConfig(n, alpha, seed, window=0.0)
    targets = np.array(sorted({(p.x % n) * n + (p.y % n) for p in s.points}), dtype=np.int64)
    ring = np.zeros(n * n, dtype=np.int8)  # excursions are not needed here

    def one(i: int):
        state = cfg.seed.jit_state(i)
        x0, y0 = _uniform_start(n, state)
        visited = np.zeros(n * n, dtype=np.uint8)
        _torus_walk(n, x0, y0, cfg.t_alpha, ring, visited, state)
        return visited[0] == 0, bool((visited[targets] == 0).all())

    out = _replicas(cfg, replicas, threads, one)
    kept = np.array([b for a, b in out if a], dtype=bool)
    if len(kept) < MIN_ACCEPTED:
        raise InsufficientSamplesError(
            f"only {len(kept)} of {replicas} replicas left 0 uncovered (need {MIN_ACCEPTED}); "
            "increase replicas or lower alpha"
        )
    cap = analyze(s, build_kernel()).cap if len(s) > 1 else 0.0
    est = Estimate.from_bernoulli(kept, ci_level=ci_level)
    return ConditionalEstimate(est, int(len(kept)), replicas, math.exp(-math.pi * alpha * cap))


def cover_time(n: int, seed: RngSeed = RngSeed(), replica: int = 0) -> int:
    """Steps until every site of Z_n^2 has been visited."""
    if int(n) != n or not 2 <= n <= MAX_COVER_N:
        raise ValueError(f"cover_time needs an integer 2 <= n <= {MAX_COVER_N}, got {n!r}")
    state = seed.jit_state(replica)
    x0, y0 = _uniform_start(n, state)
    return int(_cover_time(int(n), x0, y0, state))
