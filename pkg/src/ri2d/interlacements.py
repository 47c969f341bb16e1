"""Two-dimensional random interlacements observed on a ball.

Restricted to a window A = B(R), RI(alpha) is sampled by throwing a
Poisson(pi * alpha * cap(A)) number of S-hat walks, started independently
from the normalised equilibrium measure of A.  Each walk carries a uniform
label u in (0, pi * alpha_max]; RI(alpha) keeps the walks with
u <= pi * alpha, which couples all levels monotonically.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .kernel import PotentialKernel, potential_real
from .lattice import ORIGIN, LatticePoint, as_point
from .potential import LatticeSet, PotentialProfile, analyze, capacity_three_point
from .rng import RngSeed, next_double
from .walks import WalkPath, hat_run_until_escape, window_sampler

DEFAULT_CHUNK = 2000


@dataclass(frozen=True)
class InterlacementConfig:
    window_radius: int
    levels: tuple[float, ...]
    kill_radius: int | None = None  # None: exact re-entry, no truncation
    seed: RngSeed = RngSeed()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if not self.levels or any(v < 0 for v in self.levels):
            raise ValueError("levels must be a non-empty list of non-negative numbers")
        if list(self.levels) != sorted(self.levels):
            raise ValueError("levels must be ascending")
        if self.kill_radius is not None and self.kill_radius <= 2 * self.window_radius:
            raise ValueError("kill_radius must exceed 2 * window_radius")

    @property
    def alpha_max(self) -> float:
        return self.levels[-1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    label: float
    excursions: tuple[WalkPath, ...]  # successive visits to the window


@dataclass(frozen=True, eq=False)
class TrajectorySoup:
    window_radius: int
    alpha_max: float
    trajectories: list[Trajectory]
    bias_bound: float = 0.0

    def __len__(self):
        return len(self.trajectories)

    def at_level(self, alpha: float) -> list[Trajectory]:
        return [t for t in self.trajectories if t.label <= math.pi * alpha]


@dataclass(frozen=True, eq=False)
class VacantGrid:
    """``vacant[x + R, y + R]``; sites outside B(R) are never vacant."""

    level: float
    window_radius: int
    vacant: np.ndarray
    vacant_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "vacant_count", int(self.vacant.sum()))

    def is_vacant(self, p) -> bool:
        p = as_point(p)
        r = self.window_radius
        return bool(self.vacant[p.x + r, p.y + r])

    def vacant_points(self) -> list[LatticePoint]:
        r = self.window_radius
        return [LatticePoint(int(i) - r, int(j) - r) for i, j in zip(*np.nonzero(self.vacant))]


def _window_profile(radius: int, kernel: PotentialKernel) -> PotentialProfile:
    return window_sampler(radius, kernel).profile


def sample_soup(cfg: InterlacementConfig, kernel: PotentialKernel, profile: PotentialProfile | None = None,
                chunk: int = 0) -> TrajectorySoup:
    """Sample the trajectories of RI(alpha_max) that visit B(R), with their traces."""
    sampler = window_sampler(cfg.window_radius, kernel)
    if profile is not None and not profile.set.contains_origin:
        raise ValueError("profile must be that of a window containing the origin")
    cap = sampler.cap if profile is None else profile.cap
    umax = math.pi * cfg.alpha_max
    rng = cfg.seed.generator(chunk)
    state = cfg.seed.jit_state(chunk)
    k = int(rng.poisson(umax * cap))
    labels = rng.uniform(0.0, umax, k)
    starts = sampler.sample_starts(rng, k)
    trajectories = []
    bias = 0.0
    r2 = cfg.window_radius**2
    for i, (u, s) in enumerate(zip(labels, starts)):
        if cfg.kill_radius is None:
            excursions = tuple(sampler.trace(int(s), state))
        else:
            path = hat_run_until_escape(sampler.point(int(s)), cfg.window_radius, cfg.kill_radius, kernel,
                                        cfg.seed, chunk=(chunk << 32) | (i + 1))
            bias = path.bias_bound
            inside = (path.steps**2).sum(axis=1) <= r2
            cuts = np.flatnonzero(np.diff(inside.astype(np.int8)) != 0) + 1
            pieces = np.split(np.arange(len(inside)), cuts)
            excursions = tuple(WalkPath(path.steps[p], "hat") for p in pieces if inside[p[0]])
        trajectories.append(Trajectory(float(u), excursions))
    trajectories.sort(key=lambda t: t.label)
    return TrajectorySoup(cfg.window_radius, cfg.alpha_max, trajectories, bias)


def vacant_grids(soup: TrajectorySoup, levels: Iterable[float]) -> list[VacantGrid]:
    """Vacant sets of the soup at each level (nested by construction)."""
    levels = [float(v) for v in levels]
    if levels != sorted(levels):
        raise ValueError("levels must be ascending")
    r = soup.window_radius
    side = 2 * r + 1
    first = np.full((side, side), np.inf)
    for t in soup.trajectories:
        for exc in t.excursions:
            ix, iy = exc.steps[:, 0] + r, exc.steps[:, 1] + r
            np.minimum.at(first, (ix, iy), t.label)
    c = np.arange(-r, r + 1)
    inside = c[:, None] ** 2 + c[None, :] ** 2 <= r * r
    return [VacantGrid(a, r, inside & (first > math.pi * a)) for a in levels]


# ---------------------------------------------------------------- closed forms


def vacancy_prob(points: LatticeSet | Iterable, alpha: float, kernel: PotentialKernel) -> float:
    """P[A subset of V^alpha] = exp(-pi alpha cap(A)) for 0 in A."""
    s = points if isinstance(points, LatticeSet) else LatticeSet(points)
    if not s.contains_origin:
        raise ValueError("vacancy_prob needs a set containing the origin")
    return math.exp(-math.pi * alpha * analyze(s, kernel).cap)


def two_point_prob(x, y, alpha: float, kernel: PotentialKernel) -> float:
    """P[{x, y} subset of V^alpha] for distinct nonzero x, y."""
    x, y = as_point(x), as_point(y)
    if x == y or ORIGIN in (x, y):
        raise ValueError("two_point_prob needs distinct nonzero points")
    ax, ay, axy = kernel(x), kernel(y), kernel(x - y)
    psi = ax * ay * axy / (ax * ay + ax * axy + ay * axy - 0.5 * (ax * ax + ay * ay + axy * axy))
    return math.exp(-math.pi * alpha * psi)


def one_point_prob(x, alpha: float, kernel: PotentialKernel) -> float:
    return math.exp(-math.pi * alpha * kernel(x) / 2.0)


def conditional_local_rate(points: LatticeSet | Iterable, x, alpha: float, kernel: PotentialKernel) -> float:
    """Leading-order P[A subset of V^alpha | x in V^alpha] for 0 in A subset B(r), |x| >= 2r."""
    s = points if isinstance(points, LatticeSet) else LatticeSet(points)
    x = as_point(x)
    if not s.contains_origin:
        raise ValueError("conditional_local_rate needs 0 in A")
    r = max(max(p.norm() for p in s.points), 1.0)
    if x.norm() < 2 * r:
        raise ValueError(f"x must satisfy |x| >= 2r = {2 * r:.3g}")
    cap = analyze(s, kernel).cap
    return math.exp(-(math.pi * alpha / 4.0) * cap / (1.0 - cap / (2.0 * kernel(x))))


def conditional_prob_exact(points: Iterable, x, alpha: float, kernel: PotentialKernel) -> float:
    """P[A subset of V^alpha | x in V^alpha] through capacities of A U {0, x}."""
    x = as_point(x)
    pts = set(as_point(p) for p in points) | {ORIGIN, x}
    return math.exp(-math.pi * alpha * (analyze(sorted(pts), kernel).cap - 0.5 * kernel(x)))


# ---------------------------------------------------------- bulk simulation


LANES = 8
_UNSEEN = np.iinfo(np.int32).max


@njit(nogil=True)
def _finish_soup(grid, s, probe_idx, probe_out, cell_idx, cell_class, cuts, vac):
    for p in range(len(probe_idx)):
        probe_out[s, p] = grid[probe_idx[p]]
    for c in range(len(cell_idx)):
        g = grid[cell_idx[c]]
        k = cell_class[c]
        for lv in range(cuts.shape[1]):
            if g >= cuts[s, lv]:
                vac[s, lv, k] += 1


@njit(nogil=True)
def _soups_kernel(counts, base, starts, cuts, cum, offsets, exit_id, p_ret, cdf, entry_idx,
                  probe_idx, cell_idx, cell_class, n_classes, n_sites, state):
    """Trace ``len(counts)`` soups; soup s owns ``starts[base[s]:base[s] + counts[s]]``.

    Walks are ranked by label within their soup.  ``LANES`` walks from
    different soups are advanced in lockstep so that their memory latencies
    overlap; each lane owns a grid.  Walks of a soup run in decreasing rank,
    so a plain store leaves the minimal visiting rank on each site.
    """
    n = len(counts)
    probe_out = np.empty((n, len(probe_idx)), dtype=np.int32)
    vac = np.zeros((n, cuts.shape[1], n_classes), dtype=np.int64)
    grids = np.empty((LANES, n_sites), dtype=np.int32)
    flat = grids.reshape(-1)
    soup = np.empty(LANES, dtype=np.int64)
    rank = np.empty(LANES, dtype=np.int64)
    cur = np.empty(LANES, dtype=np.int64)
    active = 0
    for l in range(LANES):
        soup[l] = l - LANES
        rank[l] = 0  # walks of the current soup not yet started
        cur[l] = -1
    ended = True
    while True:
        if ended:
            ended = False
            for l in range(LANES):
                if cur[l] >= 0 or soup[l] >= n:
                    continue
                while rank[l] == 0:
                    s = soup[l]
                    if s >= 0:
                        _finish_soup(grids[l], s, probe_idx, probe_out, cell_idx, cell_class, cuts, vac)
                    s += LANES
                    soup[l] = s
                    if s >= n:
                        break
                    grids[l, :] = _UNSEEN
                    rank[l] = counts[s]
                if soup[l] >= n:
                    continue
                rank[l] -= 1
                cur[l] = starts[base[soup[l]] + rank[l]] + l * n_sites
                active += 1
            if active == 0:
                break
        for l in range(LANES):
            idx = cur[l]
            if idx < 0:
                continue
            r = rank[l]
            shift = l * n_sites
            while True:
                flat[idx] = r
                site = idx - shift
                u = next_double(state)
                d = (u >= cum[site, 0]) + (u >= cum[site, 1]) + (u >= cum[site, 2])
                idx += offsets[d]
                j = exit_id[idx - shift]
                if j < 0:
                    break
                if next_double(state) >= p_ret[j]:
                    idx = -1
                    active -= 1
                    ended = True
                    break
                idx = entry_idx[np.searchsorted(cdf[j], next_double(state), side="right")] + shift
            cur[l] = idx
    return probe_out, vac


@dataclass(frozen=True, eq=False)
class SoupStatistics:
    """Per-soup summaries of a batch of independent soups.

    ``first_label[s, p]`` is the smallest label of a walk visiting probe p in
    soup s (inf if none), so probe p is vacant at level alpha iff
    ``first_label > pi * alpha``.  ``vacant_counts[s, l, j]`` is
    |V^{levels[l]} intersect B(radii[j])|.
    """

    window_radius: int
    alpha_max: float
    probes: tuple[LatticePoint, ...]
    first_label: np.ndarray
    counts: np.ndarray
    levels: tuple[float, ...]
    radii: tuple[float, ...]
    vacant_counts: np.ndarray
    trace_radius: float = 0.0

    def vacant(self, probe, alpha: float) -> np.ndarray:
        j = self.probes.index(as_point(probe))
        return self.first_label[:, j] > math.pi * alpha

    def all_vacant(self, probes: Iterable, alpha: float) -> np.ndarray:
        out = np.ones(len(self.counts), dtype=bool)
        for p in probes:
            p = as_point(p)
            if p != ORIGIN:
                out &= self.vacant(p, alpha)
        return out


def _trace_radius(radius: int, probes, radii) -> float:
    """Smallest ball (at least B(2)) on which the requested statistics live."""
    if radii:
        return float(radius)
    r = max([p.norm() for p in probes] + [2.0])
    return float(min(radius, math.ceil(r)))


def simulate_soups(radius: int, alpha_max: float, n_soups: int, kernel: PotentialKernel,
                   seed: RngSeed = RngSeed(), probes: Sequence = (), levels: Sequence[float] = (),
                   radii: Sequence[float] = (), chunk_size: int = DEFAULT_CHUNK, threads: int = 1) -> SoupStatistics:
    """Sample ``n_soups`` independent soups on B(radius) and summarise them.

    Each soup is a Poisson(pi * alpha_max * cap(B(radius))) family of walks
    started from the normalised equilibrium measure of B(radius).  When only
    probe sites are requested, walks are traced on the smallest ball B(r)
    containing the probes: a walk started outside B(r) jumps to its first
    entrance point (or is dropped if it never enters), which leaves the law
    of the trace on B(r) unchanged.

    Chunk ``c`` (soups ``c*chunk_size`` onwards) draws from its own keyed
    stream, so the output does not depend on ``threads``.
    """
    if alpha_max <= 0:
        raise ValueError("alpha_max must be positive")
    probes = tuple(as_point(p) for p in probes)
    levels = tuple(float(v) for v in levels)
    radii = tuple(float(r) for r in radii)
    if any(v > alpha_max for v in levels):
        raise ValueError("levels cannot exceed alpha_max")
    if any(r > radius for r in radii) or list(radii) != sorted(radii):
        raise ValueError("radii must be ascending and within the window")
    if any(p.norm() > radius for p in probes):
        raise ValueError("probes must lie in the window")
    outer = window_sampler(radius, kernel)
    sampler = window_sampler(_trace_radius(radius, probes, radii), kernel)
    if sampler is outer:
        funnel_p = np.ones(len(outer.entry_idx))
        funnel_cdf = None
    else:
        funnel_p, funnel_cdf = sampler.entrance_law(outer.entry_points)
    umax = math.pi * alpha_max
    lam = umax * outer.cap
    probe_idx = np.array([sampler.flat_index(p) for p in probes], dtype=np.int64)
    thresholds = np.array([math.pi * v for v in levels])
    if levels and radii:
        w = sampler.half_width
        cells, classes = [], []
        for idx in np.flatnonzero(sampler.inside):
            x, y = idx // sampler.side - w, idx % sampler.side - w
            d2 = x * x + y * y
            k = next((j for j, r in enumerate(radii) if d2 <= r * r), None)
            if k is not None:
                cells.append(idx)
                classes.append(k)
        cell_idx, cell_class = np.array(cells, dtype=np.int64), np.array(classes, dtype=np.int64)
    else:
        cell_idx = cell_class = np.zeros(0, dtype=np.int64)
    tables = sampler.tables()

    def run_chunk(c: int):
        m = min(chunk_size, n_soups - c * chunk_size)
        rng = seed.generator(c)
        counts = rng.poisson(lam, m).astype(np.int64)
        total = int(counts.sum())
        soup_id = np.repeat(np.arange(m), counts)
        labels = rng.uniform(0.0, umax, total)
        k = np.searchsorted(outer.start_cdf, rng.random(total), side="right")
        if funnel_cdf is None:
            starts = outer.entry_idx[k]
        else:
            keep = rng.random(total) < funnel_p[k]
            u = rng.random(total)
            k, u, soup_id, labels = k[keep], u[keep], soup_id[keep], labels[keep]
            j = np.array([np.searchsorted(funnel_cdf[kk], uu, side="right") for kk, uu in zip(k, u)],
                         dtype=np.int64).reshape(-1)
            starts = sampler.entry_idx[j]
        order = np.lexsort((labels, soup_id))
        labels, starts, soup_id = labels[order], starts[order], soup_id[order]
        traced = np.bincount(soup_id, minlength=m).astype(np.int64)
        base = np.cumsum(traced) - traced
        # rank cut-off per level: walks of rank >= cut are absent at that level
        cuts = np.zeros((m, len(thresholds)), dtype=np.int64)
        for i, t in enumerate(thresholds):
            cuts[:, i] = np.bincount(soup_id[labels <= t], minlength=m)
        ranks, vac = _soups_kernel(traced, base, starts, cuts, *tables, probe_idx, cell_idx, cell_class,
                                   len(radii), sampler.side * sampler.side, seed.jit_state(c))
        seen = ranks != _UNSEEN
        first = np.full(ranks.shape, np.inf)
        first[seen] = labels[(base[:, None] + ranks)[seen]]
        return counts, first, vac

    n_chunks = -(-n_soups // chunk_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, range(n_chunks)))
    else:
        results = [run_chunk(c) for c in range(n_chunks)]
    counts = np.concatenate([r[0] for r in results])
    first = np.concatenate([r[1] for r in results])
    vac = np.cumsum(np.concatenate([r[2] for r in results]), axis=2)
    return SoupStatistics(radius, alpha_max, probes, first, counts, levels, radii, vac, sampler.radius)
