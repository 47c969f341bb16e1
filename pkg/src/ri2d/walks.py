"""Simple random walk, the origin-avoiding walk S-hat, and exact oracles.

S-hat jumps from x to a neighbour y with probability a(y) / (4 a(x)).  It is
transient, so a trajectory leaves only a finite trace on any window.  Two
samplers are provided:

* :func:`hat_run_until_escape` runs S-hat until it leaves a kill radius and
  reports the per-excursion omission bound a(r)/a(R_k);
* :class:`WindowSampler` produces the exact trace on a ball B(R).  When the
  walk steps out of the ball to z, the probability that it ever comes back
  and the re-entry point are known exactly:

      P-hat_z[re-enter at y] = a(y) P_z[S enters B(R) at y] / a(z),

  where the SRW entrance law comes from the kernel-matrix representation in
  :func:`ri2d.potential.hitting_distributions`.  No truncation is involved.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .kernel import GAMMA_PRIME, TWO_OVER_PI, PotentialKernel, potential_real
from .lattice import NEIGHBOR_OFFSETS, ORIGIN, LatticePoint, as_point, ball, internal_boundary, outer_boundary
from .potential import analyze, hitting_distributions
from .rng import RngSeed, next_double

log = logging.getLogger(__name__)

MAX_DIRICHLET_RADIUS = 512
_DX = np.array([o[0] for o in NEIGHBOR_OFFSETS], dtype=np.int64)
_DY = np.array([o[1] for o in NEIGHBOR_OFFSETS], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class WalkPath:
    steps: np.ndarray  # (n, 2) int64
    kind: str  # "srw" or "hat"
    bias_bound: float = 0.0

    def __post_init__(self):
        if self.kind not in ("srw", "hat"):
            raise ValueError(f"unknown walk kind {self.kind!r}")

    def __len__(self):
        return len(self.steps)

    def points(self) -> list[LatticePoint]:
        return [LatticePoint(int(x), int(y)) for x, y in self.steps]

    def is_nearest_neighbour(self) -> bool:
        d = np.abs(np.diff(self.steps, axis=0)).sum(axis=1)
        return bool(np.all(d == 1))

    def restrict(self, radius: float) -> np.ndarray:
        """Points of the path inside B(radius), in order of visit."""
        r2 = (self.steps.astype(float) ** 2).sum(axis=1)
        return self.steps[r2 <= radius * radius]


# ---------------------------------------------------------------- closed forms


def hat_hit_point_prob(x, y, kernel: PotentialKernel) -> float:
    """P-hat_x[S-hat ever visits y], for distinct nonzero x, y."""
    x, y = as_point(x), as_point(y)
    if x == y or ORIGIN in (x, y):
        raise ValueError("hat_hit_point_prob needs distinct nonzero points")
    ax = kernel(x)
    return (ax + kernel(y) - kernel(x - y)) / (2.0 * ax)


def hat_return_prob(x, kernel: PotentialKernel) -> float:
    x = as_point(x)
    if x == ORIGIN:
        raise ValueError("S-hat is not defined at the origin")
    return 1.0 - 1.0 / (2.0 * kernel(x))


def hat_escape_ball_prob(x, r: float, kernel: PotentialKernel) -> float:
    """Leading-order P-hat_x[never hit B(r)]; the neglected term is O(1/r)/a(x)."""
    x = as_point(x)
    if not (r >= 1 and x.norm() >= r + 1):
        raise ValueError(f"hat_escape_ball_prob needs |x| >= r + 1 >= 2, got x={x}, r={r}")
    return min(1.0, max(0.0, 1.0 - potential_real(r) / kernel(x)))


def hat_escape_ball_exact(x, r: float, kernel: PotentialKernel) -> float:
    """P-hat_x[never hit B(r)] from the exact SRW entrance law of B(r)."""
    x = as_point(x)
    prof = analyze(ball(r), kernel)
    h = hitting_distributions(prof, np.array([x]), kernel)[0]
    pts = prof.set.as_array()
    a_y = kernel.values(pts[:, 0], pts[:, 1])
    return 1.0 - float(a_y @ h) / kernel(x)


# ----------------------------------------------------------------- transitions


def hat_transition(x, kernel: PotentialKernel) -> tuple[list[LatticePoint], np.ndarray]:
    """Neighbours of x and their S-hat transition probabilities."""
    x = as_point(x)
    if x == ORIGIN:
        raise ValueError("S-hat is not defined at the origin")
    nbrs = x.neighbors()
    w = np.array([kernel(y) for y in nbrs])
    n = kernel.exact_radius
    if max(abs(x.x), abs(x.y)) < n:
        p = w / (4.0 * kernel(x))
    else:
        # asymptotic tail is only approximately harmonic
        p = w / w.sum()
    return nbrs, p


def hat_step(x, kernel: PotentialKernel, rng: np.random.Generator) -> LatticePoint:
    nbrs, p = hat_transition(x, kernel)
    return nbrs[int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))]


@njit(inline="always")
def _a_lookup(agrid, h, x, y):
    if -h <= x <= h and -h <= y <= h:
        return agrid[x + h, y + h]
    return TWO_OVER_PI * 0.5 * math.log(float(x * x + y * y)) + GAMMA_PRIME


@njit(inline="always")
def _hat_move(agrid, h, x, y, state):
    ae = _a_lookup(agrid, h, x + 1, y)
    an = _a_lookup(agrid, h, x, y + 1)
    aw = _a_lookup(agrid, h, x - 1, y)
    a_s = _a_lookup(agrid, h, x, y - 1)
    u = next_double(state) * (ae + an + aw + a_s)
    if u < ae:
        return x + 1, y
    u -= ae
    if u < an:
        return x, y + 1
    u -= an
    if u < aw or a_s == 0.0:
        return x - 1, y
    return x, y - 1


@njit(nogil=True)
def _hat_path_kill(x0, y0, kill_radius, agrid, h, state):
    cap = 1024
    buf = np.empty((cap, 2), dtype=np.int64)
    n = 0
    x, y = x0, y0
    kr2 = kill_radius * kill_radius
    while True:
        if n == cap:
            nb = np.empty((2 * cap, 2), dtype=np.int64)
            nb[:cap] = buf
            buf = nb
            cap *= 2
        buf[n, 0] = x
        buf[n, 1] = y
        n += 1
        if x * x + y * y > kr2:
            break
        x, y = _hat_move(agrid, h, x, y, state)
    return buf[:n]


@njit(nogil=True)
def _srw_path(x0, y0, n_steps, dx, dy, state):
    out = np.empty((n_steps + 1, 2), dtype=np.int64)
    x, y = x0, y0
    out[0, 0] = x
    out[0, 1] = y
    for i in range(n_steps):
        d = int(next_double(state) * 4.0)
        x += dx[d]
        y += dy[d]
        out[i + 1, 0] = x
        out[i + 1, 1] = y
    return out


@njit(nogil=True)
def _hat_escape_ball_runs(x0, y0, r, kill_radius, agrid, h, n_paths, state):
    """Run S-hat until it enters B(r) or leaves B(kill_radius).

    Returns per-path flags (1 = entered B(r)) and final positions.
    """
    hit = np.zeros(n_paths, dtype=np.int64)
    end = np.empty((n_paths, 2), dtype=np.int64)
    r2 = r * r
    k2 = kill_radius * kill_radius
    for i in range(n_paths):
        x, y = x0, y0
        while True:
            x, y = _hat_move(agrid, h, x, y, state)
            d2 = x * x + y * y
            if d2 <= r2:
                hit[i] = 1
                break
            if d2 > k2:
                break
        end[i, 0] = x
        end[i, 1] = y
    return hit, end


def srw_path(start, n_steps: int, seed: RngSeed = RngSeed(), chunk: int = 0) -> WalkPath:
    s = as_point(start)
    return WalkPath(_srw_path(s.x, s.y, int(n_steps), _DX, _DY, seed.jit_state(chunk)), "srw")


def hat_run_until_escape(
    x0, window_radius: float, kill_radius: float, kernel: PotentialKernel, seed: RngSeed = RngSeed(), chunk: int = 0
) -> WalkPath:
    """Run S-hat from x0 until it first leaves B(kill_radius).

    The returned path carries ``bias_bound = a(r)/a(R_k)``, which bounds the
    probability of each omitted return to the window B(r).
    """
    x0 = as_point(x0)
    if x0 == ORIGIN:
        raise ValueError("S-hat cannot start at the origin")
    if not (window_radius >= 1 and kill_radius > 2 * window_radius):
        raise ValueError("hat_run_until_escape needs kill_radius > 2 * window_radius >= 2")
    h = kernel.exact_radius
    path = _hat_path_kill(x0.x, x0.y, float(kill_radius), kernel.table, h, seed.jit_state(chunk))
    bias = potential_real(window_radius) / potential_real(kill_radius)
    log.debug("S-hat run of %d steps, omission bound %.4f", len(path), bias)
    return WalkPath(path, "hat", bias)


# -------------------------------------------------------------- exact sampler


@njit(nogil=True)
def _window_trace(idx, cum, offsets, exit_id, p_ret, cdf, entry_idx, state):
    """Visited flat indices of one trajectory and the start of each excursion."""
    cap = 256
    buf = np.empty(cap, dtype=np.int64)
    starts = [0]
    n = 0
    while True:
        if n == cap:
            nb = np.empty(2 * cap, dtype=np.int64)
            nb[:cap] = buf
            buf = nb
            cap *= 2
        buf[n] = idx
        n += 1
        u = next_double(state)
        d = (u >= cum[idx, 0]) + (u >= cum[idx, 1]) + (u >= cum[idx, 2])
        idx += offsets[d]
        j = exit_id[idx]
        if j >= 0:
            if next_double(state) >= p_ret[j]:
                break
            idx = entry_idx[np.searchsorted(cdf[j], next_double(state), side="right")]
            starts.append(n)
    return buf[:n], np.array(starts, dtype=np.int64)


@njit(nogil=True)
def _window_hits(start, target, n_paths, cum, offsets, exit_id, p_ret, cdf, entry_idx, state):
    """Number of paths from ``start`` that visit ``target`` at some time >= 1."""
    hits = 0
    for _ in range(n_paths):
        idx = start
        while True:
            u = next_double(state)
            d = (u >= cum[idx, 0]) + (u >= cum[idx, 1]) + (u >= cum[idx, 2])
            idx += offsets[d]
            j = exit_id[idx]
            if j >= 0:
                if next_double(state) >= p_ret[j]:
                    break
                idx = entry_idx[np.searchsorted(cdf[j], next_double(state), side="right")]
            if idx == target:
                hits += 1
                break
    return hits


class WindowSampler:
    """Exact sampler for the trace of S-hat on the ball B(radius).

    Sites are addressed by flat index ``(x + w) * side + (y + w)`` on the
    square of half-width ``w = floor(radius) + 1`` (the ball plus its outer
    ring).
    """

    def __init__(self, radius: float, kernel: PotentialKernel):
        if radius < 1:
            raise ValueError("window radius must be >= 1")
        if int(np.floor(radius)) + 2 > kernel.exact_radius:
            raise ValueError("window must lie inside the exact kernel table")
        self.radius = float(radius)
        self.kernel = kernel
        w = int(np.floor(radius)) + 1
        side = 2 * w + 1
        self.half_width, self.side = w, side
        c = np.arange(-w, w + 1)
        xx, yy = np.meshgrid(c, c, indexing="ij")
        self.inside = (xx**2 + yy**2 <= radius * radius).ravel()
        agrid = kernel.grid(w + 1)
        self.offsets = np.array([side * dx + dy for dx, dy in NEIGHBOR_OFFSETS], dtype=np.int64)

        # fourth column pads each row to 32 bytes
        cum = np.full((side * side, 4), 2.0)
        for i in np.flatnonzero(self.inside):
            x, y = int(xx.flat[i]), int(yy.flat[i])
            if x == 0 and y == 0:
                continue
            nb = np.array([agrid[x + dx + w + 1, y + dy + w + 1] for dx, dy in NEIGHBOR_OFFSETS])
            cs = np.cumsum(nb) / nb.sum()
            cum[i, :3] = cs[:3]
            if nb[3] == 0.0:
                cum[i, 2] = 2.0
        self.cum = cum

        self.profile = analyze(ball(radius), kernel)
        pts = self.profile.set.as_array()
        support = self.profile._support
        self.entry_points = pts[support]
        self.entry_idx = (self.entry_points[:, 0] + w) * side + (self.entry_points[:, 1] + w)
        exits = np.array(outer_boundary(map(tuple, pts)), dtype=np.int64)
        self.exit_points = exits
        self.p_return, self.reentry_cdf = self.entrance_law(exits)
        self.exit_id = np.full(side * side, -1, dtype=np.int32)
        self.exit_id[(exits[:, 0] + w) * side + (exits[:, 1] + w)] = np.arange(len(exits))

        eq = self.profile.equilibrium[support]
        self.cap = self.profile.cap
        self.start_cdf = np.cumsum(eq) / eq.sum()
        self.start_cdf[-1] = 1.0

    def entrance_law(self, zs) -> tuple[np.ndarray, np.ndarray]:
        """For S-hat from each ``zs[i]`` outside the ball: probability of ever
        entering it and the cdf of the entrance point over ``entry_idx``.

        P-hat_z[enter at y] = a(y) P_z[S enters at y] / a(z) (h-transform of
        the SRW entrance law).
        """
        zs = np.asarray(zs, dtype=np.int64).reshape(-1, 2)
        h = hitting_distributions(self.profile, zs, self.kernel)[:, self.profile._support]
        a_entry = self.kernel.values(self.entry_points[:, 0], self.entry_points[:, 1])
        weights = h * a_entry[None, :]
        p = weights.sum(axis=1) / self.kernel.values(zs[:, 0], zs[:, 1])
        cdf = np.cumsum(weights, axis=1) / weights.sum(axis=1, keepdims=True)
        cdf[:, -1] = 1.0
        return p, cdf

    def flat_index(self, p) -> int:
        p = as_point(p)
        if p.x * p.x + p.y * p.y > self.radius**2:
            raise ValueError(f"{p} lies outside the window")
        return (p.x + self.half_width) * self.side + (p.y + self.half_width)

    def point(self, idx: int) -> LatticePoint:
        return LatticePoint(idx // self.side - self.half_width, idx % self.side - self.half_width)

    def tables(self):
        return self.cum, self.offsets, self.exit_id, self.p_return, self.reentry_cdf, self.entry_idx

    def sample_starts(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Flat indices drawn from the normalised equilibrium measure."""
        k = np.searchsorted(self.start_cdf, rng.random(count), side="right")
        return self.entry_idx[k]

    def trace(self, start, state: np.ndarray) -> list[WalkPath]:
        """Excursions of one trajectory inside the window."""
        idx = start if isinstance(start, (int, np.integer)) else self.flat_index(start)
        flat, starts = _window_trace(int(idx), *self.tables(), state)
        pts = np.stack([flat // self.side - self.half_width, flat % self.side - self.half_width], axis=1)
        bounds = list(starts) + [len(flat)]
        return [WalkPath(pts[a:b], "hat") for a, b in zip(bounds[:-1], bounds[1:])]

    def hit_count(self, start, target, n_paths: int, state: np.ndarray) -> int:
        return int(_window_hits(self.flat_index(start), self.flat_index(target), int(n_paths), *self.tables(), state))


def hat_hit_point_mc(x, y, n_paths: int, kernel: PotentialKernel, seed: RngSeed, chunk: int = 0) -> tuple[int, int]:
    """Monte Carlo count of S-hat paths from x that ever visit y (y == x: return)."""
    x, y = as_point(x), as_point(y)
    radius = max(2.0, math.ceil(max(x.norm(), y.norm())))
    sampler = window_sampler(radius, kernel)
    return sampler.hit_count(x, y, n_paths, seed.jit_state(chunk)), n_paths


def hat_escape_ball_mc(x, r: float, n_paths: int, kernel: PotentialKernel, seed: RngSeed, chunk: int = 0,
                       kill_radius: float | None = None) -> np.ndarray:
    """Per-path estimates of P-hat_x[never hit B(r)].

    Paths that reach the kill radius contribute their exact escape
    probability from the exit point, so the estimator has no truncation bias.
    """
    x = as_point(x)
    if kill_radius is None:
        kill_radius = min(2.0 * x.norm(), kernel.exact_radius - 2.0)
    if not x.norm() < kill_radius <= kernel.exact_radius - 2:
        raise ValueError("kill radius must exceed |x| and stay inside the exact table")
    hit, end = _hat_escape_ball_runs(x.x, x.y, float(r), float(kill_radius), kernel.table, kernel.exact_radius,
                                     int(n_paths), seed.jit_state(chunk))
    values = np.zeros(n_paths)
    out = hit == 0
    if out.any():
        prof = analyze(ball(r), kernel)
        pts = prof.set.as_array()
        a_y = kernel.values(pts[:, 0], pts[:, 1])
        uniq, inv = np.unique(end[out], axis=0, return_inverse=True)
        h = hitting_distributions(prof, uniq, kernel)
        esc = 1.0 - (h @ a_y) / kernel.values(uniq[:, 0], uniq[:, 1])
        values[out] = esc[inv.ravel()]
    return values


_SAMPLER_CACHE: dict = {}


def window_sampler(radius: float, kernel: PotentialKernel) -> WindowSampler:
    key = (float(radius), kernel.exact_radius, id(kernel))
    if key not in _SAMPLER_CACHE:
        _SAMPLER_CACHE[key] = WindowSampler(radius, kernel)
    return _SAMPLER_CACHE[key]


# ------------------------------------------------------------ Dirichlet oracle


@dataclass(frozen=True)
class DirichletProblem:
    """Absorbing boundary is ``absorbing`` together with the boundary of B(R)."""

    domain_radius: int
    absorbing: frozenset = field(default_factory=frozenset)
    target: frozenset = field(default_factory=frozenset)

    def __init__(self, domain_radius: int, absorbing: Iterable = (), target: Iterable = ()):
        if domain_radius < 2:
            raise ValueError("domain_radius must be >= 2")
        if domain_radius > MAX_DIRICHLET_RADIUS:
            raise MemoryError(f"domain_radius {domain_radius} exceeds cap {MAX_DIRICHLET_RADIUS}")
        r2 = domain_radius * domain_radius
        absorbing = frozenset(as_point(p) for p in absorbing)
        target = frozenset(as_point(p) for p in target)
        for p in absorbing | target:
            if p.x * p.x + p.y * p.y > r2:
                raise ValueError(f"{p} lies outside B({domain_radius})")
        object.__setattr__(self, "domain_radius", int(domain_radius))
        object.__setattr__(self, "absorbing", absorbing)
        object.__setattr__(self, "target", target)

    def boundary(self) -> frozenset:
        return frozenset(internal_boundary(ball(self.domain_radius)))

    def solve(self, targets: list[Iterable] | None = None) -> tuple[dict, np.ndarray]:
        """Solve the harmonic problem for one or several target sets.

        Returns ``(index, values)`` where ``index`` maps each point of B(R)
        to a row of ``values`` (shape (|B(R)|, n_targets)).
        """
        pts = ball(self.domain_radius)
        index = {p: i for i, p in enumerate(pts)}
        stop = self.boundary() | self.absorbing | self.target
        free = [p for p in pts if p not in stop]
        fidx = {p: i for i, p in enumerate(free)}
        tsets = [self.target] if targets is None else [frozenset(as_point(q) for q in t) for t in targets]
        for t in tsets:
            if not t <= stop:
                raise ValueError("target points must be absorbing")
        rows, cols, vals = [], [], []
        rhs = np.zeros((len(free), len(tsets)))
        for i, p in enumerate(free):
            rows.append(i)
            cols.append(i)
            vals.append(1.0)
            for q in p.neighbors():
                j = fidx.get(q)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(-0.25)
                else:
                    for k, t in enumerate(tsets):
                        if q in t:
                            rhs[i, k] += 0.25
        values = np.zeros((len(pts), len(tsets)))
        for k, t in enumerate(tsets):
            for q in t:
                values[index[q], k] = 1.0
        if free:
            mat = sp.csc_matrix((vals, (rows, cols)), shape=(len(free), len(free)))
            sol = spla.splu(mat).solve(rhs)
            resid = np.abs(mat @ sol - rhs).max()
            if resid > 1e-12:
                raise ArithmeticError(f"Dirichlet residual {resid:.3g} above 1e-12")
            free_rows = np.array([index[p] for p in free])
            values[free_rows] = sol
        return index, values


def dirichlet_hit_prob(prob: DirichletProblem, start, kernel: PotentialKernel | None = None) -> float:
    """P_start[hit the target before the rest of the absorbing boundary]."""
    start = as_point(start)
    if start.x**2 + start.y**2 > prob.domain_radius**2:
        raise ValueError(f"start {start} lies outside B({prob.domain_radius})")
    index, values = prob.solve()
    return float(values[index[start], 0])


def hm_via_escape(points: Iterable, domain_radius: int) -> np.ndarray:
    """Harmonic measure of a small set from escape probabilities to B(R).

    hm(x) is proportional to P_x[tau_1(A) > tau(boundary of B(R))]; the
    proportionality constant is removed by normalising.
    """
    pts = [as_point(p) for p in points]
    prob = DirichletProblem(domain_radius, absorbing=pts)
    boundary = prob.boundary()
    index, values = prob.solve([boundary])
    esc = np.array([np.mean([values[index[q], 0] for q in p.neighbors()]) for p in pts])
    return esc / esc.sum()


# ----------------------------------------------------- h-transform exit laws


@dataclass(frozen=True, eq=False)
class ExitLaw:
    points: np.ndarray  # boundary points of B(R)
    probs: np.ndarray  # S-hat exit law
    reweighted: np.ndarray  # a(z) P_x[exit at z, avoid 0] / a(x)
    discrepancy: float


def conditioned_exit_kernel(x, R: int, kernel: PotentialKernel, tol: float = 1e-10) -> ExitLaw:
    """Exit law of S-hat from B(R), computed twice: directly from the S-hat
    kernel and by reweighting the SRW exit law on {avoid 0}."""
    x = as_point(x)
    if not 0 < x.norm() < R:
        raise ValueError("conditioned_exit_kernel needs 0 < |x| < R")
    pts = ball(R)
    bnd = internal_boundary(pts)
    bset = set(bnd)
    bpos = {p: i for i, p in enumerate(bnd)}
    free = [p for p in pts if p not in bset and p != ORIGIN]
    fidx = {p: i for i, p in enumerate(free)}
    a = {p: kernel(p) for p in pts}
    a.update({q: kernel(q) for p in pts for q in p.neighbors()})
    nf, nb = len(free), len(bnd)
    qh = sp.lil_matrix((nf, nf))
    rh = np.zeros((nf, nb))
    qs = sp.lil_matrix((nf, nf))
    rs = np.zeros((nf, nb))
    for i, p in enumerate(free):
        for q in p.neighbors():
            ph = a[q] / (4.0 * a[p])
            if q in fidx:
                qh[i, fidx[q]] = ph
                qs[i, fidx[q]] = 0.25
            elif q in bpos:
                rh[i, bpos[q]] += ph
                rs[i, bpos[q]] += 0.25
    eye = sp.identity(nf, format="csc")
    bpts = np.array(bnd, dtype=np.int64)
    if x in bset:
        law = np.zeros(nb)
        law[bpos[x]] = 1.0
        return ExitLaw(bpts, law, law.copy(), 0.0)
    hat = spla.splu((eye - qh.tocsc()).tocsc()).solve(rh)[fidx[x]]
    srw = spla.splu((eye - qs.tocsc()).tocsc()).solve(rs)[fidx[x]]
    a_b = np.array([a[p] for p in bnd])
    reweighted = a_b * srw / a[x]
    disc = float(np.abs(hat - reweighted).max())
    if disc > tol:
        raise ArithmeticError(f"h-transform exit laws disagree by {disc:.3g}")
    return ExitLaw(bpts, hat, reweighted, disc)


def path_probability_hat(path: Iterable, kernel: PotentialKernel) -> float:
    """Product of S-hat transition probabilities along a path."""
    pts = [as_point(p) for p in path]
    prob = 1.0
    for p, q in zip(pts[:-1], pts[1:]):
        if abs(p.x - q.x) + abs(p.y - q.y) != 1:
            return 0.0
        prob *= kernel(q) / (4.0 * kernel(p))
    return prob
