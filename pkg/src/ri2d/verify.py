"""Acceptance checks: exact identities and Monte Carlo comparisons.

Each check returns a :class:`CriterionResult`; a check passes when all of
its comparisons pass and it finishes inside its time budget.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .estimators import Estimate, compare, loglog_slope, mc_estimate, report_json
from .interlacements import (
    InterlacementConfig,
    conditional_prob_exact,
    one_point_prob,
    sample_soup,
    simulate_soups,
    two_point_prob,
    vacant_grids,
)
from .kernel import GAMMA_PRIME, TWO_OVER_PI, build_kernel, potential_integral
from .lattice import ORIGIN, LatticePoint, ball
from .potential import analyze, capacity_three_point
from .rng import RngSeed
from .torus import conditional_uncovered_estimate, excursion_count_check, run_torus, TorusConfig
from .walks import (
    conditioned_exit_kernel,
    hat_escape_ball_mc,
    hat_escape_ball_prob,
    hat_hit_point_mc,
    hat_hit_point_prob,
    hat_return_prob,
    hat_transition,
    path_probability_hat,
)

SUITES = {
    "exact": (1, 2, 3),
    "mc": (4, 5, 6, 7, 8, 11),
    "torus": (9, 10),
}
SUITES["all"] = tuple(sorted(set(itertools.chain(*SUITES.values()))))

SOUP_COUNT = 100_000
SOUP_PROBES = ((5, 0), (10, 0), (20, 0), (0, 5), (1, 0), (6, 2), (5, 2))


@dataclass
class CriterionResult:
    number: int
    name: str
    budget: float  # seconds
    checks: list = field(default_factory=list)  # (label, ok, detail)
    elapsed: float = 0.0

    def add(self, label: str, ok: bool, detail: str = ""):
        self.checks.append((label, bool(ok), detail))

    @property
    def in_budget(self) -> bool:
        return self.elapsed <= self.budget

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for _, ok, _ in self.checks) and self.in_budget

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [lbl for lbl, ok, _ in self.checks if not ok]
        extra = f"; failed: {', '.join(failed)}" if failed else ""
        if not self.in_budget:
            extra += f"; over budget ({self.budget:.0f} s)"
        return f"[{status}] criterion {self.number:2d} {self.name} ({self.elapsed:.1f} s{extra})"

    def as_dict(self) -> dict:
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "budget_s": self.budget,
            "checks": [{"check": c, "ok": ok, "detail": d} for c, ok, d in self.checks],
        }


def _cmp(res: CriterionResult, report):
    res.add(report.name, report.passed,
            f"predicted {report.predicted:.6g}, estimate {report.estimate.mean:.6g} "
            f"+- {report.estimate.stderr:.2g}, tol {report.tolerance:.3g} ({report.verdict})")


def _close(res: CriterionResult, label: str, got: float, want: float, tol: float):
    err = abs(got - want)
    res.add(label, err <= tol, f"{got:.15g} vs {want:.15g} (|diff| {err:.2e}, tol {tol:g})")


# ------------------------------------------------------------- exact suites


def check_kernel(seed: RngSeed) -> CriterionResult:
    res = CriterionResult(1, "exact potential kernel", 1.0)
    k = build_kernel()
    for p, closed in (((0, 0), 0.0), ((1, 0), 1.0), ((1, 1), 4.0 / math.pi), ((2, 0), 4.0 - 8.0 / math.pi)):
        _close(res, f"a{p} table vs closed form", k(p), closed, 1e-9)
        _close(res, f"a{p} table vs quadrature", k(p), potential_integral(p), 1e-9)
    g = k.grid(201)
    c = np.arange(-200, 201)
    inside = (c[:, None] ** 2 + c[None, :] ** 2 <= 200 * 200)
    inner = g[1:-1, 1:-1]
    mean_nb = 0.25 * (g[2:, 1:-1] + g[:-2, 1:-1] + g[1:-1, 2:] + g[1:-1, :-2])
    resid = np.abs(mean_nb - inner)
    resid[200, 200] = abs(mean_nb[200, 200] - 1.0)  # unit source at the origin
    _close(res, "harmonicity residual on B(200)", float(resid[inside].max()), 0.0, 1e-12)
    worst = 0.0
    for p in ((100, 0), (0, 100), (60, 80), (80, -60), (-100, 0)):
        worst = max(worst, abs(k(p) - TWO_OVER_PI * math.log(math.hypot(*p)) - GAMMA_PRIME))
    _close(res, "asymptotic residual at |x| = 100", worst, 0.0, 1e-3)
    return res


def check_capacity(seed: RngSeed) -> CriterionResult:
    res = CriterionResult(2, "capacities", 1.0)
    k = build_kernel()
    rng = seed.generator(0)
    err = 0.0
    for _ in range(50):
        x = LatticePoint(*map(int, rng.integers(-100, 101, 2)))
        if x == ORIGIN:
            x = LatticePoint(1, 0)
        err = max(err, abs(analyze([ORIGIN, x], k).cap - 0.5 * k(x)))
    _close(res, "cap({0,x}) = a(x)/2, 50 random x", err, 0.0, 1e-9)

    pts20 = ball(20)
    err = 0.0
    for _ in range(100):
        i = rng.choice(len(pts20), 3, replace=False)
        tri = [pts20[j] for j in i]
        err = max(err, abs(capacity_three_point(*tri, k) - analyze(tri, k).cap))
    _close(res, "3-point formula vs matrix, 100 triples in B(20)", err, 0.0, 1e-9)

    pts30 = [p for p in ball(30) if p != ORIGIN]
    err = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 8))
        i = rng.choice(len(pts30), m, replace=False)
        prof = analyze([ORIGIN] + [pts30[j] for j in i], k)
        err = max(err, abs(prof.cap - prof.cap_from_hm))
    _close(res, "inverse-sum vs sum a*hm, 200 sets", err, 0.0, 1e-9)

    _close(res, "cap(B(100)) vs a(100)", analyze(ball(100), k).cap, k.potential_real(100.0), 0.02)
    return res


def check_h_transform(seed: RngSeed) -> CriterionResult:
    res = CriterionResult(3, "h-transform exactness", 10.0)
    k = build_kernel()
    worst = 0.0
    for R in (3, 4, 5, 6):
        for p in ball(R - 1e-9):
            if p == ORIGIN:
                continue
            law = conditioned_exit_kernel(p, R, k, tol=1e-10)
            worst = max(worst, law.discrepancy, abs(law.probs.sum() - 1.0))
    _close(res, "exit law routes, R = 3..6, all starts", worst, 0.0, 1e-10)

    # every nearest-neighbour path of length <= 8 in B(4) avoiding 0, enumerated
    # breadth-first with products of the S-hat transition table
    w = 5
    table = np.zeros((2 * w + 1, 2 * w + 1, 4))
    for p in ball(4):
        if p != ORIGIN:
            table[p.x + w, p.y + w] = hat_transition(p, k)[1]
    dx, dy = np.array([1, 0, -1, 0]), np.array([0, 1, 0, -1])
    agrid = k.grid(w)
    worst, count = 0.0, 0
    for x in (p for p in ball(4) if p != ORIGIN):
        xs, ys, pr = np.array([x.x]), np.array([x.y]), np.ones(1)
        for length in range(1, 9):
            d = np.tile(np.arange(4), len(xs))
            px, py, pp = np.repeat(xs, 4), np.repeat(ys, 4), np.repeat(pr, 4)
            nx, ny = px + dx[d], py + dy[d]
            ok = (nx * nx + ny * ny <= 16) & ((nx != 0) | (ny != 0))
            pp = pp * table[px + w, py + w, d]
            xs, ys, pr = nx[ok], ny[ok], pp[ok]
            want = agrid[xs + w, ys + w] / k(x) * 0.25**length
            worst = max(worst, float(np.max(np.abs(pr - want) / want)))
            count += len(xs)
    rng = seed.generator(1)
    for _ in range(200):  # the scalar routine on random paths
        path = [LatticePoint(1, 0)]
        for _ in range(int(rng.integers(1, 9))):
            nb = [q for q in path[-1].neighbors() if q != ORIGIN]
            path.append(nb[int(rng.integers(len(nb)))])
        want = k(path[-1]) / k(path[0]) * 0.25 ** (len(path) - 1)
        worst = max(worst, abs(path_probability_hat(path, k) - want) / want)
    _close(res, f"path probability identity ({count} paths)", worst, 0.0, 1e-12)

    worst_row = worst_rev = 0.0
    for p in ball(60):
        if p == ORIGIN:
            continue
        nbrs, pr = hat_transition(p, k)
        worst_row = max(worst_row, abs(pr.sum() - 1.0))
        for q, pq in zip(nbrs, pr):
            if q == ORIGIN:
                continue
            back = hat_transition(q, k)
            pqp = back[1][back[0].index(p)]
            worst_rev = max(worst_rev, abs(k(p) ** 2 * pq - k(q) ** 2 * pqp))
    _close(res, "S-hat row sums on B(60)", worst_row, 0.0, 1e-12)
    _close(res, "reversibility a^2 p on B(60)", worst_rev, 0.0, 1e-12)
    return res


# --------------------------------------------------------- Monte Carlo suites

HIT_PAIRS = (((1, 0), (-1, 0)), ((2, 1), (0, 3)), ((3, 0), (3, 1)), ((-4, 2), (1, -3)))
RETURN_POINTS = ((1, 0), (1, 1), (3, 2), (0, -5))


def check_hitting(seed: RngSeed, n_paths: int = 100_000) -> CriterionResult:
    res = CriterionResult(4, "closed-form hitting probabilities", 120.0)
    k = build_kernel()
    for i, (x, y) in enumerate(HIT_PAIRS):
        hits, n = hat_hit_point_mc(x, y, n_paths, k, seed, chunk=i)
        est = Estimate.from_bernoulli(np.arange(n) < hits)
        _cmp(res, compare(f"P-hat_{x}[hit {y}]", hat_hit_point_prob(x, y, k), est, n_sigma=3))
    for i, x in enumerate(RETURN_POINTS):
        hits, n = hat_hit_point_mc(x, x, n_paths, k, seed, chunk=100 + i)
        est = Estimate.from_bernoulli(np.arange(n) < hits)
        _cmp(res, compare(f"P-hat_{x}[return]", hat_return_prob(x, k), est, n_sigma=3))
    vals = hat_escape_ball_mc((200, 0), 10, 4000, k, seed, chunk=200)
    est = Estimate.from_samples(vals)
    _cmp(res, compare("P-hat_(200,0)[avoid B(10)]", hat_escape_ball_prob((200, 0), 10, k), est,
                      slack=0.02, n_sigma=3))
    return res


@lru_cache(maxsize=4)
def _soup_batch(seed: RngSeed, n_soups: int, threads: int = 1):
    t0 = time.perf_counter()
    st = simulate_soups(50, 1.0, n_soups, build_kernel(), seed, probes=SOUP_PROBES, threads=threads)
    return st, time.perf_counter() - t0


def check_one_site(seed: RngSeed, n_soups: int = SOUP_COUNT) -> CriterionResult:
    res = CriterionResult(5, "one-site vacancy", 300.0)
    k = build_kernel()
    st, _ = _soup_batch(seed, n_soups)
    for alpha in (0.5, 1.0):
        for x in ((5, 0), (10, 0), (20, 0)):
            est = Estimate.from_bernoulli(st.vacant(x, alpha))
            _cmp(res, compare(f"P[{x} vacant], alpha={alpha}", one_point_prob(x, alpha, k), est, n_sigma=3))
    return res


def check_two_site(seed: RngSeed, n_soups: int = SOUP_COUNT) -> CriterionResult:
    res = CriterionResult(6, "two-site vacancy and conditional stationarity", 600.0)
    k = build_kernel()
    st, _ = _soup_batch(seed, n_soups)
    est = Estimate.from_bernoulli(st.all_vacant([(5, 0), (0, 5)], 0.5))
    _cmp(res, compare("P[(5,0),(0,5) vacant], alpha=0.5", two_point_prob((5, 0), (0, 5), 0.5, k), est, n_sigma=3))

    # A = {0, (1,0)}, x = (6,2): compare A and x - A on {x vacant} (paired samples)
    alpha = 0.75
    cond = st.vacant((6, 2), alpha)
    e1 = st.vacant((1, 0), alpha)[cond]
    e2 = st.vacant((5, 2), alpha)[cond]
    diff = e1.astype(float) - e2.astype(float)
    se = diff.std(ddof=1) / math.sqrt(len(diff))
    z = diff.mean() / se if se > 0 else 0.0
    res.add("conditional stationarity z-test (1% level)", abs(z) < 2.5758293035489,
            f"P[A vacant | x] = {e1.mean():.4f}, P[x-A vacant | x] = {e2.mean():.4f}, z = {z:.3f}, "
            f"n = {len(diff)}, exact {conditional_prob_exact([(0, 0), (1, 0)], (6, 2), alpha, k):.4f}")
    return res


def check_scaling(seed: RngSeed, n_soups: int = 3000) -> CriterionResult:
    res = CriterionResult(7, "vacant-set size scaling", 600.0)
    k = build_kernel()
    radii = (8, 16, 32, 64)
    st = simulate_soups(64, 0.5, n_soups, k, seed, levels=(0.5,), radii=radii)
    means = st.vacant_counts[:, 0, :].mean(axis=0)
    slope = loglog_slope(zip(radii, means))
    _close(res, "log-log slope of E|V^0.5 in B(r)|", slope, 1.5, 0.25)
    res.checks[-1] = res.checks[-1][:2] + (res.checks[-1][2] + f"; means {np.round(means, 2).tolist()}",)
    return res


def check_nesting(seed: RngSeed, n_soups: int = 10_000) -> CriterionResult:
    res = CriterionResult(8, "nesting and Poisson counts", 120.0)
    k = build_kernel()
    st, _ = _soup_batch(seed, SOUP_COUNT)
    counts = st.counts[:n_soups]
    ratio = counts.var(ddof=1) / counts.mean()
    res.add("trajectory count variance/mean in [0.95, 1.05]", 0.95 <= ratio <= 1.05,
            f"variance/mean {ratio:.4f}, mean {counts.mean():.4f} over {n_soups} soups")
    levels = (0.25, 0.5, 0.75, 1.0)
    bulk = simulate_soups(20, 1.0, 2000, k, seed, levels=levels, radii=(5, 10, 20))
    nested = bool(np.all(np.diff(bulk.vacant_counts, axis=1) <= 0))
    probe_nested = all(
        np.all(st.vacant(p, 1.0) <= st.vacant(p, 0.5)) for p in SOUP_PROBES
    )
    cfg = InterlacementConfig(20, levels, seed=seed)
    grids_nested = True
    for c in range(200):
        grids = vacant_grids(sample_soup(cfg, k, chunk=c), levels)
        grids_nested &= all(np.all(g2.vacant <= g1.vacant) for g1, g2 in zip(grids, grids[1:]))
        grids_nested &= all(g.is_vacant(ORIGIN) for g in grids)
    res.add("V^a2 subset of V^a1 on every soup", nested and probe_nested and grids_nested,
            f"2000 bulk soups, {len(st.counts)} probe soups, 200 traced soups")
    return res


def check_torus_excursions(seed: RngSeed, replicas: int = 30) -> CriterionResult:
    res = CriterionResult(9, "torus excursions", 1200.0)
    rep = excursion_count_check(1000, 1.0, replicas, seed)
    res.add("mean N_alpha within 20% of 2 alpha ln^2 n / ln ln n", abs(rep.relative_deviation) <= 0.2,
            f"mean {rep.mean:.2f} (sd {rep.sd:.2f}) vs {rep.predicted:.2f}, "
            f"relative deviation {rep.relative_deviation:+.3f}")
    return res


def check_torus_conditional(seed: RngSeed, replicas: int = 3000) -> CriterionResult:
    res = CriterionResult(10, "torus conditional law, desk scale", 3600.0)
    est = conditional_uncovered_estimate(64, 0.25, [(0, 0), (1, 0)], replicas, seed)
    res.add(">= 200 accepted replicas", est.accepted >= 200, f"{est.accepted} of {replicas}")
    _close(res, "P[{0,(1,0)} uncovered | 0 uncovered]", est.estimate.mean, est.predicted, 0.1)
    return res


def _determinism_payload(seed: RngSeed, threads: int) -> str:
    k = build_kernel()
    st = simulate_soups(20, 1.0, 600, k, seed, probes=((3, 0), (0, 4)), levels=(0.5, 1.0), radii=(5, 10),
                        chunk_size=100, threads=threads)
    coin = mc_estimate(lambda rng: rng.random() < 0.3, 5000, seed, threads=threads)
    runs = [run_torus(TorusConfig(32, 0.5, seed), i) for i in range(3)]
    payload = {
        "first_label": st.first_label,
        "vacant_counts": st.vacant_counts,
        "counts": st.counts,
        "coin": coin,
        "torus": [[r.N_alpha, sorted(r.uncovered), list(r.start)] for r in runs],
    }
    return report_json(payload, {"seed": seed.seed, "stream": seed.stream})


def check_determinism(seed: RngSeed) -> CriterionResult:
    res = CriterionResult(11, "determinism", 600.0)
    a = _determinism_payload(seed, 1)
    b = _determinism_payload(seed, 1)
    c = _determinism_payload(seed, 2)
    res.add("identical seeds give identical JSON", a == b, f"{len(a)} bytes")
    res.add("threads=2 equals threads=1", a == c, "")
    return res


CHECKS: dict[int, Callable[[RngSeed], CriterionResult]] = {
    1: check_kernel,
    2: check_capacity,
    3: check_h_transform,
    4: check_hitting,
    5: check_one_site,
    6: check_two_site,
    7: check_scaling,
    8: check_nesting,
    9: check_torus_excursions,
    10: check_torus_conditional,
    11: check_determinism,
}


def run_criterion(number: int, seed: RngSeed = RngSeed()) -> CriterionResult:
    t0 = time.perf_counter()
    res = CHECKS[number](seed)
    res.elapsed = time.perf_counter() - t0
    return res


def run_suite(suite: str = "all", seed: RngSeed = RngSeed(), echo: Callable[[str], None] | None = None):
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    out = []
    for n in SUITES[suite]:
        r = run_criterion(n, seed)
        if echo is not None:
            echo(r.line())
        out.append(r)
    return out
