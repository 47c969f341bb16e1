import math

import numpy as np
import pytest
from scipy import stats

from ri2d.rng import RngSeed
from ri2d.torus import (
    INNER,
    OUTER,
    InsufficientSamplesError,
    TorusConfig,
    conditional_uncovered_estimate,
    cover_time,
    excursion_count_check,
    predicted_excursions,
    ring_labels,
    run_torus,
    t_alpha,
)


def test_t_alpha_rounding():
    assert t_alpha(64, 1.0) == round(4 / math.pi * 64**2 * math.log(64) ** 2)
    assert TorusConfig(100, 0.5).t_alpha == t_alpha(100, 0.5)


@pytest.mark.parametrize("kwargs", [dict(n=15, alpha=1.0), dict(n=64, alpha=0.0), dict(n=64.5, alpha=1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TorusConfig(**kwargs)


def test_full_record_memory_cap():
    with pytest.raises(MemoryError):
        TorusConfig(5000, 1.0, full=True)


def test_radii():
    cfg = TorusConfig(64, 1.0)
    assert cfg.inner_radius == pytest.approx(64 / (3 * math.log(64)))
    assert cfg.outer_radius == pytest.approx(64 / 3)
    assert cfg.window_radius == 8.0


def test_ring_labels_are_disc_boundaries():
    n = 64
    lab = ring_labels(n, 5.13, 21.3).reshape(n, n)
    c = np.where(np.arange(n) > n // 2, np.arange(n) - n, np.arange(n))
    d2 = c[:, None] ** 2 + c[None, :] ** 2
    assert (d2[lab == INNER] <= 5.13**2).all() and (d2[lab == INNER] > 4**2).all()
    assert (d2[lab == OUTER] <= 21.3**2).all() and (d2[lab == OUTER] > 20**2).all()
    with pytest.raises(ValueError):
        ring_labels(n, 30, 40)


def test_start_only_at_time_zero():
    cfg = TorusConfig(16, 1e-9, RngSeed(3), full=True)
    assert cfg.t_alpha == 0
    run = run_torus(cfg)
    assert len(run.uncovered) == 16 * 16 - 1
    assert run.start not in run.uncovered


@pytest.mark.parametrize("replica", range(4))
def test_uncovered_set_shrinks_in_time(replica):
    seed = RngSeed(17)
    runs = [run_torus(TorusConfig(32, a, seed, full=True), replica) for a in (0.05, 0.1, 0.2, 0.4)]
    for early, late in zip(runs, runs[1:]):
        assert late.uncovered <= early.uncovered
        assert late.start == early.start


def test_windowed_matches_full():
    seed = RngSeed(2)
    full = run_torus(TorusConfig(32, 0.1, seed, full=True), 1)
    win = run_torus(TorusConfig(32, 0.1, seed, window=6), 1)
    back = {((p.x % 32), (p.y % 32)) for p in win.uncovered}
    expected = {tuple(p) for p in full.uncovered if min(p.x, 32 - p.x) ** 2 + min(p.y, 32 - p.y) ** 2 <= 36}
    assert back == expected


@pytest.mark.parametrize("replica", range(5))
def test_excursion_structure(replica):
    cfg = TorusConfig(64, 0.5, RngSeed(31))
    run = run_torus(cfg, replica)
    js, ds = run.excursion_starts, run.excursion_ends
    assert run.N_alpha_prime <= run.N_alpha <= run.N_alpha_prime + 1
    assert len(js) >= 1 and run.first_outer_hit < js[0]
    # J_1 < D_1 < J_2 < D_2 < ...
    times = np.empty(len(js) + len(ds), dtype=np.int64)
    times[0::2][: len(js)] = js
    times[1::2][: len(ds)] = ds
    assert np.all(np.diff(times) > 0)
    ring = ring_labels(cfg.n, cfg.inner_radius, cfg.outer_radius).reshape(cfg.n, cfg.n)
    assert (ring[run.start_sites[:, 0], run.start_sites[:, 1]] == INNER).all()
    assert (ring[run.end_sites[:, 0], run.end_sites[:, 1]] == OUTER).all()


def test_uniform_start_chi_square():
    n, reps = 16, 4096
    seed = RngSeed(44)
    counts = np.zeros(n * n)
    for i in range(reps):
        s = run_torus(TorusConfig(n, 1e-9, seed, window=0.0), i).start
        counts[s.x * n + s.y] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_origin_uncovered_probability():
    # n^{-2 alpha} = 0.125, loose factor-2 band
    est = conditional_uncovered_estimate(64, 0.25, [(0, 0)], 1000, RngSeed(8))
    assert est.estimate.mean == 1.0
    assert 0.0625 <= est.acceptance_rate <= 0.25


def test_large_alpha_covers_origin():
    runs = [run_torus(TorusConfig(32, 4.0, RngSeed(5), window=0.0), i) for i in range(20)]
    assert not any(r.origin_uncovered for r in runs)


def test_conditional_estimate_chain():
    seed = RngSeed(12)
    chain = [[(0, 0)], [(0, 0), (1, 0)], [(0, 0), (1, 0), (1, 1)]]
    ests = [conditional_uncovered_estimate(64, 0.25, a, 1500, seed) for a in chain]
    means = [e.estimate.mean for e in ests]
    assert means[0] == 1.0
    assert means == sorted(means, reverse=True)
    assert ests[1].predicted == pytest.approx(math.exp(-math.pi * 0.25 * 0.5), rel=1e-12)
    assert abs(means[1] - ests[1].predicted) <= 0.1
    assert set(ests[1].as_dict()) >= {"estimate", "ci", "acceptance_rate", "predicted"}


def test_conditional_estimate_errors():
    with pytest.raises(InsufficientSamplesError):
        conditional_uncovered_estimate(64, 0.25, [(0, 0), (1, 0)], 100, RngSeed(1))
    with pytest.raises(ValueError):
        conditional_uncovered_estimate(64, 0.25, [(1, 0)], 100, RngSeed(1))


def test_cover_time_counting_bound():
    assert all(cover_time(4, RngSeed(i)) >= 15 for i in range(50))
    with pytest.raises(ValueError):
        cover_time(1000)


def test_cover_time_band():
    ratios = [cover_time(64, RngSeed(3), i) / (64**2 * math.log(64) ** 2) for i in range(10)]
    assert sum(0.6 <= r <= 2.6 for r in ratios) >= 8


def test_cover_time_trend():
    def median_ratio(n):
        return np.median([cover_time(n, RngSeed(n), i) / (n * n * math.log(n) ** 2) for i in range(50)])

    target = 4 / math.pi
    assert abs(median_ratio(128) - target) < abs(median_ratio(32) - target)


def test_predicted_excursions():
    assert predicted_excursions(1000, 1.0) == pytest.approx(49.38, abs=0.01)
    assert predicted_excursions(1000, 2.0) == pytest.approx(2 * predicted_excursions(1000, 1.0), rel=1e-12)


def test_excursion_report_threads():
    a = excursion_count_check(128, 0.5, 6, RngSeed(4), threads=1)
    b = excursion_count_check(128, 0.5, 6, RngSeed(4), threads=3)
    assert a.counts == b.counts
    assert all(p <= c <= p + 1 for c, p in zip(a.counts, a.counts_prime))


@pytest.mark.slow
def test_excursion_concentration():
    rep = excursion_count_check(1000, 1.0, 12, RngSeed(99))
    assert rep.sd / rep.mean < 0.2
    assert abs(rep.relative_deviation) < 0.2
