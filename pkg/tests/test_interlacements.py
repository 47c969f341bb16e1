import math

import numpy as np
import pytest

from ri2d.interlacements import (
    InterlacementConfig,
    conditional_local_rate,
    conditional_prob_exact,
    one_point_prob,
    sample_soup,
    simulate_soups,
    two_point_prob,
    vacancy_prob,
    vacant_grids,
)
from ri2d.kernel import potential_real
from ri2d.lattice import ball
from ri2d.potential import analyze
from ri2d.rng import RngSeed


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(window_radius=0, levels=[1.0]),
        dict(window_radius=5, levels=[]),
        dict(window_radius=5, levels=[-0.5]),
        dict(window_radius=5, levels=[1.0, 0.5]),
        dict(window_radius=5, levels=[1.0], kill_radius=10),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        InterlacementConfig(**kwargs)


def test_trajectory_count_has_poisson_mean(kernel):
    # E[count] = pi * alpha * cap(B(R))
    radius, alpha, n = 50, 1.0, 10_000
    mean = math.pi * alpha * analyze(ball(radius), kernel).cap
    assert mean == pytest.approx(math.pi * potential_real(radius), rel=0.01)
    assert mean == pytest.approx(11.06, abs=0.05)
    stats = simulate_soups(radius, alpha, n, kernel, RngSeed(1), probes=[(1, 0)])
    assert abs(stats.counts.mean() - mean) < 3 * math.sqrt(mean / n)
    assert 0.95 <= stats.counts.var() / stats.counts.mean() <= 1.05


def test_level_zero_is_empty(kernel):
    soup = sample_soup(InterlacementConfig(5, [0.0, 1.0], seed=RngSeed(4)), kernel)
    g0, g1 = vacant_grids(soup, [0.0, 1.0])
    r = 5
    c = np.arange(-r, r + 1)
    inside = c[:, None] ** 2 + c[None, :] ** 2 <= r * r
    assert np.array_equal(g0.vacant, inside)
    assert g1.vacant_count <= g0.vacant_count


def test_thinning_of_labels(kernel):
    soup = sample_soup(InterlacementConfig(8, [2.0], seed=RngSeed(6)), kernel)
    labels = [t.label for t in soup.trajectories]
    assert labels == sorted(labels)
    assert all(0 <= u <= 2 * math.pi for u in labels)
    assert len(soup.at_level(1.0)) == sum(u <= math.pi for u in labels)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_vacant_sets_are_nested_and_avoid_origin(kernel, seed):
    levels = [0.25, 0.5, 1.0, 2.0]
    soup = sample_soup(InterlacementConfig(12, levels, seed=RngSeed(seed)), kernel)
    grids = vacant_grids(soup, levels)
    for lo, hi in zip(grids, grids[1:]):
        assert not (hi.vacant & ~lo.vacant).any()
    assert all(g.is_vacant((0, 0)) for g in grids)
    for t in soup.trajectories:
        for exc in t.excursions:
            assert exc.is_nearest_neighbour()


def test_vacant_grids_need_sorted_levels(kernel):
    soup = sample_soup(InterlacementConfig(4, [1.0], seed=RngSeed(0)), kernel)
    with pytest.raises(ValueError):
        vacant_grids(soup, [1.0, 0.5])


def test_closed_form_probabilities(kernel):
    assert one_point_prob((1, 0), 1.0, kernel) == pytest.approx(math.exp(-math.pi / 2), rel=1e-12)
    assert vacancy_prob([(0, 0), (1, 0)], 1.0, kernel) == pytest.approx(math.exp(-math.pi / 2), rel=1e-12)
    # {x, y} vacant is {0, x, y} vacant: three-point capacity
    expected = math.exp(-math.pi * 0.5 * math.pi / (2 * (math.pi - 1)))
    assert two_point_prob((1, 0), (0, 1), 0.5, kernel) == pytest.approx(expected, rel=1e-12)
    assert vacancy_prob([(0, 0)], 3.0, kernel) == 1.0
    with pytest.raises(ValueError):
        vacancy_prob([(1, 0)], 1.0, kernel)
    with pytest.raises(ValueError):
        two_point_prob((1, 0), (1, 0), 1.0, kernel)


@pytest.mark.parametrize("x", [(60, 0), (100, 0), (70, 70)])
def test_conditional_local_rate_near_exact(kernel, x):
    pts = [(0, 0), (1, 0)]
    approx = conditional_local_rate(pts, x, 1.0, kernel)
    exact = conditional_prob_exact(pts, x, 1.0, kernel)
    assert approx == pytest.approx(exact, rel=0.01)


def test_conditional_rate_example(kernel):
    # cap({0, e1}) = 1/2, a(100, 0) = 3.96111
    a = kernel((100, 0))
    expected = math.exp(-(math.pi / 4) * 0.5 / (1 - 0.5 / (2 * a)))
    assert conditional_local_rate([(0, 0), (1, 0)], (100, 0), 1.0, kernel) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.65760, abs=1e-4)
    # far limit and linearity of the exponent in alpha
    limit = math.exp(-math.pi / 8)
    gaps = [limit - conditional_local_rate([(0, 0), (1, 0)], (10**k, 0), 1.0, kernel) for k in (2, 4, 8, 16)]
    assert all(g > 0 for g in gaps) and gaps == sorted(gaps, reverse=True)
    assert gaps[-1] < 0.01
    r1 = conditional_local_rate([(0, 0), (1, 0)], (100, 0), 1.0, kernel)
    r3 = conditional_local_rate([(0, 0), (1, 0)], (100, 0), 3.0, kernel)
    assert math.log(r3) == pytest.approx(3 * math.log(r1), rel=1e-12)
    with pytest.raises(ValueError):
        conditional_local_rate([(0, 0), (3, 0)], (5, 0), 1.0, kernel)


def test_dihedral_invariance_in_law(kernel):
    probes = [(3, 0), (0, 3), (-3, 0), (0, -3), (2, 1), (1, -2)]
    stats = simulate_soups(6, 0.5, 20_000, kernel, RngSeed(9), probes=probes)
    p = np.array([stats.vacant(q, 0.5).mean() for q in probes])
    sd = math.sqrt(p.mean() * (1 - p.mean()) / 20_000)
    assert np.abs(p[:4] - p[:4].mean()).max() < 4 * sd
    assert abs(p[4] - p[5]) < 4 * math.sqrt(2) * sd


def test_funnel_agrees_with_full_trace(kernel):
    probes = [(2, 0), (1, 1)]
    n = 20_000
    funnel = simulate_soups(16, 1.0, n, kernel, RngSeed(12), probes=probes)
    full = simulate_soups(16, 1.0, n, kernel, RngSeed(13), probes=probes, levels=[1.0], radii=[16])
    assert funnel.trace_radius == 2 and full.trace_radius == 16
    for q in probes:
        a, b = funnel.vacant(q, 1.0).mean(), full.vacant(q, 1.0).mean()
        assert abs(a - b) < 4 * math.sqrt(2 * a * (1 - a) / n)
        assert a == pytest.approx(one_point_prob(q, 1.0, kernel), abs=4 * math.sqrt(a * (1 - a) / n))


def test_simulate_soups_validation(kernel):
    with pytest.raises(ValueError):
        simulate_soups(5, 0.0, 10, kernel)
    with pytest.raises(ValueError):
        simulate_soups(5, 1.0, 10, kernel, probes=[(9, 0)])
    with pytest.raises(ValueError):
        simulate_soups(5, 1.0, 10, kernel, levels=[2.0])
    with pytest.raises(ValueError):
        simulate_soups(5, 1.0, 10, kernel, levels=[1.0], radii=[4, 3])


def test_simulate_soups_thread_independent(kernel):
    kw = dict(probes=[(1, 0), (3, 2)], levels=[0.5, 1.0], radii=[2, 4], chunk_size=300)
    a = simulate_soups(4, 1.0, 1000, kernel, RngSeed(5), threads=1, **kw)
    b = simulate_soups(4, 1.0, 1000, kernel, RngSeed(5), threads=3, **kw)
    assert np.array_equal(a.first_label, b.first_label)
    assert np.array_equal(a.vacant_counts, b.vacant_counts)
    # counts over nested radii are cumulative and decrease with the level
    assert (np.diff(a.vacant_counts, axis=2) >= 0).all()
    assert (np.diff(a.vacant_counts, axis=1) <= 0).all()
