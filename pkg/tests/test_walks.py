import math

import numpy as np
import pytest

from ri2d.kernel import potential_real
from ri2d.lattice import ORIGIN, LatticePoint, outer_boundary
from ri2d.rng import RngSeed
from ri2d.walks import (
    DirichletProblem,
    WalkPath,
    conditioned_exit_kernel,
    dirichlet_hit_prob,
    hat_escape_ball_exact,
    hat_escape_ball_mc,
    hat_escape_ball_prob,
    hat_hit_point_mc,
    hat_hit_point_prob,
    hat_return_prob,
    hat_run_until_escape,
    hat_step,
    hat_transition,
    path_probability_hat,
    srw_path,
    window_sampler,
)


def within_sigma(k, n, p, sigmas=4.0):
    return abs(k / n - p) <= sigmas * math.sqrt(p * (1 - p) / n) + 1e-12


@pytest.mark.parametrize("x", [(1, 0), (0, -1), (1, 1), (3, 2), (-10, 4), (250, -3)])
def test_transition_is_a_probability(kernel, x):
    nbrs, p = hat_transition(x, kernel)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert (p >= 0).all()
    assert [q - x for q in nbrs] == [(1, 0), (0, 1), (-1, 0), (0, -1)]


def test_transition_never_enters_origin(kernel):
    nbrs, p = hat_transition((1, 0), kernel)
    assert p[nbrs.index(ORIGIN)] == 0.0
    # a(e1 +- e2) = 4/pi, a(2 e1) = 4 - 8/pi over 4 a(e1) = 4
    assert p.tolist() == pytest.approx([(4 - 8 / math.pi) / 4, 1 / math.pi, 0.0, 1 / math.pi], abs=1e-12)


def test_step_frequencies(kernel):
    rng = np.random.default_rng(3)
    x = LatticePoint(1, 1)
    nbrs, p = hat_transition(x, kernel)
    n = 20_000
    draws = [hat_step(x, kernel, rng) for _ in range(n)]
    for q, pq in zip(nbrs, p):
        assert within_sigma(draws.count(q), n, pq)


def test_origin_is_excluded(kernel):
    with pytest.raises(ValueError):
        hat_transition(ORIGIN, kernel)
    with pytest.raises(ValueError):
        hat_return_prob(ORIGIN, kernel)


@pytest.mark.parametrize(
    "x, y, expected",
    [
        ((1, 0), (2, 0), (1 + 4 - 8 / math.pi - 1) / 2),
        ((1, 0), (0, 1), (2 - 4 / math.pi) / 2),
    ],
)
def test_hit_point_examples(kernel, x, y, expected):
    assert hat_hit_point_prob(x, y, kernel) == pytest.approx(expected, abs=1e-12)


def test_return_prob_example(kernel):
    assert hat_return_prob((1, 0), kernel) == 0.5
    assert hat_return_prob((1, 1), kernel) == pytest.approx(1 - math.pi / 8, abs=1e-12)


@pytest.mark.parametrize("x, y", [((1, 0), (0, 1)), ((2, 1), (-3, 0)), ((4, 0), (4, 0)), ((1, 1), (1, 1))])
def test_hit_probabilities_monte_carlo(kernel, x, y):
    expected = hat_return_prob(x, kernel) if x == y else hat_hit_point_prob(x, y, kernel)
    k, n = hat_hit_point_mc(x, y, 20_000, kernel, RngSeed(11))
    assert within_sigma(k, n, expected)


def test_escape_closed_forms(kernel):
    x, r = (40, 0), 5
    exact = hat_escape_ball_exact(x, r, kernel)
    approx = hat_escape_ball_prob(x, r, kernel)
    assert 0 < exact < 1
    assert abs(exact - approx) < 1.0 / (r * kernel(x))
    with pytest.raises(ValueError):
        hat_escape_ball_prob((3, 0), 5, kernel)


def test_escape_monte_carlo(kernel):
    x, r = (12, 5), 4
    vals = hat_escape_ball_mc(x, r, 4000, kernel, RngSeed(5))
    exact = hat_escape_ball_exact(x, r, kernel)
    assert abs(vals.mean() - exact) < 4 * vals.std(ddof=1) / math.sqrt(len(vals))


def test_dirichlet_solution(kernel):
    # SRW from x hits 0 before leaving B(R) with probability ~ 1 - a(x)/a(R)
    R = 64
    prob = DirichletProblem(R, target=[ORIGIN])
    for x in [(1, 0), (5, 3), (20, 0)]:
        p = dirichlet_hit_prob(prob, x)
        expected = 1 - kernel(x) / potential_real(R)
        assert p == pytest.approx(expected, rel=0.02, abs=0.005)
    assert dirichlet_hit_prob(prob, ORIGIN) == 1.0


def test_dirichlet_symmetric_starts():
    prob = DirichletProblem(20, absorbing=[(3, 0)], target=[(-3, 0)])
    assert dirichlet_hit_prob(prob, (0, 5)) == pytest.approx(dirichlet_hit_prob(prob, (0, -5)), abs=1e-12)
    assert dirichlet_hit_prob(prob, (-2, 0)) > dirichlet_hit_prob(prob, (2, 0))


def test_dirichlet_domain_checks():
    with pytest.raises(ValueError):
        DirichletProblem(1)
    with pytest.raises(ValueError):
        DirichletProblem(5, target=[(9, 0)])


@pytest.mark.parametrize("x, R", [((1, 0), 6), ((2, -3), 8), ((5, 5), 10)])
def test_exit_kernel_agrees_with_h_transform(kernel, x, R):
    law = conditioned_exit_kernel(x, R, kernel)
    assert law.probs.sum() == pytest.approx(1.0, abs=1e-10)
    assert law.discrepancy < 1e-10


def test_exit_kernel_monte_carlo(kernel):
    R = 5
    law = conditioned_exit_kernel((1, 0), R, kernel)
    probs = dict(zip(map(tuple, law.points.tolist()), law.probs))
    sampler = window_sampler(R, kernel)
    state = RngSeed(21).jit_state()
    n = 4000
    counts = dict.fromkeys(probs, 0)
    for _ in range(n):
        first = sampler.trace((1, 0), state)[0].steps
        r2 = (first**2).sum(axis=1)
        # first site on the internal boundary of B(R)
        hit = next(tuple(p) for p in first.tolist() if tuple(p) in probs)
        counts[hit] += 1
    for p, q in probs.items():
        assert within_sigma(counts[p], n, q)


def test_srw_path_shape():
    path = srw_path((2, -1), 500, RngSeed(1))
    assert len(path) == 501
    assert path.steps[0].tolist() == [2, -1]
    assert path.is_nearest_neighbour()
    assert np.array_equal(path.steps, srw_path((2, -1), 500, RngSeed(1)).steps)


def test_hat_path_avoids_origin(kernel):
    path = hat_run_until_escape((1, 0), 5, 40, kernel, RngSeed(2))
    assert path.is_nearest_neighbour()
    assert not (path.steps == 0).all(axis=1).any()
    assert (path.steps[-1] ** 2).sum() > 40**2
    assert path.bias_bound == pytest.approx(potential_real(5) / potential_real(40), rel=1e-12)


def test_window_traces(kernel):
    sampler = window_sampler(6, kernel)
    state = RngSeed(8).jit_state()
    outside = set(outer_boundary(list(map(tuple, sampler.profile.set.as_array()))))
    for _ in range(50):
        pieces = sampler.trace((3, 0), state)
        for exc in pieces:
            assert exc.is_nearest_neighbour()
            assert ((exc.steps**2).sum(axis=1) <= 36).all()
            assert not (exc.steps == 0).all(axis=1).any()
        # later pieces start on the boundary of the window
        for exc in pieces[1:]:
            start = LatticePoint(*exc.steps[0].tolist())
            assert any(q in outside for q in start.neighbors())


def test_entrance_law_far_limit(kernel):
    sampler = window_sampler(4, kernel)
    p, cdf = sampler.entrance_law([(5, 0), (200, 0)])
    assert 0 < p[1] < p[0] < 1
    assert p[1] == pytest.approx(1 - hat_escape_ball_exact((200, 0), 4, kernel), abs=1e-12)
    assert np.all(np.diff(cdf, axis=1) >= 0) and (cdf[:, -1] == 1).all()


def test_path_probability(kernel):
    assert path_probability_hat([(1, 0), (2, 0)], kernel) == pytest.approx((4 - 8 / math.pi) / 4, abs=1e-12)
    assert path_probability_hat([(1, 0), (3, 0)], kernel) == 0.0
    # probabilities of all two-step paths sum to one
    x = LatticePoint(2, 1)
    total = sum(path_probability_hat([x, y, z], kernel) for y in x.neighbors() for z in y.neighbors())
    assert total == pytest.approx(1.0, abs=1e-12)


def test_walkpath_kind():
    with pytest.raises(ValueError):
        WalkPath(np.zeros((1, 2), dtype=np.int64), "levy")
