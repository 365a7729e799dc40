import math

import numpy as np
import pytest

from ritzlab.networks import IDENTITY, RELU2, Architecture, Network, forward
from ritzlab.problems import Problem, make_cosine_problem, make_quadratic_problem
from ritzlab.ritz import (
    empirical_loss,
    energy_excess,
    loss_and_parameter_gradient,
    population_loss_estimate,
    statistical_gap_estimate,
)
from ritzlab.sampling import make_sample_set

from conftest import random_relu2_net, rng_for, sum_of_squares_net


def zero_net(d):
    net = random_relu2_net(d, (3,), seed=0)
    return net.with_parameters(np.zeros(net.n_parameters))


def constant_net(d, c):
    arch = Architecture((d, 1, 1), (RELU2, IDENTITY))
    return Network(arch, [np.zeros((1, d)), np.zeros((1, 1))],
                   [np.zeros(1), np.array([c])])


def reference_loss(net, p, samples):
    """Direct re-summation oracle, written independently of the package path."""
    from ritzlab.networks import forward_with_input_gradient

    n = samples.n_domain
    tg = tm = tf = 0.0
    for x in samples.domain_points:
        r = forward_with_input_gradient(net, x)
        tg += 0.5 * float(np.sum(r.input_gradient**2))
        tm += 0.5 * float(p.w(x[None, :])[0]) * r.value**2
        tf += r.value * float(p.f(x[None, :])[0])
    tg, tm, tf = tg / n, tm / n, tf / n
    tb = 0.0
    for y, face in zip(samples.boundary_points, samples.boundary_faces):
        tb += forward(net, y) * float(p.g(y[None, :], face[None, :])[0])
    tb *= 2.0 * p.d / samples.n_boundary
    return tg + tm - tf - tb


def test_empty_sample_set_rejected():
    from ritzlab.sampling import SampleSet

    p = make_cosine_problem(2)
    empty = SampleSet(np.empty((0, 2)), np.empty((0, 2)),
                      np.empty((0, 2), dtype=int), seed=0)
    with pytest.raises(ValueError):
        empirical_loss(zero_net(2), p, empty)


def test_zero_net_has_zero_loss():
    p = make_cosine_problem(2)
    s = make_sample_set(200, 100, 2, seed=1)
    rep = empirical_loss(zero_net(2), p, s)
    assert rep.total == 0.0
    assert rep.term_gradient == rep.term_mass == rep.term_forcing == rep.term_boundary == 0.0


def test_constant_net_loss_hand_computation():
    p = make_cosine_problem(2)
    s = make_sample_set(500, 200, 2, seed=2)
    rep = empirical_loss(constant_net(2, 1.0), p, s)
    f_bar = float(np.mean(p.f(s.domain_points)))
    assert rep.total == pytest.approx(0.5 - f_bar, rel=1e-12)
    assert rep.term_mass == pytest.approx(0.5, rel=1e-12)
    assert rep.term_gradient == 0.0


def test_loss_matches_resummation_oracle():
    p = make_quadratic_problem(2)
    s = make_sample_set(60, 40, 2, seed=3)
    net = random_relu2_net(2, (5, 4), seed=4)
    rep = empirical_loss(net, p, s)
    assert rep.total == pytest.approx(reference_loss(net, p, s), rel=1e-10)


def test_loss_additivity_identity():
    p = make_quadratic_problem(2)
    s = make_sample_set(300, 150, 2, seed=5)
    rep = empirical_loss(random_relu2_net(2, (6,), seed=6), p, s)
    lhs = rep.term_gradient + rep.term_mass - rep.term_forcing - rep.term_boundary
    assert rep.total == pytest.approx(lhs, rel=1e-12, abs=1e-15)


def test_loss_permutation_invariant_to_rounding():
    p = make_quadratic_problem(2)
    s = make_sample_set(400, 200, 2, seed=7)
    rng = rng_for(8)
    perm_d = rng.permutation(400)
    perm_b = rng.permutation(200)
    from ritzlab.sampling import SampleSet

    s2 = SampleSet(s.domain_points[perm_d], s.boundary_points[perm_b],
                   s.boundary_faces[perm_b], seed=s.seed)
    net = random_relu2_net(2, (5,), seed=9)
    a, b = empirical_loss(net, p, s), empirical_loss(net, p, s2)
    assert a.total == pytest.approx(b.total, rel=1e-13)


def test_large_sample_loss_near_analytic_energy():
    p = make_quadratic_problem(2)
    net = sum_of_squares_net(2)
    s = make_sample_set(1_000_000, 1_000_000, 2, seed=10)
    rep = empirical_loss(net, p, s)
    est = population_loss_estimate(net, p, 1_000_000, seed=10)
    assert abs(rep.total - p.analytic_energy) <= 5 * est.std_error


# --------------------------------------------------- population estimates


def test_population_loss_zero_net_is_zero():
    p = make_cosine_problem(3)
    est = population_loss_estimate(zero_net(3), p, 10_000, seed=11)
    assert est.value == 0.0
    assert est.std_error == 0.0


def test_population_loss_deterministic():
    p = make_cosine_problem(2)
    net = random_relu2_net(2, (4,), seed=12)
    a = population_loss_estimate(net, p, 20_000, seed=13)
    b = population_loss_estimate(net, p, 20_000, seed=13)
    assert a == b


def test_energy_excess_at_exact_solution():
    p = make_quadratic_problem(2)
    rep = energy_excess(sum_of_squares_net(2), p, 100_000, seed=14)
    assert abs(rep.excess) <= 5 * rep.excess_se
    assert rep.h1_sq_of_diff <= 1e-18


def test_energy_excess_sandwich_identity_w_equals_one():
    # with w = 1 the excess equals half the squared H1 norm of the difference
    p = make_cosine_problem(2)
    for seed in (15, 16, 17):
        net = random_relu2_net(2, (5, 4), seed=seed, scale=0.5)
        rep = energy_excess(net, p, 200_000, seed=seed)
        combined = math.hypot(rep.excess_se, 0.5 * rep.h1_sq_of_diff_se)
        assert abs(rep.excess - 0.5 * rep.h1_sq_of_diff) <= 5 * combined


def test_energy_excess_nonnegative_up_to_noise():
    p = make_cosine_problem(1)
    for seed in (18, 19, 20, 21):
        net = random_relu2_net(1, (4,), seed=seed)
        rep = energy_excess(net, p, 50_000, seed=seed)
        assert rep.excess >= -5 * rep.excess_se


def test_energy_excess_requires_analytic_energy():
    p = make_cosine_problem(1)
    stripped = Problem(
        name="no-energy", d=1, w=p.w, f=p.f, g=p.g, u_star=p.u_star,
        grad_u_star=p.grad_u_star, c1=p.c1, c2=p.c2, c3=p.c3, w_sup=p.w_sup,
    )
    with pytest.raises(ValueError):
        energy_excess(zero_net(1), stripped, 1000, seed=22)


# ------------------------------------------------------- loss gradient


def test_loss_gradient_matches_finite_differences():
    p = make_quadratic_problem(2)
    s = make_sample_set(40, 30, 2, seed=23)
    net = random_relu2_net(2, (5, 4), seed=24)
    rep, grad = loss_and_parameter_gradient(net, p, s)
    assert rep.total == pytest.approx(empirical_loss(net, p, s).total, rel=1e-12)

    theta = net.flatten_parameters()
    rng = rng_for(25)
    h = 1e-5
    for c in rng.choice(theta.size, size=30, replace=False):
        tp, tm_ = theta.copy(), theta.copy()
        tp[c] += h
        tm_[c] -= h
        fd = (
            empirical_loss(net.with_parameters(tp), p, s).total
            - empirical_loss(net.with_parameters(tm_), p, s).total
        ) / (2 * h)
        assert abs(grad[c] - fd) / max(1.0, abs(fd)) < 1e-5


def test_loss_gradient_dead_downstream_parameters():
    # zero weights beyond the first layer kill every parameter path upstream
    p = make_quadratic_problem(2)
    s = make_sample_set(50, 30, 2, seed=26)
    net = random_relu2_net(2, (5,), seed=27)
    theta = net.flatten_parameters()
    n_first = 5 * 2 + 5
    theta[n_first:] = 0.0
    dead = net.with_parameters(theta)
    _, grad = loss_and_parameter_gradient(dead, p, s)
    assert np.all(grad[:n_first] == 0.0)


def test_loss_gradient_linear_in_forcing():
    p = make_quadratic_problem(2)
    no_f = Problem(
        name="no-forcing", d=2, w=p.w, f=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
        g=p.g, u_star=p.u_star, grad_u_star=p.grad_u_star,
        c1=p.c1, c2=p.c2, c3=p.c3, w_sup=p.w_sup,
    )
    s = make_sample_set(40, 25, 2, seed=28)
    net = random_relu2_net(2, (4, 3), seed=29)
    _, grad_full = loss_and_parameter_gradient(net, p, s)
    _, grad_nof = loss_and_parameter_gradient(net, no_f, s)

    # the difference must be exactly the forcing-term gradient (FD oracle)
    theta = net.flatten_parameters()
    h = 1e-5
    rng = rng_for(30)
    for c in rng.choice(theta.size, size=15, replace=False):
        tp, tm_ = theta.copy(), theta.copy()
        tp[c] += h
        tm_[c] -= h
        forcing = lambda nn: float(np.mean(
            np.asarray(p.f(s.domain_points))
            * np.asarray([forward(nn, x) for x in s.domain_points])
        ))
        fd = (forcing(net.with_parameters(tp)) - forcing(net.with_parameters(tm_))) / (2 * h)
        assert (grad_full - grad_nof)[c] == pytest.approx(-fd, rel=1e-4, abs=1e-9)


# -------------------------------------------------------- statistical gap


def test_gap_zero_net_is_zero():
    p = make_cosine_problem(2)
    rep = statistical_gap_estimate(zero_net(2), p, 256, reps=3, seed=31,
                                   reference_n=10_000)
    assert rep.mean_abs_gap == 0.0


def test_gap_shrinks_with_n():
    p = make_quadratic_problem(1)
    net = random_relu2_net(1, (4,), seed=32)
    small = statistical_gap_estimate(net, p, 64, reps=20, seed=33, reference_n=200_000)
    large = statistical_gap_estimate(net, p, 4096, reps=20, seed=33, reference_n=200_000)
    assert large.mean_abs_gap < small.mean_abs_gap


def test_gap_triangle_inequality_per_term():
    p = make_quadratic_problem(2)
    net = random_relu2_net(2, (4,), seed=34)
    rep = statistical_gap_estimate(net, p, 128, reps=5, seed=35, reference_n=50_000)
    term_sum = rep.gap_gradient + rep.gap_mass + rep.gap_forcing + rep.gap_boundary
    assert rep.mean_abs_gap <= term_sum + 1e-12


def test_gap_deterministic():
    p = make_cosine_problem(1)
    net = random_relu2_net(1, (3,), seed=36)
    a = statistical_gap_estimate(net, p, 128, reps=4, seed=37, reference_n=20_000)
    b = statistical_gap_estimate(net, p, 128, reps=4, seed=37, reference_n=20_000)
    assert a == b
