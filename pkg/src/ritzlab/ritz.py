"""The empirical Ritz loss, its four-term split, and derived estimators.

The loss of a candidate u over samples X_i in the domain and Y_j on the
boundary (with |Omega| = 1, |boundary| = 2d) is

    (1/N) sum_i [ ||grad u(X_i)||^2 / 2 + w(X_i) u(X_i)^2 / 2 - u(X_i) f(X_i) ]
    - (2d/M) sum_j u(Y_j) g(Y_j),

reported with the gradient, mass, forcing and boundary terms separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .networks import (
    Network,
    forward_batch,
    values_and_input_gradients,
    weighted_parameter_gradient,
)
from .problems import Problem
from .sampling import MCEstimate, SampleSet, make_sample_set, sample_boundary, sample_domain

_REFERENCE_SAMPLES = 1_000_000


def derived_seed(seed: int, k: int) -> int:
    """Stable arithmetic child seeds for replications and reference draws."""
    return (seed * 1_000_003 + k) % 2**63


@dataclass(frozen=True)
class LossReport:
    """Total empirical Ritz loss and its four terms.

    total = term_gradient + term_mass - term_forcing - term_boundary, exactly
    as computed (the additivity identity is preserved to rounding).
    """

    total: float
    term_gradient: float
    term_mass: float
    term_forcing: float
    term_boundary: float

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "grad_term": self.term_gradient,
            "mass_term": self.term_mass,
            "forcing_term": self.term_forcing,
            "boundary_term": self.term_boundary,
        }


def _domain_integrand_pieces(net: Network, p: Problem, x: np.ndarray):
    vals, grads = values_and_input_gradients(net, x)
    grad_piece = 0.5 * np.sum(grads**2, axis=1)
    mass_piece = 0.5 * p.w(x) * vals**2
    forcing_piece = vals * p.f(x)
    return vals, grads, grad_piece, mass_piece, forcing_piece


def empirical_loss(net: Network, p: Problem, samples: SampleSet) -> LossReport:
    """Empirical Ritz loss on a fixed sample set, terms reported separately."""
    if samples.d != p.d or net.architecture.input_dim != p.d:
        raise ValueError("sample/net dimensions do not match the problem")
    if samples.n_domain == 0 or samples.n_boundary == 0:
        raise ValueError("sample set must contain domain and boundary points")
    _, _, grad_piece, mass_piece, forcing_piece = _domain_integrand_pieces(
        net, p, samples.domain_points
    )
    tg = float(np.mean(grad_piece))
    tm = float(np.mean(mass_piece))
    tf = float(np.mean(forcing_piece))
    b_vals = forward_batch(net, samples.boundary_points)
    tb = 2.0 * p.d * float(np.mean(b_vals * p.g(samples.boundary_points, samples.boundary_faces)))
    return LossReport(tg + tm - tf - tb, tg, tm, tf, tb)


def population_loss_estimate(net: Network, p: Problem, n_quad: int, seed: int) -> MCEstimate:
    """Monte-Carlo estimate of the population Ritz energy on fresh samples."""
    x = sample_domain(n_quad, p.d, seed)
    _, _, grad_piece, mass_piece, forcing_piece = _domain_integrand_pieces(net, p, x)
    dom = grad_piece + mass_piece - forcing_piece
    dom_mean = float(np.mean(dom))
    dom_se = float(np.std(dom, ddof=1)) / math.sqrt(n_quad)

    y, faces = sample_boundary(n_quad, p.d, seed)
    bnd = forward_batch(net, y) * p.g(y, faces)
    bnd_mean = 2.0 * p.d * float(np.mean(bnd))
    bnd_se = 2.0 * p.d * float(np.std(bnd, ddof=1)) / math.sqrt(n_quad)
    return MCEstimate(dom_mean - bnd_mean, math.hypot(dom_se, bnd_se))


@dataclass(frozen=True)
class EnergyExcessReport:
    """L(u) - L(u*) next to the matching quadratic form of the difference.

    For the weak solution u*, L(u) - L(u*) = (grad v, grad v)/2 + (v, v)_w / 2
    with v = u - u*; h1_sq_of_diff estimates the bracket (grad v, grad v)
    + (v, v)_w on an independent sample stream, so excess ~ h1_sq_of_diff / 2.
    """

    excess: float
    excess_se: float
    h1_sq_of_diff: float
    h1_sq_of_diff_se: float
    n_quad: int
    seed: int


def energy_excess(net: Network, p: Problem, n_quad: int, seed: int) -> EnergyExcessReport:
    if p.analytic_energy is None:
        raise ValueError(f"problem {p.name!r} has no analytic energy")
    pop = population_loss_estimate(net, p, n_quad, seed)
    x = sample_domain(n_quad, p.d, derived_seed(seed, 1))
    vals, grads = values_and_input_gradients(net, x)
    v = vals - p.u_star(x)
    dv = grads - p.grad_u_star(x)
    quad_form = np.sum(dv**2, axis=1) + p.w(x) * v**2
    return EnergyExcessReport(
        excess=pop.value - p.analytic_energy,
        excess_se=pop.std_error,
        h1_sq_of_diff=float(np.mean(quad_form)),
        h1_sq_of_diff_se=float(np.std(quad_form, ddof=1)) / math.sqrt(n_quad),
        n_quad=n_quad,
        seed=seed,
    )


def loss_and_parameter_gradient(net: Network, p: Problem, samples: SampleSet):
    """Empirical loss together with its exact parameter gradient.

    The gradient is assembled from the same adjoint pass that powers
    parameter_sensitivities, seeded with d(loss)/du and d(loss)/d(grad u)
    per sample point.
    """
    if samples.d != p.d or net.architecture.input_dim != p.d:
        raise ValueError("sample/net dimensions do not match the problem")
    x = samples.domain_points
    y = samples.boundary_points
    n, m = samples.n_domain, samples.n_boundary

    vals, grads, grad_piece, mass_piece, forcing_piece = _domain_integrand_pieces(net, p, x)
    tg = float(np.mean(grad_piece))
    tm = float(np.mean(mass_piece))
    tf = float(np.mean(forcing_piece))
    b_vals = forward_batch(net, y)
    g_vals = p.g(y, samples.boundary_faces)
    tb = 2.0 * p.d * float(np.mean(b_vals * g_vals))
    report = LossReport(tg + tm - tf - tb, tg, tm, tf, tb)

    lam_dom = (p.w(x) * vals - p.f(x)) / n
    mat_dom = grads / n
    grad = weighted_parameter_gradient(net, x, lam_dom, mat_dom)
    lam_bnd = -(2.0 * p.d / m) * g_vals
    grad += weighted_parameter_gradient(net, y, lam_bnd)
    return report, grad


@dataclass(frozen=True)
class StatisticalGapReport:
    """Mean absolute loss gap of a fixed net at sample size n, per term too."""

    mean_abs_gap: float
    gap_gradient: float
    gap_mass: float
    gap_forcing: float
    gap_boundary: float
    mean_abs_gap_se: float
    n: int
    reps: int
    reference_n: int

    def to_json_dict(self) -> dict:
        return {
            "mean_abs_gap": self.mean_abs_gap,
            "mean_abs_gap_se": self.mean_abs_gap_se,
            "grad_term": self.gap_gradient,
            "mass_term": self.gap_mass,
            "forcing_term": self.gap_forcing,
            "boundary_term": self.gap_boundary,
            "n": self.n,
            "reps": self.reps,
            "reference_n": self.reference_n,
        }


def statistical_gap_estimate(
    net: Network,
    p: Problem,
    n: int,
    reps: int,
    seed: int,
    reference_n: int = _REFERENCE_SAMPLES,
) -> StatisticalGapReport:
    """|empirical - reference| loss gap for a FIXED network.

    The reference is a reference_n-sample estimate standing in for the
    population loss; reps independent n-sample sets are drawn and the mean
    absolute gap is reported overall and per loss term.  This estimates the
    fixed-net statistical fluctuation, not the supremum over a network class.
    """
    if reps < 2:
        raise ValueError("need reps >= 2")
    ref = empirical_loss(net, p, make_sample_set(reference_n, reference_n, p.d,
                                                 derived_seed(seed, 0)))
    gaps = np.zeros((reps, 5))
    for r in range(reps):
        rep = empirical_loss(net, p, make_sample_set(n, n, p.d, derived_seed(seed, r + 1)))
        gaps[r] = [
            abs(rep.total - ref.total),
            abs(rep.term_gradient - ref.term_gradient),
            abs(rep.term_mass - ref.term_mass),
            abs(rep.term_forcing - ref.term_forcing),
            abs(rep.term_boundary - ref.term_boundary),
        ]
    means = gaps.mean(axis=0)
    se = float(np.std(gaps[:, 0], ddof=1)) / math.sqrt(reps)
    return StatisticalGapReport(*map(float, means), mean_abs_gap_se=se,
                                n=n, reps=reps, reference_n=reference_n)
