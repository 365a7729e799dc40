"""Manufactured Neumann problems on the unit hypercube (0,1)^d.

Each problem fixes an exact solution u*, a coefficient w bounded below by
c1 > 0, the forcing f = -lap(u*) + w u*, and the boundary flux g = du*/dn,
together with analytic reference quantities used as oracles by tests and
studies.  The geometry is hard-coded: |Omega| = 1 and |boundary| = 2d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class ProblemDefinitionError(RuntimeError):
    """Manufactured data failed its own consistency check."""


@dataclass(frozen=True)
class Problem:
    """A manufactured elliptic Neumann problem.

    Evaluators are vectorized: domain callables map (n, d) arrays to (n,)
    values (the gradient to (n, d)); g takes boundary points together with
    their face tags, an (n, 2) int array of (axis, side) pairs.
    """

    name: str
    d: int
    w: Callable
    f: Callable
    g: Callable
    u_star: Callable
    grad_u_star: Callable
    c1: float
    c2: float
    c3: float
    w_sup: float
    analytic_energy: float | None = None
    analytic_h1_norm_sq: float | None = None


def make_cosine_problem(d: int) -> Problem:
    """u*(x) = sum_i cos(pi x_i) with w = 1; the flux g vanishes identically."""
    if d < 1:
        raise ValueError("d must be >= 1")
    pi = math.pi

    def u_star(x):
        return np.sum(np.cos(pi * np.atleast_2d(x)), axis=1)

    def grad_u_star(x):
        return -pi * np.sin(pi * np.atleast_2d(x))

    def w(x):
        return np.ones(np.atleast_2d(x).shape[0])

    def f(x):
        return (pi**2 + 1.0) * u_star(x)

    def g(points, faces):
        return np.zeros(np.atleast_2d(points).shape[0])

    # int cos^2(pi t) dt = 1/2 on (0,1); cross terms vanish
    energy = -(pi**2 + 1.0) * d / 4.0
    h1_sq = d / 2.0 + d * pi**2 / 2.0
    h2_sq = h1_sq + d * pi**4 / 2.0
    return Problem(
        name="cosine",
        d=d,
        w=w,
        f=f,
        g=g,
        u_star=u_star,
        grad_u_star=grad_u_star,
        c1=1.0,
        c2=math.sqrt(h2_sq),
        c3=(pi**2 + 1.0) * d,
        w_sup=1.0,
        analytic_energy=energy,
        analytic_h1_norm_sq=h1_sq,
    )


def make_quadratic_problem(d: int) -> Problem:
    """u*(x) = sum_i x_i^2 with w = 1; exercises a nonzero flux g."""
    if d < 1:
        raise ValueError("d must be >= 1")

    def u_star(x):
        return np.sum(np.atleast_2d(x) ** 2, axis=1)

    def grad_u_star(x):
        return 2.0 * np.atleast_2d(x)

    def w(x):
        return np.ones(np.atleast_2d(x).shape[0])

    def f(x):
        return -2.0 * d + u_star(x)

    def g(points, faces):
        faces = np.atleast_2d(faces)
        # grad u* . n = 2 x_axis * (+-1) = 2 on side-1 faces, 0 on side-0 faces
        return 2.0 * faces[:, 1].astype(float)

    # closed forms on (0,1)^d:
    #   int |grad u*|^2 = 4d/3,  int u*^2 = d/5 + d(d-1)/9,
    #   int u* f = -2d^2/3 + d/5 + d(d-1)/9,
    #   int_boundary u* g = 2d (1 + (d-1)/3)
    int_u_sq = d / 5.0 + d * (d - 1) / 9.0
    energy = (
        0.5 * (4.0 * d / 3.0)
        + 0.5 * int_u_sq
        - (-2.0 * d**2 / 3.0 + int_u_sq)
        - 2.0 * d * (1.0 + (d - 1) / 3.0)
    )
    h1_sq = int_u_sq + 4.0 * d / 3.0
    h2_sq = h1_sq + 4.0 * d  # second derivatives are the constants 2 on the diagonal
    return Problem(
        name="quadratic",
        d=d,
        w=w,
        f=f,
        g=g,
        u_star=u_star,
        grad_u_star=grad_u_star,
        c1=1.0,
        c2=math.sqrt(h2_sq),
        c3=max(2.0 * d, 2.0),
        w_sup=1.0,
        analytic_energy=energy,
        analytic_h1_norm_sq=h1_sq,
    )


_FACTORIES = {"cosine": make_cosine_problem, "quadratic": make_quadratic_problem}


def problem_by_name(name: str, d: int) -> Problem:
    """Config-file entry point: problems are selected by name plus dimension."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(_FACTORIES)}")
    return factory(d)


@dataclass(frozen=True)
class ProblemVerification:
    max_pde_residual: float
    max_flux_residual: float
    n_probe: int


def verify_problem(p: Problem, n_probe: int, seed: int, tol: float = 1e-6,
                   fd_step: float = 1e-4) -> ProblemVerification:
    """Check -lap(u*) + w u* - f and grad(u*) . n - g at seeded random probes.

    The Laplacian is formed by central second differences so problems never
    need analytic second derivatives.  Raises ProblemDefinitionError when
    either residual exceeds tol.
    """
    if n_probe < 1:
        raise ValueError("n_probe must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=[seed % 2**64, 0]))
    x = rng.uniform(0.0, 1.0, size=(n_probe, p.d))

    lap = np.zeros(n_probe)
    u0 = p.u_star(x)
    for axis in range(p.d):
        step = np.zeros(p.d)
        step[axis] = fd_step
        lap += (p.u_star(x + step) - 2.0 * u0 + p.u_star(x - step)) / fd_step**2
    pde_res = float(np.max(np.abs(-lap + p.w(x) * u0 - p.f(x))))

    n_bnd = max(n_probe, 2 * p.d)
    axes = rng.integers(0, p.d, size=n_bnd)
    sides = rng.integers(0, 2, size=n_bnd)
    pts = rng.uniform(0.0, 1.0, size=(n_bnd, p.d))
    pts[np.arange(n_bnd), axes] = sides.astype(float)
    faces = np.stack([axes, sides], axis=1)
    normal_sign = 2.0 * sides - 1.0
    flux = p.grad_u_star(pts)[np.arange(n_bnd), axes] * normal_sign
    flux_res = float(np.max(np.abs(flux - p.g(pts, faces))))

    report = ProblemVerification(pde_res, flux_res, n_probe)
    if pde_res > tol or flux_res > tol:
        raise ProblemDefinitionError(
            f"problem {p.name!r} failed verification: "
            f"pde residual {pde_res:.3e}, flux residual {flux_res:.3e} (tol {tol:.1e})"
        )
    return report
