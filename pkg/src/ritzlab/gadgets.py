"""Exact weight-level network constructions.

Squaring and multiplication gadgets, cardinal B-splines of order 3 on dyadic
partitions of [0,1], tensor-product splines via binary product trees, linear
spline combinations, least-squares spline fitting, the gradient-norm network
transformer, and the width/depth prescription used by the convergence studies.

All identities here are algebraically exact; the only error in any
construction is floating-point rounding.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .networks import IDENTITY, RELU, RELU2, Architecture, Network

_BINOM3 = (1.0, -3.0, 3.0, -1.0)  # (-1)^j * C(3, j)


class InvalidSplineIndexError(ValueError):
    """Spline level/index outside the admissible dyadic range."""


class UnsupportedActivationError(ValueError):
    """Input net is not pure ReLU^2 with linear output."""


class SingularFitError(RuntimeError):
    """Spline collocation system was rank deficient."""


@dataclass(frozen=True)
class SplineIndex:
    """Identifies one tensor-product B-spline: level l and index vector i."""

    level: int
    index: tuple

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in np.atleast_1d(self.index)))
        if self.level < 1:
            raise InvalidSplineIndexError(f"level must be >= 1, got {self.level}")
        top = 2**self.level - 1
        for i in self.index:
            if not -2 <= i <= top:
                raise InvalidSplineIndexError(
                    f"index {i} outside [-2, {top}] at level {self.level}"
                )

    @property
    def dim(self) -> int:
        return len(self.index)


@dataclass
class SplineCombination:
    """A linear combination sum_j c_j N_{l, i_j} at one level and dimension."""

    level: int
    dim: int
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        for idx in self.coefficients:
            if idx.level != self.level or idx.dim != self.dim:
                raise InvalidSplineIndexError(
                    f"index {idx} does not match combination level/dim "
                    f"({self.level}, {self.dim})"
                )


def full_index_range(level: int):
    """All univariate indices whose support intersects [0, 1]."""
    return range(-2, 2**level)


def bspline_value(level: int, i: int, x) -> np.ndarray:
    """Closed-form order-3 cardinal B-spline value, vectorized over x."""
    h = 2.0 ** (-level)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j, c in enumerate(_BINOM3):
        out += c * np.maximum(x - (i + j) * h, 0.0) ** 2
    return 2.0 ** (2 * level - 1) * out


def bspline_derivative(level: int, i: int, x) -> np.ndarray:
    """Closed-form derivative of the order-3 cardinal B-spline."""
    h = 2.0 ** (-level)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j, c in enumerate(_BINOM3):
        out += c * 2.0 * np.maximum(x - (i + j) * h, 0.0)
    return 2.0 ** (2 * level - 1) * out


def multivariate_bspline_value(idx: SplineIndex, x) -> np.ndarray:
    """Product of univariate closed forms at points of shape (n, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.ones(x.shape[0])
    for axis, i in enumerate(idx.index):
        out *= bspline_value(idx.level, i, x[:, axis])
    return out


def evaluate_spline_combination(comb: SplineCombination, x) -> np.ndarray:
    """Closed-form evaluation of a spline combination (the network-free route)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape[0])
    for idx, c in comb.coefficients.items():
        out += c * multivariate_bspline_value(idx, x)
    return out


# -------------------------------------------------------------- gadgets


def build_square_gadget() -> Network:
    """Width-2 ReLU^2 net computing x^2 = sigma2(x) + sigma2(-x) exactly."""
    arch = Architecture((1, 2, 1), (RELU2, IDENTITY))
    return Network(
        arch,
        [np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])],
        [np.zeros(2), np.zeros(1)],
    )


def build_product_gadget() -> Network:
    """One-hidden-layer width-4 ReLU^2 net computing xy exactly.

    xy = [sigma2(x+y) + sigma2(-x-y) - sigma2(x-y) - sigma2(y-x)] / 4.
    """
    arch = Architecture((2, 4, 1), (RELU2, IDENTITY))
    w1 = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    w2 = np.array([[0.25, 0.25, -0.25, -0.25]])
    return Network(arch, [w1, w2], [np.zeros(4), np.zeros(1)])


def build_univariate_bspline(level: int, i: int) -> Network:
    """Depth-2, width-4 ReLU^2 net realizing N_{l,i} from its closed form."""
    SplineIndex(level, (i,))  # validates the range
    h = 2.0 ** (-level)
    w1 = np.ones((4, 1))
    b1 = np.array([-(i + j) * h for j in range(4)])
    w2 = 2.0 ** (2 * level - 1) * np.array([_BINOM3])
    return Network(Architecture((1, 4, 1), (RELU2, IDENTITY)), [w1, w2], [b1, np.zeros(1)])


# ------------------------------------------- staged affine assembly


class _StagedNet:
    """Builds a network stage by stage while values are tracked as affine maps
    (matrix rows plus constants) over the most recent stage's outputs."""

    def __init__(self, input_dim: int):
        self.input_dim = input_dim
        self.weights = []
        self.biases = []
        self.acts = []
        self.width = input_dim
        self._pending = None

    def begin_stage(self):
        self._pending = ([], [], [])

    def add_units(self, rows: np.ndarray, biases: np.ndarray, tag: str) -> slice:
        """Queue units for the current stage; returns their output positions."""
        rows = np.atleast_2d(rows)
        urows, ubias, utags = self._pending
        start = sum(r.shape[0] for r in urows)
        urows.append(rows)
        ubias.append(np.atleast_1d(biases).astype(float))
        utags.extend([tag] * rows.shape[0])
        return slice(start, start + rows.shape[0])

    def commit_stage(self):
        urows, ubias, utags = self._pending
        w = np.vstack(urows)
        b = np.concatenate(ubias)
        self.weights.append(w)
        self.biases.append(b)
        self.acts.append(tuple(utags))
        self.width = w.shape[0]
        self._pending = None

    def finish(self, out_row: np.ndarray, out_bias: float) -> Network:
        self.weights.append(np.atleast_2d(out_row))
        self.biases.append(np.atleast_1d(float(out_bias)))
        self.acts.append(IDENTITY)
        dims = (self.input_dim, *(w.shape[0] for w in self.weights))
        return Network(Architecture(dims, tuple(self.acts)), self.weights, self.biases)

    def identity_rows(self, pos: slice) -> np.ndarray:
        """Affine rows selecting a group of the current stage's outputs."""
        rows = np.zeros((pos.stop - pos.start, self.width))
        rows[np.arange(pos.stop - pos.start), np.arange(pos.start, pos.stop)] = 1.0
        return rows


def _product_gadget_rows(ra, ca, rb, cb):
    """Pre-activation rows/biases of the 4 sigma2 units multiplying two affine
    values; combine the outputs with (1, 1, -1, -1)/4 to get the product."""
    rows = np.stack([ra + rb, -(ra + rb), ra - rb, rb - ra])
    biases = np.array([ca + cb, -(ca + cb), ca - cb, cb - ca])
    return rows, biases


_PROD_COMBINE = np.array([0.25, 0.25, -0.25, -0.25])


def build_multivariate_bspline(idx: SplineIndex) -> Network:
    """Tensor-product B-spline as a ReLU^2 net via a binary product tree.

    Depth <= ceil(log2 d) + 2 and width <= 4d, both asserted.
    """
    d = idx.dim
    if d == 1:
        return build_univariate_bspline(idx.level, idx.index[0])
    h = 2.0 ** (-idx.level)
    net = _StagedNet(d)

    # stage 1: the 4 shifted sigma2 units of every univariate factor
    net.begin_stage()
    slices = []
    for axis, i in enumerate(idx.index):
        rows = np.zeros((4, d))
        rows[:, axis] = 1.0
        biases = np.array([-(i + j) * h for j in range(4)])
        slices.append(net.add_units(rows, biases, RELU2))
    net.commit_stage()

    scale = 2.0 ** (2 * idx.level - 1)
    values = []
    for s in slices:
        row = np.zeros(net.width)
        row[s] = scale * np.array(_BINOM3)
        values.append((row, 0.0))

    # product tree; an odd value passes through one identity unit per level
    while len(values) > 1:
        net.begin_stage()
        queued = []
        for k in range(0, len(values) - 1, 2):
            (ra, ca), (rb, cb) = values[k], values[k + 1]
            rows, biases = _product_gadget_rows(ra, ca, rb, cb)
            queued.append(("prod", net.add_units(rows, biases, RELU2)))
        if len(values) % 2 == 1:
            r, c = values[-1]
            queued.append(("pass", net.add_units(r[None, :], np.array([c]), IDENTITY)))
        net.commit_stage()
        values = []
        for kind, pos in queued:
            row = np.zeros(net.width)
            if kind == "prod":
                row[pos] = _PROD_COMBINE
                values.append((row, 0.0))
            else:
                row[pos.start] = 1.0
                values.append((row, 0.0))

    row, c = values[0]
    built = net.finish(row, c)
    _assert_bounds(built, math.ceil(math.log2(d)) + 2, 4 * d, "multivariate B-spline")
    return built


def _assert_bounds(net: Network, max_depth: int, max_width: int, what: str) -> None:
    if net.architecture.depth > max_depth:
        raise AssertionError(
            f"{what}: depth {net.architecture.depth} exceeds bound {max_depth}"
        )
    if net.architecture.width > max_width:
        raise AssertionError(
            f"{what}: width {net.architecture.width} exceeds bound {max_width}"
        )


def build_spline_combination(comb: SplineCombination) -> Network:
    """Single net computing sum_j c_j N_{l, i_j}: parallel subnets merged into
    shared layers, coefficients folded into the final affine map."""
    if not comb.coefficients:
        raise ValueError("combination has no coefficients")
    items = sorted(comb.coefficients.items(), key=lambda kv: kv[0].index)
    subnets = [build_multivariate_bspline(idx) for idx, _ in items]
    coeffs = [c for _, c in items]

    depth = subnets[0].architecture.depth
    merged_w, merged_b, merged_acts = [], [], []
    for k in range(depth - 1):
        ws = [s.weights[k] for s in subnets]
        if k == 0:
            w = np.vstack(ws)  # all subnets read the shared input
        else:
            w = _block_diag(ws)
        merged_w.append(w)
        merged_b.append(np.concatenate([s.biases[k] for s in subnets]))
        tags = []
        for s in subnets:
            spec = s.architecture.activations[k]
            n_units = s.architecture.layer_dims[k + 1]
            tags.extend([spec] * n_units if isinstance(spec, str) else list(spec))
        merged_acts.append(tuple(tags))
    out_row = np.hstack([c * s.weights[-1] for c, s in zip(coeffs, subnets)])
    out_bias = np.array([sum(c * s.biases[-1][0] for c, s in zip(coeffs, subnets))])
    merged_w.append(out_row)
    merged_b.append(out_bias)
    merged_acts.append(IDENTITY)

    dims = (comb.dim, *(w.shape[0] for w in merged_w))
    built = Network(Architecture(dims, tuple(merged_acts)), merged_w, merged_b)
    if built.architecture.depth > math.ceil(math.log2(max(comb.dim, 1))) + 3:
        raise AssertionError("spline combination exceeded its depth bound")
    return built


def _block_diag(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def fit_spline_coefficients(target, level: int, dim: int,
                            points_per_interval: int = 4) -> SplineCombination:
    """Least-squares fit of the full tensor-product basis on a uniform
    collocation grid (points_per_interval points per knot interval per axis).

    target maps an (n, d) array to n values.
    """
    if points_per_interval < 4:
        raise ValueError("need at least 4 collocation points per knot interval")
    n_basis = (2**level + 2) ** dim
    n_grid = (points_per_interval * 2**level + 1) ** dim
    if n_basis * n_grid > 5e7:
        raise ValueError(
            f"collocation system too large: {n_grid} points x {n_basis} basis functions"
        )
    n_axis = points_per_interval * 2**level + 1
    axis_pts = np.linspace(0.0, 1.0, n_axis)
    uni = np.stack([bspline_value(level, i, axis_pts) for i in full_index_range(level)],
                   axis=1)  # (n_axis, 2^l + 2)

    design = uni
    for _ in range(dim - 1):
        design = np.kron(design, uni)
    grids = np.meshgrid(*([axis_pts] * dim), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    rhs = np.asarray(target(pts), dtype=float)

    coef, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < design.shape[1]:
        raise SingularFitError(
            f"collocation system rank {rank} < {design.shape[1]} basis functions"
        )

    combo = {}
    for c, multi in zip(coef, itertools.product(full_index_range(level), repeat=dim)):
        combo[SplineIndex(level, multi)] = float(c)
    return SplineCombination(level, dim, combo)


# --------------------------------------- gradient-norm transformer


def _require_pure_relu2(net: Network) -> None:
    arch = net.architecture
    if arch.output_dim != 1:
        raise UnsupportedActivationError("need a scalar-output network")
    if not arch.is_relu2_hidden():
        raise UnsupportedActivationError(
            "gradient-norm construction needs pure ReLU^2 hidden layers"
        )


def build_gradient_norm_network(net: Network) -> Network:
    """Mixed ReLU/ReLU^2 net computing ||grad u(x)||_2^2 of a ReLU^2 net exactly.

    Carries the layerwise derivative recursion
        D_i u^(k+1) = 2 sigma1(z^(k+1)) * sum_j a_j D_i u^(k)
    through product gadgets and sums the final components through squaring
    gadgets.  Depth <= D + 3 and width <= d (D + 2) W are asserted, with
    (D, W) the depth/width of the input net.
    """
    _require_pure_relu2(net)
    arch = net.architecture
    d = arch.input_dim
    depth = arch.depth
    w_in, b_in = net.weights, net.biases
    n = arch.layer_dims

    if depth == 1:
        # affine net: the gradient is the constant weight row
        const = float(np.sum(w_in[0][0] ** 2))
        built = Network(
            Architecture((d, 1), (IDENTITY,)),
            [np.zeros((1, d))],
            [np.array([const])],
        )
        _assert_bounds(built, depth + 3, d * (depth + 2) * arch.width, "gradient-norm net")
        return built

    g = _StagedNet(d)

    if depth == 2:
        # D_i u is affine in sigma1(z1); only the squaring stage needs gadgets
        g.begin_stage()
        r1 = g.add_units(w_in[0], b_in[0], RELU)
        g.commit_stage()
        r1_rows = g.identity_rows(r1)
        du_rows = 2.0 * (w_in[0].T * w_in[1][0][None, :]) @ r1_rows  # (d, width)
        built = _finish_with_squares(g, du_rows, np.zeros(d))
        _assert_bounds(built, depth + 3, d * (depth + 2) * arch.width, "gradient-norm net")
        return built

    # depth >= 3: stage 1 computes f1 and r1 = sigma1(z1)
    g.begin_stage()
    f_pos = g.add_units(w_in[0], b_in[0], RELU2)
    r_pos = g.add_units(w_in[0], b_in[0], RELU)
    g.commit_stage()
    f_rows = g.identity_rows(f_pos)
    r_rows = g.identity_rows(r_pos)
    # D_i f^(1)_q = 2 a^(1)_{qi} r1_q, affine in r1
    d_rows = 2.0 * w_in[0][:, :, None] * r_rows[:, None, :]  # (n1, d, width)
    d_const = np.zeros((n[1], d))

    # stage 2: f2 (if needed), r2, and a ReLU pass-through of r1 (r1 >= 0)
    g.begin_stage()
    pre = w_in[1] @ f_rows
    f2_pos = g.add_units(pre, b_in[1], RELU2) if depth >= 4 else None
    r2_pos = g.add_units(pre, b_in[1], RELU)
    r1c_pos = g.add_units(r_rows, np.zeros(n[1]), RELU)
    g.commit_stage()
    f_rows = g.identity_rows(f2_pos) if f2_pos is not None else None
    r_rows = g.identity_rows(r2_pos)
    r1c_rows = g.identity_rows(r1c_pos)
    d_rows = 2.0 * w_in[0][:, :, None] * r1c_rows[:, None, :]
    d_const = np.zeros((n[1], d))

    # stages t = 3 .. depth: product gadgets for layer t-1 derivatives,
    # plus f_t / r_t while the original net still has hidden layers ahead
    for t in range(3, depth + 1):
        a_cur = w_in[t - 2]  # weights of original layer t-1: (n_{t-1}, n_{t-2})
        s_rows = np.einsum("qj,jiw->qiw", a_cur, d_rows)
        s_const = np.einsum("qj,ji->qi", a_cur, d_const)

        g.begin_stage()
        new_f_pos = new_r_pos = None
        if t <= depth - 1:
            pre = w_in[t - 1] @ f_rows
            if t <= depth - 2:
                new_f_pos = g.add_units(pre, b_in[t - 1], RELU2)
            new_r_pos = g.add_units(pre, b_in[t - 1], RELU)
        gadget_pos = []
        for q in range(n[t - 1]):
            for i in range(d):
                rows, biases = _product_gadget_rows(
                    r_rows[q], 0.0, s_rows[q, i], s_const[q, i]
                )
                gadget_pos.append(g.add_units(rows, biases, RELU2))
        g.commit_stage()

        f_rows = g.identity_rows(new_f_pos) if new_f_pos is not None else None
        r_rows = g.identity_rows(new_r_pos) if new_r_pos is not None else None
        d_rows = np.zeros((n[t - 1], d, g.width))
        d_const = np.zeros((n[t - 1], d))
        k = 0
        for q in range(n[t - 1]):
            for i in range(d):
                # D_i f^(t-1)_q = 2 * product = (g1 + g2 - g3 - g4) / 2
                d_rows[q, i, gadget_pos[k]] = 2.0 * _PROD_COMBINE
                k += 1

    du_rows = np.einsum("j,jiw->iw", w_in[depth - 1][0], d_rows)
    du_const = w_in[depth - 1][0] @ d_const
    built = _finish_with_squares(g, du_rows, du_const)
    _assert_bounds(built, depth + 3, d * (depth + 2) * arch.width, "gradient-norm net")
    return built


def _finish_with_squares(g: _StagedNet, du_rows: np.ndarray, du_const: np.ndarray) -> Network:
    """Final stage: x^2 = sigma2(x) + sigma2(-x) per component, then sum."""
    g.begin_stage()
    d = du_rows.shape[0]
    for i in range(d):
        g.add_units(
            np.stack([du_rows[i], -du_rows[i]]),
            np.array([du_const[i], -du_const[i]]),
            RELU2,
        )
    g.commit_stage()
    return g.finish(np.ones(2 * d), 0.0)


# ------------------------------------------------ prescribed shapes


def prescribe_architecture(d: int, n: int, nu: float) -> Architecture:
    """Depth/width prescription achieving the theoretical rate at n samples.

    Depth ceil(log2 d) + 3; width 4d * ceil(max(1, n^(1/(d+2+nu)) - 4))^d;
    all hidden layers ReLU^2, linear output.
    """
    if d < 1 or n < 1 or nu < 0:
        raise ValueError("need d >= 1, n >= 1, nu >= 0")
    base = max(1.0, n ** (1.0 / (d + 2 + nu)) - 4.0)
    width = 4 * d * math.ceil(base) ** d
    depth = math.ceil(math.log2(d)) + 3
    dims = (d, *([width] * (depth - 1)), 1)
    acts = tuple([RELU2] * (depth - 1) + [IDENTITY])
    return Architecture(dims, acts)
