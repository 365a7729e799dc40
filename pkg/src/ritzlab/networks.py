"""Multilayer networks with ReLU / ReLU^2 / identity units and exact derivatives.

One weight-level representation serves both trained nets and exactly
constructed gadget nets.  Because every activation is piecewise polynomial,
input gradients and parameter sensitivities have closed-form layered
recursions; no general-purpose autodiff is involved.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

RELU = "relu"
RELU2 = "relu2"
IDENTITY = "identity"
ACTIVATION_TAGS = (RELU, RELU2, IDENTITY)

# Conventions, fixed once for the whole package:
#   relu'(0) = 0,  relu2'(x) = 2*max(0, x)  (continuous),  relu2''(0) = 0.
_FORMAT_HEADER = "ritzlab-network 1"


class DimensionMismatchError(ValueError):
    """Input or parameter shapes do not match the architecture."""


class NetworkFormatError(ValueError):
    """A serialized network file is malformed."""


def _normalize_layer_activation(spec, n_units: int):
    """Return a canonical per-layer activation spec: a tag, or a tuple of tags."""
    if isinstance(spec, str):
        if spec not in ACTIVATION_TAGS:
            raise ValueError(f"unknown activation tag {spec!r}")
        return spec
    tags = tuple(spec)
    for t in tags:
        if t not in ACTIVATION_TAGS:
            raise ValueError(f"unknown activation tag {t!r}")
    if len(tags) != n_units:
        raise DimensionMismatchError(
            f"per-unit activation list has length {len(tags)}, layer has {n_units} units"
        )
    if len(set(tags)) == 1:
        return tags[0]  # collapse homogeneous lists to the plain tag
    return tags


@dataclass(frozen=True)
class Architecture:
    """Layer sizes N_0..N_L plus one activation spec per layer 1..L.

    An activation spec is a single tag applied component-wise, or a tuple of
    per-unit tags for mixed layers (needed by the exact gradient-norm
    construction, which places ReLU and ReLU^2 units side by side).
    The final layer must be identity (affine output).
    """

    layer_dims: tuple
    activations: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("need at least input and output layer dims")
        if any(n <= 0 for n in dims):
            raise ValueError("layer dims must be positive")
        acts = tuple(
            _normalize_layer_activation(a, dims[k + 1])
            for k, a in enumerate(self.activations)
        )
        if len(acts) != len(dims) - 1:
            raise DimensionMismatchError(
                f"{len(acts)} activation specs for {len(dims) - 1} layers"
            )
        if acts[-1] != IDENTITY:
            raise ValueError("output layer activation must be identity")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", acts)

    @property
    def depth(self) -> int:
        """Number of affine maps L (depth counts the output layer)."""
        return len(self.layer_dims) - 1

    @property
    def width(self) -> int:
        """Max layer dimension, input and output included."""
        return max(self.layer_dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_parameters(self) -> int:
        dims = self.layer_dims
        return sum(dims[k + 1] * dims[k] + dims[k + 1] for k in range(self.depth))

    def is_relu2_hidden(self) -> bool:
        """True when every hidden layer is homogeneous ReLU^2."""
        return all(a == RELU2 for a in self.activations[:-1])


def _mixed_codes(spec, n_units: int) -> np.ndarray:
    codes = np.empty(n_units, dtype=np.int8)
    for k, t in enumerate(spec):
        codes[k] = ACTIVATION_TAGS.index(t)
    return codes


def _act_tables(spec, n_units: int):
    """Precompute (value, first, second) derivative callables for one layer."""
    if isinstance(spec, str):
        if spec == RELU:
            return (
                lambda z: np.maximum(z, 0.0),
                lambda z: (z > 0.0).astype(float),
                lambda z: np.zeros_like(z),
            )
        if spec == RELU2:
            def val(z):
                zp = np.maximum(z, 0.0)
                return zp * zp

            return (
                val,
                lambda z: 2.0 * np.maximum(z, 0.0),
                lambda z: np.where(z > 0.0, 2.0, 0.0),
            )
        return (lambda z: z, lambda z: np.ones_like(z), lambda z: np.zeros_like(z))

    codes = _mixed_codes(spec, n_units)
    is_relu = codes == ACTIVATION_TAGS.index(RELU)
    is_relu2 = codes == ACTIVATION_TAGS.index(RELU2)

    def val(z):
        out = z.copy()
        zp = np.maximum(z, 0.0)
        out[..., is_relu] = zp[..., is_relu]
        out[..., is_relu2] = (zp * zp)[..., is_relu2]
        return out

    def d1(z):
        out = np.ones_like(z)
        out[..., is_relu] = (z[..., is_relu] > 0.0).astype(float)
        out[..., is_relu2] = 2.0 * np.maximum(z[..., is_relu2], 0.0)
        return out

    def d2(z):
        out = np.zeros_like(z)
        out[..., is_relu2] = np.where(z[..., is_relu2] > 0.0, 2.0, 0.0)
        return out

    return val, d1, d2


class Network:
    """Immutable weight/bias container for one architecture.

    Parameter order (used by flatten/with_parameters, sensitivities and the
    serialization format): layer by layer, weight matrix in row-major order,
    then the bias vector of that layer.
    """

    def __init__(self, architecture: Architecture, weights, biases, validate: bool = True):
        self._arch = architecture
        dims = architecture.layer_dims
        if len(weights) != architecture.depth or len(biases) != architecture.depth:
            raise DimensionMismatchError("need one weight matrix and bias per layer")
        ws, bs = [], []
        for k in range(architecture.depth):
            w = np.ascontiguousarray(weights[k], dtype=float)
            b = np.ascontiguousarray(biases[k], dtype=float)
            if w.shape != (dims[k + 1], dims[k]):
                raise DimensionMismatchError(
                    f"layer {k + 1} weight shape {w.shape}, expected {(dims[k + 1], dims[k])}"
                )
            if b.shape != (dims[k + 1],):
                raise DimensionMismatchError(
                    f"layer {k + 1} bias shape {b.shape}, expected {(dims[k + 1],)}"
                )
            if validate and not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {k + 1} has non-finite parameters")
            w.flags.writeable = False
            b.flags.writeable = False
            ws.append(w)
            bs.append(b)
        self._weights = tuple(ws)
        self._biases = tuple(bs)
        self._acts = [
            _act_tables(architecture.activations[k], dims[k + 1])
            for k in range(architecture.depth)
        ]

    @property
    def architecture(self) -> Architecture:
        return self._arch

    @property
    def weights(self) -> tuple:
        return self._weights

    @property
    def biases(self) -> tuple:
        return self._biases

    @property
    def n_parameters(self) -> int:
        return self._arch.n_parameters

    def flatten_parameters(self) -> np.ndarray:
        parts = []
        for w, b in zip(self._weights, self._biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_parameters(self, theta: np.ndarray, validate: bool = True) -> "Network":
        """New network of the same architecture from a flat parameter vector."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_parameters,):
            raise DimensionMismatchError(
                f"parameter vector has shape {theta.shape}, expected ({self.n_parameters},)"
            )
        dims = self._arch.layer_dims
        ws, bs, pos = [], [], 0
        for k in range(self._arch.depth):
            nw = dims[k + 1] * dims[k]
            ws.append(theta[pos : pos + nw].reshape(dims[k + 1], dims[k]))
            pos += nw
            bs.append(theta[pos : pos + dims[k + 1]])
            pos += dims[k + 1]
        return Network(self._arch, ws, bs, validate=validate)


@dataclass(frozen=True)
class EvalResult:
    """Value and exact input gradient of a scalar network at one point."""

    value: float
    input_gradient: np.ndarray


def _as_batch(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 and net.architecture.input_dim == 1:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != net.architecture.input_dim:
        raise DimensionMismatchError(
            f"input shape {x.shape} does not match input dim {net.architecture.input_dim}"
        )
    return x


def forward_batch(net: Network, x: np.ndarray) -> np.ndarray:
    """Network values at a batch of points, shape (B, d) -> (B,) for scalar nets."""
    f = _as_batch(net, x)
    for (val, _, _), w, b in zip(net._acts, net.weights, net.biases):
        f = val(f @ w.T + b)
    if net.architecture.output_dim == 1:
        return f[:, 0]
    return f


def forward(net: Network, x) -> float:
    """Scalar network value at a single point."""
    if net.architecture.output_dim != 1:
        raise DimensionMismatchError("forward() expects a scalar-output network")
    return float(forward_batch(net, x)[0])


def _jacobian_matmul(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """a (n_out, n_in) applied to a stack g (B, n_in, d) as one large GEMM.

    Equivalent to np.matmul(a, g) but folds the batch into matrix columns, so
    the weight matrix streams through BLAS once instead of once per point.
    """
    b, n_in, d = g.shape
    g_mat = g.transpose(1, 0, 2).reshape(n_in, b * d)
    return (a @ g_mat).reshape(a.shape[0], b, d).transpose(1, 0, 2)


def _forward_caches(net: Network, x: np.ndarray, need_input_gradient: bool):
    """Run the layered recursion keeping per-layer caches.

    Returns (fs, zs, ps, gs): post-activations f_0..f_L, pre-activations
    z_1..z_L, and, when requested, the pre/post activation input Jacobians
    P_l = A_l G_{l-1} and G_l = act'(z_l) * P_l, each of shape (B, N_l, d).
    """
    b_sz, d = x.shape
    fs = [x]
    zs = []
    ps = [] if need_input_gradient else None
    gs = [np.broadcast_to(np.eye(d), (b_sz, d, d))] if need_input_gradient else None
    for (val, d1, _), w, bias in zip(net._acts, net.weights, net.biases):
        z = fs[-1] @ w.T + bias
        zs.append(z)
        fs.append(val(z))
        if need_input_gradient:
            p = _jacobian_matmul(w, gs[-1])
            ps.append(p)
            gs.append(d1(z)[:, :, None] * p)
    return fs, zs, ps, gs


def _gradient_chunk_size(net: Network, requested: int | None) -> int:
    """Cap chunks so per-layer Jacobian caches stay near 32 MB for wide nets."""
    if requested is not None:
        return requested
    per_point = max(net.architecture.width * net.architecture.input_dim, 1)
    return int(np.clip(4_000_000 // per_point, 64, 32768))


def values_and_input_gradients(net: Network, x: np.ndarray, chunk_size: int | None = None):
    """Batched (values, input gradients) for a scalar net; chunked over the batch."""
    x = _as_batch(net, x)
    if net.architecture.output_dim != 1:
        raise DimensionMismatchError("expects a scalar-output network")
    chunk = _gradient_chunk_size(net, chunk_size)
    n = x.shape[0]
    vals = np.empty(n)
    grads = np.empty((n, net.architecture.input_dim))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        fs, _, _, gs = _forward_caches(net, x[lo:hi], need_input_gradient=True)
        vals[lo:hi] = fs[-1][:, 0]
        grads[lo:hi] = gs[-1][:, 0, :]
    return vals, grads


def forward_with_input_gradient(net: Network, x) -> EvalResult:
    """Value and exact gradient of the piecewise-polynomial net at one point."""
    xb = _as_batch(net, x)
    vals, grads = values_and_input_gradients(net, xb)
    return EvalResult(value=float(vals[0]), input_gradient=grads[0].copy())


def weighted_parameter_gradient(
    net: Network,
    x: np.ndarray,
    value_weights: np.ndarray,
    gradient_weights: np.ndarray | None = None,
    chunk_size: int | None = None,
) -> np.ndarray:
    """Exact adjoint accumulation of parameter derivatives over a batch.

    Returns sum_b [ v_b * du(x_b)/dphi + sum_i m_{b,i} * d(D_i u)(x_b)/dphi ]
    as a flat vector in the documented parameter order.  This is the single
    reverse pass behind both parameter_sensitivities and the Ritz loss
    gradient; exact for the piecewise-polynomial activations used here.
    """
    x = _as_batch(net, x)
    v = np.asarray(value_weights, dtype=float)
    if v.shape != (x.shape[0],):
        raise DimensionMismatchError("value_weights must have one entry per point")
    m = None
    if gradient_weights is not None:
        m = np.asarray(gradient_weights, dtype=float)
        if m.shape != (x.shape[0], net.architecture.input_dim):
            raise DimensionMismatchError("gradient_weights must be (B, d)")
    if net.architecture.output_dim != 1:
        raise DimensionMismatchError("expects a scalar-output network")

    depth = net.architecture.depth
    grad_w = [np.zeros_like(w) for w in net.weights]
    grad_b = [np.zeros_like(b) for b in net.biases]
    need_g = m is not None
    chunk = _gradient_chunk_size(net, chunk_size) if need_g else (chunk_size or 32768)

    for lo in range(0, x.shape[0], chunk):
        hi = min(lo + chunk, x.shape[0])
        fs, zs, ps, gs = _forward_caches(net, x[lo:hi], need_input_gradient=need_g)
        lam = v[lo:hi, None].copy()
        mat = m[lo:hi][:, None, :].copy() if need_g else None
        for k in range(depth - 1, -1, -1):
            _, d1f, d2f = net._acts[k]
            d1 = d1f(zs[k])
            delta = lam * d1
            if mat is not None:
                # z_k also enters G_k through act'(z_k); d2 carries that path
                delta = delta + d2f(zs[k]) * np.sum(mat * ps[k], axis=2)
                q = d1[:, :, None] * mat
                b_sz, n_q, dd = q.shape
                q_mat = q.transpose(1, 0, 2).reshape(n_q, b_sz * dd)
                g_mat = gs[k].transpose(1, 0, 2).reshape(gs[k].shape[1], b_sz * dd)
                grad_w[k] += q_mat @ g_mat.T
                mat = _jacobian_matmul(net.weights[k].T, q)
            grad_w[k] += delta.T @ fs[k]
            grad_b[k] += delta.sum(axis=0)
            lam = delta @ net.weights[k]

    parts = []
    for gw, gb in zip(grad_w, grad_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return np.concatenate(parts)


def parameter_sensitivities(net: Network, x):
    """Exact derivatives of u(x) and of each input-gradient component w.r.t. phi.

    Returns (du_dphi, dgrad_dphi) with shapes (P,) and (d, P), flattened in
    the documented parameter order.
    """
    xb = _as_batch(net, x)
    d = net.architecture.input_dim
    du = weighted_parameter_gradient(net, xb, np.ones(1))
    dgrad = np.empty((d, net.n_parameters))
    for i in range(d):
        e = np.zeros((1, d))
        e[0, i] = 1.0
        dgrad[i] = weighted_parameter_gradient(net, xb, np.zeros(1), e)
    return du, dgrad


def _activation_spec_to_line(spec) -> str:
    if isinstance(spec, str):
        return spec
    return "mixed " + " ".join(spec)


def save_network(net: Network, path) -> None:
    """Write the structured text format (round-trips doubles bit-exactly)."""
    lines = [_FORMAT_HEADER]
    lines.append("dims " + " ".join(str(n) for n in net.architecture.layer_dims))
    for spec in net.architecture.activations:
        lines.append("activation " + _activation_spec_to_line(spec))
    theta = net.flatten_parameters()
    lines.append(f"parameters {theta.size}")
    lines.extend(repr(float(t)) for t in theta)
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> Network:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _FORMAT_HEADER:
        raise NetworkFormatError("missing or unknown format header")
    if not lines[1].startswith("dims "):
        raise NetworkFormatError("expected dims line")
    dims = tuple(int(tok) for tok in lines[1].split()[1:])
    n_layers = len(dims) - 1
    acts = []
    for k in range(n_layers):
        ln = lines[2 + k]
        if not ln.startswith("activation"):
            raise NetworkFormatError(f"expected activation line for layer {k + 1}")
        toks = ln.split()[1:]
        if toks[0] == "mixed":
            acts.append(tuple(toks[1:]))
        elif len(toks) == 1:
            acts.append(toks[0])
        else:
            raise NetworkFormatError(f"malformed activation line: {ln}")
    arch = Architecture(dims, tuple(acts))
    hdr = lines[2 + n_layers]
    if not hdr.startswith("parameters "):
        raise NetworkFormatError("expected parameters count line")
    n_par = int(hdr.split()[1])
    if n_par != arch.n_parameters:
        raise NetworkFormatError(
            f"file declares {n_par} parameters, architecture needs {arch.n_parameters}"
        )
    body = lines[3 + n_layers : 3 + n_layers + n_par]
    if len(body) != n_par or lines[3 + n_layers + n_par] != "end":
        raise NetworkFormatError("truncated parameter block")
    theta = np.array([float(tok) for tok in body])
    dims_net = arch.layer_dims
    ws, bs, pos = [], [], 0
    for k in range(n_layers):
        nw = dims_net[k + 1] * dims_net[k]
        ws.append(theta[pos : pos + nw].reshape(dims_net[k + 1], dims_net[k]))
        pos += nw
        bs.append(theta[pos : pos + dims_net[k + 1]])
        pos += dims_net[k + 1]
    return Network(arch, ws, bs)
