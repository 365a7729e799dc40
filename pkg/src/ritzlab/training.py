"""First-order minimization of the empirical Ritz loss.

SGD and Adam on the flat parameter vector, with per-step minibatches drawn
either from the fixed training sample set (the empirical-risk setting) or
fresh each step.  The returned network is the best iterate by full-set loss,
selected among periodic checkpoints.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .networks import Architecture, Network
from .problems import Problem
from .ritz import derived_seed, empirical_loss, loss_and_parameter_gradient
from .sampling import SampleSet, make_sample_set, rng_stream

_TAG_INIT = 100
_TAG_BATCH = 101


class TrainingDivergedError(RuntimeError):
    """Loss or gradient became non-finite during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    iterations: int = 5000
    batch_domain: int = 256
    batch_boundary: int = 256
    resample: str = "fixed_set"
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    init_scale: float = 1.0
    eval_every: int = 50

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.resample not in ("fixed_set", "fresh_each_step"):
            raise ValueError("resample must be 'fixed_set' or 'fresh_each_step'")
        if self.learning_rate < 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("need learning_rate >= 0 and lr_decay in (0, 1]")


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    loss: float
    grad_norm: float


@dataclass
class TrainHistory:
    """Full-set loss trace at checkpoints plus the best-iterate bookkeeping."""

    checkpoints: list = field(default_factory=list)
    best_iteration: int = 0
    best_loss: float = math.inf
    wall_seconds: float = 0.0

    def summary(self) -> dict:
        """Deterministic fields only; wall time stays out of reports."""
        return {
            "best_iteration": self.best_iteration,
            "best_loss": self.best_loss,
            "initial_loss": self.checkpoints[0].loss if self.checkpoints else None,
            "final_loss": self.checkpoints[-1].loss if self.checkpoints else None,
            "n_checkpoints": len(self.checkpoints),
        }


def init_network(arch: Architecture, init_scale: float, seed: int) -> Network:
    """Glorot-style uniform weights scaled by init_scale, zero biases."""
    rng = rng_stream(seed, _TAG_INIT)
    dims = arch.layer_dims
    ws, bs = [], []
    for k in range(arch.depth):
        s = init_scale * math.sqrt(6.0 / (dims[k] + dims[k + 1]))
        ws.append(rng.uniform(-s, s, size=(dims[k + 1], dims[k])))
        bs.append(np.zeros(dims[k + 1]))
    return Network(arch, ws, bs)


class AdamState:
    """The standard published Adam recursion on a flat parameter vector."""

    def __init__(self, n_params: int, betas=(0.9, 0.999), eps: float = 1e-8):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _batch_view(samples: SampleSet, idx_d, idx_b) -> SampleSet:
    return SampleSet(
        samples.domain_points[idx_d],
        samples.boundary_points[idx_b],
        samples.boundary_faces[idx_b],
        seed=samples.seed,
    )


def train(net: Network, p: Problem, samples: SampleSet, cfg: TrainConfig):
    """Run cfg.iterations optimizer steps; returns (best-iterate net, history).

    Aborts with TrainingDivergedError and diagnostics if the loss or gradient
    stops being finite.
    """
    if samples.d != p.d or net.architecture.input_dim != p.d:
        raise ValueError("net/sample dimensions do not match the problem")
    if cfg.resample == "fixed_set":
        if cfg.batch_domain > samples.n_domain or cfg.batch_boundary > samples.n_boundary:
            raise ValueError("batch sizes exceed the fixed sample set")

    t_start = time.perf_counter()
    theta = net.flatten_parameters()
    adam = AdamState(theta.size, cfg.adam_betas, cfg.adam_eps) if cfg.optimizer == "adam" else None
    rng = rng_stream(cfg.seed, _TAG_BATCH)
    lr = cfg.learning_rate
    epoch_steps = max(1, math.ceil(samples.n_domain / cfg.batch_domain))

    history = TrainHistory()

    def checkpoint(iteration, current):
        rep, grad = loss_and_parameter_gradient(current, p, samples)
        history.checkpoints.append(Checkpoint(iteration, rep.total, float(np.linalg.norm(grad))))
        if rep.total < history.best_loss:
            history.best_loss = rep.total
            history.best_iteration = iteration
            return True
        return False

    current = net
    best_theta = theta.copy()
    checkpoint(0, current)

    for step in range(1, cfg.iterations + 1):
        if cfg.resample == "fixed_set":
            idx_d = rng.choice(samples.n_domain, size=cfg.batch_domain, replace=False)
            idx_b = rng.choice(samples.n_boundary, size=cfg.batch_boundary, replace=False)
            batch = _batch_view(samples, idx_d, idx_b)
        else:
            batch = make_sample_set(
                cfg.batch_domain, cfg.batch_boundary, p.d, derived_seed(cfg.seed, step)
            )
        rep, grad = loss_and_parameter_gradient(current, p, batch)
        if not (math.isfinite(rep.total) and np.isfinite(grad).all()):
            raise TrainingDivergedError(
                f"non-finite loss/gradient at iteration {step}: "
                f"loss={rep.total!r}, |grad|={float(np.linalg.norm(grad)):.3e}, "
                f"|theta|={float(np.linalg.norm(theta)):.3e}"
            )
        if cfg.optimizer == "adam":
            theta = adam.step(theta, grad, lr)
        else:
            theta = theta - lr * grad
        if step % epoch_steps == 0:
            lr *= cfg.lr_decay
        current = net.with_parameters(theta, validate=False)

        if step % cfg.eval_every == 0 or step == cfg.iterations:
            if checkpoint(step, current):
                best_theta = theta.copy()

    history.wall_seconds = time.perf_counter() - t_start
    return net.with_parameters(best_theta), history


def optimization_error_estimate(
    trained: Network,
    p: Problem,
    samples: SampleSet,
    cfg: TrainConfig,
    restarts: int,
    seed: int,
) -> float:
    """Proxy for the optimization error: empirical loss of the trained net
    minus the best loss found over independent restarts, clamped at zero.

    Restart k reruns init_network + train with seed seed + k, so passing the
    original run's seed makes restart 0 reproduce it exactly.
    """
    if restarts < 1:
        raise ValueError("need restarts >= 1")
    base = empirical_loss(trained, p, samples).total
    best = math.inf
    for k in range(restarts):
        run_seed = seed + k
        run_cfg = replace(cfg, seed=run_seed)
        net0 = init_network(trained.architecture, cfg.init_scale, run_seed)
        net_k, hist_k = train(net0, p, samples, run_cfg)
        best = min(best, hist_k.best_loss)
    return max(0.0, base - best)
