"""Operation-adversarial conditional GAN trainer.

The generator G maps ``(z, label)`` to a normalised forecast-error field; the
discriminator D scores error fields as real or generated. G minimises

    loss_G = k * loss_G1 + (1 - k) * loss_G2

where ``loss_G1`` is the usual adversarial term and ``loss_G2 = -C*`` is the
negated scaled DC-OPF cost of the RT load the error implies. The gradient of
``loss_G2`` with respect to the error field comes straight from the LMPs, so no
differentiation through the solver is needed.
"""

from __future__ import annotations

import csv
import enum
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataprep import DaySample, DayStats, ErrorField, ErrorKind, SignMode, day_stats, \
    denormalize_error, normalized_error
from .errors import ConfigError, DegenerateDuals, InfeasibleDispatch, InsufficientData
from .grid import GridModel
from .neuralnet import EPS_CLIP, NetParams, NetSpec, NoiseSpec, backward, clip_prob, \
    discriminator_spec, forward, generator_spec, init_params, sgd_step
from .opf import DEFAULT_SCALE, OpfSolution, ScaleConstants, solve_dcopf
from .parallel import pmap

log = logging.getLogger(__name__)

# RNG stream ids; every stream is np.random.default_rng([seed, stream, ...]).
STREAM_INIT_G, STREAM_INIT_D, STREAM_SHUFFLE, STREAM_NOISE, STREAM_GENERATE = 1, 2, 3, 4, 5


class InfeasiblePolicy(str, enum.Enum):
    SKIP = "skip"          # sample contributes nothing to loss_G2
    PENALTY = "penalty"    # loss 0.5 * w * |eps|^2, pulls the error back toward zero


class UpdateOrder(str, enum.Enum):
    ALGORITHM = "algorithm"  # D step, G1 step, then a separate G2 step at the new theta_g
    FUSED = "fused"          # one theta_g step on k*grad_G1 + (1-k)*grad_G2


@dataclass(frozen=True)
class TrainConfig:
    k: float = 0.8
    alpha: float = 1e-3
    alpha_g2: float | None = None   # defaults to alpha
    batch_size: int = 100
    epoch_max: int = 30
    noise: NoiseSpec = NoiseSpec(16)
    scale: ScaleConstants = DEFAULT_SCALE
    seed: int = 0
    infeasible_policy: InfeasiblePolicy = InfeasiblePolicy.SKIP
    penalty_weight: float = 1.0
    sign: SignMode = SignMode.ROUND_TRIP
    hidden: int = 128
    output_range: float = 2.5
    update_order: UpdateOrder = UpdateOrder.ALGORITHM
    use_opf: bool = True            # False gives the plain cGAN reference

    def __post_init__(self):
        for name, enum_t in (("infeasible_policy", InfeasiblePolicy), ("sign", SignMode),
                             ("update_order", UpdateOrder)):
            try:
                object.__setattr__(self, name, enum_t(getattr(self, name)))
            except ValueError:
                raise ConfigError(f"invalid {name} {getattr(self, name)!r}") from None
        if isinstance(self.noise, int):
            object.__setattr__(self, "noise", NoiseSpec(self.noise))
        if not 0.0 <= self.k <= 1.0:
            raise ConfigError(f"k must lie in [0, 1], got {self.k}")
        if self.batch_size < 1 or self.epoch_max < 1:
            raise ConfigError("batch_size and epoch_max must be at least 1")
        if not self.alpha > 0 or (self.alpha_g2 is not None and not self.alpha_g2 > 0):
            raise ConfigError("learning rates must be positive")
        if not self.output_range > 0 or self.hidden < 1:
            raise ConfigError("output_range and hidden width must be positive")

    @property
    def step_g2(self) -> float:
        return self.alpha if self.alpha_g2 is None else self.alpha_g2

    def to_dict(self) -> dict:
        return {
            "k": self.k, "alpha": self.alpha, "alpha_g2": self.alpha_g2,
            "batch_size": self.batch_size, "epoch_max": self.epoch_max,
            "n_z": self.noise.n_z,
            "delta_shift": self.scale.delta_shift, "delta_scale": self.scale.delta_scale,
            "seed": self.seed, "infeasible_policy": self.infeasible_policy.value,
            "penalty_weight": self.penalty_weight, "sign": self.sign.value,
            "hidden": self.hidden, "output_range": self.output_range,
            "update_order": self.update_order.value, "use_opf": self.use_opf,
        }

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        d = dict(d)
        noise = NoiseSpec(int(d.pop("n_z")))
        scale = ScaleConstants(float(d.pop("delta_shift")), float(d.pop("delta_scale")))
        return cls(noise=noise, scale=scale, **d)


@dataclass
class TrainTrace:
    epoch: list = field(default_factory=list)
    loss_d: list = field(default_factory=list)
    loss_g: list = field(default_factory=list)
    loss_g1: list = field(default_factory=list)
    loss_g2: list = field(default_factory=list)
    n_batches: list = field(default_factory=list)
    n_infeasible: list = field(default_factory=list)
    n_degenerate: list = field(default_factory=list)

    COLUMNS = ("epoch", "loss_d", "loss_g", "loss_g1", "loss_g2")

    def rows(self):
        return list(zip(*(getattr(self, c) for c in self.COLUMNS)))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for e, *vals in self.rows():
                w.writerow([e, *(repr(float(v)) for v in vals)])


# -- losses -------------------------------------------------------------

def loss_d(d_real, d_fake) -> float:
    """Discriminator objective (minimised): mean of log(1 - D(x)) + log(D(G(z)))."""
    pr, pf = clip_prob(np.asarray(d_real, float)), clip_prob(np.asarray(d_fake, float))
    return float(np.mean(np.log1p(-pr) + np.log(pf)))


def loss_g1(d_fake) -> float:
    return float(np.mean(np.log1p(-clip_prob(np.asarray(d_fake, float)))))


def _clip_mask(p):
    return (p > EPS_CLIP) & (p < 1.0 - EPS_CLIP)


def _loss_d_grads(d_real, d_fake):
    """d loss_d / d D-output for the real and fake halves of a batch."""
    b = d_real.shape[0]
    pr, pf = clip_prob(d_real), clip_prob(d_fake)
    g_real = np.where(_clip_mask(d_real), -1.0 / (1.0 - pr), 0.0) / b
    g_fake = np.where(_clip_mask(d_fake), 1.0 / pf, 0.0) / b
    return g_real, g_fake


def _loss_g1_grad(d_fake):
    pf = clip_prob(d_fake)
    return np.where(_clip_mask(d_fake), -1.0 / (1.0 - pf), 0.0) / d_fake.shape[0]


def loss_g2(eps_gen, sample: DaySample, grid: GridModel, sc: ScaleConstants,
            sign: SignMode = SignMode.ROUND_TRIP, st: DayStats | None = None):
    """``-C*`` for the RT load implied by ``eps_gen``; returns ``(loss, OpfSolution)``.

    Raises ``InfeasibleDispatch`` when the load cannot be served.
    """
    if isinstance(eps_gen, ErrorField) and eps_gen.kind is not ErrorKind.NORMALIZED:
        raise ConfigError("loss_g2 expects a normalised error field")
    st = day_stats(sample) if st is None else st
    load = denormalize_error(eps_gen, sample, st, sign)
    sol = solve_dcopf(grid, load)
    return -(sol.cost - sc.delta_shift) / sc.delta_scale, sol


def g2_upstream_gradient(sol: OpfSolution, st: DayStats, sc: ScaleConstants,
                         sign: SignMode = SignMode.ROUND_TRIP, warn: bool = True) -> np.ndarray:
    """d loss_G2 / d eps for every (node, hour), shape ``(N, T)``.

    The load moves by ``direction * range`` per unit of eps and the cost by
    ``lmp`` per MW, so the derivative of ``-C*`` is
    ``-direction * lmp * range / delta_scale``.
    """
    if warn and sol.any_degenerate:
        warnings.warn("gradient taken at a dispatch with non-unique duals", DegenerateDuals,
                      stacklevel=2)
    return -SignMode(sign).direction * sol.lmp * st.span[:, None] / sc.delta_scale


# -- training -----------------------------------------------------------

def network_specs(cfg: TrainConfig, n_nodes: int, horizon: int, n_labels: int = 4):
    n_out = n_nodes * horizon
    g = generator_spec(cfg.noise.n_z, n_out, n_labels, cfg.hidden, cfg.output_range)
    d = discriminator_spec(n_out, n_labels, cfg.hidden)
    return g, d


@dataclass
class _G2Batch:
    loss: float
    upstream: np.ndarray      # (B, N*T)
    n_infeasible: int
    n_degenerate: int


def _g2_batch(fake, batch, stats, grid, cfg: TrainConfig) -> _G2Batch:
    shape = batch[0].da_real.shape

    def one(args):
        eps, s, st = args
        try:
            val, sol = loss_g2(eps.reshape(shape), s, grid, cfg.scale, cfg.sign, st)
        except InfeasibleDispatch:
            return None
        return val, g2_upstream_gradient(sol, st, cfg.scale, cfg.sign, warn=False), sol.any_degenerate

    results = pmap(one, zip(fake, batch, stats))
    up = np.zeros_like(fake)
    total, used, n_inf, n_deg = 0.0, 0, 0, 0
    for b, res in enumerate(results):
        if res is None:
            n_inf += 1
            if cfg.infeasible_policy is InfeasiblePolicy.PENALTY:
                total += 0.5 * cfg.penalty_weight * float(fake[b] @ fake[b])
                up[b] = cfg.penalty_weight * fake[b]
                used += 1
            continue
        val, g, deg = res
        total += val
        up[b] = g.reshape(-1)
        used += 1
        n_deg += int(deg)
    if used:
        total /= used
        up /= used
    return _G2Batch(total, up, n_inf, n_deg)


def _batches(n, size, rng):
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def train(dataset, grid: GridModel, cfg: TrainConfig, on_step=None):
    """Run the adversarial training loop; returns ``(theta_g, theta_d, trace)``.

    ``on_step(epoch, batch_index, theta_g, theta_d)`` is called after every
    mini-batch, which is how parameter trajectories are compared in tests.
    """
    dataset = list(dataset)
    if not dataset:
        raise InsufficientData("training set is empty")
    shape = dataset[0].da_real.shape
    if any(s.da_real.shape != shape for s in dataset):
        raise ConfigError("all training days must share the same (node, hour) shape")
    if shape[0] != grid.n_nodes:
        raise ConfigError(f"training data has {shape[0]} nodes, grid has {grid.n_nodes}")
    stats = [day_stats(s) for s in dataset]
    real = np.stack([normalized_error(s).values.reshape(-1) for s in dataset])
    labels = np.array([s.label for s in dataset])
    g_spec, d_spec = network_specs(cfg, *shape)
    theta_g = init_params(g_spec, [cfg.seed, STREAM_INIT_G])
    theta_d = init_params(d_spec, [cfg.seed, STREAM_INIT_D])
    trace = TrainTrace()
    opf_on = cfg.use_opf
    for epoch in range(1, cfg.epoch_max + 1):
        shuffle = np.random.default_rng([cfg.seed, STREAM_SHUFFLE, epoch])
        noise = np.random.default_rng([cfg.seed, STREAM_NOISE, epoch])
        sums = np.zeros(4)
        n_inf = n_deg = 0
        batches = _batches(len(dataset), cfg.batch_size, shuffle)
        for bi, idx in enumerate(batches):
            y = labels[idx]
            z = cfg.noise.sample(noise, idx.size)
            x_real = real[idx]
            fake, _ = forward(g_spec, theta_g, z, y)

            # discriminator step
            p_real, tape_r = forward(d_spec, theta_d, x_real, y)
            p_fake, tape_f = forward(d_spec, theta_d, fake, y)
            ld = loss_d(p_real, p_fake)
            gr, gf = _loss_d_grads(p_real, p_fake)
            grad_d = backward(d_spec, theta_d, tape_r, gr)[0] + backward(d_spec, theta_d, tape_f, gf)[0]
            theta_d = sgd_step(theta_d, grad_d, cfg.alpha)

            # adversarial generator term against the updated discriminator
            fake, tape_g = forward(g_spec, theta_g, z, y)
            p_fake, tape_f = forward(d_spec, theta_d, fake, y)
            lg1 = loss_g1(p_fake)
            up1 = backward(d_spec, theta_d, tape_f, _loss_g1_grad(p_fake))[1]
            grad_g1 = backward(g_spec, theta_g, tape_g, up1)[0]

            if cfg.update_order is UpdateOrder.FUSED:
                g2 = _g2_batch(fake, [dataset[i] for i in idx], [stats[i] for i in idx],
                               grid, cfg) if opf_on else None
                if g2 is not None and cfg.k < 1.0:
                    grad_g2 = backward(g_spec, theta_g, tape_g, g2.upstream)[0]
                    theta_g = sgd_step(theta_g, cfg.k * grad_g1 + (1.0 - cfg.k) * grad_g2, cfg.alpha)
                else:
                    theta_g = sgd_step(theta_g, cfg.k * grad_g1, cfg.alpha)
            else:
                theta_g = sgd_step(theta_g, cfg.k * grad_g1, cfg.alpha)
                g2 = None
                if opf_on:
                    fake, tape_g = forward(g_spec, theta_g, z, y)
                    g2 = _g2_batch(fake, [dataset[i] for i in idx], [stats[i] for i in idx],
                                   grid, cfg)
                    if cfg.k < 1.0:
                        grad_g2 = backward(g_spec, theta_g, tape_g, g2.upstream)[0]
                        theta_g = sgd_step(theta_g, (1.0 - cfg.k) * grad_g2, cfg.step_g2)

            lg2 = g2.loss if g2 is not None else 0.0
            if g2 is not None:
                n_inf += g2.n_infeasible
                n_deg += g2.n_degenerate
            lg = cfg.k * lg1 + (1.0 - cfg.k) * lg2 if opf_on else lg1
            sums += (ld, lg, lg1, lg2)
            if on_step is not None:
                on_step(epoch, bi, theta_g, theta_d)
        means = sums / len(batches)
        trace.epoch.append(epoch)
        trace.loss_d.append(float(means[0]))
        trace.loss_g.append(float(means[1]))
        trace.loss_g1.append(float(means[2]))
        trace.loss_g2.append(float(means[3]) if opf_on else float("nan"))
        trace.n_batches.append(len(batches))
        trace.n_infeasible.append(n_inf)
        trace.n_degenerate.append(n_deg)
        log.info("epoch %d loss_d=%.5g loss_g=%.5g infeasible=%d", epoch, means[0], means[1], n_inf)
    return theta_g, theta_d, trace


def generate(g_spec: NetSpec, theta_g: NetParams, label: int, n: int, noise: NoiseSpec,
             seed, shape) -> list[ErrorField]:
    """Draw ``n`` normalised error fields of ``shape`` for ``label``.

    ``seed`` is an int or a list of ints (e.g. ``[root, day_index]``).
    """
    if n < 0:
        raise ConfigError("n must be nonnegative")
    if int(np.prod(shape)) != g_spec.n_out:
        raise ConfigError(f"shape {tuple(shape)} does not match generator output {g_spec.n_out}")
    if n == 0:
        return []
    root = [int(v) for v in np.atleast_1d(seed)]
    rng = np.random.default_rng([*root, STREAM_GENERATE, int(label)])
    z = noise.sample(rng, n)
    out, _ = forward(g_spec, theta_g, z, np.full(n, int(label)))
    return [ErrorField(o.reshape(shape), ErrorKind.NORMALIZED) for o in out]
