"""Desk-scale experiments on the synthetic three-zone system.

The scripts in ``scripts/`` and the acceptance suite both call into this
module, so the numbers they report come from one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataprep import day_stats, denormalize_error
from .errors import InfeasibleDispatch
from .evalharness import GeneratedCase, NoneCase, RobustCase, run_case_table
from .oacgan import TrainConfig, generate, network_specs, train
from .opf import ScaleConstants, solve_dcopf
from .synthetic import three_zone_grid, synthetic_days

ROBUST_LEVELS = (0.1, 0.3, 0.5, 0.7, 0.9)

# Scale constants sized to the synthetic grid (daily cost around 2e5 $).
DESK_SCALE = ScaleConstants(delta_shift=0.0, delta_scale=1e4)


def desk_config(**overrides) -> TrainConfig:
    """Small-network settings that train in seconds per epoch on 40 days."""
    base = TrainConfig(k=0.8, alpha=1e-3, batch_size=10, epoch_max=20, noise=8, hidden=32,
                       scale=DESK_SCALE)
    return replace(base, **overrides)


def desk_data(n_days: int = 40, seed: int = 0, n_test: int | None = None):
    """``(grid, train_days, test_days)``; with ``n_test=None`` both sets are all days."""
    days = synthetic_days(n_days, seed=seed)
    grid = three_zone_grid()
    if n_test is None:
        return grid, days, days
    return grid, days[:-n_test], days[-n_test:]


def robust_sweep(test, grid, levels=ROBUST_LEVELS, extra_cases=()):
    cases = [NoneCase()] + [RobustCase(r) for r in levels] + list(extra_cases)
    return run_case_table(test, grid, cases)


def generated_cost(g_spec, theta_g, cfg: TrainConfig, days, grid, seed: int = 0) -> float:
    """Mean scaled cost ``C*`` of the RT loads implied by one generated error per day."""
    vals = []
    for j, s in enumerate(days):
        eps = generate(g_spec, theta_g, s.label, 1, cfg.noise, [seed, j], s.da_real.shape)[0]
        load = denormalize_error(eps, s, day_stats(s), cfg.sign)
        try:
            sol = solve_dcopf(grid, load)
        except InfeasibleDispatch:
            continue
        vals.append((sol.cost - cfg.scale.delta_shift) / cfg.scale.delta_scale)
    return float(np.mean(vals)) if vals else float("nan")


@dataclass
class EffectRow:
    seed: int
    cost_adv: float
    cost_ref: float

    @property
    def adversarial_wins(self) -> bool:
        return self.cost_adv > self.cost_ref


def adversarial_effect(seeds, k_adv: float = 0.8, n_days: int = 20, epochs: int = 8,
                       **cfg_overrides) -> list[EffectRow]:
    """Train at ``k_adv`` and at ``k=1`` per seed and compare generated costs."""
    grid, days, _ = desk_data(n_days)
    rows = []
    for seed in seeds:
        costs = []
        for k in (k_adv, 1.0):
            cfg = desk_config(k=k, seed=seed, epoch_max=epochs, **cfg_overrides)
            g_spec, _ = network_specs(cfg, grid.n_nodes, days[0].da_real.shape[1])
            theta_g, _, _ = train(days, grid, cfg)
            costs.append(generated_cost(g_spec, theta_g, cfg, days, grid, seed=seed))
        rows.append(EffectRow(seed, *costs))
    return rows


def k_sweep(ks, n_days: int = 40, n_test: int = 10, epochs: int = 20, seed: int = 0,
            levels=ROBUST_LEVELS, **cfg_overrides):
    """Train one generator per ``k`` and score all of them next to the robust cases."""
    grid, train_days, test = desk_data(n_days, n_test=n_test)
    gen_cases = []
    for k in ks:
        cfg = desk_config(k=k, seed=seed, epoch_max=epochs, **cfg_overrides)
        g_spec, _ = network_specs(cfg, grid.n_nodes, train_days[0].da_real.shape[1])
        theta_g, _, _ = train(train_days, grid, cfg)
        gen_cases.append(GeneratedCase(g_spec, theta_g, k, cfg.noise, seed=seed))
    return robust_sweep(test, grid, levels, gen_cases)


def monotone(values, increasing: bool = True, rtol: float = 1e-9) -> bool:
    """Weak monotonicity with a relative slack for round-off."""
    v = np.asarray(values, float)
    d = np.diff(v) if increasing else -np.diff(v)
    slack = rtol * np.maximum(np.abs(v[1:]), np.abs(v[:-1]))
    return bool(np.all(d >= -slack))

