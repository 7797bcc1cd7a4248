"""Desk-scale experiment presets: one place for the run configurations used by
the comparative experiments and the acceptance suite.

The GA settings differ from the paper defaults: at width 16 there are only 120
mutable slots, so 200 init mutations degenerate to uniform-random graphs and a
heavy per-child mutation count turns the search into a random walk. The desk
preset keeps initial individuals within a small edit distance of the classical
bases and mutates finely, which is what the budget (2500 evaluations vs the
paper's ~70k) supports.
"""

from __future__ import annotations

from . import cost_oracle as co
from . import ga as ga_mod
from . import latent_search as ls
from . import orchestrator as orch
from . import surrogate as sg

DESK_WIDTH = 16
DESK_BUDGET = 2500

DESK_GA = ga_mod.GaConfig(population_size=36, init_mutations=20, max_mutations=6)


def desk_experiment_config(
    omega: float,
    seed: int,
    budget: int = DESK_BUDGET,
    rounds: int = 8,
    steps_per_round: int = 1500,
    width: int = DESK_WIDTH,
) -> orch.OrchestratorConfig:
    """Width-16 adder optimization setup used for CVAE-vs-GA comparisons."""
    return orch.OrchestratorConfig(
        cost=co.CostConfig(width=width, delay_weight=omega),
        model=sg.ModelConfig.desk(width),
        train=sg.TrainConfig(steps_per_round=steps_per_round),
        search=ls.SearchConfig(),
        ga=DESK_GA,
        seed=seed,
        rounds=rounds,
        budget=budget,
        initial_source="ga",
        initial_ga_generations=8,
    )


def best_classical_cost(cost_config: co.CostConfig) -> float:
    """Minimum proxy cost over the four classical constructors."""
    from . import prefix_graph as pg

    ctors = [pg.ripple_carry, pg.sklansky, pg.kogge_stone]
    if cost_config.width >= 4 and cost_config.width & (cost_config.width - 1) == 0:
        ctors.append(pg.brent_kung)
    return min(co.evaluate(c(cost_config.width), cost_config).cost for c in ctors)
