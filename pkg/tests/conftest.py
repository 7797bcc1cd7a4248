"""Shared fixtures. The trained desk model is expensive (several CPU-minutes)
and session-scoped; only the tests that need it pull it in.
"""

import numpy as np
import pytest

from prefixlso import cost_oracle as co
from prefixlso import orchestrator as orch
from prefixlso import prefix_graph as pg
from prefixlso import surrogate as sg


class TrainedDesk:
    def __init__(self, model, bits, costs, weights, stats):
        self.model = model
        self.bits = bits
        self.costs = costs
        self.weights = weights
        self.stats = stats


@pytest.fixture(scope="session")
def trained_desk_model():
    """Desk-preset width-16 model trained 5000 steps on 2000 random legalized
    graphs, everything seeded from 0."""
    master = np.random.default_rng(0)
    rng_data, rng_init, rng_train = master.spawn(3)

    raw = []
    for _ in range(2000):
        base = ("ripple", "sklansky")[rng_data.integers(2)]
        raw.append(pg.random_bits(16, rng_data, base, 200))
    bits, _ = pg.legalize_bits(16, np.stack(raw))

    config = co.CostConfig(width=16, delay_weight=0.33)
    oracle = co.CachedCostOracle(config)
    costs = np.array([o.report.cost for o in oracle.evaluate_batch(list(bits))])

    model = sg.init_model(sg.ModelConfig.desk(16), rng_init)
    weights = np.full(len(bits), 1.0 / len(bits))
    stats = sg.train_round(model, bits, costs, weights, sg.TrainConfig(), rng_train)
    return TrainedDesk(model, bits, costs, weights, stats)
