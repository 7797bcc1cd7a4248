"""Latent-space optimization of parallel prefix circuits.

A beta-VAE with a cost-predictor head is trained on evaluated circuits; new
candidates come from prior-regularized gradient descent in the latent space,
with a genetic-algorithm baseline and an analytical synthesis-proxy oracle
making the loop runnable end to end at desk scale.
"""

from .cost_oracle import (
    BudgetExhausted,
    CachedCostOracle,
    CostConfig,
    CostReport,
    evaluate,
    evaluate_external,
)
from .ga import GaConfig, Individual, ga_crossover, ga_init, ga_mutate, run_ga
from .latent_search import (
    CapturedLatent,
    SearchConfig,
    decode_candidates,
    init_latents,
    run_search,
    search_objective,
)
from .orchestrator import (
    Dataset,
    EvaluationRecord,
    OrchestratorConfig,
    best_so_far,
    rank_weights,
    run_circuitvae,
    run_ga_baseline,
)
from .prefix_graph import (
    Bitvector,
    PrefixGraph,
    brent_kung,
    from_bitvector,
    kogge_stone,
    legalize,
    levels,
    parents,
    random_graph,
    ripple_carry,
    simulate_add,
    simulate_gray,
    sklansky,
    to_bitmatrix,
    to_bitvector,
    validate,
)
from .report import export_dataset, pca2, report_curves
from .runconfig import load_run_config, parse_run_config
from .surrogate import (
    ModelConfig,
    SurrogateModel,
    TrainConfig,
    encode,
    grad_check,
    init_model,
    load_model,
    sample_posterior,
    save_model,
    train_round,
)

__version__ = "0.1.0"
