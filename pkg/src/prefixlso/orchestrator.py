"""The data-acquisition loop: rank-weight the dataset, train the surrogate,
search the latent space, decode and score new candidates, append, repeat —
all under one global evaluation budget.

A run writes into a directory: ``config.json`` (resolved snapshot),
``log.jsonl`` (one evaluation record per line, append-only, dense indices),
and ``checkpoints/round_<r>.bin``. Two runs with the same config and seed
produce byte-identical logs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cost_oracle as co
from . import ga as ga_mod
from . import latent_search as ls
from . import prefix_graph as pg
from . import surrogate as sg

SOURCES = ("initial_ga", "initial_random", "search", "ga")


@dataclass(frozen=True)
class EvaluationRecord:
    index: int
    outer_loop: int
    step: int
    batch_idx: int
    bitvector: str  # legalized hex
    latent: tuple[float, ...] | None
    prior_logprob: float | None
    true_score: float
    predicted_score: float | None
    source: str

    def to_json(self) -> str:
        d = {
            "index": self.index,
            "outer_loop": self.outer_loop,
            "step": self.step,
            "batch_idx": self.batch_idx,
            "bitvector": self.bitvector,
            "latent": list(self.latent) if self.latent is not None else None,
            "prior_logprob": self.prior_logprob,
            "true_score": self.true_score,
            "predicted_score": self.predicted_score,
            "source": self.source,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "EvaluationRecord":
        d = json.loads(line)
        return cls(
            index=d["index"],
            outer_loop=d["outer_loop"],
            step=d["step"],
            batch_idx=d["batch_idx"],
            bitvector=d["bitvector"],
            latent=tuple(d["latent"]) if d["latent"] is not None else None,
            prior_logprob=d["prior_logprob"],
            true_score=d["true_score"],
            predicted_score=d["predicted_score"],
            source=d["source"],
        )


class Dataset:
    """Append-only store of evaluation records with dense, increasing indices."""

    def __init__(self, width: int):
        self.width = width
        self.records: list[EvaluationRecord] = []

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record: EvaluationRecord) -> None:
        if record.index != len(self.records):
            raise ValueError(
                f"record index {record.index} breaks dense ordering at {len(self.records)}"
            )
        self.records.append(record)

    def costs(self) -> np.ndarray:
        return np.array([r.true_score for r in self.records], dtype=np.float64)

    def bits(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, pg.n_slots(self.width)), dtype=bool)
        return np.stack([pg.hex_to_bits(self.width, r.bitvector) for r in self.records])

    def best(self) -> EvaluationRecord:
        return min(self.records, key=lambda r: r.true_score)


def rank_weights(costs, k: float) -> np.ndarray:
    """w_i proportional to 1 / (k*n + rank_i) with rank = count of strictly
    lower costs; recomputed from scratch every call, normalized to sum 1."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size == 0:
        raise ValueError("rank_weights requires at least one cost")
    if k <= 0:
        raise ValueError("k must be > 0")
    ranks = np.searchsorted(np.sort(costs), costs, side="left")
    w = 1.0 / (k * costs.size + ranks)
    return w / w.sum()


@dataclass(frozen=True)
class OrchestratorConfig:
    cost: co.CostConfig
    model: sg.ModelConfig
    train: sg.TrainConfig
    search: ls.SearchConfig
    ga: ga_mod.GaConfig
    seed: int
    rounds: int = 4
    budget: int = 2500
    initial_source: str = "ga"  # or "random"
    initial_ga_generations: int = 5
    initial_random_count: int = 100

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.budget <= 0:
            raise ValueError("budget must be > 0")
        if self.initial_source not in ("ga", "random"):
            raise ValueError("initial_source must be 'ga' or 'random'")
        if self.initial_ga_generations < 1:
            raise ValueError("initial_ga_generations must be >= 1")
        if self.initial_random_count < 1:
            raise ValueError("initial_random_count must be >= 1")
        if self.cost.width != self.model.width:
            raise ValueError("cost and model widths differ")

    def to_json_dict(self) -> dict:
        return {
            "cost": asdict(self.cost),
            "model": asdict(self.model),
            "train": asdict(self.train),
            "search": asdict(self.search),
            "ga": asdict(self.ga),
            "seed": self.seed,
            "rounds": self.rounds,
            "budget": self.budget,
            "initial_source": self.initial_source,
            "initial_ga_generations": self.initial_ga_generations,
            "initial_random_count": self.initial_random_count,
        }


def build_initial_dataset(
    config: OrchestratorConfig,
    oracle: co.CachedCostOracle,
    rng: np.random.Generator,
    dataset: Dataset,
) -> bool:
    """Seed the dataset from GA generations or random individuals; every
    evaluation debits the shared budget. Returns False on budget exhaustion."""
    if config.initial_source == "ga":
        # g evaluated populations = initial population + (g - 1) replacements
        result = ga_mod.run_ga(
            config.cost.width, config.ga, oracle, rng,
            generations=config.initial_ga_generations - 1,
        )
        for ev in result.history:
            dataset.append(EvaluationRecord(
                index=len(dataset), outer_loop=0, step=-1, batch_idx=-1,
                bitvector=ev.bitvector, latent=None, prior_logprob=None,
                true_score=ev.report.cost, predicted_score=None, source="initial_ga",
            ))
        return not result.exhausted
    individuals = [ga_mod.ga_init(config.cost.width, rng, config.ga)
                   for _ in range(config.initial_random_count)]
    exhausted = False
    try:
        outcomes = oracle.evaluate_batch([ind.bits for ind in individuals])
    except co.BudgetExhausted as e:
        outcomes = e.outcomes
        exhausted = True
    for outcome in outcomes:
        if outcome.fresh:
            dataset.append(EvaluationRecord(
                index=len(dataset), outer_loop=0, step=-1, batch_idx=-1,
                bitvector=outcome.report.legalized_bitvector, latent=None,
                prior_logprob=None, true_score=outcome.report.cost,
                predicted_score=None, source="initial_random",
            ))
    return not exhausted


@dataclass
class RunResult:
    dataset: Dataset
    best: EvaluationRecord
    exhausted: bool
    rounds_completed: int
    out_dir: Path | None
    model: sg.SurrogateModel | None = None


class _RunLog:
    """Incremental log.jsonl writer; records are flushed as they arrive so a
    truncated run still leaves a coherent prefix."""

    def __init__(self, path: Path | None):
        self._fh = open(path, "w") if path is not None else None

    def write(self, record: EvaluationRecord) -> None:
        if self._fh is not None:
            self._fh.write(record.to_json() + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _write_config(out_dir: Path, config: OrchestratorConfig, algo: str) -> None:
    doc = {"algo": algo, **config.to_json_dict()}
    (out_dir / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_circuitvae(config: OrchestratorConfig, out_dir=None) -> RunResult:
    """Algorithm: build initial data, then for each round reweight, train,
    search from cost-weighted posterior samples, decode, evaluate, append.
    Stops early when the budget runs out; returns the lowest-cost record."""
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        (out_path / "checkpoints").mkdir(parents=True, exist_ok=True)
        _write_config(out_path, config, "cvae")
    oracle = co.CachedCostOracle(config.cost, limit=config.budget)
    master = np.random.default_rng(config.seed)
    rng_init_data, rng_model, rng_rounds = master.spawn(3)
    dataset = Dataset(config.cost.width)
    log = _RunLog(out_path / "log.jsonl" if out_path else None)
    try:
        ok = build_initial_dataset(config, oracle, rng_init_data, dataset)
        for r in dataset:
            log.write(r)
        if not ok or config.rounds == 0:
            return RunResult(
                dataset=dataset, best=dataset.best(), exhausted=not ok,
                rounds_completed=0, out_dir=out_path,
            )
        model = sg.init_model(config.model, rng_model)
        exhausted = False
        rounds_done = 0
        for round_idx in range(1, config.rounds + 1):
            rng_train, rng_latents, rng_search, rng_decode = rng_rounds.spawn(4)
            weights = rank_weights(dataset.costs(), config.train.rank_weight_k)
            bits = dataset.bits()
            sg.train_round(model, bits, dataset.costs(), weights, config.train, rng_train)
            if out_path is not None:
                sg.save_model(model, out_path / "checkpoints" / f"round_{round_idx}.bin")
            z0 = ls.init_latents(model, bits, weights, config.search.trajectories,
                                 rng_latents)
            captures = ls.run_search(model, z0, config.search, rng_search)
            candidates = ls.decode_candidates(
                model, captures, rng_decode,
                deterministic=config.search.deterministic_decode,
            )
            try:
                outcomes = oracle.evaluate_batch([c.bits for c in candidates])
            except co.BudgetExhausted as e:
                outcomes = e.outcomes
                exhausted = True
            for cand, outcome in zip(candidates, outcomes):
                if not outcome.fresh:
                    continue  # cache hit: no budget spent, no new record
                cap = cand.latent
                record = EvaluationRecord(
                    index=len(dataset), outer_loop=round_idx, step=cap.step,
                    batch_idx=cap.trajectory,
                    bitvector=outcome.report.legalized_bitvector,
                    latent=tuple(float(v) for v in cap.z),
                    prior_logprob=cap.prior_logprob,
                    true_score=outcome.report.cost,
                    predicted_score=cap.predicted_score, source="search",
                )
                dataset.append(record)
                log.write(record)
            rounds_done = round_idx
            if exhausted:
                break
        return RunResult(
            dataset=dataset, best=dataset.best(), exhausted=exhausted,
            rounds_completed=rounds_done, out_dir=out_path, model=model,
        )
    finally:
        log.close()


def run_ga_baseline(config: OrchestratorConfig, out_dir=None,
                    generations: int | None = None) -> RunResult:
    """Standalone GA under the same budget accounting and artifact layout.
    outer_loop records the GA generation; runs to the budget by default."""
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        _write_config(out_path, config, "ga")
    oracle = co.CachedCostOracle(config.cost, limit=config.budget)
    rng = np.random.default_rng(config.seed).spawn(1)[0]
    result = ga_mod.run_ga(config.cost.width, config.ga, oracle, rng,
                           generations=generations)
    dataset = Dataset(config.cost.width)
    log = _RunLog(out_path / "log.jsonl" if out_path else None)
    try:
        for ev in result.history:
            record = EvaluationRecord(
                index=len(dataset), outer_loop=ev.generation, step=-1, batch_idx=-1,
                bitvector=ev.bitvector, latent=None, prior_logprob=None,
                true_score=ev.report.cost, predicted_score=None, source="ga",
            )
            dataset.append(record)
            log.write(record)
    finally:
        log.close()
    return RunResult(
        dataset=dataset, best=dataset.best(), exhausted=result.exhausted,
        rounds_completed=len(result.populations), out_dir=out_path,
    )


def best_so_far(records) -> list[tuple[int, float]]:
    """Nonincreasing running-minimum curve over evaluations in index order."""
    out: list[tuple[int, float]] = []
    best = math.inf
    for i, rec in enumerate(records):
        cost = rec.true_score if isinstance(rec, EvaluationRecord) else float(rec)
        best = min(best, cost)
        out.append((i, best))
    return out


def load_log(run_dir) -> list[EvaluationRecord]:
    path = Path(run_dir) / "log.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no log.jsonl in {run_dir}")
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                records.append(EvaluationRecord.from_json(line))
    return records


def load_config_dict(run_dir) -> dict:
    path = Path(run_dir) / "config.json"
    if not path.exists():
        raise FileNotFoundError(f"no config.json in {run_dir}")
    return json.loads(path.read_text())
