"""Run configuration files: one JSON document with the four required settings
(width, circuit_kind, delay_weight, seed) at top level and optional sections
cost/model/train/search/ga/orchestrator overriding per-field defaults.
Unknown keys anywhere are rejected before any work starts.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from . import cost_oracle as co
from . import ga as ga_mod
from . import latent_search as ls
from . import orchestrator as orch
from . import surrogate as sg


class ConfigError(ValueError):
    pass


_SECTIONS = ("cost", "model", "train", "search", "ga", "orchestrator")
_TOP_KEYS = {"width", "circuit_kind", "delay_weight", "seed", *_SECTIONS}
# supplied at top level, not inside sections
_RESERVED = {
    "cost": {"width", "circuit_kind", "delay_weight"},
    "model": {"width"},
    "train": set(),
    "search": set(),
    "ga": set(),
    "orchestrator": {"seed", "cost", "model", "train", "search", "ga"},
}


def _section(doc: dict, name: str, cls, extra: set[str] = frozenset()) -> dict:
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = ({f.name for f in dataclasses.fields(cls)} | set(extra)) - _RESERVED[name]
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return dict(raw)


def parse_run_config(doc: dict, seed_override: int | None = None) -> orch.OrchestratorConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("width", "circuit_kind", "delay_weight"):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")
    seed = seed_override if seed_override is not None else doc.get("seed")
    if seed is None:
        raise ConfigError("missing required key 'seed' (or pass --seed)")
    try:
        cost = co.CostConfig(
            width=doc["width"], delay_weight=doc["delay_weight"],
            circuit_kind=doc["circuit_kind"], **_section(doc, "cost", co.CostConfig),
        )
        model_raw = _section(doc, "model", sg.ModelConfig, extra={"preset"})
        preset = model_raw.pop("preset", None)
        if preset is not None:
            if preset not in ("desk", "paper"):
                raise ConfigError("model.preset must be 'desk' or 'paper'")
            model = getattr(sg.ModelConfig, preset)(doc["width"], **model_raw)
        else:
            model = sg.ModelConfig(width=doc["width"], **model_raw)
        train = sg.TrainConfig(**_section(doc, "train", sg.TrainConfig))
        search = ls.SearchConfig(**_section(doc, "search", ls.SearchConfig))
        ga = ga_mod.GaConfig(**_section(doc, "ga", ga_mod.GaConfig))
        return orch.OrchestratorConfig(
            cost=cost, model=model, train=train, search=search, ga=ga,
            seed=int(seed), **_section(doc, "orchestrator", orch.OrchestratorConfig),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def load_run_config(path, seed_override: int | None = None) -> orch.OrchestratorConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from e
    return parse_run_config(doc, seed_override)
