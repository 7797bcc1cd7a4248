"""Prior-regularized gradient descent in latent space.

Each trajectory minimizes ``g(z) = f(z) + gamma * ||z||^2 / 2`` (the cost head
plus the unit-Gaussian prior penalty with its additive constant dropped) by
plain gradient descent, capturing latents at a fixed cadence. Captured latents
decode to candidate circuits by per-slot Bernoulli sampling, then legalization
and dedupe by the legalized bitvector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import prefix_graph as pg
from . import surrogate as sg


@dataclass(frozen=True)
class SearchConfig:
    steps: int = 600
    capture_every: int = 100
    trajectories: int = 96
    learning_rate: float = 0.1
    gamma_low: float = 0.01
    gamma_high: float = 0.1
    deterministic_decode: bool = False  # logit > 0 threshold instead of sampling

    def __post_init__(self):
        for name in ("steps", "capture_every", "trajectories", "learning_rate",
                     "gamma_low", "gamma_high"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.steps % self.capture_every != 0:
            raise ValueError("capture_every must divide steps")
        if self.gamma_low > self.gamma_high:
            raise ValueError("gamma_low must be <= gamma_high")


@dataclass
class CapturedLatent:
    z: np.ndarray
    trajectory: int
    step: int
    gamma: float
    prior_logprob: float
    predicted_score: float  # destandardized


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def unit_gaussian_logprob(z: np.ndarray) -> float:
    z = np.asarray(z, dtype=np.float64)
    return float(-0.5 * (z @ z) - 0.5 * z.size * math.log(2 * math.pi))


def init_latents(
    model: sg.SurrogateModel,
    bits: np.ndarray,
    weights: np.ndarray,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """m posterior samples of dataset circuits drawn proportional to weights."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    n = bits.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    weights = np.asarray(weights, dtype=np.float64)
    idx = rng.choice(n, size=m, replace=True, p=weights)
    mu, sigma = sg.encode(model, bits[idx])
    return sg.sample_posterior(mu, sigma, rng)


def search_objective(
    model: sg.SurrogateModel, z: np.ndarray, gamma: float
) -> tuple[float, np.ndarray]:
    """Value and exact z-gradient of the prior-regularized predicted cost."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    zt = torch.from_numpy(np.asarray(z, dtype=np.float64)[None, :]).to(
        model.config.torch_dtype
    )
    zt.requires_grad_(True)
    value = model.net.predict(zt).sum() + gamma * 0.5 * zt.pow(2).sum()
    (grad,) = torch.autograd.grad(value, zt)
    return float(value.detach()), grad[0].double().numpy()


def run_search(
    model: sg.SurrogateModel,
    z0s: np.ndarray,
    config: SearchConfig,
    rng: np.random.Generator,
) -> list[CapturedLatent]:
    """Descend all trajectories in lockstep and capture every capture_every
    steps; per-trajectory gamma is drawn log-uniformly on [gamma_low, gamma_high].
    Captures are ordered by step, then trajectory index."""
    z0s = np.atleast_2d(np.asarray(z0s, dtype=np.float64))
    m = z0s.shape[0]
    gammas = np.exp(
        rng.uniform(math.log(config.gamma_low), math.log(config.gamma_high), size=m)
    )
    dtype = model.config.torch_dtype
    z = torch.from_numpy(z0s).to(dtype)
    gmat = torch.from_numpy(gammas[:, None]).to(dtype)
    captures: list[CapturedLatent] = []
    for step in range(1, config.steps + 1):
        zv = z.clone().requires_grad_(True)
        pred_sum = model.net.predict(zv).sum()
        (grad_f,) = torch.autograd.grad(pred_sum, zv)
        z = z - config.learning_rate * (grad_f + gmat * z)
        if step % config.capture_every == 0:
            z_np = z.double().numpy()
            preds = sg.predict_cost(model, z_np, destandardize=True)
            for j in range(m):
                captures.append(CapturedLatent(
                    z=z_np[j].copy(),
                    trajectory=j,
                    step=step,
                    gamma=float(gammas[j]),
                    prior_logprob=unit_gaussian_logprob(z_np[j]),
                    predicted_score=float(preds[j]),
                ))
    return captures


@dataclass
class Candidate:
    bits: np.ndarray  # raw decoded slot bits, not legalized
    legalized_hex: str
    latent: CapturedLatent


def decode_candidates(
    model: sg.SurrogateModel,
    captures: list[CapturedLatent],
    rng: np.random.Generator,
    deterministic: bool = False,
) -> list[Candidate]:
    """Sample one circuit per captured latent and collapse duplicates by
    legalized bitvector, keeping the earliest capture's provenance."""
    if not captures:
        return []
    z = np.stack([c.z for c in captures])
    logits = sg.decode_logits(model, z)
    if deterministic:
        bits = logits > 0
    else:
        bits = rng.random(logits.shape) < _sigmoid(logits)
    legal, _ = pg.legalize_bits(model.config.width, bits)
    out: dict[str, Candidate] = {}
    for i, cap in enumerate(captures):
        key = pg.bits_to_hex(legal[i])
        if key not in out:
            out[key] = Candidate(bits=bits[i], legalized_hex=key, latent=cap)
    return list(out.values())
