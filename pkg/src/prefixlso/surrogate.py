"""Bitmatrix beta-VAE with a cost-predictor head.

Fully convolutional encoder/decoder (pre-activation residual blocks, GELU, no
normalization) with linear maps to and from the latent space; the cost head is
a one-hidden-layer MLP on the latent vector. The training objective per sample
is ``ae_weight * recon_nll + beta * warmup(step) * kl + lam * (pred - c)^2``
with costs standardized per round, global-norm gradient clipping, and skipped
updates on outlier gradient norms. All randomness is drawn from numpy
Generators so runs are reproducible from a single seed.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import prefix_graph as pg

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class ModelConfig:
    width: int
    latent_dim: int = 32
    conv_filters: int = 16
    conv_blocks: int = 2
    kernel_size: int = 5
    cost_head_hidden: int = 32
    dtype: str = "float32"

    def __post_init__(self):
        pg._check_width(self.width)
        for name in ("latent_dim", "conv_filters", "conv_blocks", "kernel_size",
                     "cost_head_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")

    @classmethod
    def desk(cls, width: int, **kw) -> "ModelConfig":
        return cls(width=width, latent_dim=32, conv_filters=16, conv_blocks=2, **kw)

    @classmethod
    def paper(cls, width: int, **kw) -> "ModelConfig":
        return cls(width=width, latent_dim=128, conv_filters=64, conv_blocks=4, **kw)

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 0.01
    lam: float = 10.0
    ae_weight: float = 0.03
    kl_warmup_steps: int = 2000
    learning_rate: float = 2e-4
    batch_size: int = 64
    grad_clip_norm: float = 1.0
    grad_skip_norm: float = 400.0
    rank_weight_k: float = 0.001
    steps_per_round: int = 5000

    def __post_init__(self):
        for name in ("beta", "lam", "ae_weight", "kl_warmup_steps", "learning_rate",
                     "batch_size", "grad_clip_norm", "grad_skip_norm", "rank_weight_k",
                     "steps_per_round"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.grad_skip_norm < self.grad_clip_norm:
            raise ValueError("grad_skip_norm must be >= grad_clip_norm")


class _Residual(nn.Module):
    """Pre-activation residual block: x + conv(gelu(conv(gelu(x))))."""

    def __init__(self, filters: int, kernel: int):
        super().__init__()
        pad = kernel // 2
        self.c1 = nn.Conv2d(filters, filters, kernel, padding=pad)
        self.c2 = nn.Conv2d(filters, filters, kernel, padding=pad)

    def forward(self, x):
        return x + self.c2(F.gelu(self.c1(F.gelu(x))))


class _VaeNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        n, f, k = config.width, config.conv_filters, config.kernel_size
        d = config.latent_dim
        pad = k // 2
        self.n, self.f, self.d = n, f, d
        self.enc_in = nn.Conv2d(3, f, k, padding=pad)
        self.enc_blocks = nn.ModuleList(_Residual(f, k) for _ in range(config.conv_blocks))
        self.enc_out = nn.Linear(f * n * n, 2 * d)
        self.dec_in = nn.Linear(d, f * n * n)
        self.dec_blocks = nn.ModuleList(_Residual(f, k) for _ in range(config.conv_blocks))
        self.dec_out = nn.Conv2d(f, 1, k, padding=pad)
        self.head_hidden = nn.Linear(d, config.cost_head_hidden)
        self.head_out = nn.Linear(config.cost_head_hidden, 1)
        his, los = pg.slot_spans(n)
        self._slot_rows = torch.from_numpy(los.copy())
        self._slot_cols = torch.from_numpy(his.copy())

    def encode(self, x):
        h = self.enc_in(x)
        for blk in self.enc_blocks:
            h = blk(h)
        out = self.enc_out(F.gelu(h).flatten(1))
        return out.chunk(2, dim=1)  # mu, logvar

    def decode(self, z):
        h = self.dec_in(z).view(-1, self.f, self.n, self.n)
        for blk in self.dec_blocks:
            h = blk(h)
        grid = self.dec_out(F.gelu(h)).squeeze(1)
        return grid[:, self._slot_rows, self._slot_cols]  # strict-upper slots

    def predict(self, z):
        return self.head_out(F.gelu(self.head_hidden(z))).squeeze(-1)


@dataclass
class SurrogateModel:
    """Network plus training state: Adam optimizer, global step, and the cost
    standardizer fitted on the current dataset."""

    config: ModelConfig
    net: _VaeNet
    opt: torch.optim.Adam | None = None
    step: int = 0
    cost_mean: float = 0.0
    cost_std: float = 1.0

    def standardize(self, costs):
        return (np.asarray(costs, dtype=np.float64) - self.cost_mean) / self.cost_std

    def destandardize(self, std_costs):
        return np.asarray(std_costs, dtype=np.float64) * self.cost_std + self.cost_mean


def init_model(config: ModelConfig, rng: np.random.Generator) -> SurrogateModel:
    """He fan-in normal init for weights, zero biases; the output layers of the
    encoder, decoder, and cost head start at zero so training begins from the
    prior posterior, uniform reconstructions, and constant cost predictions.
    Without the zeroed encoder head the initial log-variances are large enough
    that every update trips the gradient-skip rule and training never starts."""
    net = _VaeNet(config).to(config.torch_dtype)
    zero_out = ("enc_out.weight", "dec_out.weight", "head_out.weight")
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("bias") or name in zero_out:
                p.zero_()
            else:
                fan_in = int(np.prod(p.shape[1:]))
                vals = rng.standard_normal(tuple(p.shape)) * np.sqrt(2.0 / fan_in)
                p.copy_(torch.from_numpy(vals).to(config.torch_dtype))
    net.eval()
    return SurrogateModel(config=config, net=net)


def _inputs_from_bits(config: ModelConfig, bits: np.ndarray) -> torch.Tensor:
    """(B, S) slot bits -> (B, 3, N, N): bitmatrix channel plus binary
    positional channels marking input (diagonal) and output (column) nodes."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    b, n = bits.shape[0], config.width
    his, los = pg.slot_spans(n)
    x = np.zeros((b, 3, n, n), dtype=np.float64)
    x[:, 0, los, his] = bits
    x[:, 0, np.arange(n), np.arange(n)] = 1.0
    x[:, 1, np.arange(n), np.arange(n)] = 1.0
    x[:, 2, 0, 1:] = 1.0
    return torch.from_numpy(x).to(config.torch_dtype)


def _coerce_bits_batch(model: SurrogateModel, x) -> np.ndarray:
    if isinstance(x, pg.PrefixGraph):
        if x.width != model.config.width:
            raise ValueError(f"graph width {x.width} != model width {model.config.width}")
        return pg.to_bitvector(x).to_numpy()[None, :]
    if isinstance(x, pg.Bitvector):
        if x.width != model.config.width:
            raise ValueError(f"bitvector width {x.width} != model width {model.config.width}")
        return x.to_numpy()[None, :]
    arr = np.atleast_2d(np.asarray(x, dtype=bool))
    if arr.shape[1] != pg.n_slots(model.config.width):
        raise ValueError(
            f"expected {pg.n_slots(model.config.width)} slots, got {arr.shape[1]}"
        )
    return arr


def encode(model: SurrogateModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mu, sigma) for a graph, Bitvector, or (B, S) bit array."""
    bits = _coerce_bits_batch(model, x)
    single = not (isinstance(x, np.ndarray) and x.ndim == 2)
    with torch.no_grad():
        mu, logvar = model.net.encode(_inputs_from_bits(model.config, bits))
    mu = mu.double().numpy()
    sigma = np.exp(0.5 * logvar.double().numpy())
    if single and bits.shape[0] == 1:
        return mu[0], sigma[0]
    return mu, sigma


def sample_posterior(mu: np.ndarray, sigma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Reparameterized draw z = mu + sigma * eps."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if (sigma < 0).any():
        raise ValueError("sigma must be >= 0")
    return mu + sigma * rng.standard_normal(mu.shape)


def decode_logits(model: SurrogateModel, z: np.ndarray) -> np.ndarray:
    """Per-slot Bernoulli logits for latent vector(s)."""
    zt = _z_tensor(model, z)
    with torch.no_grad():
        logits = model.net.decode(zt).double().numpy()
    return logits[0] if np.asarray(z).ndim == 1 else logits


def predict_cost(model: SurrogateModel, z: np.ndarray, destandardize: bool = False):
    """Cost-head output (standardized by default) for latent vector(s)."""
    zt = _z_tensor(model, z)
    with torch.no_grad():
        pred = model.net.predict(zt).double().numpy()
    if destandardize:
        pred = model.destandardize(pred)
    return float(pred[0]) if np.asarray(z).ndim == 1 else pred


def _z_tensor(model: SurrogateModel, z) -> torch.Tensor:
    arr = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if arr.shape[1] != model.config.latent_dim:
        raise ValueError(f"expected latent dim {model.config.latent_dim}, got {arr.shape[1]}")
    return torch.from_numpy(arr).to(model.config.torch_dtype)


def kl_warmup(step: int, warmup_steps: int) -> float:
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, step / warmup_steps)


def elbo_terms(model: SurrogateModel, x, z: np.ndarray) -> tuple[float, float]:
    """(recon_nll, kl) for one circuit at latent z.

    recon_nll sums Bernoulli NLL over strict-upper slots; kl is the closed-form
    divergence of the encoder posterior from the unit normal prior.
    """
    bits = _coerce_bits_batch(model, x)
    with torch.no_grad():
        mu, logvar = model.net.encode(_inputs_from_bits(model.config, bits))
        logits = model.net.decode(_z_tensor(model, z))
        target = torch.from_numpy(bits.astype(np.float64)).to(model.config.torch_dtype)
        recon = F.binary_cross_entropy_with_logits(logits, target, reduction="sum")
        kl = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).sum()
    return float(recon), float(kl)


def _batch_loss(net, x, target_bits, std_costs, eps, kl_coef, train_config):
    mu, logvar = net.encode(x)
    z = mu + torch.exp(0.5 * logvar) * eps
    logits = net.decode(z)
    recon = F.binary_cross_entropy_with_logits(logits, target_bits, reduction="none").sum(-1)
    kl = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).sum(-1)
    pred = net.predict(z)
    cost_sq = (pred - std_costs).pow(2)
    loss = (train_config.ae_weight * recon + kl_coef * kl + train_config.lam * cost_sq).mean()
    return loss, recon, kl, cost_sq


def total_loss(
    model: SurrogateModel,
    bits: np.ndarray,
    std_costs: np.ndarray,
    step: int,
    train_config: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """Mean per-sample training objective at a given global step. Costs must
    already be standardized; one posterior draw per sample."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    dtype = model.config.torch_dtype
    x = _inputs_from_bits(model.config, bits)
    target = torch.from_numpy(bits.astype(np.float64)).to(dtype)
    costs = torch.from_numpy(np.asarray(std_costs, dtype=np.float64)).to(dtype)
    eps = torch.from_numpy(
        rng.standard_normal((bits.shape[0], model.config.latent_dim))
    ).to(dtype)
    kl_coef = train_config.beta * kl_warmup(step, train_config.kl_warmup_steps)
    with torch.no_grad():
        loss, _, _, _ = _batch_loss(model.net, x, target, costs, eps, kl_coef, train_config)
    return float(loss)


def _ensure_optimizer(model: SurrogateModel, train_config: TrainConfig) -> torch.optim.Adam:
    if model.opt is None:
        model.opt = torch.optim.Adam(model.net.parameters(), lr=train_config.learning_rate)
    return model.opt


def train_round(
    model: SurrogateModel,
    bits: np.ndarray,
    costs: np.ndarray,
    weights: np.ndarray,
    train_config: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    """Run steps_per_round Adam updates with weighted minibatch sampling.

    Refits the cost standardizer on the given costs, draws minibatches i.i.d.
    proportional to weights, clips gradients at grad_clip_norm, and skips the
    update (parameters untouched, step counter still advanced) when the
    pre-clip norm reaches grad_skip_norm. Warm-starts from the model's existing
    optimizer state and global step.
    """
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    costs = np.asarray(costs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = bits.shape[0]
    if n < train_config.batch_size:
        raise ValueError(f"dataset size {n} < batch_size {train_config.batch_size}")
    if len(costs) != n or len(weights) != n:
        raise ValueError("bits, costs, and weights must have matching lengths")
    if abs(weights.sum() - 1.0) > 1e-6:
        raise ValueError("weights must be normalized")

    model.cost_mean = float(np.mean(costs))
    std = float(np.std(costs))
    model.cost_std = std if std > 1e-12 else 1.0

    dtype = model.config.torch_dtype
    x_all = _inputs_from_bits(model.config, bits)
    target_all = torch.from_numpy(bits.astype(np.float64)).to(dtype)
    costs_all = torch.from_numpy(model.standardize(costs)).to(dtype)
    opt = _ensure_optimizer(model, train_config)
    params = list(model.net.parameters())

    model.net.train()
    sums = {"loss": 0.0, "recon_nll": 0.0, "kl": 0.0, "cost_mse": 0.0}
    skipped = 0
    for _ in range(train_config.steps_per_round):
        idx = rng.choice(n, size=train_config.batch_size, replace=True, p=weights)
        eps = torch.from_numpy(
            rng.standard_normal((train_config.batch_size, model.config.latent_dim))
        ).to(dtype)
        it = torch.from_numpy(idx)
        kl_coef = train_config.beta * kl_warmup(model.step, train_config.kl_warmup_steps)
        loss, recon, kl, cost_sq = _batch_loss(
            model.net, x_all[it], target_all[it], costs_all[it], eps, kl_coef, train_config
        )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        pre_clip = torch.nn.utils.clip_grad_norm_(params, train_config.grad_clip_norm)
        if torch.isfinite(pre_clip) and pre_clip < train_config.grad_skip_norm:
            opt.step()
        else:
            skipped += 1
        model.step += 1
        sums["loss"] += float(loss.detach())
        sums["recon_nll"] += float(recon.detach().mean())
        sums["kl"] += float(kl.detach().mean())
        sums["cost_mse"] += float(cost_sq.detach().mean())
    model.net.eval()

    steps = train_config.steps_per_round
    stats = {k: v / max(steps, 1) for k, v in sums.items()}
    stats["steps"] = steps
    stats["skipped"] = skipped
    stats["global_step"] = model.step
    return stats


def reconstruction_accuracy(model: SurrogateModel, bits: np.ndarray) -> float:
    """Per-bit accuracy of thresholded decodes from the posterior mean."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    mu, _ = encode(model, bits)
    logits = decode_logits(model, np.atleast_2d(mu))
    return float(((logits > 0) == bits).mean())


def grad_check(
    model: SurrogateModel,
    bits: np.ndarray,
    std_costs: np.ndarray,
    train_config: TrainConfig,
    rng: np.random.Generator,
    step: int = 3000,
    eps: float = 1e-5,
    n_coords: int = 200,
) -> float:
    """Max relative error of autograd parameter gradients of the training loss
    against central finite differences on randomly chosen coordinates.

    Requires a float64 model; the posterior noise is drawn once and reused so
    both sides differentiate the same deterministic function.
    """
    if model.config.torch_dtype is not torch.float64:
        raise ValueError("grad_check requires a float64 model")
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    dtype = torch.float64
    x = _inputs_from_bits(model.config, bits)
    target = torch.from_numpy(bits.astype(np.float64)).to(dtype)
    costs = torch.from_numpy(np.asarray(std_costs, dtype=np.float64)).to(dtype)
    noise = torch.from_numpy(
        rng.standard_normal((bits.shape[0], model.config.latent_dim))
    ).to(dtype)
    kl_coef = train_config.beta * kl_warmup(step, train_config.kl_warmup_steps)

    def loss_tensor():
        loss, _, _, _ = _batch_loss(model.net, x, target, costs, noise, kl_coef, train_config)
        return loss

    model.net.zero_grad(set_to_none=True)
    loss_tensor().backward()
    params = [p for _, p in sorted(model.net.named_parameters())]
    sizes = np.array([p.numel() for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    picks = rng.choice(total, size=min(n_coords, total), replace=False)

    max_rel = 0.0
    with torch.no_grad():
        for flat_idx in picks:
            pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
            j = int(flat_idx - offsets[pi])
            p = params[pi]
            analytic = float(p.grad.view(-1)[j])
            orig = float(p.data.view(-1)[j])
            p.data.view(-1)[j] = orig + eps
            up = float(loss_tensor())
            p.data.view(-1)[j] = orig - eps
            down = float(loss_tensor())
            p.data.view(-1)[j] = orig
            fd = (up - down) / (2 * eps)
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
            max_rel = max(max_rel, rel)
    model.net.zero_grad(set_to_none=True)
    return max_rel


# ---------------------------------------------------------------------------
# Checkpoints: versioned single-file container, float64 little-endian blobs
# ---------------------------------------------------------------------------

_MAGIC = b"PLSOCKPT"
_VERSION = 1


def _param_order(net: _VaeNet) -> list[tuple[str, torch.Tensor]]:
    return list(net.named_parameters())  # registration order, fixed by architecture


def save_model(model: SurrogateModel, path) -> None:
    """Write magic, version, JSON header, then parameter (and Adam moment)
    arrays as float64 little-endian in header order. Byte-stable round trip."""
    named = _param_order(model.net)
    header = {
        "format_version": _VERSION,
        "model_config": asdict(model.config),
        "step": model.step,
        "cost_mean": model.cost_mean,
        "cost_std": model.cost_std,
        "params": [[name, list(p.shape)] for name, p in named],
        "adam": None,
    }
    blobs = [p.detach().double().numpy() for _, p in named]
    if model.opt is not None:
        group = model.opt.param_groups[0]
        steps = []
        moments = []
        for _, p in named:
            state = model.opt.state.get(p)
            if state:
                steps.append(int(state["step"]))
                moments.append((state["exp_avg"], state["exp_avg_sq"]))
            else:
                steps.append(0)
                moments.append((torch.zeros_like(p), torch.zeros_like(p)))
        header["adam"] = {
            "lr": group["lr"],
            "betas": list(group["betas"]),
            "eps": group["eps"],
            "step_counts": steps,
        }
        for avg, sq in moments:
            blobs.append(avg.detach().double().numpy())
            blobs.append(sq.detach().double().numpy())
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", _VERSION, len(head)))
    buf.write(head)
    for arr in blobs:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> SurrogateModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise ValueError("not a prefixlso checkpoint")
    version, head_len = struct.unpack("<II", raw[8:16])
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + head_len].decode())
    config = ModelConfig(**header["model_config"])
    net = _VaeNet(config).to(config.torch_dtype)
    offset = 16 + head_len

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        return arr

    named = dict(net.named_parameters())
    with torch.no_grad():
        for name, shape in header["params"]:
            named[name].copy_(torch.from_numpy(take(shape).copy()).to(config.torch_dtype))
    model = SurrogateModel(
        config=config,
        net=net,
        step=header["step"],
        cost_mean=header["cost_mean"],
        cost_std=header["cost_std"],
    )
    adam = header["adam"]
    if adam is not None:
        model.opt = torch.optim.Adam(
            net.parameters(), lr=adam["lr"], betas=tuple(adam["betas"]), eps=adam["eps"]
        )
        for (name, shape), step_count in zip(header["params"], adam["step_counts"]):
            p = named[name]
            avg = torch.from_numpy(take(shape).copy()).to(config.torch_dtype)
            sq = torch.from_numpy(take(shape).copy()).to(config.torch_dtype)
            model.opt.state[p] = {
                "step": torch.tensor(float(step_count)),
                "exp_avg": avg,
                "exp_avg_sq": sq,
            }
    net.eval()
    return model
