"""Dataset export, cross-run aggregation, and 2-D PCA of logged latents.

The export schema is frozen: nine columns in the documented order, floats
serialized with round-trip-exact precision, the latent as one quoted field of
space-separated decimals. Re-exporting a run directory is byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import orchestrator as orch

EXPORT_COLUMNS = (
    "index", "outer_loop", "step", "batch_idx", "bitvector",
    "latent", "prior_logprob", "true_score", "predicted_score",
)
EXPORT_HEADER = ",".join(EXPORT_COLUMNS)


def _fmt_float(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def export_rows(records) -> list[str]:
    rows = [EXPORT_HEADER]
    for r in records:
        latent = "" if r.latent is None else '"' + " ".join(repr(float(v)) for v in r.latent) + '"'
        rows.append(",".join([
            str(r.index), str(r.outer_loop), str(r.step), str(r.batch_idx),
            r.bitvector, latent, _fmt_float(r.prior_logprob),
            _fmt_float(r.true_score), _fmt_float(r.predicted_score),
        ]))
    return rows


def export_dataset(run_dir, out_path=None) -> Path:
    """Write the run's evaluation log as CSV; defaults to <run_dir>/dataset.csv."""
    run_dir = Path(run_dir)
    records = orch.load_log(run_dir)
    out = Path(out_path) if out_path is not None else run_dir / "dataset.csv"
    out.write_text("\n".join(export_rows(records)) + "\n")
    return out


def _config_lookup(config: dict, dotted: str):
    cur = config
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(f"group key {dotted!r} not found in run config")
        cur = cur[part]
    return cur


def report_curves(run_dirs, group_key: str = "algo") -> tuple[list[str], dict]:
    """Median/quartile best-so-far curves per group.

    Runs are grouped by a dotted path into config.json. Curves are aligned by
    evaluation index and truncated to the shortest run; percentiles use linear
    interpolation between order statistics. Returns (CSV lines, metadata).
    """
    dirs = sorted(Path(d) for d in run_dirs)
    if not dirs:
        raise ValueError("no run directories given")
    groups: dict[str, list[list[float]]] = {}
    for d in dirs:
        config = orch.load_config_dict(d)
        records = orch.load_log(d)
        if not records:
            raise ValueError(f"empty evaluation log in {d}")
        curve = [v for _, v in orch.best_so_far(records)]
        groups.setdefault(str(_config_lookup(config, group_key)), []).append(curve)
    min_len = min(len(c) for curves in groups.values() for c in curves)
    meta = {
        "group_key": group_key,
        "truncated_to": min_len,
        "percentile": "linear",
        "runs": sum(len(c) for c in groups.values()),
    }
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append("group,index,median,p25,p75")
    for name in sorted(groups):
        mat = np.array([c[:min_len] for c in groups[name]], dtype=np.float64)
        med = np.percentile(mat, 50, axis=0)
        p25 = np.percentile(mat, 25, axis=0)
        p75 = np.percentile(mat, 75, axis=0)
        for i in range(min_len):
            lines.append(
                f"{name},{i},{float(med[i])!r},{float(p25[i])!r},{float(p75[i])!r}"
            )
    return lines, meta


def write_report(run_dirs, out_path, group_key: str = "algo") -> Path:
    lines, _ = report_curves(run_dirs, group_key)
    out = Path(out_path)
    out.write_text("\n".join(lines) + "\n")
    return out


def _power_iteration(mat: np.ndarray, rng: np.random.Generator, iters: int = 200) -> np.ndarray:
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            return v  # null matrix: any unit vector is an eigenvector
        v = w / norm
    return v


def _fix_sign(v: np.ndarray) -> np.ndarray:
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def pca2(latents: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top two principal components.

    Deterministic power iteration with deflation (200 iterations, seed-fixed
    start); components are unit-norm, mutually orthogonal, sign-fixed by
    making each component's largest-magnitude entry positive.
    Returns (n x 2 coordinates, 2 x d components).
    """
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("pca2 requires at least 2 vectors of dimension >= 2")
    centered = x - x.mean(axis=0)
    if not centered.any():
        raise ValueError("degenerate input: all vectors identical")
    cov = centered.T @ centered / x.shape[0]
    v1 = _power_iteration(cov, rng)
    lam1 = float(v1 @ cov @ v1)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2 = _power_iteration(deflated, rng)
    v2 = v2 - (v2 @ v1) * v1
    norm = np.linalg.norm(v2)
    if norm < 1e-12:
        # rank-1 data: complete with any unit vector orthogonal to v1
        basis = np.eye(x.shape[1])[np.argmin(np.abs(v1))]
        v2 = basis - (basis @ v1) * v1
        norm = np.linalg.norm(v2)
    v2 /= norm
    components = np.stack([_fix_sign(v1), _fix_sign(v2)])
    return centered @ components.T, components


def pca_rows(records, rng: np.random.Generator) -> list[str]:
    """CSV of 2-D projections for records that carry latents."""
    with_latents = [r for r in records if r.latent is not None]
    if len(with_latents) < 2:
        raise ValueError("need at least 2 records with latents for PCA")
    z = np.array([r.latent for r in with_latents], dtype=np.float64)
    coords, _ = pca2(z, rng)
    lines = ["index,x,y,true_score,predicted_score"]
    for r, (px, py) in zip(with_latents, coords):
        lines.append(
            f"{r.index},{float(px)!r},{float(py)!r},"
            f"{_fmt_float(r.true_score)},{_fmt_float(r.predicted_score)}"
        )
    return lines
