"""Synthesis-proxy cost evaluation: per-node area, static timing with linear
fanout penalties and per-bit IO offsets, and the delay-weighted scalar cost
``cost = w * delay_scale * delay + (1 - w) * area_scale * area``.

Includes a caching/budget-metering wrapper and an external-command backend
speaking a line-oriented JSON protocol for plugging in real synthesis tools.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from . import prefix_graph as pg

KINDS = ("adder", "gray_to_binary")
_WIRE_KIND = {"adder": "adder", "gray_to_binary": "gray"}

DEFAULT_D_CELL = {"adder": 1.0, "gray_to_binary": 0.6}


class BudgetExhausted(RuntimeError):
    """Evaluation budget hit mid-batch; carries outcomes computed so far."""

    def __init__(self, outcomes):
        super().__init__("oracle evaluation budget exhausted")
        self.outcomes = outcomes


class ExternalOracleError(RuntimeError):
    pass


class OracleBackendError(ExternalOracleError):
    """Child process failed to start, exited nonzero, or reported an error."""


class MalformedResponseError(ExternalOracleError):
    """Child produced output that is not a valid protocol response."""


class OracleTimeoutError(ExternalOracleError):
    """Child did not respond within the configured timeout."""


@dataclass(frozen=True)
class CostConfig:
    width: int
    delay_weight: float
    circuit_kind: str = "adder"
    delay_scale: float = 1.0
    area_scale: float = 0.1
    d_cell: float | None = None  # resolved per kind: adder 1.0, gray 0.6
    d_load: float = 0.2
    d_sum: float = 1.0  # adder only
    a_full: float = 1.0
    a_out: float = 0.6  # adder output-column nodes
    a_gray: float = 0.5
    input_arrivals: tuple[float, ...] | None = None
    output_offsets: tuple[float, ...] | None = None

    def __post_init__(self):
        pg._check_width(self.width)
        if self.circuit_kind not in KINDS:
            raise ValueError(f"circuit_kind must be one of {KINDS}, got {self.circuit_kind!r}")
        if not 0.0 <= self.delay_weight <= 1.0:
            raise ValueError(f"delay_weight must be in [0, 1], got {self.delay_weight}")
        if self.d_cell is None:
            object.__setattr__(self, "d_cell", DEFAULT_D_CELL[self.circuit_kind])
        for name in ("delay_scale", "area_scale", "d_cell", "d_load", "d_sum",
                     "a_full", "a_out", "a_gray"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("input_arrivals", "output_offsets"):
            val = getattr(self, name)
            if val is None:
                object.__setattr__(self, name, (0.0,) * self.width)
            else:
                val = tuple(float(x) for x in val)
                if len(val) != self.width:
                    raise ValueError(f"{name} must have length {self.width}, got {len(val)}")
                object.__setattr__(self, name, val)


@dataclass(frozen=True)
class CostReport:
    area: float
    delay: float
    cost: float
    legalized_bitvector: str  # hex
    inserted_count: int


@dataclass
class OracleBudget:
    evaluations_used: int = 0
    limit: int | None = None

    def would_exceed(self) -> bool:
        return self.limit is not None and self.evaluations_used >= self.limit

    def charge(self) -> None:
        if self.would_exceed():
            raise BudgetExhausted([])
        self.evaluations_used += 1


def area(graph: pg.PrefixGraph, config: CostConfig) -> float:
    """Sum of per-node area: adders pay a_out on the output column, a_full
    elsewhere; gray converters pay a_gray per node. Inputs are free."""
    pg.ensure_legal(graph)
    if config.circuit_kind == "gray_to_binary":
        return config.a_gray * len(graph.non_input_nodes)
    return float(sum(
        config.a_out if lo == 0 else config.a_full
        for _, lo in sorted(graph.non_input_nodes)
    ))


def timing(graph: pg.PrefixGraph, config: CostConfig) -> tuple[float, dict[pg.Node, float]]:
    """Critical-path proxy delay and the per-node arrival map.

    gate_delay(n) = d_cell + d_load * (fanout(n) - 1), where fanout counts
    consumers through the split-point parent rule plus 1 for output nodes.
    """
    pg.ensure_legal(graph)
    n = graph.width
    fanout: dict[pg.Node, int] = {node: 0 for node in graph.nodes}
    node_parents = {}
    for node in graph.non_input_nodes:
        up, low = pg.parents(graph, node)
        node_parents[node] = (up, low)
        fanout[up] += 1
        fanout[low] += 1
    for i in range(1, n):
        fanout[(i, 0)] += 1
    arrival: dict[pg.Node, float] = {
        (i, i): config.input_arrivals[i] for i in range(n)
    }
    for node in pg._sweep_order(graph):
        up, low = node_parents[node]
        gate = config.d_cell + config.d_load * (fanout[node] - 1)
        arrival[node] = gate + max(arrival[up], arrival[low])
    d_sum = config.d_sum if config.circuit_kind == "adder" else 0.0
    delay = max(
        arrival[(i, 0)] + d_sum + config.output_offsets[i] for i in range(n)
    )
    return delay, arrival


def scalarize(area_value: float, delay_value: float, config: CostConfig) -> float:
    if area_value < 0 or delay_value < 0:
        raise ValueError("area and delay must be >= 0")
    w = config.delay_weight
    return w * config.delay_scale * delay_value + (1.0 - w) * config.area_scale * area_value


def _coerce_bits(x, config: CostConfig) -> np.ndarray:
    if isinstance(x, pg.PrefixGraph):
        if x.width != config.width:
            raise ValueError(f"graph width {x.width} != config width {config.width}")
        return pg.to_bitvector(x).to_numpy()
    if isinstance(x, pg.Bitvector):
        if x.width != config.width:
            raise ValueError(f"bitvector width {x.width} != config width {config.width}")
        return x.to_numpy()
    arr = np.asarray(x, dtype=bool)
    if arr.shape != (pg.n_slots(config.width),):
        raise ValueError(
            f"expected {pg.n_slots(config.width)} slot bits, got shape {arr.shape}"
        )
    return arr


def evaluate(x, config: CostConfig) -> CostReport:
    """Legalize, then score: area -> timing -> scalarize."""
    bits = _coerce_bits(x, config)
    legal_bits, inserted = pg.legalize_bits(config.width, bits[None, :])
    graph = pg.graph_from_bits(config.width, legal_bits[0])
    a = area(graph, config)
    d, _ = timing(graph, config)
    return CostReport(
        area=a,
        delay=d,
        cost=scalarize(a, d, config),
        legalized_bitvector=pg.bits_to_hex(legal_bits[0]),
        inserted_count=int(inserted[0]),
    )


def evaluate_external(x, config: CostConfig, command: str, timeout: float = 60.0) -> CostReport:
    """Score one circuit through an external command.

    The legalized bitvector is sent as one JSON line on the child's stdin; the
    child answers one JSON line {"area": float, "delay": float} or
    {"error": str}. Scalarization happens locally.
    """
    if not command:
        raise ValueError("no external oracle command configured")
    bits = _coerce_bits(x, config)
    legal_bits, inserted = pg.legalize_bits(config.width, bits[None, :])
    hex_bits = pg.bits_to_hex(legal_bits[0])
    request = json.dumps({
        "width": config.width,
        "bitvector": hex_bits,
        "kind": _WIRE_KIND[config.circuit_kind],
        "input_arrivals": list(config.input_arrivals),
        "output_offsets": list(config.output_offsets),
    })
    try:
        proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
    except OSError as e:
        raise OracleBackendError(f"failed to start oracle command: {e}") from e
    try:
        out, _ = proc.communicate(request + "\n", timeout=timeout)
    except subprocess.TimeoutExpired as e:
        proc.kill()
        proc.wait()
        raise OracleTimeoutError(f"oracle command timed out after {timeout}s") from e
    if proc.returncode != 0:
        raise OracleBackendError(f"oracle command exited with status {proc.returncode}")
    line = out.splitlines()[0] if out.splitlines() else ""
    try:
        resp = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedResponseError(f"oracle response is not JSON: {line!r}") from e
    if not isinstance(resp, dict):
        raise MalformedResponseError(f"oracle response is not an object: {line!r}")
    if "error" in resp:
        raise OracleBackendError(f"oracle reported error: {resp['error']}")
    if "area" not in resp or "delay" not in resp:
        raise MalformedResponseError(f"oracle response missing area/delay: {line!r}")
    try:
        a, d = float(resp["area"]), float(resp["delay"])
    except (TypeError, ValueError) as e:
        raise MalformedResponseError(f"non-numeric area/delay: {line!r}") from e
    return CostReport(
        area=a,
        delay=d,
        cost=scalarize(a, d, config),
        legalized_bitvector=hex_bits,
        inserted_count=int(inserted[0]),
    )


@dataclass
class EvalOutcome:
    report: CostReport
    fresh: bool  # True when this call paid a budgeted backend evaluation


class CachedCostOracle:
    """Memoizing oracle keyed by legalized bitvector, with budget metering.

    Only cache misses debit the budget. The cache and counter are one shared
    state guarded by a lock so concurrent duplicate evaluations resolve to a
    single charge.
    """

    def __init__(self, config: CostConfig, limit: int | None = None, backend=None,
                 timeout: float = 60.0):
        self.config = config
        self.budget = OracleBudget(0, limit)
        self._cache: dict[str, CostReport] = {}
        self._lock = threading.Lock()
        self._backend = backend  # None -> analytical proxy; str -> external command
        self._timeout = timeout

    @property
    def evaluations_used(self) -> int:
        return self.budget.evaluations_used

    def _run_backend(self, bits: np.ndarray) -> CostReport:
        if self._backend is None:
            return evaluate(bits, self.config)
        return evaluate_external(bits, self.config, self._backend, self._timeout)

    def evaluate(self, x) -> EvalOutcome:
        return self.evaluate_batch([x])[0]

    def evaluate_batch(self, xs) -> list[EvalOutcome]:
        """Evaluate in input order; cache hits are free and never blocked.

        Raises BudgetExhausted (carrying the outcomes computed so far) when an
        uncached candidate is met after the limit is reached.
        """
        outcomes: list[EvalOutcome] = []
        for x in xs:
            bits = _coerce_bits(x, self.config)
            legal_bits, _ = pg.legalize_bits(self.config.width, bits[None, :])
            key = pg.bits_to_hex(legal_bits[0])
            with self._lock:
                cached = self._cache.get(key)
                if cached is not None:
                    outcomes.append(EvalOutcome(cached, fresh=False))
                    continue
                if self.budget.would_exceed():
                    raise BudgetExhausted(outcomes)
                report = self._run_backend(bits)
                self.budget.evaluations_used += 1
                self._cache[key] = report
            outcomes.append(EvalOutcome(report, fresh=True))
        return outcomes
