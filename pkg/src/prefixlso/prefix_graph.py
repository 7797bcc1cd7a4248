"""Parallel prefix graphs: representation, classical constructors, legalization,
functional simulation, and bitvector/bitmatrix serialization.

A node is a span ``(hi, lo)`` of bit positions with ``0 <= lo <= hi < width``
(msb:lsb, 0-based). ``(i, i)`` are the inputs, ``(i, 0)`` with ``i >= 1`` the
outputs. Strict-upper nodes (``hi > lo``) are the mutable design bits; they map
to a flat bitvector by slot index ``b(hi, lo) = hi*(hi-1)//2 + lo``. Inputs are
implicit in the bitvector encoding and always present.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

Node = tuple[int, int]

MIN_WIDTH = 2
MAX_WIDTH = 64


class IllegalGraphError(ValueError):
    """Raised when an operation requiring a legal graph receives one that is not."""


def _check_width(width: int) -> None:
    if not (MIN_WIDTH <= width <= MAX_WIDTH):
        raise ValueError(f"width must be in [{MIN_WIDTH}, {MAX_WIDTH}], got {width}")


def n_slots(width: int) -> int:
    """Number of strict-upper (mutable) node slots for a given width."""
    return width * (width - 1) // 2


def width_from_slots(slots: int) -> int:
    """Inverse of n_slots; rejects counts that match no width."""
    width = (1 + math.isqrt(1 + 8 * slots)) // 2
    if n_slots(width) != slots:
        raise ValueError(f"{slots} is not a valid slot count")
    return width


def slot_index(hi: int, lo: int) -> int:
    """Flat bitvector slot of strict-upper node (hi, lo)."""
    if not 0 <= lo < hi:
        raise ValueError(f"slot requires 0 <= lo < hi, got ({hi}, {lo})")
    return hi * (hi - 1) // 2 + lo


@lru_cache(maxsize=None)
def slot_spans(width: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (his, los) mapping slot index -> node span, read-only."""
    _check_width(width)
    his = np.empty(n_slots(width), dtype=np.int64)
    los = np.empty(n_slots(width), dtype=np.int64)
    for hi in range(1, width):
        base = hi * (hi - 1) // 2
        his[base : base + hi] = hi
        los[base : base + hi] = np.arange(hi)
    his.setflags(write=False)
    los.setflags(write=False)
    return his, los


@dataclass(frozen=True)
class PrefixGraph:
    """A width and the set of present nodes. Inputs are always included."""

    width: int
    nodes: frozenset[Node]

    def __post_init__(self):
        _check_width(self.width)
        for hi, lo in self.nodes:
            if not (0 <= lo <= hi < self.width):
                raise ValueError(f"node ({hi}, {lo}) out of range for width {self.width}")
        inputs = {(i, i) for i in range(self.width)}
        if not inputs <= self.nodes:
            object.__setattr__(self, "nodes", frozenset(self.nodes) | inputs)

    @property
    def non_input_nodes(self) -> frozenset[Node]:
        return frozenset((hi, lo) for hi, lo in self.nodes if hi != lo)

    @cached_property
    def rows(self) -> tuple[tuple[int, ...], ...]:
        """Per-row (hi) ascending tuple of present lo values."""
        acc: list[list[int]] = [[] for _ in range(self.width)]
        for hi, lo in self.nodes:
            acc[hi].append(lo)
        return tuple(tuple(sorted(r)) for r in acc)


def from_node_set(width: int, nodes) -> PrefixGraph:
    return PrefixGraph(width, frozenset(nodes))


# ---------------------------------------------------------------------------
# Classical constructors
# ---------------------------------------------------------------------------

def ripple_carry(width: int) -> PrefixGraph:
    """Serial chain: outputs (i, 0) only; depth width-1."""
    _check_width(width)
    return from_node_set(width, ((i, 0) for i in range(1, width)))


def sklansky(width: int) -> PrefixGraph:
    """Divide-and-conquer structure; width must be a power of two."""
    _check_width(width)
    if width & (width - 1):
        raise ValueError(f"sklansky requires a power-of-two width, got {width}")
    nodes = set()
    for t in range(1, width.bit_length()):
        for hi in range(1, width):
            if (hi >> (t - 1)) & 1:
                nodes.add((hi, (hi >> t) << t))
    return from_node_set(width, nodes)


def kogge_stone(width: int) -> PrefixGraph:
    """Minimum-depth structure with redundant spans at every bit."""
    _check_width(width)
    nodes = set()
    for t in range(1, math.ceil(math.log2(width)) + 1):
        for hi in range(1 << (t - 1), width):
            nodes.add((hi, max(0, hi - (1 << t) + 1)))
    return from_node_set(width, nodes)


def brent_kung(width: int) -> PrefixGraph:
    """Up-sweep/down-sweep tree; width must be a power of two >= 4."""
    if width < 4 or width > MAX_WIDTH or width & (width - 1):
        raise ValueError(f"brent_kung requires a power-of-two width in [4, {MAX_WIDTH}], got {width}")
    k = width.bit_length() - 1
    nodes = set()
    for t in range(1, k + 1):
        for q in range(width >> t):
            nodes.add((q * (1 << t) + (1 << t) - 1, q * (1 << t)))
    for t in range(k - 1, 0, -1):
        m = 1
        while m * (1 << t) + (1 << (t - 1)) - 1 < width:
            nodes.add((m * (1 << t) + (1 << (t - 1)) - 1, 0))
            m += 1
    return from_node_set(width, nodes)


# ---------------------------------------------------------------------------
# Bitvector / bitmatrix forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bitvector:
    """Strict-upper node presence, one bit per slot in increasing slot order."""

    width: int
    bits: tuple[int, ...]

    def __post_init__(self):
        _check_width(self.width)
        if len(self.bits) != n_slots(self.width):
            raise ValueError(
                f"expected {n_slots(self.width)} bits for width {self.width}, got {len(self.bits)}"
            )
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0/1")

    def to_numpy(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=bool)

    @classmethod
    def from_numpy(cls, width: int, arr: np.ndarray) -> "Bitvector":
        return cls(width, tuple(int(b) for b in np.asarray(arr, dtype=bool)))

    def to_hex(self) -> str:
        return bits_to_hex(self.to_numpy())

    @classmethod
    def from_hex(cls, width: int, text: str) -> "Bitvector":
        return cls.from_numpy(width, hex_to_bits(width, text))


def bits_to_hex(bits: np.ndarray) -> str:
    """Pack slot bits 8 per byte (slot b at bit b%8 of byte b//8), lowercase hex."""
    return np.packbits(np.asarray(bits, dtype=bool), bitorder="little").tobytes().hex()


def hex_to_bits(width: int, text: str) -> np.ndarray:
    slots = n_slots(width)
    nbytes = (slots + 7) // 8
    if len(text) != 2 * nbytes:
        raise ValueError(f"expected {2 * nbytes} hex chars for width {width}, got {len(text)}")
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    all_bits = np.unpackbits(raw, bitorder="little")
    if all_bits[slots:].any():
        raise ValueError("nonzero padding bits in hex bitvector")
    return all_bits[:slots].astype(bool)


def to_bitvector(graph: PrefixGraph) -> Bitvector:
    bits = np.zeros(n_slots(graph.width), dtype=bool)
    for hi, lo in graph.nodes:
        if hi != lo:
            bits[slot_index(hi, lo)] = True
    return Bitvector.from_numpy(graph.width, bits)


def from_bitvector(bv: Bitvector) -> PrefixGraph:
    """Inverse of to_bitvector; does NOT legalize."""
    return graph_from_bits(bv.width, bv.to_numpy())


def graph_from_bits(width: int, bits: np.ndarray) -> PrefixGraph:
    his, los = slot_spans(width)
    idx = np.nonzero(np.asarray(bits, dtype=bool))[0]
    return from_node_set(width, zip(his[idx].tolist(), los[idx].tolist()))


def to_bitmatrix(graph: PrefixGraph) -> np.ndarray:
    """N x N 0/1 matrix, M[lo][hi]: upper triangle = presence, diagonal = 1, lower = 0."""
    m = np.zeros((graph.width, graph.width), dtype=np.uint8)
    for hi, lo in graph.nodes:
        m[lo, hi] = 1
    return m


# ---------------------------------------------------------------------------
# Legalization
# ---------------------------------------------------------------------------

def _bits_to_rowmat(width: int, bits: np.ndarray) -> np.ndarray:
    """(B, S) slot bits -> (B, N, N) presence with R[k, hi, lo]; diagonal forced."""
    his, los = slot_spans(width)
    r = np.zeros((bits.shape[0], width, width), dtype=bool)
    r[:, his, los] = bits
    r[:, np.arange(width), np.arange(width)] = True
    return r


def _rowmat_to_bits(width: int, r: np.ndarray) -> np.ndarray:
    his, los = slot_spans(width)
    return r[:, his, los]


def _next_above(r: np.ndarray) -> np.ndarray:
    """na[k, hi, lo] = min lo' > lo with r[k, hi, lo'], for lo < N-1."""
    b, n, _ = r.shape
    na = np.full((b, n, n), n, dtype=np.int64)
    for lo in range(n - 2, -1, -1):
        na[:, :, lo] = np.where(r[:, :, lo + 1], lo + 1, na[:, :, lo + 1])
    return na


_STRICT_UPPER_CACHE: dict[int, np.ndarray] = {}


def _strict_upper_mask(width: int) -> np.ndarray:
    m = _STRICT_UPPER_CACHE.get(width)
    if m is None:
        m = np.tril(np.ones((width, width), dtype=bool), k=-1)  # (hi, lo) with lo < hi
        m.setflags(write=False)
        _STRICT_UPPER_CACHE[width] = m
    return m


def legalize_bits(width: int, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch legalization of (B, S) slot bits.

    Forces all outputs (i, 0) present, then repeats snapshot scans inserting
    every missing lower parent as a batch until a scan inserts nothing.
    Returns (legalized bits, inserted node count per graph).
    """
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    before = bits.sum(axis=1)
    r = _bits_to_rowmat(width, bits)
    r[:, 1:, 0] = True  # outputs
    mask = _strict_upper_mask(width)
    while True:
        na = _next_above(r)
        kk, hh, ll = np.nonzero(r & mask)
        mm = na[kk, hh, ll] - 1
        missing = ~r[kk, mm, ll]
        if not missing.any():
            break
        r[kk[missing], mm[missing], ll[missing]] = True
    out = _rowmat_to_bits(width, r)
    return out, out.sum(axis=1) - before


def check_legal_bits(width: int, bits: np.ndarray) -> np.ndarray:
    """Batch legality predicate: outputs present and every present strict-upper
    node has its lower parent present. Single scan, independent of legalize_bits."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    r = _bits_to_rowmat(width, bits)
    outputs_ok = r[:, 1:, 0].all(axis=1)
    na = _next_above(r)
    present = r & _strict_upper_mask(width)
    kk, hh, ll = np.nonzero(present)
    ok = r[kk, na[kk, hh, ll] - 1, ll]
    parents_ok = np.ones(bits.shape[0], dtype=bool)
    np.logical_and.at(parents_ok, kk, ok)
    return outputs_ok & parents_ok


def legalize(graph: PrefixGraph) -> tuple[PrefixGraph, int]:
    """Deterministic completion to a legal graph; returns inserted node count."""
    bits = to_bitvector(graph).to_numpy()[None, :]
    out, inserted = legalize_bits(graph.width, bits)
    return graph_from_bits(graph.width, out[0]), int(inserted[0])


@dataclass(frozen=True)
class LegalityReport:
    legal: bool
    violations: tuple[tuple[Node, Node], ...]  # (child, missing lower parent)
    missing_outputs: tuple[Node, ...]


def validate(graph: PrefixGraph) -> LegalityReport:
    """Report every missing output and missing lower parent in the graph."""
    missing_outputs = tuple(
        (i, 0) for i in range(1, graph.width) if (i, 0) not in graph.nodes
    )
    rows = graph.rows
    violations = []
    for hi, lo in sorted(graph.non_input_nodes):
        m = _m_split(rows[hi], lo)
        if (m - 1, lo) not in graph.nodes:
            violations.append(((hi, lo), (m - 1, lo)))
    return LegalityReport(
        legal=not violations and not missing_outputs,
        violations=tuple(violations),
        missing_outputs=missing_outputs,
    )


def ensure_legal(graph: PrefixGraph) -> None:
    report = validate(graph)
    if not report.legal:
        raise IllegalGraphError(
            f"graph is not legal: {len(report.missing_outputs)} missing outputs, "
            f"{len(report.violations)} parent violations"
        )


def _m_split(row: tuple[int, ...], lo: int) -> int:
    """Smallest present lo' with lo < lo' <= hi in this row (the split point)."""
    return row[bisect.bisect_right(row, lo)]


def parents(graph: PrefixGraph, node: Node) -> tuple[Node, Node]:
    """Upper parent (hi, m) and lower parent (m-1, lo) of a non-input node."""
    hi, lo = node
    if node not in graph.nodes:
        raise ValueError(f"node {node} not present")
    if hi == lo:
        raise ValueError(f"input node {node} has no parents")
    m = _m_split(graph.rows[hi], lo)
    lower = (m - 1, lo)
    if lower not in graph.nodes:
        raise IllegalGraphError(f"node {node} is missing lower parent {lower}")
    return (hi, m), lower


def _sweep_order(graph: PrefixGraph):
    """Rows ascending, lo descending: parents always visited before children."""
    for hi in range(graph.width):
        for lo in reversed(graph.rows[hi]):
            if lo != hi:
                yield hi, lo


def levels(graph: PrefixGraph) -> tuple[dict[Node, int], int]:
    """Logic level per node (inputs at 0) and the graph depth."""
    ensure_legal(graph)
    lvl: dict[Node, int] = {(i, i): 0 for i in range(graph.width)}
    for hi, lo in _sweep_order(graph):
        up, low = parents(graph, (hi, lo))
        lvl[(hi, lo)] = 1 + max(lvl[up], lvl[low])
    return lvl, max(lvl.values())


# ---------------------------------------------------------------------------
# Functional simulation
# ---------------------------------------------------------------------------

def simulate_add(graph: PrefixGraph, a: int, b: int) -> tuple[int, int]:
    """Evaluate the graph as a binary adder; returns (sum, carry_out).

    Inputs: g_i = a_i & b_i, p_i = a_i ^ b_i; the carry operator combines
    (G, P) o (G', P') = (G | (P & G'), P & P'); carries come off column 0.
    """
    ensure_legal(graph)
    n = graph.width
    if not (0 <= a < 1 << n and 0 <= b < 1 << n):
        raise ValueError(f"operands must be {n}-bit, got a={a}, b={b}")
    gp: dict[Node, tuple[int, int]] = {
        (i, i): ((a >> i) & (b >> i) & 1, ((a >> i) ^ (b >> i)) & 1) for i in range(n)
    }
    for hi, lo in _sweep_order(graph):
        up, low = parents(graph, (hi, lo))
        (g1, p1), (g0, p0) = gp[up], gp[low]
        gp[(hi, lo)] = (g1 | (p1 & g0), p1 & p0)
    carry = [gp[(i, 0)][0] for i in range(n)]
    total = gp[(0, 0)][1]  # sum_0 = p_0
    for i in range(1, n):
        total |= (gp[(i, i)][1] ^ carry[i - 1]) << i
    return total, carry[n - 1]


def simulate_gray(graph: PrefixGraph, gray: int) -> int:
    """Evaluate the graph as a gray-to-binary converter (prefix XOR).

    Input slot k carries gray bit (width-1-k), so node (i, 0) produces binary
    bit (width-1-i); this reuses the lsb-up prefix machinery for the msb-down
    gray recurrence.
    """
    ensure_legal(graph)
    n = graph.width
    if not 0 <= gray < 1 << n:
        raise ValueError(f"gray value must be {n}-bit, got {gray}")
    val: dict[Node, int] = {(k, k): (gray >> (n - 1 - k)) & 1 for k in range(n)}
    for hi, lo in _sweep_order(graph):
        up, low = parents(graph, (hi, lo))
        val[(hi, lo)] = val[up] ^ val[low]
    out = val[(0, 0)] << (n - 1)
    for i in range(1, n):
        out |= val[(i, 0)] << (n - 1 - i)
    return out


# ---------------------------------------------------------------------------
# Randomized graphs
# ---------------------------------------------------------------------------

_BASES = ("ripple", "sklansky")


def random_bits(
    width: int, rng: np.random.Generator, base: str = "ripple", n_mutations: int = 200
) -> np.ndarray:
    """Base constructor's bitvector with n single-slot flips (with replacement).

    Not legalized.
    """
    if base not in _BASES:
        raise ValueError(f"base must be one of {_BASES}, got {base!r}")
    if n_mutations < 0:
        raise ValueError("n_mutations must be >= 0")
    g = ripple_carry(width) if base == "ripple" else sklansky(width)
    bits = to_bitvector(g).to_numpy()
    if n_mutations:
        slots = rng.integers(0, n_slots(width), size=n_mutations)
        bits ^= (np.bincount(slots, minlength=n_slots(width)) & 1).astype(bool)
    return bits


def random_graph(
    width: int, rng: np.random.Generator, base: str = "ripple", n_mutations: int = 200
) -> PrefixGraph:
    return graph_from_bits(width, random_bits(width, rng, base, n_mutations))
