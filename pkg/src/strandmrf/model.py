"""Template data model for beta-strand Markov random fields.

A template is a profile HMM whose consensus beta-strand columns have been
collapsed to match-only nodes, plus a list of hydrogen-bonded strand pairs
scored with the buried/exposed pair tables.  Everything here is immutable
once built; scoring and search share templates freely across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

import numpy as np

ALPHABET = "ACDEFGHIKLMNPQRSTVWYX"
STANDARD = ALPHABET[:20]
X_INDEX = 20
N_SYMBOLS = 21
_INDEX = {aa: i for i, aa in enumerate(ALPHABET)}

# -ln(1e-4): the constant row/column of both pair tables
PAIR_SENTINEL = 9.21
# emission score used for the unknown residue: neutral odds
UNKNOWN_EMISSION = 0.0

# Robinson & Robinson style amino-acid composition, order A..Y
DEFAULT_BACKGROUND = np.array([
    0.0787945, 0.0151600, 0.0535222, 0.0668298, 0.0397062,
    0.0695071, 0.0229198, 0.0590092, 0.0594422, 0.0963728,
    0.0237718, 0.0414386, 0.0482904, 0.0395639, 0.0540978,
    0.0683364, 0.0540687, 0.0673417, 0.0114135, 0.0304133,
])
DEFAULT_BACKGROUND = DEFAULT_BACKGROUND / DEFAULT_BACKGROUND.sum()


def residue_index(ch: str) -> int:
    """Canonical index of a one-letter residue code; anything unknown is X."""
    return _INDEX.get(ch.upper(), X_INDEX) if ch.upper() != "X" else X_INDEX


def encode(seq: str) -> np.ndarray:
    return np.fromiter((residue_index(c) for c in seq), dtype=np.intp, count=len(seq))


def decode(codes: Iterable[int]) -> str:
    return "".join(ALPHABET[int(c)] for c in codes)


class NodeKind(str, Enum):
    REGULAR = "regular"
    STRAND = "strand"


class Orientation(str, Enum):
    PARALLEL = "parallel"
    ANTIPARALLEL = "antiparallel"


class Exposure(str, Enum):
    BURIED = "buried"
    EXPOSED = "exposed"


class TemplateError(ValueError):
    """Raised when a template or one of its parts is structurally invalid."""


@dataclass(frozen=True)
class NodeTransitions:
    """Negative-log transition costs leaving a node.

    ``mm``, ``md``, ``im``, ``dm`` and ``dd`` lead into the next node (or the
    end state for the last node); ``mi`` and ``ii`` stay within the node.
    There is deliberately no insert/delete cross edge.
    """

    mm: float = 0.0
    mi: float = 0.0
    md: float = 0.0
    im: float = 0.0
    ii: float = 0.0
    dm: float = 0.0
    dd: float = 0.0

    NAMES = ("mm", "mi", "md", "im", "ii", "dm", "dd")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in self.NAMES)


@dataclass(frozen=True)
class BeginTransitions:
    """Costs from the virtual begin state into node 1."""

    to_match: float = 0.0
    to_delete: float = 0.0


@dataclass(frozen=True, eq=False)
class TemplateNode:
    """One model column.

    Strand nodes are match-only during scoring.  They still carry the insert
    emissions and transitions estimated in training so that a strand can be
    turned back into ordinary Plan7 columns when all of its pairs are
    filtered away.
    """

    index: int
    kind: NodeKind
    match: np.ndarray
    insert: np.ndarray
    transitions: NodeTransitions

    @property
    def is_strand(self) -> bool:
        return self.kind is NodeKind.STRAND

    def __eq__(self, other):
        if not isinstance(other, TemplateNode):
            return NotImplemented
        return (self.index == other.index and self.kind == other.kind
                and np.array_equal(self.match, other.match)
                and np.array_equal(self.insert, other.insert)
                and self.transitions == other.transitions)

    __hash__ = None


@dataclass(frozen=True)
class BetaStrand:
    id: int
    start_node: int
    length: int

    @property
    def end_node(self) -> int:
        """Last node of the strand (inclusive, 1-based)."""
        return self.start_node + self.length - 1

    def nodes(self) -> range:
        return range(self.start_node, self.start_node + self.length)


@dataclass(frozen=True)
class StrandPair:
    first: int
    second: int
    orientation: Orientation
    exposure: tuple[Exposure, ...]

    def partner_offset(self, pos: int, length: int) -> int:
        """Offset within ``second`` that pairs with offset ``pos`` of ``first``."""
        if self.orientation is Orientation.PARALLEL:
            return pos
        return length - 1 - pos

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.first, self.second), max(self.first, self.second))


@dataclass(frozen=True, eq=False)
class MrfTemplate:
    nodes: tuple[TemplateNode, ...]
    strands: tuple[BetaStrand, ...]
    pairs: tuple[StrandPair, ...]
    max_gap: int
    name: str = "template"
    begin: BeginTransitions = field(default_factory=BeginTransitions)
    background: np.ndarray = field(default_factory=lambda: DEFAULT_BACKGROUND.copy())

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def strand_lengths(self) -> tuple[int, ...]:
        return tuple(s.length for s in self.strands)

    def strand(self, sid: int) -> BetaStrand:
        for s in self.strands:
            if s.id == sid:
                return s
        raise TemplateError(f"unknown strand id {sid}")

    def node(self, index: int) -> TemplateNode:
        return self.nodes[index - 1]

    def __eq__(self, other):
        if not isinstance(other, MrfTemplate):
            return NotImplemented
        return (self.name == other.name and self.max_gap == other.max_gap
                and self.begin == other.begin
                and np.array_equal(self.background, other.background)
                and self.nodes == other.nodes and self.strands == other.strands
                and self.pairs == other.pairs)

    __hash__ = None


@dataclass(frozen=True)
class PairScoreTables:
    """Negative-log pair scores indexed ``[later residue][earlier residue]``."""

    buried: np.ndarray
    exposed: np.ndarray

    def table(self, exposure: Exposure) -> np.ndarray:
        return self.buried if Exposure(exposure) is Exposure.BURIED else self.exposed

    def stacked(self) -> np.ndarray:
        """Both tables as a (2, 21, 21) array, buried first."""
        return np.stack([self.buried, self.exposed])

    def __eq__(self, other):
        if not isinstance(other, PairScoreTables):
            return NotImplemented
        return (np.array_equal(self.buried, other.buried)
                and np.array_equal(self.exposed, other.exposed))

    __hash__ = None


def pair_score(tables: PairScoreTables, exposure: Exposure | str, earlier, later) -> float:
    """Negative-log score of ``later`` given its already-placed partner ``earlier``."""
    e = earlier if isinstance(earlier, (int, np.integer)) else residue_index(earlier)
    l = later if isinstance(later, (int, np.integer)) else residue_index(later)
    return float(tables.table(Exposure(exposure))[l, e])


def interleave(template: MrfTemplate, pair: StrandPair) -> int:
    ids = {s.id for s in template.strands}
    for sid in (pair.first, pair.second):
        if sid not in ids:
            raise TemplateError(f"unknown strand id {sid}")
    return abs(pair.second - pair.first)


def max_interleave(template: MrfTemplate) -> int:
    return max((interleave(template, p) for p in template.pairs), default=0)


def apply_interleave_filter(template: MrfTemplate, threshold: int) -> MrfTemplate:
    """Keep only pairs whose interleave is at most ``threshold``.

    Strands that end up with no pair are turned back into regular nodes and
    the survivors are renumbered in sequence order.  ``max_gap`` grows to
    cover the regions that demoted strands used to split, so every placement
    that was legal for the surviving strands stays legal.
    """
    if threshold < 0:
        raise TemplateError("interleave threshold must be nonnegative")
    kept = [p for p in template.pairs if interleave(template, p) <= threshold]
    paired = {sid for p in kept for sid in (p.first, p.second)}
    survivors = [s for s in template.strands if s.id in paired]
    if len(survivors) == len(template.strands):
        return replace(template, pairs=tuple(kept))

    renumber = {s.id: i for i, s in enumerate(survivors)}
    demoted_nodes = {n for s in template.strands if s.id not in paired for n in s.nodes()}
    nodes = tuple(
        replace(node, kind=NodeKind.REGULAR) if node.index in demoted_nodes else node
        for node in template.nodes
    )
    strands = tuple(replace(s, id=renumber[s.id]) for s in survivors)
    pairs = tuple(replace(p, first=renumber[p.first], second=renumber[p.second]) for p in kept)

    # each old inter-strand gap was bounded by max_gap; a merged region spans
    # several of those plus the demoted strands themselves
    old = template.strands
    max_gap = template.max_gap
    for a, b in zip(survivors, survivors[1:]):
        inner = [s for s in old if a.id < s.id < b.id]
        bound = (len(inner) + 1) * template.max_gap + sum(s.length for s in inner)
        max_gap = max(max_gap, bound)
    return replace(template, nodes=nodes, strands=strands, pairs=pairs, max_gap=max_gap)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


def validate(template: MrfTemplate) -> list[Violation]:
    """Check every structural invariant; an empty list means the template is valid."""
    out: list[Violation] = []

    def bad(kind, detail):
        out.append(Violation(kind, detail))

    nodes = template.nodes
    if not nodes:
        bad("empty model", "template has no nodes")
    for pos, node in enumerate(nodes, start=1):
        if node.index != pos:
            bad("node order", f"node at position {pos} has index {node.index}")
        for label, arr in (("match", node.match), ("insert", node.insert)):
            arr = np.asarray(arr)
            if arr.shape != (N_SYMBOLS,):
                bad("emission shape", f"node {pos} {label} emissions have shape {arr.shape}")
            elif not np.all(np.isfinite(arr)):
                bad("non-finite emission", f"node {pos} {label} emissions")
        for name, value in zip(NodeTransitions.NAMES, node.transitions.as_tuple()):
            if not math.isfinite(value) or value < 0:
                bad("bad transition", f"node {pos} {name}={value}")
    for name in ("to_match", "to_delete"):
        value = getattr(template.begin, name)
        if not math.isfinite(value) or value < 0:
            bad("bad transition", f"begin {name}={value}")
    bg = np.asarray(template.background)
    if bg.shape[0] < 20 or np.any(bg[:20] <= 0):
        bad("bad background", "background frequencies must be positive for the 20 residues")

    owner: dict[int, int] = {}
    prev_end = 0
    for pos, s in enumerate(template.strands):
        if s.id != pos:
            bad("strand order", f"strand at position {pos} has id {s.id}")
        if s.length < 2:
            bad("short strand", f"strand {s.id} has length {s.length}")
        if s.start_node < 1 or s.end_node > len(nodes):
            bad("strand out of range", f"strand {s.id} covers nodes {s.start_node}..{s.end_node}")
            continue
        if s.start_node <= prev_end:
            bad("overlapping strands", f"strand {s.id} starts at node {s.start_node}")
        prev_end = max(prev_end, s.end_node)
        for n in s.nodes():
            if n in owner:
                bad("overlapping strands", f"node {n} in strands {owner[n]} and {s.id}")
            owner[n] = s.id
            if nodes[n - 1].kind is not NodeKind.STRAND:
                bad("strand node kind", f"node {n} of strand {s.id} is not a strand node")
    for node in nodes:
        if node.kind is NodeKind.STRAND and node.index not in owner:
            bad("orphan strand node", f"node {node.index} belongs to no strand")

    lengths = {s.id: s.length for s in template.strands}
    seen: set[tuple[int, int]] = set()
    for p in template.pairs:
        missing = [sid for sid in (p.first, p.second) if sid not in lengths]
        if missing:
            bad("unknown strand", f"pair ({p.first}, {p.second}) references strand {missing[0]}")
            continue
        if p.first >= p.second:
            bad("pair order", f"pair ({p.first}, {p.second}) must list the earlier strand first")
        if p.key in seen:
            bad("duplicate pair", f"pair {p.key}")
        seen.add(p.key)
        if lengths[p.first] != lengths[p.second]:
            bad("unequal paired lengths",
                f"pair ({p.first}, {p.second}) lengths {lengths[p.first]} and {lengths[p.second]}")
        if len(p.exposure) != lengths[p.first]:
            bad("exposure length", f"pair ({p.first}, {p.second}) has {len(p.exposure)} exposure entries")
    if template.max_gap < 0:
        bad("negative max gap", f"max_gap={template.max_gap}")
    return out


def check(template: MrfTemplate) -> MrfTemplate:
    """Raise ``TemplateError`` listing all violations, else return the template."""
    problems = validate(template)
    if problems:
        raise TemplateError("; ".join(str(v) for v in problems))
    return template


def plain_node(index: int, match, insert=None, transitions: NodeTransitions | None = None,
               kind: NodeKind = NodeKind.REGULAR) -> TemplateNode:
    """Convenience constructor used by fixtures and the trainer."""
    match = np.asarray(match, dtype=float)
    insert = np.zeros(N_SYMBOLS) if insert is None else np.asarray(insert, dtype=float)
    return TemplateNode(index, kind, match, insert, transitions or NodeTransitions())


def assemble(nodes: list[TemplateNode], strand_spans: list[tuple[int, int]],
             pairs: list[StrandPair], max_gap: int, name: str = "template",
             begin: BeginTransitions | None = None,
             background: np.ndarray | None = None) -> MrfTemplate:
    """Build a template from regular nodes and ``(start_node, length)`` strand spans.

    Nodes covered by a span are switched to strand kind.
    """
    spans = sorted(strand_spans)
    covered = {n for start, length in spans for n in range(start, start + length)}
    nodes = tuple(
        replace(n, kind=NodeKind.STRAND if n.index in covered else NodeKind.REGULAR)
        for n in nodes
    )
    strands = tuple(BetaStrand(i, start, length) for i, (start, length) in enumerate(spans))
    return MrfTemplate(
        nodes=nodes, strands=strands, pairs=tuple(pairs), max_gap=max_gap, name=name,
        begin=begin or BeginTransitions(),
        background=DEFAULT_BACKGROUND.copy() if background is None else np.asarray(background, dtype=float),
    )
