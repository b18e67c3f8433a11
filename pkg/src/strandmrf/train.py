"""Building templates from an annotated multiple alignment.

The alignment supplies the profile HMM counts; the per-row strand
annotations (computed upstream from structures) supply the consensus
strands and their hydrogen-bond pairing.  Simulated evolution augments the
alignment with copies whose paired strand residues are resampled from the
pair tables.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .model import (
    DEFAULT_BACKGROUND,
    STANDARD,
    UNKNOWN_EMISSION,
    X_INDEX,
    BeginTransitions,
    Exposure,
    MrfTemplate,
    NodeTransitions,
    Orientation,
    PairScoreTables,
    StrandPair,
    assemble,
    check,
    plain_node,
    residue_index,
)
from .rng import RandomSource

log = logging.getLogger(__name__)

GAP_CHARS = frozenset("-.")


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class AlignedRow:
    name: str
    sequence: str
    origin: str | None = None  # original row name for simulated copies

    @property
    def source(self) -> str:
        return self.origin or self.name


@dataclass(frozen=True)
class MultipleAlignment:
    rows: tuple[AlignedRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise TrainingError("empty alignment")
        widths = {len(r.sequence) for r in self.rows}
        if len(widths) != 1:
            raise TrainingError(f"rows have different widths: {sorted(widths)}")

    @classmethod
    def from_pairs(cls, pairs) -> "MultipleAlignment":
        return cls(tuple(AlignedRow(name, seq.upper()) for name, seq in pairs))

    @property
    def width(self) -> int:
        return len(self.rows[0].sequence)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class StrandAnnotation:
    """One annotated strand in one row; columns are 1-based and inclusive."""

    start: int
    end: int
    partner_start: int | None = None
    partner_end: int | None = None
    orientation: Orientation = Orientation.ANTIPARALLEL
    exposure: tuple[Exposure, ...] | None = None

    def spans(self) -> list[tuple[int, int]]:
        out = [(self.start, self.end)]
        if self.partner_start is not None:
            out.append((self.partner_start, self.partner_end))
        return out

    def column_pairs(self) -> list[tuple[int, int]]:
        """0-based (column, partner column) pairs along the annotated strand."""
        if self.partner_start is None:
            return []
        n = self.end - self.start + 1
        if Orientation(self.orientation) is Orientation.PARALLEL:
            return [(self.start - 1 + i, self.partner_start - 1 + i) for i in range(n)]
        return [(self.start - 1 + i, self.partner_end - 1 - i) for i in range(n)]


@dataclass
class StrandAnnotationSet:
    rows: dict[str, list[StrandAnnotation]] = field(default_factory=dict)

    def for_row(self, row: AlignedRow) -> list[StrandAnnotation]:
        return self.rows.get(row.source, [])

    def check(self, width: int) -> None:
        for name, anns in self.rows.items():
            for a in anns:
                for lo, hi in a.spans():
                    if hi is None or not (1 <= lo <= hi <= width):
                        raise TrainingError(f"row {name}: span {lo}-{hi} outside columns 1..{width}")
                if a.partner_start is not None:
                    if a.end - a.start != a.partner_end - a.partner_start:
                        raise TrainingError(f"row {name}: strand {a.start}-{a.end} and partner "
                                            f"{a.partner_start}-{a.partner_end} differ in length")
                    if not (a.end < a.partner_start or a.partner_end < a.start):
                        raise TrainingError(f"row {name}: strand {a.start}-{a.end} overlaps its partner")
                if a.exposure is not None and len(a.exposure) != a.end - a.start + 1:
                    raise TrainingError(f"row {name}: exposure hints do not cover strand {a.start}-{a.end}")


@dataclass(frozen=True)
class TrainingConfig:
    symfrac: float = 0.2
    consensus_strand_fraction: float = 0.5
    pseudocount: float = 1.0
    background: tuple[float, ...] = tuple(DEFAULT_BACKGROUND)
    max_gap_slack: int = 20

    def __post_init__(self):
        for name in ("symfrac", "consensus_strand_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise TrainingError(f"{name} must lie in [0, 1], got {v}")
        if self.pseudocount <= 0:
            raise TrainingError("pseudocount must be positive")
        if len(self.background) != 20 or min(self.background) <= 0:
            raise TrainingError("background needs 20 positive frequencies")
        if self.max_gap_slack < 0:
            raise TrainingError("max_gap_slack must be nonnegative")


@dataclass(frozen=True)
class ConsensusPair:
    first: int
    second: int
    orientation: Orientation
    first_columns: tuple[int, ...]   # 0-based, position order of the first strand
    second_columns: tuple[int, ...]  # partner column of each position
    exposure_hints: tuple[Exposure | None, ...]


@dataclass(frozen=True)
class Consensus:
    strands: tuple[tuple[int, int], ...]  # 0-based inclusive column spans
    pairs: tuple[ConsensusPair, ...]
    beta: np.ndarray                      # per-column flag
    alignment: MultipleAlignment          # strand columns made gap-free

    def bonded_positions(self) -> list[tuple[int, int, int, int]]:
        """(pair index, position, earlier column, later column), by later column."""
        out = [(k, p, e, l) for k, cp in enumerate(self.pairs)
               for p, (e, l) in enumerate(zip(cp.first_columns, cp.second_columns))]
        return sorted(out, key=lambda t: (t[3], t[2]))


def _is_gap(ch: str) -> bool:
    return ch in GAP_CHARS


def mark_consensus_columns(alignment: MultipleAlignment, symfrac: float) -> np.ndarray:
    """True for match columns: those whose residue fraction is at least ``symfrac``."""
    n = len(alignment)
    occupied = np.zeros(alignment.width)
    for row in alignment.rows:
        occupied += [0 if _is_gap(c) else 1 for c in row.sequence]
    return occupied / n >= symfrac


def consensus_strands(alignment: MultipleAlignment, annotations: StrandAnnotationSet,
                      fraction: float = 0.5) -> Consensus:
    """Consensus strands, their pairing, and the gap-free strand alignment.

    A column is a strand column when more than ``fraction`` of the rows
    annotate it as strand.  Maximal runs of such columns (length >= 2) are the
    consensus strands.  Two strands are paired when more than ``fraction``
    of the rows pair them; the majority orientation wins.  Gaps inside strand
    columns become X so every row's strand segment is contiguous, and
    residues of rows that are not annotated there still count as strand
    residues.
    """
    width, n = alignment.width, len(alignment)
    annotations.check(width)
    votes = np.zeros(width, dtype=int)
    for row in alignment.rows:
        cols = set()
        for a in annotations.for_row(row):
            for lo, hi in a.spans():
                cols.update(range(lo - 1, hi))
        for c in cols:
            votes[c] += 1
    beta = votes > fraction * n

    strands: list[tuple[int, int]] = []
    c = 0
    while c < width:
        if beta[c]:
            start = c
            while c + 1 < width and beta[c + 1]:
                c += 1
            if c - start + 1 >= 2:
                strands.append((start, c))
            else:
                beta[start] = False
        c += 1
    owner = {col: sid for sid, (lo, hi) in enumerate(strands) for col in range(lo, hi + 1)}

    pair_votes: dict[tuple[int, int], Counter] = defaultdict(Counter)
    hints: dict[tuple[int, int], dict[int, Counter]] = defaultdict(lambda: defaultdict(Counter))
    for row in alignment.rows:
        seen = set()
        for a in annotations.for_row(row):
            for pos, (c1, c2) in enumerate(a.column_pairs()):
                s1, s2 = owner.get(c1), owner.get(c2)
                if s1 is None or s2 is None or s1 == s2:
                    continue
                key = (min(s1, s2), max(s1, s2))
                seen.add((key, Orientation(a.orientation)))
                if a.exposure is not None:
                    early_col = c1 if s1 < s2 else c2
                    hints[key][early_col][Exposure(a.exposure[pos])] += 1
        for key, orient in seen:
            pair_votes[key][orient] += 1

    pairs = []
    for (s1, s2), counter in sorted(pair_votes.items()):
        orient, count = max(counter.items(), key=lambda kv: (kv[1], kv[0] is Orientation.ANTIPARALLEL))
        if count <= fraction * n:
            continue
        (a0, a1), (b0, b1) = strands[s1], strands[s2]
        if a1 - a0 != b1 - b0:
            log.warning("dropping pair of strands %d and %d: lengths %d and %d differ",
                        s1, s2, a1 - a0 + 1, b1 - b0 + 1)
            continue
        first_cols = tuple(range(a0, a1 + 1))
        if orient is Orientation.PARALLEL:
            second_cols = tuple(range(b0, b1 + 1))
        else:
            second_cols = tuple(range(b1, b0 - 1, -1))
        h = []
        for col in first_cols:
            tally = hints[(s1, s2)].get(col)
            if tally and tally[Exposure.BURIED] != tally[Exposure.EXPOSED]:
                h.append(max(tally, key=tally.get))
            else:
                h.append(None)
        pairs.append(ConsensusPair(s1, s2, orient, first_cols, second_cols, tuple(h)))

    rows = []
    for row in alignment.rows:
        seq = list(row.sequence)
        for col in np.flatnonzero(beta):
            if _is_gap(seq[col]):
                seq[col] = "X"
        rows.append(AlignedRow(row.name, "".join(seq), row.origin))
    return Consensus(tuple(strands), tuple(pairs), beta, MultipleAlignment(tuple(rows)))


def choose_exposure(alignment: MultipleAlignment, first_columns, second_columns,
                    tables: PairScoreTables) -> tuple[Exposure, ...]:
    """Per paired position, the table giving the lower total score over all rows.

    Ties go to buried.
    """
    out = []
    for ce, cl in zip(first_columns, second_columns):
        buried = exposed = 0.0
        for row in alignment.rows:
            e, l = row.sequence[ce], row.sequence[cl]
            if _is_gap(e) or _is_gap(l):
                continue
            ei, li = residue_index(e), residue_index(l)
            buried += tables.buried[li, ei]
            exposed += tables.exposed[li, ei]
        out.append(Exposure.EXPOSED if exposed < buried else Exposure.BURIED)
    return tuple(out)


def resolve_exposures(alignment: MultipleAlignment, consensus: Consensus,
                      tables: PairScoreTables) -> list[tuple[Exposure, ...]]:
    out = []
    for cp in consensus.pairs:
        chosen = choose_exposure(alignment, cp.first_columns, cp.second_columns, tables)
        out.append(tuple(h if h is not None else c for h, c in zip(cp.exposure_hints, chosen)))
    return out


def _emission_scores(counts: np.ndarray, pseudocount: float, bg: np.ndarray) -> np.ndarray:
    p = (counts + pseudocount * bg) / (counts.sum() + pseudocount)
    out = np.empty(21)
    out[:20] = -np.log(p / bg)
    out[X_INDEX] = UNKNOWN_EMISSION
    return out


def _neglog(counts, pseudocount) -> list[float]:
    c = np.asarray(counts, dtype=float) + pseudocount
    return list(-np.log(c / c.sum()))


def template_from_consensus(alignment: MultipleAlignment, consensus: Consensus,
                            config: TrainingConfig, tables: PairScoreTables,
                            name: str = "template",
                            exposures: list[tuple[Exposure, ...]] | None = None) -> MrfTemplate:
    """Count-based Plan7 estimates with the consensus strands collapsed to match-only nodes."""
    if alignment.width != len(consensus.beta):
        raise TrainingError("alignment width does not match the consensus columns")
    bg = np.asarray(config.background, dtype=float)
    bg = bg / bg.sum()
    match_cols = mark_consensus_columns(alignment, config.symfrac) | consensus.beta
    cols = np.flatnonzero(match_cols)
    m = len(cols)
    if m == 0:
        raise TrainingError("alignment has no match columns")
    node_of = {int(c): j for j, c in enumerate(cols)}  # 0-based node
    # insert column -> node it follows (None before the first / after the last match column)
    insert_owner = {}
    for c in range(alignment.width):
        if not match_cols[c]:
            prev = np.searchsorted(cols, c) - 1
            insert_owner[c] = int(prev) if 0 <= prev < m - 1 else None

    match_counts = np.zeros((m, 20))
    insert_counts = np.zeros((m, 20))
    trans = np.zeros((m, 7))  # mm mi md im ii dm dd
    begin = np.zeros(2)
    for row in alignment.rows:
        seq = row.sequence
        states = []
        inserts = [0] * m
        for c, ch in enumerate(seq):
            if match_cols[c]:
                j = node_of[c]
                gap = _is_gap(ch)
                states.append("D" if gap else "M")
                if not gap:
                    k = residue_index(ch)
                    if k != X_INDEX:
                        match_counts[j, k] += 1
            elif not _is_gap(ch):
                j = insert_owner[c]
                if j is None:
                    continue
                inserts[j] += 1
                k = residue_index(ch)
                if k != X_INDEX:
                    insert_counts[j, k] += 1
        begin[0 if states[0] == "M" else 1] += 1
        for j in range(m):
            s = states[j]
            if j == m - 1:
                trans[j, 0 if s == "M" else 5] += 1
                continue
            nxt = states[j + 1]
            if inserts[j]:
                # Plan7 has no D->I or I->D edge; those observations are dropped
                if s == "M":
                    trans[j, 1] += 1
                trans[j, 4] += inserts[j] - 1
                if nxt == "M":
                    trans[j, 3] += 1
            else:
                idx = {"MM": 0, "MD": 2, "DM": 5, "DD": 6}[s + nxt]
                trans[j, idx] += 1

    pc = config.pseudocount
    nodes = []
    for j in range(m):
        mm, mi, md = _neglog(trans[j, 0:3], pc)
        im, ii = _neglog(trans[j, 3:5], pc)
        dm, dd = _neglog(trans[j, 5:7], pc)
        if j == m - 1:
            mm = dm = 0.0  # the end state is certain from the last node
        nodes.append(plain_node(
            j + 1,
            _emission_scores(match_counts[j], pc, bg),
            _emission_scores(insert_counts[j], pc, bg),
            NodeTransitions(mm, mi, md, im, ii, dm, dd),
        ))
    to_match, to_delete = _neglog(begin, pc)

    spans = [(node_of[lo] + 1, hi - lo + 1) for lo, hi in consensus.strands]
    if exposures is None:
        exposures = resolve_exposures(alignment, consensus, tables)
    pairs = [StrandPair(cp.first, cp.second, cp.orientation, exp)
             for cp, exp in zip(consensus.pairs, exposures)]

    longest = 0
    for row in alignment.rows:
        for (_, a1), (b0, _) in zip(consensus.strands, consensus.strands[1:]):
            between = sum(1 for ch in row.sequence[a1 + 1:b0] if not _is_gap(ch))
            longest = max(longest, between)
    template = assemble(nodes, spans, pairs, max_gap=longest + config.max_gap_slack, name=name,
                        begin=BeginTransitions(to_match, to_delete), background=bg)
    return check(template)


def estimate_template(alignment: MultipleAlignment, annotations: StrandAnnotationSet,
                      config: TrainingConfig, tables: PairScoreTables,
                      name: str = "template") -> MrfTemplate:
    consensus = consensus_strands(alignment, annotations, config.consensus_strand_fraction)
    return template_from_consensus(consensus.alignment, consensus, config, tables, name=name)


def simulated_evolution(alignment: MultipleAlignment, consensus: Consensus,
                        tables: PairScoreTables, rate: float = 0.5, count: int = 150,
                        seed: int = 0,
                        exposures: list[tuple[Exposure, ...]] | None = None) -> MultipleAlignment:
    """Add ``count`` mutated copies of every row.

    In each copy, every hydrogen-bonded position mutates independently with
    probability ``rate``: the later residue of the pair is replaced by a
    different residue drawn with weight ``exp(-score[new][earlier])`` from
    the position's pair table.  Nothing outside the paired strand positions
    changes.  Each original row draws from its own random substream.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mutation rate must lie in [0, 1], got {rate}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    if exposures is None:
        exposures = resolve_exposures(alignment, consensus, tables)
    sites = consensus.bonded_positions()
    stacked = tables.stacked()
    which = [[0 if e is Exposure.BURIED else 1 for e in exp] for exp in exposures]
    weights = np.exp(-stacked[:, :20, :])  # (table, later, earlier), standard later residues
    source = RandomSource(seed)
    rows = []
    for r, row in enumerate(alignment.rows):
        rows.append(row)
        if count == 0:
            continue
        rng = source.stream("simev", r)
        base = list(row.sequence)
        hits = rng.random((count, len(sites))) < rate
        uniforms = rng.random((count, len(sites)))
        for copy in range(count):
            seq = base.copy()
            for s, (k, p, ce, cl) in enumerate(sites):
                if not hits[copy, s] or _is_gap(seq[cl]) or _is_gap(seq[ce]):
                    continue
                w = weights[which[k][p], :, residue_index(seq[ce])].copy()
                current = residue_index(seq[cl])
                if current != X_INDEX:
                    w[current] = 0.0
                cdf = np.cumsum(w)
                pick = int(np.searchsorted(cdf, uniforms[copy, s] * cdf[-1], side="right"))
                seq[cl] = STANDARD[min(pick, 19)]
            rows.append(AlignedRow(f"{row.name}/sim{copy + 1}", "".join(seq), row.source))
    return MultipleAlignment(tuple(rows))


def build_template(alignment: MultipleAlignment, annotations: StrandAnnotationSet,
                   config: TrainingConfig, tables: PairScoreTables, name: str = "template",
                   simev_count: int = 0, simev_rate: float = 0.5, seed: int = 0) -> MrfTemplate:
    """Full training pipeline, optionally with simulated-evolution augmentation.

    Augmentation happens after the consensus strands and their exposures are
    fixed, so the topology is that of the original alignment.
    """
    consensus = consensus_strands(alignment, annotations, config.consensus_strand_fraction)
    data = consensus.alignment
    exposures = resolve_exposures(data, consensus, tables)
    if simev_count:
        data = simulated_evolution(data, consensus, tables, simev_rate, simev_count, seed,
                                   exposures=exposures)
    return template_from_consensus(data, consensus, config, tables, name=name, exposures=exposures)


def topology(template: MrfTemplate) -> tuple:
    """Strand spans and pair wiring, ignoring numeric parameters."""
    return (tuple((s.start_node, s.length) for s in template.strands),
            tuple((p.first, p.second, p.orientation) for p in template.pairs))


__all__ = [
    "AlignedRow", "MultipleAlignment", "StrandAnnotation", "StrandAnnotationSet",
    "TrainingConfig", "Consensus", "ConsensusPair", "TrainingError",
    "mark_consensus_columns", "consensus_strands", "choose_exposure", "resolve_exposures",
    "template_from_consensus", "estimate_template", "simulated_evolution", "build_template",
    "topology",
]
