"""Exact scoring of a query against a template for a fixed strand placement.

Fixing where every strand starts splits the model into independent Plan7
segments (the regular nodes between consecutive strands).  Each segment is
solved by Viterbi over exactly the residues left between the strands; the
strand residues add their match emissions and pair terms.

Conventions shared by every routine here:

* all costs are natural-log negatives, lower is better;
* transitions into, within and out of strand nodes cost nothing;
* alignment is global in the model, with free (``flank`` per residue) N/C
  loops absorbing query residues before node 1 and after the last node;
* the last node of the model has no insert state;
* impossible configurations get a large finite cost, never ``inf``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import (
    PAIR_SENTINEL,
    BeginTransitions,
    MrfTemplate,
    NodeKind,
    PairScoreTables,
    TemplateNode,
    encode,
)

INF = math.inf
DEFAULT_CAP = 10**7

BEGIN = "begin"
STRAND = "strand"
END = "end"


def impossible_cost(n_residues: int) -> float:
    return 2.0 * PAIR_SENTINEL * max(int(n_residues), 1)


class IllegalPlacement(ValueError):
    pass


class PlacementCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"{count} legal placements exceed the cap of {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class Step:
    node: int
    state: str  # M, I, D, or N/C for the flanking loops


@dataclass(frozen=True)
class ScoreBreakdown:
    total: float
    segment_scores: tuple[float, ...]
    strand_scores: tuple[float, ...]
    pair_scores: tuple[float, ...]


def as_codes(query) -> np.ndarray:
    if isinstance(query, str):
        return encode(query)
    return np.asarray(query, dtype=np.intp)


# ---------------------------------------------------------------------------
# reference segment Viterbi (scalar, with traceback)


def viterbi_segment(nodes: Sequence[TemplateNode], residues, entry: str = STRAND,
                    exit: str = STRAND, begin: BeginTransitions | None = None,
                    flank: float = 0.0, impossible: float | None = None):
    """Best Plan7 path through ``nodes`` consuming exactly ``residues``.

    ``entry`` is ``"begin"`` (begin-state costs, residues may first be
    absorbed by the N loop) or ``"strand"`` (free entry into M or D of the
    first node).  ``exit`` is ``"end"`` (the span ends the model: no insert
    on the last node, exit costs from its transitions, then the C loop) or
    ``"strand"`` (free exit from M, I or D of the last node).

    Returns ``(score, path)``; ``path`` is a tuple of :class:`Step` and is
    ``None`` when no path exists, in which case the score is the finite
    impossible cost.  Ties on traceback prefer M, then D, then I.
    """
    codes = as_codes(residues)
    L = len(codes)
    m = len(nodes)
    begin = begin or BeginTransitions()
    impossible = impossible_cost(L) if impossible is None else impossible
    from_begin = entry == BEGIN
    to_end = exit == END

    if m == 0:
        if from_begin or to_end:
            score = 0.0
            for _ in range(L):
                score += flank
            state = "N" if from_begin else "C"
            return score, tuple(Step(0, state) for _ in range(L))
        if L == 0:
            return 0.0, ()
        return impossible, None

    entry_m = begin.to_match if from_begin else 0.0
    entry_d = begin.to_delete if from_begin else 0.0
    tr = [n.transitions for n in nodes]

    # V[state][j][t]; pointers hold (state, j, t) of the predecessor, or a tag
    V = {s: [[INF] * (L + 1) for _ in range(m)] for s in "MID"}
    P = {s: [[None] * (L + 1) for _ in range(m)] for s in "MID"}
    Bv = [INF] * (L + 1)
    Bv[0] = 0.0
    if from_begin:
        for t in range(1, L + 1):
            Bv[t] = Bv[t - 1] + flank

    for t in range(L + 1):
        for j in range(m):
            if t > 0:
                x = codes[t - 1]
                if j == 0:
                    cands = [(Bv[t - 1] + entry_m, "B")]
                else:
                    a = tr[j - 1]
                    cands = [(V["M"][j - 1][t - 1] + a.mm, ("M", j - 1, t - 1)),
                             (V["D"][j - 1][t - 1] + a.dm, ("D", j - 1, t - 1)),
                             (V["I"][j - 1][t - 1] + a.im, ("I", j - 1, t - 1))]
                best, ptr = _argmin(cands)
                if best < INF:
                    V["M"][j][t] = nodes[j].match[x] + best
                    P["M"][j][t] = ptr
                if not (to_end and j == m - 1):
                    a = tr[j]
                    cands = [(V["M"][j][t - 1] + a.mi, ("M", j, t - 1)),
                             (V["I"][j][t - 1] + a.ii, ("I", j, t - 1))]
                    best, ptr = _argmin(cands)
                    if best < INF:
                        V["I"][j][t] = nodes[j].insert[x] + best
                        P["I"][j][t] = ptr
            if j == 0:
                cands = [(Bv[t] + entry_d, "B")]
            else:
                a = tr[j - 1]
                cands = [(V["M"][j - 1][t] + a.md, ("M", j - 1, t)),
                         (V["D"][j - 1][t] + a.dd, ("D", j - 1, t))]
            best, ptr = _argmin(cands)
            if best < INF:
                V["D"][j][t] = best
                P["D"][j][t] = ptr

    last = m - 1
    if to_end:
        a = tr[last]
        E = []
        for t in range(L + 1):
            E.append(_argmin([(V["M"][last][t] + a.mm, ("M", last, t)),
                              (V["D"][last][t] + a.dm, ("D", last, t))]))
        # C loop: best[t] = min(E[t], best[t-1] + flank)
        best, ptr, n_c = E[0][0], E[0][1], 0
        for t in range(1, L + 1):
            carried = best + flank
            if E[t][0] <= carried:
                best, ptr, n_c = E[t][0], E[t][1], 0
            else:
                best, n_c = carried, n_c + 1
        score, tail = best, [Step(m + 1, "C")] * n_c
    else:
        score, ptr = _argmin([(V["M"][last][L], ("M", last, L)),
                              (V["D"][last][L], ("D", last, L)),
                              (V["I"][last][L], ("I", last, L))])
        tail = []
    if score == INF:
        return impossible, None

    steps: list[Step] = []
    cur = ptr
    t_begin = 0
    while cur != "B":
        state, j, t = cur
        steps.append(Step(nodes[j].index, state))
        cur = P[state][j][t]
        if cur == "B":
            t_begin = t - 1 if state == "M" else t
    head = [Step(0, "N")] * t_begin
    return score, tuple(head + steps[::-1] + tail)


def _argmin(cands):
    best, ptr = INF, None
    for value, p in cands:
        if value < best:
            best, ptr = value, p
    return best, ptr


def rescore_path(nodes: Sequence[TemplateNode], residues, path: Sequence[Step],
                 entry: str = STRAND, exit: str = STRAND,
                 begin: BeginTransitions | None = None, flank: float = 0.0) -> float:
    """Sum the costs along an explicit segment path (no optimisation)."""
    codes = as_codes(residues)
    begin = begin or BeginTransitions()
    by_index = {n.index: k for k, n in enumerate(nodes)}
    total = 0.0
    t = 0
    prev: tuple[str, int] | None = None  # (state, local node) once inside the nodes
    for step in path:
        if step.state == "N":
            total = total + flank
            t += 1
            continue
        if step.state == "C":
            if prev is not None:
                state, j = prev
                a = nodes[j].transitions
                total = total + (a.mm if state == "M" else a.dm)
                prev = None
            total = total + flank
            t += 1
            continue
        j = by_index[step.node]
        if prev is None:
            if entry == BEGIN:
                total = total + (begin.to_match if step.state == "M" else begin.to_delete)
        else:
            pstate, pj = prev
            a = nodes[pj].transitions
            if step.state == "I":
                total = total + (a.mi if pstate == "M" else a.ii)
            elif step.state == "M":
                total = total + {"M": a.mm, "I": a.im, "D": a.dm}[pstate]
            else:
                total = total + (a.md if pstate == "M" else a.dd)
        if step.state == "M":
            total = nodes[j].match[codes[t]] + total
            t += 1
        elif step.state == "I":
            total = nodes[j].insert[codes[t]] + total
            t += 1
        prev = (step.state, j)
    if prev is not None and exit == END:
        state, j = prev
        a = nodes[j].transitions
        total = total + (a.mm if state == "M" else a.dm)
    return total


# ---------------------------------------------------------------------------
# placements


def legality_problem(placement: Sequence[int], template: MrfTemplate, n: int,
                     use_max_gap: bool = True) -> str | None:
    lengths = template.strand_lengths
    if len(placement) != len(lengths):
        return f"placement has {len(placement)} starts for {len(lengths)} strands"
    if not lengths:
        return None
    if placement[0] < 0:
        return "first strand starts before the query"
    for i in range(len(lengths) - 1):
        end = placement[i] + lengths[i]
        if placement[i + 1] < end:
            return f"strands {i} and {i + 1} overlap"
        if use_max_gap and placement[i + 1] - end > template.max_gap:
            return f"gap of {placement[i + 1] - end} between strands {i} and {i + 1} exceeds max_gap {template.max_gap}"
    if placement[-1] + lengths[-1] > n:
        return "last strand runs past the end of the query"
    return None


def legal(placement: Sequence[int], template: MrfTemplate, n: int) -> bool:
    return legality_problem(placement, template, n) is None


def _suffix_counts(lengths: Sequence[int], lo: int, hi: int, max_gap: int | None,
                   lead_gap: bool = False, trail_gap: bool = False) -> list[dict[int, int]]:
    """``counts[i][p]``: ways to place strands i.. with strand i starting at p.

    Strands live in residues ``[lo, hi)``.  ``max_gap`` bounds gaps between
    consecutive strands; ``lead_gap``/``trail_gap`` also bound the gap from
    ``lo`` to the first strand and from the last strand to ``hi``.
    """
    k = len(lengths)
    counts: list[dict[int, int]] = [dict() for _ in range(k)]
    suffix = [0] * (k + 1)
    for i in range(k - 1, -1, -1):
        suffix[i] = suffix[i + 1] + lengths[i]
    for i in range(k - 1, -1, -1):
        first_p = lo
        last_p = hi - suffix[i]
        if i == 0 and lead_gap and max_gap is not None:
            last_p = min(last_p, lo + max_gap)
        if i == k - 1 and trail_gap and max_gap is not None:
            first_p = max(first_p, hi - lengths[i] - max_gap)
        row = counts[i]
        if i == k - 1:
            for p in range(first_p, last_p + 1):
                row[p] = 1
            continue
        nxt = counts[i + 1]
        # prefix sums over the next row for windowed totals
        keys = sorted(nxt)
        prefix = {}
        acc = 0
        for q in keys:
            acc += nxt[q]
            prefix[q] = acc

        def upto(q):
            if not keys or q < keys[0]:
                return 0
            q = min(q, keys[-1])
            return prefix[q]

        for p in range(first_p, last_p + 1):
            lo_q = p + lengths[i]
            hi_q = keys[-1] if keys else lo_q - 1
            if max_gap is not None:
                hi_q = min(hi_q, lo_q + max_gap)
            c = upto(hi_q) - upto(lo_q - 1)
            if c:
                row[p] = c
    return counts


def count_placements(template: MrfTemplate, n: int, use_max_gap: bool = False) -> int:
    """Exact number of non-overlapping placements of all strands in ``n`` residues."""
    lengths = template.strand_lengths
    if not lengths:
        return 1
    if sum(lengths) > n:
        return 0
    counts = _suffix_counts(lengths, 0, n, template.max_gap if use_max_gap else None)
    return sum(counts[0].values())


def enumerate_placements(template: MrfTemplate, n: int, use_max_gap: bool = True,
                         first_starts: Sequence[int] | None = None) -> Iterator[tuple[int, ...]]:
    """All placements in lexicographic order."""
    lengths = template.strand_lengths
    k = len(lengths)
    if k == 0:
        yield ()
        return
    if sum(lengths) > n:
        return
    max_gap = template.max_gap if use_max_gap else None
    counts = _suffix_counts(lengths, 0, n, max_gap)
    starts = sorted(counts[0]) if first_starts is None else [p for p in first_starts if p in counts[0]]
    current = [0] * k

    def rec(i, p):
        current[i] = p
        if i == k - 1:
            yield tuple(current)
            return
        lo_q = p + lengths[i]
        for q in sorted(counts[i + 1]):
            if q < lo_q:
                continue
            if max_gap is not None and q > lo_q + max_gap:
                break
            yield from rec(i + 1, q)

    for p in starts:
        yield from rec(0, p)


# ---------------------------------------------------------------------------
# vectorised placement scorer


@dataclass(frozen=True)
class _Segment:
    nodes: tuple[int, ...]
    entry: str
    exit: str
    match: np.ndarray    # (m, 21)
    insert: np.ndarray   # (m, 21), last row inf when exit is END
    mm: np.ndarray
    mi: np.ndarray
    md: np.ndarray
    im: np.ndarray
    ii: np.ndarray
    dm: np.ndarray
    dd: np.ndarray
    dd_prefix: np.ndarray
    entry_m: float
    entry_d: float


def _segments(template: MrfTemplate) -> list[_Segment]:
    bounds = [0] + [x for s in template.strands for x in (s.start_node - 1, s.end_node)] + [template.n_nodes]
    out = []
    k = len(template.strands)
    for s in range(k + 1):
        lo, hi = bounds[2 * s], bounds[2 * s + 1]
        nodes = template.nodes[lo:hi]
        entry = BEGIN if s == 0 else STRAND
        exit = END if s == k else STRAND
        m = len(nodes)
        if m:
            match = np.array([n.match for n in nodes], dtype=float)
            insert = np.array([n.insert for n in nodes], dtype=float)
            if exit == END:
                insert[-1, :] = INF
            tr = np.array([n.transitions.as_tuple() for n in nodes], dtype=float).T
        else:
            match = insert = np.zeros((0, 21))
            tr = np.zeros((7, 0))
        mm, mi, md, im, ii, dm, dd = tr
        dd_prefix = np.concatenate([[0.0], np.cumsum(dd[:-1])]) if m else np.zeros(0)
        out.append(_Segment(
            nodes=tuple(n.index for n in nodes), entry=entry, exit=exit,
            match=match, insert=insert, mm=mm, mi=mi, md=md, im=im, ii=ii, dm=dm, dd=dd,
            dd_prefix=dd_prefix,
            entry_m=template.begin.to_match if entry == BEGIN else 0.0,
            entry_d=template.begin.to_delete if entry == BEGIN else 0.0,
        ))
    return out


def _segment_exit_scores(seg: _Segment, codes: np.ndarray, flank: float) -> np.ndarray:
    """Exit scores after consuming 0..len(codes) residues of ``codes``."""
    L = len(codes)
    out = np.full(L + 1, INF)
    m = len(seg.nodes)
    if m == 0:
        if seg.entry == BEGIN or seg.exit == END:
            acc = 0.0
            out[0] = 0.0
            for t in range(1, L + 1):
                acc += flank
                out[t] = acc
        else:
            out[0] = 0.0
        return out

    eM = seg.match[:, codes]
    eI = seg.insert[:, codes]
    from_begin = seg.entry == BEGIN
    to_end = seg.exit == END
    C = seg.dd_prefix
    md_shift = seg.md[:-1] - C[1:]
    mm_, im_, dm_ = seg.mm[:-1], seg.im[:-1], seg.dm[:-1]
    mi, ii = seg.mi, seg.ii
    w = np.empty(m)

    def deletes(M, B):
        w[0] = B + seg.entry_d
        np.add(M[:-1], md_shift, out=w[1:])
        return C + np.minimum.accumulate(w)

    B = 0.0
    M = np.full(m, INF)
    I = np.full(m, INF)
    D = deletes(M, B)
    last_m, last_d = (seg.mm[-1], seg.dm[-1]) if to_end else (0.0, 0.0)

    def exit_score(M, I, D):
        if to_end:
            return min(M[-1] + last_m, D[-1] + last_d)
        return min(M[-1], I[-1], D[-1])

    carried = exit_score(M, I, D)
    out[0] = carried
    for t in range(1, L + 1):
        Mn = np.empty(m)
        Mn[0] = B + seg.entry_m
        if m > 1:
            Mn[1:] = np.minimum(np.minimum(M[:-1] + mm_, I[:-1] + im_), D[:-1] + dm_)
        Mn += eM[:, t - 1]
        I = np.minimum(M + mi, I + ii) + eI[:, t - 1]
        M = Mn
        B = B + flank if from_begin else INF
        D = deletes(M, B)
        e = exit_score(M, I, D)
        if to_end:
            carried = min(e, carried + flank)
        else:
            carried = e
        out[t] = carried
    return out


class PlacementScorer:
    """Scores placements of one query against one template.

    Segment Viterbi results are cached per (segment, first residue) as a
    vector over every possible end, so repeated scoring during search costs
    table lookups plus the strand and pair sums.
    """

    def __init__(self, template: MrfTemplate, query, tables: PairScoreTables,
                 flank: float = 0.0, cache: bool = True):
        self.template = template
        self.codes = as_codes(query)
        self.n = len(self.codes)
        self.flank = float(flank)
        self.tables = tables
        self.cache_enabled = cache
        self.lengths = template.strand_lengths
        self.k = len(self.lengths)
        self.impossible = impossible_cost(self.n)
        self._segments = _segments(template)
        self._cache: dict[tuple[int, int], np.ndarray] = {}
        self.evaluations = 0

        # strand emission sums for every feasible start
        self._strand = []
        for s in template.strands:
            em = np.array([template.node(i).match for i in s.nodes()])
            if self.n >= s.length:
                windows = np.lib.stride_tricks.sliding_window_view(self.codes, s.length)
                self._strand.append(em[np.arange(s.length), windows].sum(axis=1))
            else:
                self._strand.append(np.zeros(0))

        stacked = tables.stacked()
        self._pairs = []
        for p in template.pairs:
            length = template.strand(p.first).length
            first_off = np.arange(length)
            second_off = np.array([p.partner_offset(i, length) for i in range(length)])
            which = np.array([0 if e.value == "buried" else 1 for e in p.exposure])
            self._pairs.append((p.first, p.second, first_off, second_off, which))
        self._stacked = stacked

    # segment access -------------------------------------------------------
    def _bounds(self, placement: Sequence[int]) -> list[tuple[int, int]]:
        if self.k == 0:
            return [(0, self.n)]
        b = [(0, placement[0])]
        for i in range(1, self.k):
            b.append((placement[i - 1] + self.lengths[i - 1], placement[i]))
        b.append((placement[-1] + self.lengths[-1], self.n))
        return b

    def segment_score(self, s: int, a: int, b: int) -> float:
        key = (s, a)
        vec = self._cache.get(key)
        if vec is None or len(vec) <= b - a:
            seg = self._segments[s]
            if s == 0 or s == self.k:
                stop = self.n
            else:
                stop = min(self.n, max(a + self.template.max_gap, b))
            vec = _segment_exit_scores(seg, self.codes[a:stop], self.flank)
            if self.cache_enabled:
                self._cache[key] = vec
        value = float(vec[b - a])
        return value if value < INF else self.impossible

    def _pair_value(self, idx: int, placement: Sequence[int]) -> float:
        first, second, fo, so, which = self._pairs[idx]
        earlier = self.codes[placement[first] + fo]
        later = self.codes[placement[second] + so]
        return float(self._stacked[which, later, earlier].sum())

    # public ---------------------------------------------------------------
    def breakdown(self, placement: Sequence[int]) -> ScoreBreakdown:
        placement = tuple(int(p) for p in placement)
        self.evaluations += 1
        segs = tuple(self.segment_score(s, a, b) for s, (a, b) in enumerate(self._bounds(placement)))
        strands = tuple(float(self._strand[i][p]) for i, p in enumerate(placement))
        pairs = tuple(self._pair_value(i, placement) for i in range(len(self._pairs)))
        total = sum(segs) + sum(strands) + sum(pairs)
        return ScoreBreakdown(total, segs, strands, pairs)

    def score(self, placement: Sequence[int]) -> float:
        return self.breakdown(placement).total

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state


def placement_score(template: MrfTemplate, query, placement: Sequence[int],
                    tables: PairScoreTables, flank: float = 0.0) -> ScoreBreakdown:
    codes = as_codes(query)
    problem = legality_problem(placement, template, len(codes))
    if problem:
        raise IllegalPlacement(problem)
    return PlacementScorer(template, codes, tables, flank=flank).breakdown(placement)


# ---------------------------------------------------------------------------
# full-model Viterbi and the exhaustive optimum


def viterbi_model(template: MrfTemplate, query, flank: float = 0.0) -> float:
    """Plain Viterbi over the whole template, ignoring strand pairs.

    Written independently of the segment machinery: strand nodes are simply
    match-only states whose incident transitions are free.
    """
    codes = as_codes(query)
    L = len(codes)
    nodes = template.nodes
    m = len(nodes)
    if m == 0:
        raise ValueError("template has no nodes")
    strand = [n.kind is NodeKind.STRAND for n in nodes]

    def cost(j_from, j_to, value):
        # transition from node j_from to node j_to (either may be -1 = begin / m = end)
        if (0 <= j_from < m and strand[j_from]) or (0 <= j_to < m and strand[j_to]):
            return 0.0
        return value

    Bv = [0.0] * (L + 1)
    for t in range(1, L + 1):
        Bv[t] = Bv[t - 1] + flank
    prevM = prevI = prevD = None
    for j in range(m):
        node = nodes[j]
        a_prev = nodes[j - 1].transitions if j else None
        M = [INF] * (L + 1)
        I = [INF] * (L + 1)
        D = [INF] * (L + 1)
        insert_ok = not strand[j] and j != m - 1
        for t in range(L + 1):
            if t:
                x = codes[t - 1]
                if j == 0:
                    best = Bv[t - 1] + cost(-1, 0, template.begin.to_match)
                else:
                    best = min(prevM[t - 1] + cost(j - 1, j, a_prev.mm),
                               prevD[t - 1] + cost(j - 1, j, a_prev.dm),
                               prevI[t - 1] + cost(j - 1, j, a_prev.im))
                M[t] = node.match[x] + best
                if insert_ok:
                    I[t] = node.insert[x] + min(M[t - 1] + node.transitions.mi,
                                                I[t - 1] + node.transitions.ii)
            if strand[j]:
                continue
            if j == 0:
                D[t] = Bv[t] + template.begin.to_delete
            else:
                D[t] = min(prevM[t] + cost(j - 1, j, a_prev.md), prevD[t] + cost(j - 1, j, a_prev.dd))
        prevM, prevI, prevD = M, I, D
    a = nodes[-1].transitions
    best = INF
    for t in range(L + 1):
        e = min(prevM[t] + cost(m - 1, m, a.mm), prevD[t] + cost(m - 1, m, a.dm))
        best = min(e, best + flank)
    return best if best < INF else impossible_cost(L)


def _best_over(scorer: PlacementScorer, placements) -> tuple[tuple[int, ...] | None, float, int]:
    best_p, best_s, seen = None, INF, 0
    for p in placements:
        seen += 1
        s = scorer.score(p)
        if s < best_s:
            best_p, best_s = p, s
    return best_p, best_s, seen


def _oracle_chunk(args):
    template, codes, tables, flank, starts = args
    scorer = PlacementScorer(template, codes, tables, flank=flank)
    return _best_over(scorer, enumerate_placements(template, len(codes), first_starts=starts))


def exhaustive_optimum(template: MrfTemplate, query, tables: PairScoreTables,
                       cap: int = DEFAULT_CAP, flank: float = 0.0, workers: int = 1):
    """Minimum-score legal placement by brute-force enumeration.

    Ties go to the lexicographically smallest placement.  With several
    workers the first strand's start positions are partitioned among them;
    the answer does not depend on the partition.
    """
    codes = as_codes(query)
    n = len(codes)
    count = count_placements(template, n, use_max_gap=True)
    if count > cap:
        raise PlacementCapExceeded(count, cap)
    if count == 0:
        raise IllegalPlacement("no legal placement: strands do not fit in the query")
    scorer = PlacementScorer(template, codes, tables, flank=flank)
    if workers <= 1 or not template.strands:
        best_p, _, _ = _best_over(scorer, enumerate_placements(template, n))
    else:
        starts = sorted(_suffix_counts(template.strand_lengths, 0, n, template.max_gap)[0])
        chunks = [starts[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_oracle_chunk, [(template, codes, tables, flank, c) for c in chunks if c]))
        best_p = min((r for r in results if r[0] is not None), key=lambda r: (r[1], r[0]))[0]
    return best_p, scorer.breakdown(best_p)
