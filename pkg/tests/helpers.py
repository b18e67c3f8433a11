"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np

from strandmrf.model import (
    ALPHABET,
    Exposure,
    MrfTemplate,
    Orientation,
    StrandPair,
    assemble,
    encode,
    plain_node,
)
from strandmrf.synthetic import random_emissions, random_transitions
from strandmrf.tables import default_tables
from strandmrf.train import AlignedRow, MultipleAlignment, StrandAnnotation, StrandAnnotationSet

TABLES = default_tables()
AA = {a: i for i, a in enumerate(ALPHABET)}

# frozen from the shipped TSVs after an independent re-sum of the source grids
BURIED_SUM = "1815.65"
EXPOSED_SUM = "1674.51"
BURIED_SHA256 = "4e10fdea275360452e86ee230e49ea05c9e1c361938408f026fb54c9bf9127c5"
EXPOSED_SHA256 = "4d6e76972cdea0a5068920cae8ba21018cde23c8dbbdfebd356ed420d35ee09b"


# ---------------------------------------------------------------------------
# topology fixtures


def topology_template(n_strands: int, pairs, length: int = 3, loop: int = 2, seed: int = 0) -> MrfTemplate:
    """``n_strands`` strands of equal length separated by ``loop`` regular nodes."""
    rng = np.random.default_rng(seed)
    n_nodes = loop + n_strands * (length + loop)
    nodes = [plain_node(i, random_emissions(rng), random_emissions(rng), random_transitions(rng))
             for i in range(1, n_nodes + 1)]
    spans = [(loop + 1 + i * (length + loop), length) for i in range(n_strands)]
    sp = [StrandPair(a, b, Orientation.ANTIPARALLEL, (Exposure.BURIED,) * length) for a, b in pairs]
    return assemble(nodes, spans, sp, max_gap=3 * loop + 10, name=f"{n_strands}-strand")


def up_and_down(n: int = 5) -> MrfTemplate:
    return topology_template(n, [(i, i + 1) for i in range(n - 1)])


def greek_key() -> MrfTemplate:
    # strands 1-2, 2-3 adjacent; strand 4 folds back next to strand 1
    return topology_template(4, [(0, 1), (1, 2), (0, 3)])


# jelly roll, strands numbered in sequence order 0..7; sheet neighbours
# follow the classic two-sheet roll, with the two chain termini paired
JELLY_ROLL_PAIRS = [(0, 1), (0, 7), (2, 7), (2, 5), (4, 5), (3, 4), (3, 6)]
JELLY_ROLL_INTERLEAVES = {(0, 1): 1, (0, 7): 7, (2, 7): 5, (2, 5): 3, (4, 5): 1, (3, 4): 1, (3, 6): 3}


def jelly_roll() -> MrfTemplate:
    return topology_template(8, JELLY_ROLL_PAIRS)


# ---------------------------------------------------------------------------
# brute-force segment oracle


def brute_force_segment(nodes, residues, entry="strand", exit="strand", begin=None, flank=0.0) -> float:
    """Minimum over every explicit Plan7 path; no dynamic programming."""
    codes = [int(c) for c in encode(residues)] if isinstance(residues, str) else list(residues)
    L, m = len(codes), len(nodes)
    from_begin, to_end = entry == "begin", exit == "end"
    if m == 0:
        if from_begin or to_end:
            return L * flank
        return 0.0 if L == 0 else math.inf
    best = math.inf
    for states in itertools.product("MD", repeat=m):
        n_match = states.count("M")
        if n_match > L:
            continue
        spare = L - n_match
        # residues in N flank, inserts after each node, C flank
        slots = []
        slots.append("N" if from_begin else None)
        for j in range(m):
            last = j == m - 1
            ok = states[j] == "M" and not (last and to_end)
            # an insert run must be followed by M (no I->D edge)
            if not last and states[j + 1] == "D":
                ok = False
            slots.append(j if ok else None)
        slots.append("C" if to_end else None)
        open_slots = [i for i, s in enumerate(slots) if s is not None]
        for dist in _compositions(spare, len(open_slots)):
            runs = [0] * len(slots)
            for i, r in zip(open_slots, dist):
                runs[i] = r
            best = min(best, _path_cost(nodes, codes, states, runs, from_begin, to_end, begin, flank))
    return best


def _compositions(total, parts):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _path_cost(nodes, codes, states, runs, from_begin, to_end, begin, flank):
    t = 0
    cost = runs[0] * flank
    t += runs[0]
    if from_begin:
        cost += begin.to_match if states[0] == "M" else begin.to_delete
    m = len(nodes)
    for j in range(m):
        node = nodes[j]
        a = node.transitions
        if states[j] == "M":
            cost += node.match[codes[t]]
            t += 1
        r = runs[j + 1]
        if r:
            cost += a.mi + (r - 1) * a.ii
            for _ in range(r):
                cost += node.insert[codes[t]]
                t += 1
        if j < m - 1:
            nxt = states[j + 1]
            if r:
                cost += a.im
            else:
                cost += {("M", "M"): a.mm, ("M", "D"): a.md, ("D", "M"): a.dm, ("D", "D"): a.dd}[(states[j], nxt)]
        elif to_end:
            cost += a.mm if states[j] == "M" else a.dm
    cost += runs[-1] * flank
    t += runs[-1]
    assert t == len(codes)
    return cost


# ---------------------------------------------------------------------------
# pair term computed by hand


def pair_total(template: MrfTemplate, query: str, placement) -> float:
    total = 0.0
    for p in template.pairs:
        length = template.strand(p.first).length
        for i in range(length):
            j = i if p.orientation is Orientation.PARALLEL else length - 1 - i
            earlier = query[placement[p.first] + i]
            later = query[placement[p.second] + j]
            table = TABLES.buried if p.exposure[i] is Exposure.BURIED else TABLES.exposed
            total += table[AA[later], AA[earlier]]
    return total


# ---------------------------------------------------------------------------
# six-row training fixture
#
# columns (1-based): 1-4 loop, 5-9 strand A, 10-19 loop, 20-24 strand B,
# 25-30 loop.  Rows r1-r4 annotate A paired antiparallel with B; r5 and r6
# annotate columns 13-15 as an unpaired strand (2/6 rows, below consensus).

TRAIN_ROWS = [
    ("r1", "MKTAVKVTVNGSDGKPLTEIRVEVEGSPKQ"),
    ("r2", "MKSAIRVEVNGTDG-PLSQVKVTIEGNPKE"),
    ("r3", "MRTGVKV-VNGSEGKPLTEIRVEVDGSP--"),
    ("r4", "-KTAVEVTIHGSDGRPMTEVRIEVEGSAKQ"),
    ("r5", "MKTAVKVTVNG--GKPLTDIRVEVEGSPKQ"),
    ("r6", "MKQAVKVSVNGSDGKALTEIKVEIEGT-KQ"),
]


def training_fixture():
    alignment = MultipleAlignment(tuple(AlignedRow(n, s) for n, s in TRAIN_ROWS))
    paired = [StrandAnnotation(5, 9, 20, 24, Orientation.ANTIPARALLEL)]
    lone = [StrandAnnotation(13, 15)]
    ann = StrandAnnotationSet({"r1": paired, "r2": paired, "r3": paired, "r4": paired,
                               "r5": lone, "r6": lone})
    return alignment, ann


# ---------------------------------------------------------------------------
# pinned full-model Viterbi: strand residues fixed, everything else optimised


def pinned_viterbi(template: MrfTemplate, query: str, placement, flank: float = 0.0) -> float:
    """Whole-model Viterbi where strand node residues are dictated by ``placement``.

    Written over the full node list (not per segment) so that it checks the
    decomposition used by the production scorer.
    """
    codes = [AA[c] for c in query]
    L = len(codes)
    nodes = template.nodes
    m = len(nodes)
    pin = {}
    for s, p in zip(template.strands, placement):
        for o, node_index in enumerate(s.nodes()):
            pin[node_index - 1] = p + o  # 0-based residue consumed by this node
    strand = [j in pin for j in range(m)]
    inf = math.inf

    def tcost(j_from, j_to, value):
        if (0 <= j_from < m and strand[j_from]) or (0 <= j_to < m and strand[j_to]):
            return 0.0
        return value

    N = [t * flank for t in range(L + 1)]
    prev = None
    for j in range(m):
        node = nodes[j]
        a_prev = nodes[j - 1].transitions if j else None
        M = [inf] * (L + 1)
        I = [inf] * (L + 1)
        D = [inf] * (L + 1)
        for t in range(L + 1):
            if t and (not strand[j] or pin[j] == t - 1):
                if j == 0:
                    into = N[t - 1] + tcost(-1, 0, template.begin.to_match)
                else:
                    into = min(prev[0][t - 1] + tcost(j - 1, j, a_prev.mm),
                               prev[1][t - 1] + tcost(j - 1, j, a_prev.im),
                               prev[2][t - 1] + tcost(j - 1, j, a_prev.dm))
                M[t] = into + node.match[codes[t - 1]]
            if strand[j]:
                continue
            if t and j < m - 1:
                I[t] = node.insert[codes[t - 1]] + min(M[t - 1] + node.transitions.mi,
                                                       I[t - 1] + node.transitions.ii)
            if j == 0:
                D[t] = N[t] + template.begin.to_delete
            else:
                D[t] = min(prev[0][t] + tcost(j - 1, j, a_prev.md), prev[2][t] + tcost(j - 1, j, a_prev.dd))
        prev = (M, I, D)
    a = nodes[-1].transitions
    last_strand = strand[-1]
    best = inf
    for t in range(L + 1):
        end = min(prev[0][t] + (0.0 if last_strand else a.mm), prev[2][t] + (0.0 if last_strand else a.dm))
        best = min(best + flank, end)
    return best


def joint_oracle(template: MrfTemplate, query: str, flank: float = 0.0):
    """Minimum over every legal placement of pinned Viterbi plus hand-summed pairs."""
    from strandmrf.score import enumerate_placements

    best, arg = math.inf, None
    for p in enumerate_placements(template, len(query)):
        s = pinned_viterbi(template, query, p, flank) + pair_total(template, query, p)
        if s < best:
            best, arg = s, p
    return arg, best
