from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import AA, TABLES, training_fixture
from strandmrf.model import DEFAULT_BACKGROUND, Exposure, NodeKind, Orientation, PairScoreTables, validate
from strandmrf.train import (
    AlignedRow,
    MultipleAlignment,
    StrandAnnotation,
    StrandAnnotationSet,
    TrainingConfig,
    TrainingError,
    build_template,
    choose_exposure,
    consensus_strands,
    estimate_template,
    mark_consensus_columns,
    resolve_exposures,
    simulated_evolution,
    template_from_consensus,
    topology,
)


def msa(*seqs):
    return MultipleAlignment(tuple(AlignedRow(f"s{i}", s) for i, s in enumerate(seqs)))


def test_alignment_invariants():
    with pytest.raises(TrainingError, match="empty alignment"):
        MultipleAlignment(())
    with pytest.raises(TrainingError, match="widths"):
        msa("AC", "ACD")


def test_mark_consensus_columns():
    rows = ["A-" + "-"] * 7 + ["AC" + "-"] * 3
    cols = mark_consensus_columns(msa(*rows), 0.2)
    assert list(cols) == [True, True, False]  # 3/10 >= 0.2; all-gap column is insert


def test_consensus_strands_on_fixture():
    alignment, ann = training_fixture()
    c = consensus_strands(alignment, ann, 0.5)
    assert c.strands == ((4, 8), (19, 23))  # 0-based: columns 5-9 and 20-24
    assert not c.beta[12:15].any()  # only 2/6 rows annotate 13-15
    assert len(c.pairs) == 1 and c.pairs[0].orientation is Orientation.ANTIPARALLEL
    # r3 has a gap inside strand A; it is replaced so the strand is contiguous
    assert alignment.rows[2].sequence[7] == "-"
    assert c.alignment.rows[2].sequence[7] == "X"
    assert c.alignment.rows[2].sequence[14] == alignment.rows[2].sequence[14]


def test_fraction_is_strict():
    alignment, ann = training_fixture()
    assert consensus_strands(alignment, ann, 4 / 6).strands == ()
    assert len(consensus_strands(alignment, ann, 0.3).strands) == 3


def test_bad_annotations_rejected():
    alignment, _ = training_fixture()
    out_of_range = StrandAnnotationSet({"r1": [StrandAnnotation(28, 33)]})
    with pytest.raises(TrainingError, match="outside"):
        consensus_strands(alignment, out_of_range)
    overlapping = StrandAnnotationSet({"r1": [StrandAnnotation(5, 9, 8, 12)]})
    with pytest.raises(TrainingError, match="overlaps"):
        consensus_strands(alignment, overlapping)
    uneven = StrandAnnotationSet({"r1": [StrandAnnotation(5, 9, 20, 25)]})
    with pytest.raises(TrainingError, match="differ in length"):
        consensus_strands(alignment, uneven)


def test_estimate_template_fixture():
    alignment, ann = training_fixture()
    t = estimate_template(alignment, ann, TrainingConfig(), TABLES)
    assert validate(t) == []
    assert topology(t) == (((5, 5), (20, 5)), ((0, 1, Orientation.ANTIPARALLEL),))
    assert all(t.node(i).kind is NodeKind.STRAND for i in range(5, 10))
    assert t.max_gap == 10 + 20


def test_single_row_degenerate_counts():
    t = estimate_template(msa("ACD"), StrandAnnotationSet(), TrainingConfig(pseudocount=1e-9), TABLES)
    assert t.n_nodes == 3 and t.strands == ()
    for node, aa in zip(t.nodes, "ACD"):
        k = AA[aa]
        prob = DEFAULT_BACKGROUND[k] * math.exp(-node.match[k])
        assert prob == pytest.approx(1.0, abs=1e-6)


def test_uniform_column_gives_equal_scores():
    residues = "ACDEFGHIKLMNPQRSTVWY"
    cfg = TrainingConfig(background=(0.05,) * 20)
    t = estimate_template(msa(*residues), StrandAnnotationSet(), cfg, TABLES)
    scores = t.nodes[0].match[:20]
    assert np.allclose(scores, scores[0], atol=1e-12)


def test_emission_score_decreases_with_count():
    base = ["A", "C", "D", "E", "F"]
    prev = math.inf
    for extra in range(4):
        t = estimate_template(msa(*(base + ["A"] * extra)), StrandAnnotationSet(), TrainingConfig(), TABLES)
        score = t.nodes[0].match[AA["A"]]
        assert score < prev
        prev = score


def test_max_gap_from_longest_inter_strand_run():
    # strands at columns 1-3 and 13-15; the rows carry 7, 5 and 3 residues between them
    rows = ["VKV" + "GSDGKPL--" + "EVR",
            "VRV" + "GS--KP-L-" + "EIR",
            "IKV" + "G--D--L--" + "EVK"]
    ann_entry = [StrandAnnotation(1, 3, 13, 15, Orientation.ANTIPARALLEL)]
    ann = StrandAnnotationSet({f"s{i}": ann_entry for i in range(3)})
    t = estimate_template(msa(*rows), ann, TrainingConfig(max_gap_slack=20), TABLES)
    assert t.max_gap == 27


def test_no_match_columns_is_an_error():
    with pytest.raises(TrainingError, match="no match columns"):
        estimate_template(msa("A--", "-C-", "--D"), StrandAnnotationSet(), TrainingConfig(symfrac=0.5), TABLES)


def test_training_config_validation():
    with pytest.raises(TrainingError):
        TrainingConfig(symfrac=1.5)
    with pytest.raises(TrainingError):
        TrainingConfig(pseudocount=0)


# ---------------------------------------------------------------------------
# exposure


def test_choose_exposure_examples():
    assert choose_exposure(msa("AA", "AA"), (0,), (1,), TABLES) == (Exposure.BURIED,)
    # earlier K, later E: buried 2.19 vs exposed 1.84
    assert choose_exposure(msa("KE", "KE"), (0,), (1,), TABLES) == (Exposure.EXPOSED,)
    same = PairScoreTables(TABLES.buried, TABLES.buried)
    assert choose_exposure(msa("KE"), (0,), (1,), same) == (Exposure.BURIED,)


def test_choose_exposure_invariant_under_duplication():
    alignment, ann = training_fixture()
    c = consensus_strands(alignment, ann)
    cp = c.pairs[0]
    once = choose_exposure(c.alignment, cp.first_columns, cp.second_columns, TABLES)
    doubled = MultipleAlignment(c.alignment.rows * 2)
    assert choose_exposure(doubled, cp.first_columns, cp.second_columns, TABLES) == once


def test_exposure_hints_override_choice():
    alignment, _ = training_fixture()
    hints = (Exposure.EXPOSED,) * 5
    entry = [StrandAnnotation(5, 9, 20, 24, Orientation.ANTIPARALLEL, hints)]
    ann = StrandAnnotationSet({f"r{i}": entry for i in range(1, 5)})
    c = consensus_strands(alignment, ann)
    assert resolve_exposures(c.alignment, c, TABLES) == [hints]


# ---------------------------------------------------------------------------
# simulated evolution


def simev_setup():
    alignment, ann = training_fixture()
    c = consensus_strands(alignment, ann)
    return c


def test_simev_counts_and_identity():
    c = simev_setup()
    out = simulated_evolution(c.alignment, c, TABLES, rate=0.0, count=150, seed=1)
    assert len(out) == len(c.alignment) * 151
    for row in out.rows:
        original = next(r for r in c.alignment.rows if r.name == row.source)
        assert row.sequence == original.sequence
    assert simulated_evolution(c.alignment, c, TABLES, rate=0.7, count=0) == c.alignment


def test_simev_rejects_bad_rate():
    c = simev_setup()
    for rate in (-0.1, 1.1):
        with pytest.raises(ValueError):
            simulated_evolution(c.alignment, c, TABLES, rate=rate, count=1)


def test_simev_only_touches_later_paired_positions():
    c = simev_setup()
    out = simulated_evolution(c.alignment, c, TABLES, rate=1.0, count=20, seed=3)
    later = set(c.pairs[0].second_columns)
    originals = {r.name: r.sequence for r in c.alignment.rows}
    for row in out.rows:
        orig = originals[row.source]
        changed = {i for i, (a, b) in enumerate(zip(orig, row.sequence)) if a != b}
        assert changed <= later
        if row.origin is not None:
            assert changed == later  # rate 1 always mutates, and never to the same residue


def test_simev_deterministic_and_seeded():
    c = simev_setup()
    a = simulated_evolution(c.alignment, c, TABLES, 0.5, 30, seed=9)
    b = simulated_evolution(c.alignment, c, TABLES, 0.5, 30, seed=9)
    d = simulated_evolution(c.alignment, c, TABLES, 0.5, 30, seed=10)
    assert a == b and a != d


def test_simev_follows_conditional_distribution():
    # one pair position with earlier residue fixed; check sample frequencies
    rows = ["AVKVA" + "GG" + "AVKVA"] * 1
    ann = StrandAnnotationSet({"s0": [StrandAnnotation(2, 4, 8, 10, Orientation.PARALLEL)]})
    c = consensus_strands(msa(*rows), ann, 0.5)
    exposures = [(Exposure.BURIED,) * 3]
    out = simulated_evolution(c.alignment, c, TABLES, 1.0, 20000, seed=4, exposures=exposures)
    earlier, col = c.pairs[0].first_columns[0], c.pairs[0].second_columns[0]
    seq = c.alignment.rows[0].sequence
    counts = np.zeros(20)
    for row in out.rows[1:]:
        counts[AA[row.sequence[col]]] += 1
    w = np.exp(-TABLES.buried[:20, AA[seq[earlier]]])
    w[AA[seq[col]]] = 0
    expect = w / w.sum()
    assert np.abs(counts / counts.sum() - expect).max() < 0.015


def test_retraining_augmented_keeps_topology():
    alignment, ann = training_fixture()
    plain = estimate_template(alignment, ann, TrainingConfig(), TABLES)
    augmented = build_template(alignment, ann, TrainingConfig(), TABLES, simev_count=150, simev_rate=0.5, seed=2)
    assert topology(augmented) == topology(plain)
    assert validate(augmented) == []
    c = consensus_strands(alignment, ann)
    data = simulated_evolution(c.alignment, c, TABLES, 0.5, 40, seed=5)
    again = template_from_consensus(data, c, TrainingConfig(), TABLES)
    assert topology(again) == topology(plain)
