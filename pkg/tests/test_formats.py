from __future__ import annotations

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TABLES, jelly_roll, training_fixture
from strandmrf.formats import (
    HIT_COLUMNS,
    FormatError,
    HitRecord,
    HitWriter,
    TemplateDocument,
    annotations_from_dict,
    annotations_to_dict,
    clean_query,
    iter_labeled,
    read_alignment,
    read_fasta,
    read_hits,
    template_from_dict,
    template_to_dict,
    write_fasta,
)
from strandmrf.model import Exposure, Orientation
from strandmrf.search import LsConfig, SearchConfig, TerminationPolicy
from strandmrf.stats import Calibration, EvdParams
from strandmrf.synthetic import random_template
from strandmrf.train import StrandAnnotation, StrandAnnotationSet


def test_read_fasta_basic():
    text = ">q1 description\nacd\nEFG\n\n>q2\nKL*\n"
    assert read_fasta(io.StringIO(text)) == [("q1", "acdEFG"), ("q2", "KL*")]
    with pytest.raises(FormatError, match="before the first header"):
        read_fasta(io.StringIO("ACD\n>q\nA\n"))
    with pytest.raises(FormatError, match="without an id"):
        read_fasta(io.StringIO(">\nA\n"))


def test_clean_query():
    assert clean_query("acdBZuO*") == "ACDXXXX"
    assert clean_query("AC-D.E") == "ACDE"


def test_read_alignment(tmp_path):
    p = tmp_path / "a.fa"
    p.write_text(">a\nAC-b\n>b\nA.CD\n")
    aln = read_alignment(p)
    assert [r.sequence for r in aln.rows] == ["AC-X", "A.CD"]
    p.write_text("")
    with pytest.raises(FormatError, match="empty alignment"):
        read_alignment(p)
    p.write_text(">a\nAC\n>b\nACD\n")
    with pytest.raises(FormatError):
        read_alignment(p)


def test_write_fasta_round_trip():
    records = [("x", "A" * 130), ("y", "CDE")]
    buf = io.StringIO()
    write_fasta(records, buf)
    assert max(len(line) for line in buf.getvalue().splitlines()) == 60
    assert read_fasta(io.StringIO(buf.getvalue())) == records


def test_annotations_round_trip():
    _, ann = training_fixture()
    d = annotations_to_dict(ann)
    assert annotations_from_dict(json.loads(json.dumps(d))) == ann
    hinted = StrandAnnotationSet({"r": [StrandAnnotation(1, 2, 5, 6, Orientation.PARALLEL,
                                                         (Exposure.EXPOSED, Exposure.BURIED))]})
    assert annotations_from_dict(annotations_to_dict(hinted)) == hinted
    with pytest.raises(FormatError):
        annotations_from_dict({"rows": {"r": [{"span": [1]}]}})
    with pytest.raises(FormatError):
        annotations_from_dict({"rows": {"r": [{"span": [1, 3], "orientation": "sideways"}]}})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_template_round_trip(seed, k):
    rng = np.random.default_rng(seed)
    t = random_template(rng, 3 * k + 6, (3,) * k, n_pairs=min(k // 2, 2))
    again = template_from_dict(json.loads(json.dumps(template_to_dict(t))))
    assert again == t


def test_document_round_trip(tmp_path):
    cfg = SearchConfig(strategy="ls", ls=LsConfig(4), termination=TerminationPolicy(max_generations=5))
    doc = TemplateDocument(jelly_roll(), TABLES, "builtin", Calibration(EvdParams(-3.5, 1.25, 100), cfg),
                           {"simev": {"count": 150, "rate": 0.5}})
    path = tmp_path / "t.json"
    doc.save(path)
    back = TemplateDocument.load(path)
    assert back.template == doc.template and back.calibration == doc.calibration
    assert back.tables == TABLES and back.provenance == doc.provenance
    assert back.dumps() == doc.dumps()


def test_document_version_checks():
    d = TemplateDocument(jelly_roll(), TABLES).to_dict()
    del d["version"]
    with pytest.raises(FormatError, match="no version"):
        TemplateDocument.from_dict(d)
    d["version"] = 99
    with pytest.raises(FormatError, match="unsupported"):
        TemplateDocument.from_dict(d)
    with pytest.raises(FormatError):
        TemplateDocument.loads("{not json")
    with pytest.raises(FormatError):
        TemplateDocument.from_dict({"format": "something-else"})


def test_hit_writer_rows():
    buf = io.StringIO()
    w = HitWriter(buf)
    w.write(HitRecord("q1", 12.5, 0.001234567, (0, 7), 10, 1.23456, "ls", 3, significant=True))
    w.write(HitRecord("q2", None, None, None, None, None, "ls", 3, status="INFEASIBLE"))
    lines = buf.getvalue().splitlines()
    assert lines[0].split("\t") == HIT_COLUMNS
    assert lines[1].split("\t") == ["q1", "12.5", "0.00123457", "0,7", "10", "1.235", "ls", "3", "OK", "true"]
    assert lines[2].split("\t")[:6] == ["q2", "NA", "NA", "NA", "NA", "NA"]
    rows = read_hits(io.StringIO(buf.getvalue()))
    assert rows[1]["status"] == "INFEASIBLE"


def test_hit_writer_exact_and_no_timing():
    buf = io.StringIO()
    w = HitWriter(buf, exact=True, timing=False)
    w.write(HitRecord("q", 1.0, None, (), 0, 9.9, "oracle", None, exact=True, candidates=1))
    header, row = (line.split("\t") for line in buf.getvalue().splitlines())
    assert header[-2:] == ["exact", "candidates"]
    assert row[5] == "NA" and row[-2:] == ["true", "1"]


def test_raw_score_round_trips_exactly():
    x = 0.1 + 0.2
    buf = io.StringIO()
    HitWriter(buf).write(HitRecord("q", x, None, (1,), 1, 0.0, "sa", 0))
    assert float(read_hits(io.StringIO(buf.getvalue()))[0]["raw_score"]) == x


def test_iter_labeled():
    rows = [{"query_id": "a", "raw_score": "1.5", "label": "1"},
            {"query_id": "b", "raw_score": "NA", "label": "0"},
            {"query_id": "c", "raw_score": "2.5", "label": "negative"}]
    assert list(iter_labeled(rows)) == [("a", 1.5, True), ("c", 2.5, False)]
    with pytest.raises(FormatError, match="no 'truth' column"):
        list(iter_labeled(rows, "truth"))
    with pytest.raises(FormatError, match="unrecognised"):
        list(iter_labeled([{"query_id": "a", "raw_score": "1", "label": "maybe"}]))
