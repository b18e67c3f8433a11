"""File formats: FASTA, strand annotations, template documents and hits tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .model import (
    ALPHABET,
    BeginTransitions,
    BetaStrand,
    Exposure,
    MrfTemplate,
    NodeKind,
    NodeTransitions,
    Orientation,
    PairScoreTables,
    StrandPair,
    TemplateNode,
)
from .stats import Calibration
from .train import AlignedRow, MultipleAlignment, StrandAnnotation, StrandAnnotationSet

FORMAT_NAME = "strandmrf-template"
FORMAT_VERSION = 1
STANDARD_SET = frozenset(ALPHABET[:20])


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# FASTA


def read_fasta(handle: IO[str] | str | Path) -> list[tuple[str, str]]:
    """``(id, sequence)`` records; the id is the first word of the header."""
    text = Path(handle).read_text() if isinstance(handle, (str, Path)) else handle.read()
    records: list[tuple[str, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            header = line[1:].split()
            if not header:
                raise FormatError(f"line {lineno}: FASTA header without an id")
            records.append((header[0], []))
        elif not records:
            raise FormatError(f"line {lineno}: sequence data before the first header")
        else:
            records[-1][1].append("".join(line.split()))
    return [(name, "".join(parts)) for name, parts in records]


def clean_query(seq: str) -> str:
    """Uppercase; anything outside the 20 standard residues becomes X."""
    return "".join(c if c in STANDARD_SET else "X" for c in seq.upper() if c not in "*-.")


def read_queries(path: str | Path) -> list[tuple[str, str]]:
    return [(name, clean_query(seq)) for name, seq in read_fasta(path)]


def read_alignment(path: str | Path) -> MultipleAlignment:
    records = read_fasta(path)
    if not records:
        raise FormatError("empty alignment")
    rows = []
    for name, seq in records:
        seq = seq.upper()
        rows.append(AlignedRow(name, "".join(c if c in STANDARD_SET or c in "-." else "X" for c in seq)))
    try:
        return MultipleAlignment(tuple(rows))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write_fasta(records: Iterable[tuple[str, str]], handle: IO[str], width: int = 60) -> None:
    for name, seq in records:
        handle.write(f">{name}\n")
        for i in range(0, max(len(seq), 1), width):
            handle.write(seq[i:i + width] + "\n")


# ---------------------------------------------------------------------------
# strand annotations
#
# {"rows": {"row name": [{"span": [10, 14], "partner": [30, 34],
#                         "orientation": "antiparallel",
#                         "exposure": ["buried", ...]}]}}
# Columns are 1-based and inclusive; "partner" and "exposure" are optional.


def annotations_from_dict(d: dict) -> StrandAnnotationSet:
    try:
        rows = {}
        for name, entries in d["rows"].items():
            anns = []
            for e in entries:
                lo, hi = e["span"]
                partner = e.get("partner")
                exposure = e.get("exposure")
                anns.append(StrandAnnotation(
                    int(lo), int(hi),
                    None if partner is None else int(partner[0]),
                    None if partner is None else int(partner[1]),
                    Orientation(e.get("orientation", "antiparallel")),
                    None if exposure is None else tuple(Exposure(x) for x in exposure),
                ))
            rows[name] = anns
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad annotation file: {exc}") from exc
    return StrandAnnotationSet(rows)


def annotations_to_dict(ann: StrandAnnotationSet) -> dict:
    rows = {}
    for name, entries in ann.rows.items():
        out = []
        for a in entries:
            e = {"span": [a.start, a.end], "orientation": Orientation(a.orientation).value}
            if a.partner_start is not None:
                e["partner"] = [a.partner_start, a.partner_end]
            if a.exposure is not None:
                e["exposure"] = [Exposure(x).value for x in a.exposure]
            out.append(e)
        rows[name] = out
    return {"rows": rows}


def read_annotations(path: str | Path) -> StrandAnnotationSet:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return annotations_from_dict(data)


# ---------------------------------------------------------------------------
# template documents


def _floats(a) -> list[float]:
    return [float(x) for x in a]


def template_to_dict(t: MrfTemplate) -> dict:
    return {
        "name": t.name,
        "max_gap": t.max_gap,
        "begin": {"to_match": t.begin.to_match, "to_delete": t.begin.to_delete},
        "background": _floats(t.background),
        "nodes": [{
            "index": n.index,
            "kind": n.kind.value,
            "match": _floats(n.match),
            "insert": _floats(n.insert),
            "transitions": dict(zip(NodeTransitions.NAMES, n.transitions.as_tuple())),
        } for n in t.nodes],
        "strands": [{"id": s.id, "start_node": s.start_node, "length": s.length} for s in t.strands],
        "pairs": [{"first": p.first, "second": p.second, "orientation": p.orientation.value,
                   "exposure": [e.value for e in p.exposure]} for p in t.pairs],
    }


def template_from_dict(d: dict) -> MrfTemplate:
    try:
        nodes = tuple(TemplateNode(
            int(n["index"]), NodeKind(n["kind"]),
            np.array(n["match"], dtype=float), np.array(n["insert"], dtype=float),
            NodeTransitions(**{k: float(v) for k, v in n["transitions"].items()}),
        ) for n in d["nodes"])
        return MrfTemplate(
            nodes=nodes,
            strands=tuple(BetaStrand(int(s["id"]), int(s["start_node"]), int(s["length"])) for s in d["strands"]),
            pairs=tuple(StrandPair(int(p["first"]), int(p["second"]), Orientation(p["orientation"]),
                                   tuple(Exposure(e) for e in p["exposure"])) for p in d["pairs"]),
            max_gap=int(d["max_gap"]),
            name=str(d.get("name", "template")),
            begin=BeginTransitions(**d.get("begin", {})),
            background=np.array(d["background"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad template: {exc}") from exc


@dataclass
class TemplateDocument:
    template: MrfTemplate
    tables: PairScoreTables
    table_source: str = "builtin"
    calibration: Calibration | None = None
    provenance: dict | None = None

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "template": template_to_dict(self.template),
            "pair_tables": {"source": self.table_source,
                            "buried": [_floats(r) for r in self.tables.buried],
                            "exposed": [_floats(r) for r in self.tables.exposed]},
            "calibration": None if self.calibration is None else self.calibration.to_dict(),
            "provenance": self.provenance or {},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateDocument":
        if d.get("format") != FORMAT_NAME:
            raise FormatError("not a template document")
        if "version" not in d:
            raise FormatError("template document has no version")
        if d["version"] != FORMAT_VERSION:
            raise FormatError(f"unsupported template document version {d['version']}")
        try:
            pt = d["pair_tables"]
            tables = PairScoreTables(np.array(pt["buried"], dtype=float), np.array(pt["exposed"], dtype=float))
            if tables.buried.shape != (21, 21) or tables.exposed.shape != (21, 21):
                raise FormatError("pair tables must be 21x21")
            calibration = None if d.get("calibration") is None else Calibration.from_dict(d["calibration"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad template document: {exc}") from exc
        return cls(template_from_dict(d["template"]), tables, pt.get("source", "inline"),
                   calibration, d.get("provenance") or {})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TemplateDocument":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise FormatError(f"template document is not valid JSON ({exc})") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "TemplateDocument":
        return cls.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# hits tables

HIT_COLUMNS = ["query_id", "raw_score", "p_value", "placement", "generations", "seconds",
               "strategy", "seed", "status", "significant"]
NA = "NA"


@dataclass(frozen=True)
class HitRecord:
    query_id: str
    raw_score: float | None
    p_value: float | None
    placement: tuple[int, ...] | None
    generations: int | None
    seconds: float | None
    strategy: str
    seed: int | None
    status: str = "OK"
    significant: bool | None = None
    exact: bool = False
    candidates: int | None = None

    def row(self, timing: bool = True) -> list[str]:
        def fmt(v, spec="{}"):
            return NA if v is None else spec.format(v)

        out = [
            self.query_id,
            fmt(self.raw_score, "{!r}"),
            fmt(self.p_value, "{:.6g}"),
            NA if self.placement is None else ",".join(str(p) for p in self.placement),
            fmt(self.generations),
            fmt(self.seconds, "{:.3f}") if timing else NA,
            self.strategy,
            fmt(self.seed),
            self.status,
            NA if self.significant is None else str(self.significant).lower(),
        ]
        if self.exact:
            out += ["true", fmt(self.candidates)]
        return out


class HitWriter:
    """Writes hits rows in order, flushing after each so partial files stay valid."""

    def __init__(self, handle: IO[str], exact: bool = False, timing: bool = True):
        self.handle = handle
        self.timing = timing
        self.writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        self.writer.writerow(HIT_COLUMNS + (["exact", "candidates"] if exact else []))
        handle.flush()

    def write(self, hit: HitRecord) -> None:
        self.writer.writerow(hit.row(self.timing))
        self.handle.flush()


def read_hits(handle: IO[str] | str | Path) -> list[dict[str, str]]:
    if isinstance(handle, (str, Path)):
        handle = io.StringIO(Path(handle).read_text())
    return list(csv.DictReader(handle, delimiter="\t"))


def iter_labeled(rows: list[dict[str, str]], label_column: str = "label") -> Iterator[tuple[str, float, bool]]:
    """``(id, raw, positive)`` from hits rows carrying a label column."""
    truthy = {"1", "true", "positive", "pos", "+", "yes"}
    falsy = {"0", "false", "negative", "neg", "-", "no"}
    for r in rows:
        if label_column not in r or r[label_column] is None:
            raise FormatError(f"hits file has no '{label_column}' column")
        if r.get("raw_score", NA) == NA:
            continue
        lab = r[label_column].strip().lower()
        if lab not in truthy | falsy:
            raise FormatError(f"unrecognised label {r[label_column]!r} for {r.get('query_id')}")
        yield r.get("query_id", ""), float(r["raw_score"]), lab in truthy
