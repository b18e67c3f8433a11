"""Reading and writing the 21x21 beta pair score tables (TSV)."""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .model import ALPHABET, PAIR_SENTINEL, PairScoreTables


class TableFormatError(ValueError):
    pass


def parse_pair_table(text: str, source: str = "<table>") -> np.ndarray:
    """Parse one table; rows are the later residue, columns the earlier one."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TableFormatError(f"{source}: empty table")
    header = [c.strip() for c in lines[0].split("\t")]
    if header and header[0] == "":
        header = header[1:]
    missing = [aa for aa in ALPHABET if aa not in header]
    if missing:
        raise TableFormatError(f"{source}: header is missing residue {missing[0]}")
    if len(header) != len(ALPHABET) or len(set(header)) != len(header):
        raise TableFormatError(f"{source}: header must list each of {ALPHABET} once")
    col = [header.index(aa) for aa in ALPHABET]

    rows: dict[str, list[Decimal]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split("\t")]
        label, values = cells[0], cells[1:]
        if label not in ALPHABET:
            raise TableFormatError(f"{source}:{lineno}: unknown row residue {label!r}")
        if label in rows:
            raise TableFormatError(f"{source}:{lineno}: duplicate row {label}")
        if len(values) != len(header):
            raise TableFormatError(f"{source}:{lineno}: expected {len(header)} values, got {len(values)}")
        try:
            rows[label] = [Decimal(v) for v in values]
        except InvalidOperation as exc:
            raise TableFormatError(f"{source}:{lineno}: bad number") from exc
    missing = [aa for aa in ALPHABET if aa not in rows]
    if missing:
        raise TableFormatError(f"{source}: missing row for residue {missing[0]}")

    sentinel = Decimal(str(PAIR_SENTINEL))
    out = np.empty((21, 21))
    for i, later in enumerate(ALPHABET):
        vals = rows[later]
        for j, earlier in enumerate(ALPHABET):
            v = vals[col[j]]
            if not (Decimal(0) < v <= sentinel):
                raise TableFormatError(f"{source}: entry [{later}][{earlier}]={v} outside (0, {sentinel}]")
            if (later == "X" or earlier == "X") and v != sentinel:
                raise TableFormatError(f"{source}: entry [{later}][{earlier}] must be {sentinel}")
            out[i, j] = float(v)
    return out


def parse_pair_tables(buried: str | Path, exposed: str | Path) -> PairScoreTables:
    b, e = Path(buried), Path(exposed)
    return PairScoreTables(parse_pair_table(b.read_text(), str(b)),
                           parse_pair_table(e.read_text(), str(e)))


def format_pair_table(table: np.ndarray) -> str:
    lines = ["\t" + "\t".join(ALPHABET)]
    for i, aa in enumerate(ALPHABET):
        lines.append(aa + "\t" + "\t".join(f"{v:.2f}" for v in table[i]))
    return "\n".join(lines) + "\n"


def builtin_table_text(name: str) -> str:
    return resources.files("strandmrf").joinpath("data", f"{name}.tsv").read_text()


@lru_cache(maxsize=1)
def default_tables() -> PairScoreTables:
    """The shipped buried/exposed tables."""
    return PairScoreTables(parse_pair_table(builtin_table_text("buried"), "buried.tsv"),
                           parse_pair_table(builtin_table_text("exposed"), "exposed.tsv"))
