"""Command-line interface.

Exit codes: 0 success, 1 I/O failure, 2 invalid input (parse or validation).
"""

from __future__ import annotations

import argparse
import csv
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .formats import (
    FormatError,
    HitRecord,
    HitWriter,
    TemplateDocument,
    iter_labeled,
    read_alignment,
    read_annotations,
    read_hits,
    read_queries,
)
from .model import TemplateError, apply_interleave_filter, check, interleave, validate
from .score import PlacementCapExceeded, count_placements, exhaustive_optimum
from .search import (
    GaConfig,
    InfeasibleQuery,
    LsConfig,
    SaConfig,
    SearchConfig,
    Strategy,
    TerminationPolicy,
    run_configured,
)
from .stats import CalibrationMismatch, DegenerateSample, calibrate, p_value, roc_auc
from .tables import TableFormatError, default_tables, parse_pair_tables
from .train import TrainingConfig, TrainingError, build_template

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2
THREADS_ENV = "MRF_THREADS"


class UsageError(ValueError):
    pass


def parse_duration(text: str) -> float:
    """Seconds from '30', '30s', '5m' or '1h'."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d*)?)\s*([smh]?)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}")
    return float(m.group(1)) * {"": 1, "s": 1, "m": 60, "h": 3600}[m.group(2)]


def thread_count(flag: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return max(1, flag if flag is not None else (os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# shared flag groups


def _add_tables(p: argparse.ArgumentParser) -> None:
    p.add_argument("--buried-table", type=Path, help="buried pair table TSV (default: shipped table)")
    p.add_argument("--exposed-table", type=Path, help="exposed pair table TSV (default: shipped table)")


def _load_tables(args):
    if (args.buried_table is None) != (args.exposed_table is None):
        raise UsageError("give both --buried-table and --exposed-table, or neither")
    if args.buried_table is None:
        return default_tables(), "builtin"
    return parse_pair_tables(args.buried_table, args.exposed_table), f"{args.buried_table},{args.exposed_table}"


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search")
    g.add_argument("--strategy", choices=[s.value for s in Strategy], default="ls")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--generations", type=int, help="stop after this many generations")
    g.add_argument("--time-limit", type=parse_duration, help="stop after this long, e.g. 30s or 5m")
    g.add_argument("--convergence", type=int, help="stop after this many generations without improvement")
    g.add_argument("--sa-population", type=int, default=SaConfig.population)
    g.add_argument("--sa-t0", type=float, default=None)
    g.add_argument("--sa-cooling", type=float, default=SaConfig.cooling)
    g.add_argument("--sa-move-width", type=int, default=SaConfig.move_width)
    g.add_argument("--ga-population", type=int, default=GaConfig.population)
    g.add_argument("--ga-width", type=int, default=GaConfig.width)
    g.add_argument("--ls-k", type=int, default=LsConfig.k)
    g.add_argument("--flank", type=float, default=0.0, help="cost per query residue outside the model")
    g.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (default all cores; {THREADS_ENV} overrides)")


def _search_config(args) -> SearchConfig:
    if args.generations is None and args.time_limit is None and args.convergence is None:
        termination = TerminationPolicy(convergence_window=100)
    else:
        termination = TerminationPolicy(args.generations, args.time_limit, args.convergence)
    return SearchConfig(
        strategy=Strategy(args.strategy),
        sa=SaConfig(args.sa_population, args.sa_t0, args.sa_cooling, args.sa_move_width),
        ga=GaConfig(args.ga_population, args.ga_width),
        ls=LsConfig(args.ls_k),
        termination=termination,
    )


def _open_out(path: Path | None):
    if path is None or str(path) == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


# ---------------------------------------------------------------------------
# build / filter


def cmd_build(args) -> int:
    tables, source = _load_tables(args)
    alignment = read_alignment(args.alignment)
    annotations = read_annotations(args.annotations)
    config = TrainingConfig(symfrac=args.symfrac, consensus_strand_fraction=args.strand_fraction,
                            pseudocount=args.pseudocount, max_gap_slack=args.max_gap_slack)
    name = args.name or Path(args.alignment).stem
    template = build_template(alignment, annotations, config, tables, name=name,
                              simev_count=args.simev, simev_rate=args.simev_rate, seed=args.seed)
    cfg = asdict(config)
    cfg["background"] = list(cfg["background"])
    provenance = {
        "alignment": str(args.alignment),
        "annotations": str(args.annotations),
        "training_config": cfg,
        "simulated_evolution": {"count": args.simev, "rate": args.simev_rate} if args.simev else None,
        "seed": args.seed,
        "tool_version": __version__,
    }
    TemplateDocument(template, tables, source, None, provenance).save(args.output)
    print(f"{name}: {template.n_nodes} nodes, {len(template.strands)} strands, "
          f"{len(template.pairs)} pairs, max_gap {template.max_gap}")
    return EXIT_OK


def _load_document(path) -> TemplateDocument:
    doc = TemplateDocument.load(path)
    problems = validate(doc.template)
    if problems:
        raise TemplateError("; ".join(str(v) for v in problems))
    return doc


def cmd_filter(args) -> int:
    doc = _load_document(args.template)
    t = doc.template
    kept = [p for p in t.pairs if interleave(t, p) <= args.interleave_threshold]
    removed = [(i, p) for i, p in enumerate(t.pairs) if interleave(t, p) > args.interleave_threshold]
    filtered = check(apply_interleave_filter(t, args.interleave_threshold))
    for i, p in removed:
        print(f"removed pair {i}: strands {p.first}-{p.second} interleave {interleave(t, p)}")
    print(f"kept {len(kept)} of {len(t.pairs)} pairs; {len(filtered.strands)} strands remain")
    provenance = dict(doc.provenance or {})
    provenance["interleave_threshold"] = args.interleave_threshold
    # calibration no longer applies to a different model
    TemplateDocument(filtered, doc.tables, doc.table_source, None, provenance).save(args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# search / oracle


def _search_one(job) -> HitRecord:
    query_id, seq, doc, config, seed, workers, flank, calib, cutoff = job
    t = doc.template
    if sum(t.strand_lengths) > len(seq):
        return HitRecord(query_id, None, None, None, None, None, config.strategy.value, seed, "INFEASIBLE")
    result = run_configured(config, t, seq, doc.tables, seed=seed, workers=workers, flank=flank)
    pv = p_value(calib.evd, result.score) if calib else None
    return HitRecord(query_id, result.score, pv, result.placement, result.generations, result.seconds,
                     config.strategy.value, seed, "OK", None if pv is None else pv <= cutoff)


def _fan_out(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        pool = ProcessPoolExecutor(max_workers=min(threads, len(jobs)))
        try:
            yield from pool.map(fn, jobs)
        finally:
            pool.shutdown()
    else:
        for job in jobs:
            yield fn(job)


def cmd_search(args) -> int:
    doc = _load_document(args.template)
    config = _search_config(args)
    queries = read_queries(args.queries)
    threads = thread_count(args.threads)
    calib = None
    if doc.calibration is not None and not args.no_pvalue:
        doc.calibration.require(config)
        calib = doc.calibration
    inner = threads if len(queries) == 1 else 1
    jobs = [(qid, seq, doc, config, args.seed, inner, args.flank, calib, args.pvalue_cutoff)
            for qid, seq in queries]
    out, close = _open_out(args.output)
    try:
        writer = HitWriter(out, timing=not args.no_timing)
        for hit in _fan_out(_search_one, jobs, threads):
            writer.write(hit)
    finally:
        if close:
            out.close()
    return EXIT_OK


def _oracle_one(job) -> HitRecord:
    query_id, seq, doc, cap, flank = job
    t = doc.template
    n = len(seq)
    if sum(t.strand_lengths) > n:
        return HitRecord(query_id, None, None, None, None, None, "oracle", None, "INFEASIBLE",
                         exact=True, candidates=0)
    count = count_placements(t, n, use_max_gap=True)
    try:
        placement, bd = exhaustive_optimum(t, seq, doc.tables, cap=cap, flank=flank)
    except PlacementCapExceeded:
        return HitRecord(query_id, None, None, None, None, None, "oracle", None, "CAPPED",
                         exact=True, candidates=count)
    pv = p_value(doc.calibration.evd, bd.total) if doc.calibration else None
    return HitRecord(query_id, bd.total, pv, placement, None, None, "oracle", None, "OK",
                     exact=True, candidates=count)


def cmd_oracle(args) -> int:
    doc = _load_document(args.template)
    queries = read_queries(args.queries)
    threads = thread_count(args.threads)
    jobs = [(qid, seq, doc, args.cap, args.flank) for qid, seq in queries]
    out, close = _open_out(args.output)
    try:
        writer = HitWriter(out, exact=True, timing=False)
        for hit in _fan_out(_oracle_one, jobs, threads):
            writer.write(hit)
    finally:
        if close:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate / roc


def cmd_calibrate(args) -> int:
    doc = _load_document(args.template)
    config = _search_config(args)
    decoys = [seq for _, seq in read_queries(args.decoys)]
    need = sum(doc.template.strand_lengths)
    usable = [d for d in decoys if len(d) >= need]
    if len(usable) < len(decoys):
        print(f"warning: skipped {len(decoys) - len(usable)} decoys shorter than {need} residues",
              file=sys.stderr)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        calib = calibrate(doc.template, usable, doc.tables, config, seed=args.seed,
                          workers=thread_count(args.threads))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    provenance = dict(doc.provenance or {})
    provenance["calibration"] = {"decoys": str(args.decoys), "count": len(usable), "seed": args.seed}
    TemplateDocument(doc.template, doc.tables, doc.table_source, calib, provenance).save(args.output)
    print(f"mu {calib.evd.mu:.6g} beta {calib.evd.beta:.6g} from {calib.evd.n} decoys")
    return EXIT_OK


def cmd_roc(args) -> int:
    rows = read_hits(args.hits)
    data = list(iter_labeled(rows, args.label_column))
    if not data:
        raise FormatError("no scored rows in hits file")
    try:
        curve = roc_auc([r for _, r, _ in data], [y for _, _, y in data])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"{curve.auc:.4f}")
    if args.curve:
        with open(args.curve, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, th in zip(curve.fpr, curve.tpr, curve.thresholds):
                w.writerow([repr(f), repr(t), repr(th)])
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strandmrf", description="Score protein queries against beta-strand MRF templates.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="train a template from an annotated alignment")
    p.add_argument("alignment", type=Path, help="aligned FASTA")
    p.add_argument("annotations", type=Path, help="strand annotation JSON")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--name")
    p.add_argument("--symfrac", type=float, default=TrainingConfig.symfrac)
    p.add_argument("--strand-fraction", type=float, default=TrainingConfig.consensus_strand_fraction)
    p.add_argument("--pseudocount", type=float, default=TrainingConfig.pseudocount)
    p.add_argument("--max-gap-slack", type=int, default=TrainingConfig.max_gap_slack)
    p.add_argument("--simev", type=int, default=0, metavar="COUNT",
                   help="artificial rows per training row from simulated evolution")
    p.add_argument("--simev-rate", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    _add_tables(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("filter", help="drop strand pairs above an interleave threshold")
    p.add_argument("template", type=Path)
    p.add_argument("--interleave-threshold", type=int, required=True)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("search", help="score queries by stochastic placement search")
    p.add_argument("template", type=Path)
    p.add_argument("queries", type=Path, help="query FASTA")
    p.add_argument("-o", "--output", type=Path, help="hits TSV (default stdout)")
    p.add_argument("--no-timing", action="store_true", help="write NA in the seconds column")
    p.add_argument("--no-pvalue", action="store_true", help="ignore any embedded calibration")
    p.add_argument("--pvalue-cutoff", type=float, default=0.005)
    _add_search_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("oracle", help="exact optimum by enumerating every placement")
    p.add_argument("template", type=Path)
    p.add_argument("queries", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--cap", type=int, default=10**7, help="largest placement count to enumerate")
    p.add_argument("--flank", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("calibrate", help="fit an EVD to decoy search scores")
    p.add_argument("template", type=Path)
    p.add_argument("decoys", type=Path, help="decoy FASTA")
    p.add_argument("-o", "--output", type=Path, required=True)
    _add_search_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("roc", help="ROC curve and AUC from a labelled hits file")
    p.add_argument("hits", type=Path)
    p.add_argument("--label-column", default="label")
    p.add_argument("--curve", type=Path, help="write fpr,tpr,threshold CSV here")
    p.set_defaults(func=cmd_roc)
    return parser


INVALID = (FormatError, TableFormatError, TemplateError, TrainingError, CalibrationMismatch,
           DegenerateSample, InfeasibleQuery, UsageError, ValueError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
