"""Profile HMM + beta-strand pair potential templates and placement search."""

from __future__ import annotations

__version__ = "0.1.0"

from .model import (
    BetaStrand,
    Exposure,
    MrfTemplate,
    NodeKind,
    NodeTransitions,
    Orientation,
    PairScoreTables,
    StrandPair,
    TemplateNode,
    apply_interleave_filter,
    interleave,
    max_interleave,
    pair_score,
    validate,
)
from .score import (
    ScoreBreakdown,
    count_placements,
    enumerate_placements,
    exhaustive_optimum,
    legal,
    placement_score,
    viterbi_segment,
)
from .search import (
    GaConfig,
    LsConfig,
    SaConfig,
    SearchConfig,
    SearchResult,
    TerminationPolicy,
    run_search,
)
from .stats import EvdParams, fit_evd, p_value, roc_auc
from .tables import default_tables, parse_pair_tables
