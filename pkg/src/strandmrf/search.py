"""Stochastic search over strand placements.

Three strategies share the same plumbing: a batch evaluator (optionally a
process pool), a termination policy checked between generations, and
random draws taken only by the driver from substreams keyed by generation.
Worker count therefore changes how fast scores arrive but never which
placements are proposed.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .model import MrfTemplate, PairScoreTables
from .rng import RandomSource
from .score import PlacementScorer, ScoreBreakdown, _suffix_counts, as_codes, legal

Placement = tuple[int, ...]


class InfeasibleQuery(ValueError):
    """The strands do not fit in the query."""


class Strategy(str, Enum):
    SA = "sa"
    GA = "ga"
    LS = "ls"


@dataclass(frozen=True)
class TerminationPolicy:
    max_generations: int | None = None
    time_limit: float | None = None       # seconds
    convergence_window: int | None = None  # generations without improvement

    def __post_init__(self):
        if self.max_generations is None and self.time_limit is None and self.convergence_window is None:
            raise ValueError("termination needs at least one criterion")
        for name in ("max_generations", "convergence_window"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")

    def reason(self, generations: int, elapsed: float, stale: int) -> str | None:
        if self.max_generations is not None and generations >= self.max_generations:
            return "generations"
        if self.convergence_window is not None and stale >= self.convergence_window:
            return "converged"
        if self.time_limit is not None and elapsed >= self.time_limit:
            return "time"
        return None


@dataclass(frozen=True)
class SaConfig:
    population: int = 10
    T0: float | None = None  # None: max(1, 1% of the initial best score magnitude)
    cooling: float = 0.99
    move_width: int = 8

    def __post_init__(self):
        if self.population < 1:
            raise ValueError("SA population must be at least 1")
        if self.T0 is not None and self.T0 <= 0:
            raise ValueError("T0 must be positive")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")
        if self.move_width < 1:
            raise ValueError("move_width must be at least 1")


@dataclass(frozen=True)
class GaConfig:
    population: int = 1000
    width: int = 4

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("GA population must be at least 2")
        if self.width < 0:
            raise ValueError("mutation width must be nonnegative")


@dataclass(frozen=True)
class LsConfig:
    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("diversification fan-out k must be at least 1")


@dataclass(frozen=True)
class SearchConfig:
    """Everything that determines search behaviour except the seed and worker count."""

    strategy: Strategy = Strategy.LS
    sa: SaConfig = field(default_factory=SaConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    ls: LsConfig = field(default_factory=LsConfig)
    termination: TerminationPolicy = field(default_factory=lambda: TerminationPolicy(convergence_window=100))

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def to_dict(self) -> dict:
        """Only the active strategy's settings are recorded."""
        active = {Strategy.SA: self.sa, Strategy.GA: self.ga, Strategy.LS: self.ls}[self.strategy]
        return {"strategy": self.strategy.value, "settings": asdict(active),
                "termination": asdict(self.termination)}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        strategy = Strategy(d["strategy"])
        kinds = {Strategy.SA: ("sa", SaConfig), Strategy.GA: ("ga", GaConfig), Strategy.LS: ("ls", LsConfig)}
        name, kind = kinds[strategy]
        return cls(strategy=strategy, termination=TerminationPolicy(**d["termination"]),
                   **{name: kind(**d["settings"])})


@dataclass(frozen=True)
class SearchResult:
    placement: Placement
    breakdown: ScoreBreakdown
    generations: int
    seconds: float
    reason: str
    evaluations: int
    history: tuple[float, ...] = ()  # best-ever score after each generation

    @property
    def score(self) -> float:
        return self.breakdown.total


# ---------------------------------------------------------------------------
# evaluation

_WORKER_SCORER: PlacementScorer | None = None


def _init_worker(template, codes, tables, flank):
    global _WORKER_SCORER
    _WORKER_SCORER = PlacementScorer(template, codes, tables, flank=flank)


def _score_chunk(placements):
    return [_WORKER_SCORER.score(p) for p in placements]


class Evaluator:
    """Scores batches of placements, memoised, optionally across processes."""

    MEMO_LIMIT = 1_000_000

    def __init__(self, scorer: PlacementScorer, workers: int = 1):
        self.scorer = scorer
        self.workers = max(1, int(workers))
        self.requests = 0
        self._memo: dict[Placement, float] = {}
        self._pool = None
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers, initializer=_init_worker,
                initargs=(scorer.template, scorer.codes, scorer.tables, scorer.flank))

    @property
    def n(self) -> int:
        return self.scorer.n

    @property
    def template(self) -> MrfTemplate:
        return self.scorer.template

    def scores(self, placements: Sequence[Placement]) -> list[float]:
        placements = [tuple(int(x) for x in p) for p in placements]
        self.requests += len(placements)
        todo = list(dict.fromkeys(p for p in placements if p not in self._memo))
        if todo:
            if len(self._memo) + len(todo) > self.MEMO_LIMIT:
                self._memo.clear()
            if self._pool is not None and len(todo) >= 2 * self.workers:
                chunks = [todo[i::self.workers] for i in range(self.workers)]
                for chunk, values in zip(chunks, self._pool.map(_score_chunk, chunks)):
                    self._memo.update(zip(chunk, values))
            else:
                self._memo.update((p, self.scorer.score(p)) for p in todo)
        return [self._memo[p] for p in placements]

    def score(self, placement: Sequence[int]) -> float:
        return self.scores([placement])[0]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _as_evaluator(scorer) -> Evaluator:
    return scorer if isinstance(scorer, Evaluator) else Evaluator(scorer)


def _best(placements: Sequence[Placement], scores: Sequence[float]) -> tuple[Placement, float]:
    i = min(range(len(placements)), key=lambda j: (scores[j], placements[j]))
    return placements[i], scores[i]


# ---------------------------------------------------------------------------
# placement geometry


def _check_feasible(template: MrfTemplate, n: int) -> None:
    need = sum(template.strand_lengths)
    if need > n:
        raise InfeasibleQuery(f"strands need {need} residues but the query has {n}")


def repair(placement: Sequence[int], template: MrfTemplate, n: int) -> Placement:
    """Clamp starts left to right into the legal region.

    Each start is pushed right of the previous strand, no further than the
    max-gap bound, and left enough that the remaining strands still fit.
    Legal placements come back unchanged.
    """
    lengths = template.strand_lengths
    remaining = sum(lengths)
    out = []
    prev_end = None
    for p, length in zip(placement, lengths):
        lo = 0 if prev_end is None else prev_end
        hi = n - remaining
        if prev_end is not None:
            hi = min(hi, prev_end + template.max_gap)
        p = min(max(int(p), lo), hi)
        out.append(p)
        prev_end = p + length
        remaining -= length
    return tuple(out)


def _draw_below(total: int, rng: np.random.Generator) -> int:
    if total < 2**63:
        return int(rng.integers(total))
    return min(total - 1, int(rng.random() * total))


def _sample_counted(counts, lengths, max_gap, rng, lead: int | None = None) -> list[int]:
    """Uniform draw from the placements tallied by ``_suffix_counts``."""
    out = []
    prev_end = lead
    for i, row in enumerate(counts):
        options = sorted(row)
        if prev_end is not None and i > 0:
            options = [p for p in options if prev_end <= p <= prev_end + max_gap]
        elif prev_end is not None:
            options = [p for p in options if p >= prev_end]
        total = sum(row[p] for p in options)
        r = _draw_below(total, rng)
        for p in options:
            r -= row[p]
            if r < 0:
                break
        out.append(p)
        prev_end = p + lengths[i]
    return out


def init_random(template: MrfTemplate, n: int, rng: np.random.Generator) -> Placement:
    """A legal placement drawn uniformly from all legal placements."""
    _check_feasible(template, n)
    lengths = template.strand_lengths
    if not lengths:
        return ()
    counts = _suffix_counts(lengths, 0, n, template.max_gap)
    return tuple(_sample_counted(counts, lengths, template.max_gap, rng))


def init_scaled(template: MrfTemplate, n: int, noise_width: int, rng: np.random.Generator) -> Placement:
    """Template strand positions stretched linearly to the query length.

    Only the non-strand residues are scaled; strand lengths are kept.
    """
    _check_feasible(template, n)
    strands = template.strands
    if not strands:
        return ()
    total = sum(template.strand_lengths)
    loops = template.n_nodes - total
    factor = (n - total) / loops if loops > 0 else 0.0
    starts = []
    before = 0
    for s in strands:
        loop_nodes = (s.start_node - 1) - before
        starts.append(int(round(loop_nodes * factor)) + before)
        before += s.length
    if noise_width > 0:
        starts = [p + int(d) for p, d in zip(starts, rng.integers(-noise_width, noise_width + 1, size=len(starts)))]
    return repair(starts, template, n)


# ---------------------------------------------------------------------------
# simulated annealing


def acceptance_probability(e: float, e_new: float, T: float) -> float:
    if T <= 0:
        raise ValueError("temperature must be positive")
    if e_new < e:
        return 1.0
    return math.exp(-(e_new - e) / T)


def temperature(t: int, T0: float, k: float) -> float:
    if t < 0:
        raise ValueError("generation index must be nonnegative")
    return k**t * T0


def shift_one(placement: Placement, template: MrfTemplate, n: int, strand: int, delta: int) -> Placement:
    """Move one strand by ``delta``, clamped so the placement stays legal."""
    lengths = template.strand_lengths
    k = len(lengths)
    i = strand
    lo = 0 if i == 0 else placement[i - 1] + lengths[i - 1]
    hi = (n if i == k - 1 else placement[i + 1]) - lengths[i]
    if i > 0:
        hi = min(hi, lo + template.max_gap)
    if i < k - 1:
        lo = max(lo, placement[i + 1] - lengths[i] - template.max_gap)
    out = list(placement)
    out[i] = min(max(placement[i] + delta, lo), hi)
    return tuple(out)


# ---------------------------------------------------------------------------
# genetic algorithm


def ga_crossover(p: Sequence[int], q: Sequence[int], rng: np.random.Generator | None = None,
                 template: MrfTemplate | None = None, n: int | None = None) -> Placement:
    """Fill the child from both ends: left positions from ``p``, right from ``q``.

    The middle element of an odd-length placement comes from ``p``.  With a
    template and query length the child is repaired to legality.
    """
    if len(p) != len(q):
        raise ValueError("parents have different strand counts")
    k = len(p)
    child = [0] * k
    left, right = 0, k - 1
    while left < right:
        child[left] = p[left]
        child[right] = q[right]
        left += 1
        right -= 1
    if left == right:
        child[left] = p[left]
    if template is not None:
        return repair(child, template, n)
    return tuple(int(x) for x in child)


def ga_step(population: Sequence[tuple[float, Placement]], scorer, cfg: GaConfig,
            rng: np.random.Generator) -> list[tuple[float, Placement]]:
    """One generation: random pairing, crossover, mutation, truncation to the best P.

    ``population`` holds ``(score, placement)`` entries; the result is
    sorted best first with ties broken lexicographically.
    """
    ev = _as_evaluator(scorer)
    template, n = ev.template, ev.n
    size = len(population)
    if size < 2:
        raise ValueError("GA population needs at least two members")
    members = [p for _, p in population]
    order = rng.permutation(size)
    parents = []
    for i in range(0, size - 1, 2):
        a, b = members[order[i]], members[order[i + 1]]
        parents.extend([(a, b), (b, a)])
    if size % 2:
        a = members[order[-1]]
        b = members[order[int(rng.integers(size - 1))]]
        parents.append((a, b))
    k = len(template.strand_lengths)
    noise = rng.integers(-cfg.width, cfg.width + 1, size=(size, k)) if cfg.width else np.zeros((size, k), int)
    offspring = []
    for (a, b), d in zip(parents, noise):
        child = ga_crossover(a, b)
        offspring.append(repair([c + int(x) for c, x in zip(child, d)], template, n))
    scores = ev.scores(offspring)
    pool = list(population) + list(zip(scores, offspring))
    pool.sort(key=lambda e: (e[0], e[1]))
    return pool[:size]


# ---------------------------------------------------------------------------
# local search


def _split_three(k: int, rng: np.random.Generator) -> tuple[int, int]:
    """Contiguous strand range ``[a, b)`` picked from a random three-way split."""
    cuts = sorted(int(c) for c in rng.integers(0, k + 1, size=2))
    parts = [(0, cuts[0]), (cuts[0], cuts[1]), (cuts[1], k)]
    parts = [pt for pt in parts if pt[1] > pt[0]]
    return parts[int(rng.integers(len(parts)))]


def ls_diversify(s: Sequence[int], scorer, k: int, rng: np.random.Generator,
                 width: int | None = None) -> Placement:
    """Best of ``k`` variants of ``s`` with one sublist of strands moved.

    With ``width=None`` the chosen strands are resampled uniformly among the
    placements that fit between their fixed neighbours; otherwise each is
    shifted within ``±width`` and repaired.
    """
    ev = _as_evaluator(scorer)
    template, n = ev.template, ev.n
    s = tuple(int(x) for x in s)
    lengths = template.strand_lengths
    if not lengths:
        return s
    a, b = _split_three(len(lengths), rng)
    sub = lengths[a:b]
    lo = 0 if a == 0 else s[a - 1] + lengths[a - 1]
    hi = n if b == len(lengths) else s[b]
    candidates = []
    if width is None:
        counts = _suffix_counts(sub, lo, hi, template.max_gap, lead_gap=a > 0, trail_gap=b < len(lengths))
        for _ in range(k):
            moved = _sample_counted(counts, sub, template.max_gap, rng, lead=lo)
            candidates.append(s[:a] + tuple(moved) + s[b:])
    else:
        for _ in range(k):
            d = rng.integers(-width, width + 1, size=b - a) if width else np.zeros(b - a, int)
            moved = [p + int(x) for p, x in zip(s[a:b], d)]
            candidates.append(repair(s[:a] + tuple(moved) + s[b:], template, n))
    return _best(candidates, ev.scores(candidates))[0]


def neighbours(s: Placement, template: MrfTemplate, n: int) -> list[Placement]:
    out = []
    for i in range(len(s)):
        for d in (-2, -1, 1, 2):
            c = s[:i] + (s[i] + d,) + s[i + 1:]
            if legal(c, template, n):
                out.append(c)
    return out


def ls_intensify(s: Sequence[int], scorer) -> Placement:
    """Steepest descent over ±1/±2 single-strand moves until no move improves."""
    ev = _as_evaluator(scorer)
    current = tuple(int(x) for x in s)
    current_score = ev.score(current)
    while True:
        cands = neighbours(current, ev.template, ev.n)
        if not cands:
            return current
        best, best_score = _best(cands, ev.scores(cands))
        if best_score >= current_score:
            return current
        current, current_score = best, best_score


# ---------------------------------------------------------------------------
# drivers


class _Tracker:
    def __init__(self, termination: TerminationPolicy):
        self.termination = termination
        self.start = time.perf_counter()
        self.best: Placement | None = None
        self.best_score = math.inf
        self.generations = 0
        self.stale = 0
        self.history: list[float] = []

    def offer(self, placement: Placement, score: float) -> bool:
        if score < self.best_score or (score == self.best_score and placement < self.best):
            improved = score < self.best_score
            self.best, self.best_score = placement, score
            return improved
        return False

    def offer_many(self, placements, scores) -> bool:
        p, s = _best(placements, scores)
        return self.offer(p, s)

    def end_generation(self, improved: bool) -> str | None:
        self.generations += 1
        self.stale = 0 if improved else self.stale + 1
        self.history.append(self.best_score)
        return self.termination.reason(self.generations, time.perf_counter() - self.start, self.stale)

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start


def _run_sa(ev: Evaluator, cfg: SaConfig, source: RandomSource, track: _Tracker) -> str:
    template, n = ev.template, ev.n
    rng0 = source.stream("sa-init")
    chains = [init_scaled(template, n, 0, rng0)]
    chains += [init_random(template, n, rng0) for _ in range(cfg.population - 1)]
    energies = ev.scores(chains)
    track.offer_many(chains, energies)
    T0 = cfg.T0 if cfg.T0 is not None else max(1.0, 0.01 * abs(track.best_score))
    k = len(template.strand_lengths)
    t = 0
    while True:
        rng = source.stream("sa", t)
        which = rng.integers(k, size=len(chains))
        shifts = rng.integers(-cfg.move_width, cfg.move_width + 1, size=len(chains))
        coins = rng.random(len(chains))
        proposals = [shift_one(c, template, n, int(i), int(d)) for c, i, d in zip(chains, which, shifts)]
        new_e = ev.scores(proposals)
        T = temperature(t, T0, cfg.cooling)
        for j in range(len(chains)):
            if coins[j] < acceptance_probability(energies[j], new_e[j], T):
                chains[j], energies[j] = proposals[j], new_e[j]
        improved = track.offer_many(proposals, new_e)
        t += 1
        reason = track.end_generation(improved)
        if reason:
            return reason


def _run_ga(ev: Evaluator, cfg: GaConfig, source: RandomSource, track: _Tracker) -> str:
    template, n = ev.template, ev.n
    rng0 = source.stream("ga-init")
    noise = max(1, cfg.width)
    members = [init_scaled(template, n, 0, rng0)]
    for i in range(1, cfg.population):
        members.append(init_scaled(template, n, noise, rng0) if i % 2 else init_random(template, n, rng0))
    population = sorted(zip(ev.scores(members), members))
    track.offer(population[0][1], population[0][0])
    t = 0
    while True:
        population = ga_step(population, ev, cfg, source.stream("ga", t))
        improved = track.offer(population[0][1], population[0][0])
        t += 1
        reason = track.end_generation(improved)
        if reason:
            return reason


def _run_ls(ev: Evaluator, cfg: LsConfig, source: RandomSource, track: _Tracker) -> str:
    template, n = ev.template, ev.n
    current = ls_intensify(init_scaled(template, n, 0, source.stream("ls-init")), ev)
    track.offer(current, ev.score(current))
    t = 0
    while True:
        rng = source.stream("ls", t)
        current = ls_intensify(ls_diversify(current, ev, cfg.k, rng), ev)
        improved = track.offer(current, ev.score(current))
        t += 1
        reason = track.end_generation(improved)
        if reason:
            return reason


def run_search(strategy: Strategy | str, template: MrfTemplate, query, tables: PairScoreTables,
               termination: TerminationPolicy, seed: int = 0, sa: SaConfig | None = None,
               ga: GaConfig | None = None, ls: LsConfig | None = None, workers: int = 1,
               flank: float = 0.0, scorer: PlacementScorer | None = None) -> SearchResult:
    """Search for a low-scoring placement and return the best one evaluated."""
    strategy = Strategy(strategy)
    codes = as_codes(query)
    _check_feasible(template, len(codes))
    scorer = scorer or PlacementScorer(template, codes, tables, flank=flank)
    track = _Tracker(termination)
    if not template.strands:
        bd = scorer.breakdown(())
        return SearchResult((), bd, 0, track.elapsed, "no strands", 1, (bd.total,))
    source = RandomSource(seed)
    with Evaluator(scorer, workers) as ev:
        if strategy is Strategy.SA:
            reason = _run_sa(ev, sa or SaConfig(), source, track)
        elif strategy is Strategy.GA:
            reason = _run_ga(ev, ga or GaConfig(), source, track)
        else:
            reason = _run_ls(ev, ls or LsConfig(), source, track)
        requests = ev.requests
    bd = scorer.breakdown(track.best)
    return SearchResult(track.best, bd, track.generations, track.elapsed, reason, requests,
                        tuple(track.history))


def run_configured(config: SearchConfig, template: MrfTemplate, query, tables: PairScoreTables,
                   seed: int = 0, workers: int = 1, flank: float = 0.0) -> SearchResult:
    return run_search(config.strategy, template, query, tables, config.termination, seed=seed,
                      sa=config.sa, ga=config.ga, ls=config.ls, workers=workers, flank=flank)
