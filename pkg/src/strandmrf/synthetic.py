"""Random templates and queries for tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from .model import (
    BeginTransitions,
    Exposure,
    MrfTemplate,
    NodeTransitions,
    STANDARD,
    Orientation,
    StrandPair,
    assemble,
    plain_node,
)


def _neglog_simplex(rng, k):
    p = rng.dirichlet(np.ones(k))
    return -np.log(p)


def random_transitions(rng) -> NodeTransitions:
    mm, mi, md = _neglog_simplex(rng, 3)
    im, ii = _neglog_simplex(rng, 2)
    dm, dd = _neglog_simplex(rng, 2)
    return NodeTransitions(mm, mi, md, im, ii, dm, dd)


def random_emissions(rng, spread: float = 2.0) -> np.ndarray:
    e = rng.uniform(-spread, spread, size=21)
    e[20] = 0.0
    return e


def random_template(rng: np.random.Generator, n_nodes: int, strand_lengths=(),
                    n_pairs: int | None = None, max_gap: int | None = None,
                    name: str = "random") -> MrfTemplate:
    """Template with random Plan7 parameters and strands spread over the nodes.

    ``n_pairs`` defaults to pairing every consecutive equal-length strand;
    pass 0 for a pair-free template.
    """
    lengths = list(strand_lengths)
    nodes = [plain_node(i, random_emissions(rng), random_emissions(rng), random_transitions(rng))
             for i in range(1, n_nodes + 1)]
    free = n_nodes - sum(lengths)
    if free < 0:
        raise ValueError("strands do not fit in the template")
    # random gap sizes before, between and after the strands
    cuts = np.sort(rng.integers(0, free + 1, size=len(lengths)))
    spans = []
    used = 0
    for length, gap_end in zip(lengths, cuts):
        spans.append((1 + used + int(gap_end), length))
        used += length
    candidates = [(i, j) for i in range(len(lengths)) for j in range(i + 1, len(lengths))
                  if lengths[i] == lengths[j]]
    if n_pairs is None:
        chosen = [(i, i + 1) for i in range(len(lengths) - 1) if lengths[i] == lengths[i + 1]]
    else:
        order = rng.permutation(len(candidates))[:n_pairs]
        chosen = sorted(candidates[i] for i in order)
    pairs = []
    for i, j in chosen:
        orient = Orientation.ANTIPARALLEL if rng.random() < 0.5 else Orientation.PARALLEL
        exposure = tuple(Exposure.BURIED if rng.random() < 0.5 else Exposure.EXPOSED
                         for _ in range(lengths[i]))
        pairs.append(StrandPair(i, j, orient, exposure))
    begin = BeginTransitions(*_neglog_simplex(rng, 2))
    return assemble(nodes, spans, pairs, max_gap=n_nodes if max_gap is None else max_gap,
                    name=name, begin=begin)


def random_query(rng: np.random.Generator, n: int) -> str:
    return "".join(rng.choice(list(STANDARD), size=n))
