"""Choosing one decision out of many mutually non-comparable candidates.

The selection narrows a candidate set in stages: fewest requirement
violations, then least dominated in the classic Pareto sense, then least
dominated under a switching-count relation that still discriminates when
Pareto comparisons all tie, then closest to the per-objective best corner of
the surviving set, and finally a seeded uniform draw among exact ties.

Deliberately numpy-free: candidate sets are small and plain-float arithmetic
keeps results bit-identical to straightforward reference implementations.
"""

import math
from dataclasses import dataclass

from .domain import MAXIMIZE, MINIMIZE


@dataclass(frozen=True)
class ScoredDecision:
    """A candidate with its predicted objective vector and violation count."""

    decision: object
    objectives: tuple
    violation_count: int


def _signs(directions):
    out = []
    for d in directions:
        if d == MINIMIZE:
            out.append(-1.0)
        elif d == MAXIMIZE:
            out.append(1.0)
        else:
            raise ValueError(f"unknown direction {d!r}")
    return out


def pareto_dominates(a, b, directions) -> bool:
    """True when ``a`` is at least as good everywhere and better somewhere.

    Equal values are never "better", so identical vectors do not dominate
    each other in either order.
    """
    signs = _signs(directions)
    strictly_better = False
    for va, vb, s in zip(a, b, signs):
        gap = (va - vb) * s
        if gap < 0:
            return False
        if gap > 0:
            strictly_better = True
    return strictly_better


def nash_dominates(a, b, directions) -> bool:
    """True when switching a -> b improves fewer objectives than b -> a.

    Irreflexive and antisymmetric but not transitive, so it is only used for
    ranking, never for building a consistent order.
    """
    signs = _signs(directions)
    gain_by_switching_to_b = 0
    gain_by_switching_to_a = 0
    for va, vb, s in zip(a, b, signs):
        gap = (vb - va) * s
        if gap > 0:
            gain_by_switching_to_b += 1
        elif gap < 0:
            gain_by_switching_to_a += 1
    return gain_by_switching_to_b < gain_by_switching_to_a


def dominance_rank(vectors, directions, relation) -> list:
    """Rank each vector by how many of the others dominate it (0 = undominated)."""
    n = len(vectors)
    ranks = [0] * n
    for i in range(n):
        vi = vectors[i]
        for j in range(n):
            if i != j and relation(vectors[j], vi, directions):
                ranks[i] += 1
    return ranks


def distance_select(candidates, directions) -> list:
    """Indices of the candidates closest to the surviving set's best corner.

    The reference point takes the best value per objective over the set,
    coordinates are normalized by the set's per-objective spread, and a
    zero-spread coordinate contributes nothing. All candidates attaining the
    minimal distance are returned, in input order.
    """
    if not candidates:
        raise ValueError("empty candidate set")
    signs = _signs(directions)
    m = len(signs)
    best, worst = [], []
    for o in range(m):
        column = [c[o] for c in candidates]
        if signs[o] > 0:
            best.append(max(column))
            worst.append(min(column))
        else:
            best.append(min(column))
            worst.append(max(column))
    distances = []
    for c in candidates:
        acc = 0.0
        for o in range(m):
            span = abs(worst[o] - best[o])
            if span > 0.0:
                coord = (c[o] - best[o]) / span
                acc += coord * coord
        distances.append(math.sqrt(acc))
    lowest = min(distances)
    return [i for i, d in enumerate(distances) if d == lowest]


def compromise_survivors(scored, directions) -> list:
    """Run the deterministic narrowing stages and return surviving entries.

    Args:
        scored: sequence of ScoredDecision.
        directions: optimization direction per objective position.

    Returns:
        The subset (input order preserved) left after violation filtering,
        both dominance rankings and the distance stage.
    """
    if not scored:
        raise ValueError("nothing to select from")
    fewest = min(s.violation_count for s in scored)
    pool = [s for s in scored if s.violation_count == fewest]

    for relation in (pareto_dominates, nash_dominates):
        vectors = [s.objectives for s in pool]
        ranks = dominance_rank(vectors, directions, relation)
        lowest = min(ranks)
        pool = [s for s, r in zip(pool, ranks) if r == lowest]

    keep = distance_select([s.objectives for s in pool], directions)
    return [pool[i] for i in keep]


def select_compromise(scored, directions, rng) -> ScoredDecision:
    """Full selection: narrowing stages plus a seeded uniform tie-break."""
    survivors = compromise_survivors(scored, directions)
    if len(survivors) == 1:
        return survivors[0]
    return survivors[int(rng.integers(len(survivors)))]
