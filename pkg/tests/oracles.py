"""Brute-force reference implementations used to cross-check the fast metric code.

Every function here favors obviousness over speed: quadratic loops, full
enumeration of arrangements, no shared code with the library under test.
"""

import itertools
import math
from typing import Sequence


def ap_bruteforce(scores: Sequence[float], relevant: Sequence[bool]) -> float:
    """Average precision of ranking candidates by score, descending, stable."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranked = [relevant[i] for i in order]
    precisions = []
    for pos in range(1, len(ranked) + 1):
        if ranked[pos - 1]:
            hits = sum(1 for r in ranked[:pos] if r)
            precisions.append(hits / pos)
    if not precisions:
        raise ValueError("no relevant candidate")
    return sum(precisions) / len(precisions)


def dcg(flags: Sequence[bool]) -> float:
    return sum(1.0 / math.log2(rank + 1) for rank, flag in enumerate(flags, start=1) if flag)


def ndcg_bruteforce(ranking: Sequence[str], relevant: Sequence[str], k: int) -> float:
    """nDCG@k where the ideal is found by trying every achievable top-k profile.

    The ideal ranking may use any documents (retrieved or not), so the pool is
    the union of the ranking and the relevant set. A top-`depth` list putting
    relevant docs at a given set of positions is achievable when the pool holds
    enough relevant and irrelevant docs to fill it; the best DCG is the max
    over all such position sets, enumerated outright.
    """
    rel = set(relevant)
    if not rel:
        return 0.0
    actual = dcg([doc in rel for doc in ranking[:k]])
    pool = set(ranking) | rel
    n_rel = len(rel)
    n_irr = len(pool) - n_rel
    depth = min(k, len(pool))
    best = 0.0
    for j in range(min(depth, n_rel) + 1):
        if depth - j > n_irr:
            continue  # not enough irrelevant docs to fill the rest
        for positions in itertools.combinations(range(depth), j):
            flags = [p in positions for p in range(depth)]
            best = max(best, dcg(flags))
    return actual / best if best > 0 else 0.0


def best_threshold_bruteforce(sims: Sequence[float], matches: Sequence[bool]) -> float:
    """Max accuracy of predicting match iff similarity > t, over every useful t.

    Sweeping t changes the prediction vector only at the observed values, so
    trying each unique value (plus one below the minimum) covers everything.
    """
    n = len(sims)
    thresholds = sorted(set(sims)) + [min(sims) - 1.0]
    best = 0.0
    for t in thresholds:
        correct = sum(1 for s, m in zip(sims, matches) if (s > t) == m)
        best = max(best, correct / n)
    return best


def expected_map_bruteforce(n_pos: int, n_neg: int) -> float:
    """Expected AP over every equally likely ordering of n_pos + n_neg items."""
    total = n_pos + n_neg
    seq = [True] * n_pos + [False] * n_neg
    values = []
    for perm in set(itertools.permutations(seq, total)):
        precisions = []
        for pos in range(1, total + 1):
            if perm[pos - 1]:
                hits = sum(1 for r in perm[:pos] if r)
                precisions.append(hits / pos)
        values.append(sum(precisions) / len(precisions))
    return sum(values) / len(values)
