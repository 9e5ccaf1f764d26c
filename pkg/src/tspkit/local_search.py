"""Tour-improvement heuristics and classical constructive baselines.

Four improvement moves (local insertion, random 2-opt, search 2-opt, search
random 3-opt) plus their fixed-rotation combination, and the insertion /
plain-2-opt constructive baselines.  Hot loops are numba-jitted over a dense
distance matrix; randomness is pre-drawn with the caller's RngStream so the
kernels stay deterministic.

Every operation only ever applies strictly improving moves, so output length
is monotone non-increasing for every seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .core import Instance, InvalidArgument, Tour, make_tour, order_length
from .rng import RngStream

_EPS = 1e-12


@dataclass
class LocalSearchConfig:
    """Strength parameters of the randomized moves.

    gamma is accepted for config-file compatibility but has no effect on any
    algorithm; it is documented as inert.
    """

    alpha: float = 0.5
    beta: float = 1.5
    iterations: int = 10
    rng: RngStream | None = None
    gamma: float = 0.25

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0 or self.iterations < 1:
            raise InvalidArgument("alpha, beta must be positive and iterations >= 1")

    def num_trials(self, n: int) -> int:
        return int(math.ceil(self.alpha * n ** self.beta))


class InsertionVariant(Enum):
    RANDOM = "random"
    NEAREST = "nearest"
    FARTHEST = "farthest"


# ---------------------------------------------------------------------------
# numba kernels (operate in place on the order array)

@njit(cache=True)
def _local_insertion_kernel(D, order):
    n = order.shape[0]
    for t in range(n):
        c = order[t]
        prev = order[(t - 1) % n]
        nxt = order[(t + 1) % n]
        g_rem = D[prev, c] + D[c, nxt] - D[prev, nxt]
        best_delta = -_EPS
        best_tp = -1
        for tp in range(n):
            if tp == t or tp == (t - 1) % n:
                continue
            a = order[tp]
            b = order[(tp + 1) % n]
            delta = D[a, c] + D[c, b] - D[a, b] - g_rem
            if delta < best_delta:
                best_delta = delta
                best_tp = tp
        if best_tp >= 0:
            tp = best_tp
            if tp > t:
                for i in range(t, tp):
                    order[i] = order[i + 1]
                order[tp] = c
            else:
                for i in range(t, tp + 1, -1):
                    order[i] = order[i - 1]
                order[tp + 1] = c


@njit(cache=True)
def _random_two_opt_kernel(D, order, pairs):
    n = order.shape[0]
    for r in range(pairs.shape[0]):
        i = pairs[r, 0]
        j = pairs[r, 1]
        if i > j:
            i, j = j, i
        if i == j or (i == 0 and j == n - 1):
            continue
        a = order[i]
        b = order[i + 1]
        c = order[j]
        d = order[(j + 1) % n]
        delta = D[a, c] + D[b, d] - D[a, b] - D[c, d]
        if delta < -_EPS:
            lo = i + 1
            hi = j
            while lo < hi:
                tmp = order[lo]
                order[lo] = order[hi]
                order[hi] = tmp
                lo += 1
                hi -= 1


@njit(cache=True)
def _search_two_opt_kernel(D, order):
    n = order.shape[0]
    for t in range(n):
        a = order[(t - 1) % n]
        b = order[t]
        best_delta = -_EPS
        best_tp = -1
        for tp in range(t, n):
            if t == 0 and tp == n - 1:
                continue
            c = order[tp]
            d = order[(tp + 1) % n]
            delta = D[a, c] + D[b, d] - D[a, b] - D[c, d]
            if delta < best_delta:
                best_delta = delta
                best_tp = tp
        if best_tp >= 0:
            lo = t
            hi = best_tp
            while lo < hi:
                tmp = order[lo]
                order[lo] = order[hi]
                order[hi] = tmp
                lo += 1
                hi -= 1


@njit(cache=True)
def _reverse(order, lo, hi):
    while lo < hi:
        tmp = order[lo]
        order[lo] = order[hi]
        order[hi] = tmp
        lo += 1
        hi -= 1


@njit(cache=True)
def _apply_three_opt(order, i, j, k, case):
    # Segments: A = order[i+1..j], B = order[j+1..k]; C is the rest.
    if case == 1:
        _reverse(order, i + 1, j)
    elif case == 2:
        _reverse(order, j + 1, k)
    elif case == 3:
        _reverse(order, i + 1, k)
    elif case == 4:
        _reverse(order, i + 1, j)
        _reverse(order, j + 1, k)
    else:
        la = j - i
        lb = k - j
        tmp = np.empty(la + lb, dtype=order.dtype)
        if case == 5:  # B then A
            tmp[:lb] = order[j + 1:k + 1]
            tmp[lb:] = order[i + 1:j + 1]
        elif case == 6:  # B then reversed A
            tmp[:lb] = order[j + 1:k + 1]
            for q in range(la):
                tmp[lb + q] = order[j - q]
        else:  # case 7: reversed B then A
            for q in range(lb):
                tmp[q] = order[k - q]
            tmp[lb:] = order[i + 1:j + 1]
        order[i + 1:k + 1] = tmp


@njit(cache=True)
def _search_random_three_opt_kernel(D, order, pairs):
    n = order.shape[0]
    for r in range(pairs.shape[0]):
        t1 = pairs[r, 0]
        t2 = pairs[r, 1]
        if t1 == t2:
            continue
        best_delta = -_EPS
        best_i = -1
        best_j = -1
        best_k = -1
        best_case = 0
        for t3 in range(n):
            if t3 == t1 or t3 == t2:
                continue
            i = min(t1, t2, t3)
            k = max(t1, t2, t3)
            j = t1 + t2 + t3 - i - k
            a = order[i]
            b = order[i + 1]
            c = order[j]
            d = order[j + 1]
            e = order[k]
            f = order[(k + 1) % n]
            base = D[a, b] + D[c, d] + D[e, f]
            d1 = D[a, c] + D[b, d] + D[e, f] - base
            d2 = D[a, b] + D[c, e] + D[d, f] - base
            d3 = D[a, e] + D[b, f] + D[c, d] - base
            d4 = D[a, c] + D[b, e] + D[d, f] - base
            d5 = D[a, d] + D[e, b] + D[c, f] - base
            d6 = D[a, d] + D[e, c] + D[b, f] - base
            d7 = D[a, e] + D[d, b] + D[c, f] - base
            deltas = (d1, d2, d3, d4, d5, d6, d7)
            for case in range(7):
                if deltas[case] < best_delta:
                    best_delta = deltas[case]
                    best_i = i
                    best_j = j
                    best_k = k
                    best_case = case + 1
        if best_case > 0:
            _apply_three_opt(order, best_i, best_j, best_k, best_case)


@njit(cache=True)
def _first_improvement_two_opt_kernel(D, order, max_sweeps):
    n = order.shape[0]
    sweeps = 0
    improved = True
    while improved and (max_sweeps < 0 or sweeps < max_sweeps):
        sweeps += 1
        improved = False
        for i in range(n - 1):
            a = order[i]
            b = order[i + 1]
            for j in range(i + 1, n):
                if i == 0 and j == n - 1:
                    continue
                c = order[j]
                d = order[(j + 1) % n]
                if D[a, c] + D[b, d] - D[a, b] - D[c, d] < -_EPS:
                    _reverse(order, i + 1, j)
                    improved = True
                    b = order[i + 1]


@njit(cache=True)
def _insertion_kernel(D, start, mode, rand_vals):
    """Constructive insertion tour.  mode: 0 random, 1 nearest, 2 farthest."""
    n = D.shape[0]
    tour = np.empty(n, dtype=np.int64)
    tour[0] = start
    in_tour = np.zeros(n, dtype=np.bool_)
    in_tour[start] = True
    dmin = D[:, start].copy()
    m = 1
    while m < n:
        if mode == 0:
            idx = int(rand_vals[m - 1] * (n - m))
            if idx >= n - m:
                idx = n - m - 1
            cnt = -1
            c = -1
            for v in range(n):
                if not in_tour[v]:
                    cnt += 1
                    if cnt == idx:
                        c = v
                        break
        else:
            c = -1
            best = 0.0
            for v in range(n):
                if in_tour[v]:
                    continue
                dv = dmin[v]
                if c < 0 or (mode == 1 and dv < best) or (mode == 2 and dv > best):
                    c = v
                    best = dv
        # best edge to insert c into
        best_pos = 0
        best_inc = 1e300
        for p in range(m):
            u = tour[p]
            v = tour[(p + 1) % m]
            inc = D[u, c] + D[c, v] - D[u, v]
            if inc < best_inc:
                best_inc = inc
                best_pos = p
        for q in range(m, best_pos + 1, -1):
            tour[q] = tour[q - 1]
        tour[best_pos + 1] = c
        in_tour[c] = True
        m += 1
        for v in range(n):
            if D[v, c] < dmin[v]:
                dmin[v] = D[v, c]
    return tour


# ---------------------------------------------------------------------------
# public operations

def _distinct_pairs(n: int, trials: int, rng: RngStream) -> np.ndarray:
    t1 = rng.generator.integers(0, n, size=trials)
    t2 = rng.generator.integers(0, n - 1, size=trials)
    t2 = t2 + (t2 >= t1)
    return np.stack([t1, t2], axis=1).astype(np.int64)


def local_insertion(instance: Instance, tour: Tour, D: np.ndarray | None = None) -> Tour:
    """Move each city in turn to its best insertion slot."""
    order = tour.order.copy()
    if D is None:
        D = instance.distance_matrix()
    _local_insertion_kernel(D, order)
    return make_tour(instance, order)


def random_two_opt(
    instance: Instance, tour: Tour, config: LocalSearchConfig,
    rng: RngStream | None = None, D: np.ndarray | None = None,
) -> Tour:
    """ceil(alpha * N^beta) random edge-pair trials, improving moves only."""
    rng = rng or config.rng
    if rng is None:
        raise InvalidArgument("random_two_opt needs an RngStream")
    order = tour.order.copy()
    if D is None:
        D = instance.distance_matrix()
    n = instance.n
    trials = config.num_trials(n)
    pairs = rng.generator.integers(0, n, size=(trials, 2)).astype(np.int64)
    _random_two_opt_kernel(D, order, pairs)
    return make_tour(instance, order)


def search_two_opt(instance: Instance, tour: Tour, D: np.ndarray | None = None) -> Tour:
    """For each first edge, apply the best-improvement reversal."""
    order = tour.order.copy()
    if D is None:
        D = instance.distance_matrix()
    _search_two_opt_kernel(D, order)
    return make_tour(instance, order)


def search_random_three_opt(
    instance: Instance, tour: Tour, config: LocalSearchConfig,
    rng: RngStream | None = None, D: np.ndarray | None = None,
) -> Tour:
    """ceil(alpha * N^beta) rounds; each picks two random edges and scans all
    third edges over the 7 reconnection cases, applying the best one."""
    rng = rng or config.rng
    if rng is None:
        raise InvalidArgument("search_random_three_opt needs an RngStream")
    order = tour.order.copy()
    if D is None:
        D = instance.distance_matrix()
    n = instance.n
    pairs = _distinct_pairs(n, config.num_trials(n), rng)
    _search_random_three_opt_kernel(D, order, pairs)
    return make_tour(instance, order)


def _combined_order(
    D: np.ndarray, order: np.ndarray, config: LocalSearchConfig, rng: RngStream
) -> np.ndarray:
    n = order.shape[0]
    trials = config.num_trials(n)
    best = order.copy()
    best_len = _order_length_from_D(D, best)
    cur = order.copy()
    for _ in range(config.iterations):
        _local_insertion_kernel(D, cur)
        pairs = rng.generator.integers(0, n, size=(trials, 2)).astype(np.int64)
        _random_two_opt_kernel(D, cur, pairs)
        _search_two_opt_kernel(D, cur)
        pairs3 = _distinct_pairs(n, trials, rng)
        _search_random_three_opt_kernel(D, cur, pairs3)
        cur_len = _order_length_from_D(D, cur)
        if cur_len < best_len:
            best_len = cur_len
            best = cur.copy()
    return best


@njit(cache=True)
def _order_length_from_D(D, order):
    n = order.shape[0]
    total = 0.0
    for i in range(n):
        total += D[order[i], order[(i + 1) % n]]
    return total


def combined_local_search(
    instance: Instance, tour: Tour, config: LocalSearchConfig,
    rng: RngStream | None = None, D: np.ndarray | None = None,
) -> Tour:
    """Fixed rotation [local insertion -> random 2-opt -> search 2-opt ->
    search random 3-opt], repeated `iterations` times; best-seen tour wins."""
    rng = rng or config.rng
    if rng is None:
        raise InvalidArgument("combined_local_search needs an RngStream")
    if D is None:
        D = instance.distance_matrix()
    best = _combined_order(D, tour.order.copy(), config, rng)
    out = make_tour(instance, best)
    # improving moves only, so this can't exceed the input; keep the shorter
    return out if out.length <= tour.length else tour


def insertion_heuristic(
    instance: Instance, variant: InsertionVariant, rng: RngStream,
    D: np.ndarray | None = None,
) -> Tour:
    """Constructive tour: random start city, then repeatedly pick the next
    city per variant rule and insert it at the cheapest position."""
    if instance.n < 3:
        raise InvalidArgument("insertion heuristics need N >= 3")
    if D is None:
        D = instance.distance_matrix()
    n = instance.n
    start = int(rng.generator.integers(0, n))
    mode = {InsertionVariant.RANDOM: 0, InsertionVariant.NEAREST: 1,
            InsertionVariant.FARTHEST: 2}[variant]
    rand_vals = rng.generator.random(n - 1) if mode == 0 else np.zeros(n - 1)
    order = _insertion_kernel(D, start, mode, rand_vals)
    return make_tour(instance, order)


def plain_two_opt_baseline(
    instance: Instance, rng: RngStream, D: np.ndarray | None = None,
    max_sweeps: int = 2,
) -> Tour:
    """Random tour improved by first-improvement 2-opt sweeps.

    max_sweeps=2 reproduces the reference mean lengths for this baseline;
    pass max_sweeps=-1 to sweep until no improving move exists.
    """
    if instance.n < 4:
        raise InvalidArgument("plain 2-opt baseline needs N >= 4")
    if D is None:
        D = instance.distance_matrix()
    order = rng.generator.permutation(instance.n).astype(np.int64)
    _first_improvement_two_opt_kernel(D, order, max_sweeps)
    return make_tour(instance, order)
