"""Centralized caching with per-level memory sharing and XOR delivery.

Placement splits each sublibrary's subfiles into parts replicated across
user subsets; delivery partitions the requested subfiles of each
sublibrary into single-demand groups and broadcasts XOR messages, each
assigned to the layer of the weakest user in its clique.  Per-user rates
are tracked as exact fractions; only the final power step uses floats.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .model import (
    EXHAUSTIVE_CAP,
    ChannelConfig,
    CorrelatedLibrary,
    DemandVector,
    Rational,
    as_fraction,
    binom,
    representative_worst_demand,
)
from .power import min_superposition_power

_ZERO = Fraction(0)


class PartToken(NamedTuple):
    """One stored part of a subfile.

    ``holders`` is the bitmask of users caching the part; ``split`` says
    which side of the memory-sharing split the part belongs to.
    """

    subfile: int
    split: str  # "low" | "high"
    holders: int


@dataclass(frozen=True)
class CacheAllocation:
    """Fraction of each user's cache given to each commonness level."""

    shares: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        shares = tuple(as_fraction(s) for s in self.shares)
        if not shares:
            raise ValueError("allocation must be nonempty")
        if any(s < 0 or s > 1 for s in shares):
            raise ValueError("shares must lie in [0, 1]")
        if float(sum(shares)) > 1.0 + 1e-9:
            raise ValueError("shares must sum to at most 1")
        object.__setattr__(self, "shares", shares)

    @classmethod
    def uniform(cls, n_levels: int) -> "CacheAllocation":
        return cls(tuple(Fraction(1, n_levels) for _ in range(n_levels)))


@dataclass(frozen=True)
class LevelPlacement:
    """Memory-sharing split of one sublibrary.

    ``t`` is the (possibly fractional) number of users holding each
    cached bit; parts of the "low" split are replicated across
    floor(t)-subsets, parts of the "high" split across floor(t)+1-subsets.
    """

    level: int
    rate: Fraction
    t: Fraction
    low: int
    high: int
    part_rate_low: Fraction
    part_rate_high: Fraction


@dataclass(frozen=True)
class PlacementSpec:
    """Full placement of a library into K caches."""

    library: CorrelatedLibrary
    n_users: int
    per_level: tuple[LevelPlacement, ...]

    def level(self, lvl: int) -> LevelPlacement:
        return self.per_level[lvl - 1]

    def token_rate(self, token: PartToken) -> Fraction:
        lp = self.level(token.subfile.bit_count())
        return lp.part_rate_low if token.split == "low" else lp.part_rate_high

    def tokens_of_subfile(self, subfile_mask: int) -> Iterator[PartToken]:
        """Every positive-rate part of one subfile."""
        lp = self.level(subfile_mask.bit_count())
        users = range(1, self.n_users + 1)
        if lp.part_rate_low > 0:
            for holders in combinations(users, lp.low):
                yield PartToken(subfile_mask, "low", _bits(holders))
        if lp.part_rate_high > 0:
            for holders in combinations(users, lp.high):
                yield PartToken(subfile_mask, "high", _bits(holders))

    def all_tokens(self) -> Iterator[PartToken]:
        for sub in self.library.subfiles():
            if self.library.subfile_rate(sub) > 0:
                yield from self.tokens_of_subfile(sub.mask)


def _bits(users: Sequence[int]) -> int:
    mask = 0
    for u in users:
        mask |= 1 << (u - 1)
    return mask


def _level_placement(
    level: int, rate: Fraction, t: Fraction, n_users: int
) -> LevelPlacement:
    t = min(max(t, _ZERO), Fraction(n_users))
    if rate == 0:
        t = _ZERO
    low = math.floor(t)
    high = low + 1
    rate_low = (high - t) * rate / binom(n_users, low)
    if t == low:
        rate_high = _ZERO
    else:
        rate_high = (t - low) * rate / binom(n_users, high)
    return LevelPlacement(level, rate, t, low, high, rate_low, rate_high)


def placement_from_t(
    lib: CorrelatedLibrary, n_users: int, t_values: Sequence[Rational]
) -> PlacementSpec:
    """Placement with explicitly chosen per-level split parameters."""
    if len(t_values) != lib.n_files:
        raise ValueError("need one split parameter per level")
    per_level = tuple(
        _level_placement(lvl, lib.rate(lvl), as_fraction(t), n_users)
        for lvl, t in enumerate(t_values, start=1)
    )
    return PlacementSpec(lib, n_users, per_level)


def cache_split(
    lib: CorrelatedLibrary,
    n_users: int,
    cache_size: Rational,
    allocation: CacheAllocation,
) -> PlacementSpec:
    """Split each sublibrary according to its cache share.

    The split parameter is K * share * M / (C(N, l) * R_l), clamped to
    [0, K]; empty sublibraries get no cache.
    """
    if len(allocation.shares) != lib.n_files:
        raise ValueError("allocation length must equal the number of levels")
    cache = as_fraction(cache_size)
    if cache < 0:
        raise ValueError("cache size must be non-negative")
    ts = []
    for lvl in range(1, lib.n_files + 1):
        rate = lib.rate(lvl)
        if rate == 0:
            ts.append(_ZERO)
            continue
        ts.append(
            n_users * allocation.shares[lvl - 1] * cache
            / (binom(lib.n_files, lvl) * rate)
        )
    return placement_from_t(lib, n_users, ts)


def place(spec: PlacementSpec) -> tuple[frozenset[PartToken], ...]:
    """Cache contents: user k stores every part whose holder set contains k."""
    if spec.library.n_files > EXHAUSTIVE_CAP or spec.n_users > EXHAUSTIVE_CAP:
        raise ValueError(f"placement enumeration capped at {EXHAUSTIVE_CAP}")
    caches: list[set[PartToken]] = [set() for _ in range(spec.n_users)]
    for token in spec.all_tokens():
        for k in range(spec.n_users):
            if token.holders >> k & 1:
                caches[k].add(token)
    return tuple(frozenset(c) for c in caches)


# ---------------------------------------------------------------------------
# Delivery: grouping requested subfiles into single-demand networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupDemand:
    """One single-demand network: at most one requested subfile per user.

    ``subfiles[k-1]`` is the subfile mask user k requests in this group
    (None when the user sits this group out).  Users sharing a demand
    always share the assignment.
    """

    subfiles: tuple[Optional[int], ...]

    def leaders(self) -> tuple[int, ...]:
        """Weakest user requesting each distinct subfile (1-based)."""
        seen: set[int] = set()
        out = []
        for k, s in enumerate(self.subfiles, start=1):
            if s is not None and s not in seen:
                seen.add(s)
                out.append(k)
        return tuple(out)

    def distinct_subfiles(self) -> int:
        return len({s for s in self.subfiles if s is not None})


def group_subfiles(
    subfile_masks: Sequence[int], demand: DemandVector, overlap: int
) -> list[GroupDemand]:
    """Partition one sublibrary's requested subfiles into group demands.

    ``subfile_masks`` must all intersect the distinct-demand set in
    exactly ``overlap`` files.  Greedy packing: each group assigns every
    distinct demand at most once, with a subfile allowed to straddle two
    consecutive groups when it covers more demands than the current
    group has left.  Every subfile is consumed by exactly one pick.

    Picks are deterministic: prefer the subfile covering the weakest
    users, breaking ties by ascending mask.  Keying the choice to user
    positions (not file labels) makes the per-user delivered rates
    identical across all worst-case demand orderings.
    """
    masks = [s.mask if hasattr(s, "mask") else int(s) for s in subfile_masks]
    dmask = _bits(demand.distinct())
    if overlap < 1 or overlap > dmask.bit_count():
        raise ValueError("overlap must lie in [1, #distinct demands]")
    for m in masks:
        if (m & dmask).bit_count() != overlap:
            raise ValueError("subfile/demand overlap mismatch")
    pool = sorted(set(masks))
    n_users = demand.n_users
    groups: list[GroupDemand] = []
    carry_subfile: Optional[int] = None
    carry_bits = 0

    def users_of(bits: int) -> tuple[int, ...]:
        return tuple(
            k for k in range(n_users) if bits >> (demand[k] - 1) & 1
        )

    def assign_users(assign: list[Optional[int]], bits: int, subfile: int) -> None:
        for k in range(n_users):
            if bits >> (demand[k] - 1) & 1:
                assign[k] = subfile

    while pool:
        assign: list[Optional[int]] = [None] * n_users
        remaining = dmask
        if carry_bits:
            assign_users(assign, carry_bits, carry_subfile)
            remaining &= ~carry_bits
            carry_subfile, carry_bits = None, 0
        while remaining and pool:
            if remaining.bit_count() >= overlap:
                eligible = [s for s in pool if (s & dmask) & ~remaining == 0]
                if not eligible:
                    break
                pick = min(eligible, key=lambda s: (users_of(s & dmask), s))
                pool.remove(pick)
                covered = pick & dmask
                assign_users(assign, covered, pick)
                remaining &= ~covered
            else:
                eligible = [s for s in pool if s & remaining == remaining]
                if not eligible:
                    break
                pick = min(
                    eligible,
                    key=lambda s: (users_of((s & dmask) & ~remaining), s),
                )
                pool.remove(pick)
                assign_users(assign, remaining, pick)
                carry_subfile = pick
                carry_bits = (pick & dmask) & ~remaining
                remaining = 0
        groups.append(GroupDemand(tuple(assign)))
    if carry_bits:
        assign = [None] * n_users
        assign_users(assign, carry_bits, carry_subfile)
        groups.append(GroupDemand(tuple(assign)))
    return groups


def single_demand_messages(
    group: GroupDemand, t: int, split: str, n_users: int
) -> list[tuple[int, tuple[PartToken, ...]]]:
    """XOR messages delivering one group's parts at replication t.

    Each clique of t+1 users containing at least one leader yields one
    XOR of the parts its members miss, assigned to the layer of the
    clique's weakest member.  Returns (target user, tokens) pairs.
    """
    if t < 0 or t > n_users:
        return []
    lead_mask = _bits(group.leaders())
    if lead_mask == 0:
        return []
    out: list[tuple[int, tuple[PartToken, ...]]] = []
    for k in range(1, n_users + 1):
        kbit = 1 << (k - 1)
        for stronger in combinations(range(k + 1, n_users + 1), t):
            clique = kbit | _bits(stronger)
            if not clique & lead_mask:
                continue
            tokens = []
            for j in (k, *stronger):
                subfile = group.subfiles[j - 1]
                if subfile is None:
                    continue
                tokens.append(PartToken(subfile, split, clique & ~(1 << (j - 1))))
            if tokens:
                out.append((k, tuple(tokens)))
    return out


@dataclass(frozen=True)
class XorMessage:
    """One delivered XOR, tagged with its origin for auditing."""

    target: int
    tokens: tuple[PartToken, ...]
    size: Fraction
    level: int
    overlap: int
    group_index: int
    split: str


@dataclass(frozen=True)
class MessagePlan:
    """All XOR messages for one demand vector."""

    n_users: int
    messages: tuple[XorMessage, ...]

    def for_user(self, user: int) -> tuple[XorMessage, ...]:
        return tuple(m for m in self.messages if m.target == user)

    def rho(self, user: int) -> Fraction:
        return sum((m.size for m in self.messages if m.target == user), _ZERO)

    def rho_vector(self) -> tuple[Fraction, ...]:
        totals = [_ZERO] * self.n_users
        for m in self.messages:
            totals[m.target - 1] += m.size
        return tuple(totals)


def _overlap_range(level: int, n_distinct: int, n_files: int) -> range:
    return range(
        max(level - (n_files - n_distinct), 1), min(level, n_distinct) + 1
    )


def _level_masks(n_files: int, level: int) -> list[int]:
    return [_bits([i + 1 for i in c]) for c in combinations(range(n_files), level)]


def generate_messages(spec: PlacementSpec, demand: DemandVector) -> MessagePlan:
    """Run the full delivery pipeline for one demand vector."""
    lib = spec.library
    demand.validate_for(lib.n_files)
    if demand.n_users != spec.n_users:
        raise ValueError("demand length must match the number of users")
    dmask = _bits(demand.distinct())
    n_distinct = dmask.bit_count()
    messages: list[XorMessage] = []
    for lp in spec.per_level:
        if lp.rate == 0:
            continue
        for overlap in _overlap_range(lp.level, n_distinct, lib.n_files):
            wanted = [
                m
                for m in _level_masks(lib.n_files, lp.level)
                if (m & dmask).bit_count() == overlap
            ]
            if not wanted:
                continue
            for gi, grp in enumerate(group_subfiles(wanted, demand, overlap)):
                for split, t, prate in (
                    ("low", lp.low, lp.part_rate_low),
                    ("high", lp.high, lp.part_rate_high),
                ):
                    if prate == 0:
                        continue
                    for target, tokens in single_demand_messages(
                        grp, t, split, spec.n_users
                    ):
                        messages.append(
                            XorMessage(
                                target, tokens, prate, lp.level, overlap, gi, split
                            )
                        )
    return MessagePlan(spec.n_users, tuple(messages))


# ---------------------------------------------------------------------------
# Closed-form rate bound
# ---------------------------------------------------------------------------


def _split_fraction(n_users: int, user: int, size: int) -> Fraction:
    """Share of a subfile's parts a user at a given layer can be sent."""
    den = binom(n_users, size)
    if den == 0:
        return _ZERO
    return Fraction(binom(n_users - user, size), den)


def per_group_rate_bound(
    user: int,
    overlap: int,
    n_files: int,
    n_users: int,
    t: Rational,
    level_rate: Rational,
) -> Fraction:
    """Upper bound on one group's rate contribution to a user's layer.

    Pessimistic leader count: the first ceil(min(N,K)/overlap)+1 users
    are treated as leaders; all other layers carry nothing.
    """
    n_distinct = min(n_files, n_users)
    cap = -(-n_distinct // overlap) + 1
    if user > cap:
        return _ZERO
    t = min(max(as_fraction(t), _ZERO), Fraction(n_users))
    low = math.floor(t)
    frac = t - low
    value = _split_fraction(n_users, user, low) * (1 - frac)
    if frac:
        value += _split_fraction(n_users, user, low + 1) * frac
    return value * as_fraction(level_rate)


def scheme_rate_bound(
    lib: CorrelatedLibrary,
    n_users: int,
    cache_size: Rational,
    allocation: CacheAllocation,
) -> tuple[Fraction, ...]:
    """Worst-case per-user rate bound of the scheme, in closed form."""
    spec = cache_split(lib, n_users, cache_size, allocation)
    n = lib.n_files
    n_distinct = min(n, n_users)
    rho = [_ZERO] * n_users
    for lp in spec.per_level:
        if lp.rate == 0:
            continue
        for overlap in _overlap_range(lp.level, n_distinct, n):
            n_groups = binom(n - n_distinct, lp.level - overlap) * binom(
                n_distinct - 1, overlap - 1
            )
            if n_groups == 0:
                continue
            for user in range(1, n_users + 1):
                rho[user - 1] += n_groups * per_group_rate_bound(
                    user, overlap, n, n_users, lp.t, lp.rate
                )
    return tuple(rho)


def upper_bound_power(
    lib: CorrelatedLibrary,
    channel: ChannelConfig,
    cache_size: Rational,
    allocation: CacheAllocation,
) -> float:
    """Closed-form worst-case power of the scheme for one allocation."""
    rho = scheme_rate_bound(lib, channel.n_users, cache_size, allocation)
    return min_superposition_power([float(r) for r in rho], channel).total


# ---------------------------------------------------------------------------
# Exact constructive rates without re-running delivery
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _leader_profiles(
    n_files: int, n_users: int, demands: tuple[int, ...]
) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Per level, the multiset of group leader masks for one demand.

    Grouping does not depend on the split parameters or rates, so the
    profile can be computed once per (library size, users, demand) and
    reused for every cache size during optimization.
    """
    demand = DemandVector(demands)
    dmask = _bits(demand.distinct())
    n_distinct = dmask.bit_count()
    out = []
    for level in range(1, n_files + 1):
        counts: Counter[int] = Counter()
        for overlap in _overlap_range(level, n_distinct, n_files):
            wanted = [
                m
                for m in _level_masks(n_files, level)
                if (m & dmask).bit_count() == overlap
            ]
            if not wanted:
                continue
            for grp in group_subfiles(wanted, demand, overlap):
                counts[_bits(grp.leaders())] += 1
        out.append(tuple(sorted(counts.items())))
    return tuple(out)


def _clique_count(n_users: int, user: int, size: int, leader_mask: int) -> int:
    """Cliques of ``size``+1 users with weakest member ``user`` that
    contain a leader."""
    if leader_mask >> (user - 1) & 1:
        return binom(n_users - user, size)
    after = (leader_mask >> user).bit_count()
    return binom(n_users - user, size) - binom(n_users - user - after, size)


def constructive_rates(
    lib: CorrelatedLibrary,
    n_users: int,
    demand: DemandVector,
    t_values: Sequence[Rational],
) -> tuple[Fraction, ...]:
    """Exact per-user delivered rates, matching generate_messages."""
    profiles = _leader_profiles(lib.n_files, n_users, demand.demands)
    rho = [_ZERO] * n_users
    for lvl in range(1, lib.n_files + 1):
        rate = lib.rate(lvl)
        if rate == 0:
            continue
        t = min(max(as_fraction(t_values[lvl - 1]), _ZERO), Fraction(n_users))
        low = math.floor(t)
        weights = [(low, (low + 1) - t), (low + 1, t - low)]
        for leader_mask, n_groups in profiles[lvl - 1]:
            for user in range(1, n_users + 1):
                total = _ZERO
                for size, weight in weights:
                    den = binom(n_users, size)
                    if weight == 0 or den == 0:
                        continue
                    total += weight * Fraction(
                        _clique_count(n_users, user, size, leader_mask), den
                    )
                rho[user - 1] += n_groups * total * rate
    return tuple(rho)


def achievable_power_constructive(
    lib: CorrelatedLibrary,
    channel: ChannelConfig,
    cache_size: Rational,
    allocation: CacheAllocation,
    demand: Optional[DemandVector] = None,
) -> float:
    """Power actually spent by the constructed scheme on a worst-case demand.

    By symmetry every worst-case demand needs the same power, so one
    representative suffices; pass ``demand`` to evaluate another member.
    """
    if demand is None:
        demand = representative_worst_demand(lib.n_files, channel.n_users)
    spec = cache_split(lib, channel.n_users, cache_size, allocation)
    plan = generate_messages(spec, demand)
    rates = [float(r) for r in plan.rho_vector()]
    return min_superposition_power(rates, channel).total


# ---------------------------------------------------------------------------
# Vectorized evaluation and allocation search
# ---------------------------------------------------------------------------


class RateEvaluator:
    """Batch rate/power evaluation over many split-parameter vectors.

    ``demand=None`` evaluates the closed-form bound; otherwise the exact
    constructive rates for that demand.  Tables hold, per level and user,
    the delivered fraction of a subfile at each integer replication;
    fractional parameters interpolate linearly between neighbors.
    """

    def __init__(
        self,
        n_files: int,
        n_users: int,
        demand: Optional[DemandVector] = None,
    ) -> None:
        self.n_files = n_files
        self.n_users = n_users
        table = np.zeros((n_files, n_users, n_users + 2))
        n_distinct = min(n_files, n_users)
        if demand is None:
            for lvl in range(1, n_files + 1):
                for overlap in _overlap_range(lvl, n_distinct, n_files):
                    n_groups = binom(n_files - n_distinct, lvl - overlap) * binom(
                        n_distinct - 1, overlap - 1
                    )
                    if n_groups == 0:
                        continue
                    cap = -(-n_distinct // overlap) + 1
                    for user in range(1, min(cap, n_users) + 1):
                        for size in range(n_users + 1):
                            table[lvl - 1, user - 1, size] += (
                                n_groups
                                * float(_split_fraction(n_users, user, size))
                            )
        else:
            profiles = _leader_profiles(n_files, n_users, demand.demands)
            for lvl in range(1, n_files + 1):
                for leader_mask, n_groups in profiles[lvl - 1]:
                    for user in range(1, n_users + 1):
                        for size in range(n_users + 1):
                            den = binom(n_users, size)
                            if den == 0:
                                continue
                            table[lvl - 1, user - 1, size] += (
                                n_groups
                                * _clique_count(n_users, user, size, leader_mask)
                                / den
                            )
        self.table = table

    def rates(self, ts: np.ndarray, level_rates: Sequence[float]) -> np.ndarray:
        """Per-user rates for each row of split parameters: (G, N) -> (G, K)."""
        ts = np.clip(np.asarray(ts, dtype=float), 0.0, float(self.n_users))
        out = np.zeros((ts.shape[0], self.n_users))
        for lvl in range(self.n_files):
            rate = float(level_rates[lvl])
            if rate == 0.0:
                continue
            low = np.floor(ts[:, lvl]).astype(int)
            frac = ts[:, lvl] - low
            w = self.table[lvl]  # (K, K+2)
            out += rate * (
                w[:, low].T * (1.0 - frac)[:, None] + w[:, low + 1].T * frac[:, None]
            )
        return out

    @staticmethod
    def total_power(rates: np.ndarray, gains_sq: Sequence[float]) -> np.ndarray:
        """Minimum superposition power for each row of per-user rates."""
        csum = np.cumsum(rates, axis=1)
        prev = csum - rates
        inv_gain = 1.0 / np.asarray(gains_sq, dtype=float)
        return ((np.exp2(2.0 * csum) - np.exp2(2.0 * prev)) * inv_gain).sum(axis=1)

    def power(
        self,
        ts: np.ndarray,
        level_rates: Sequence[float],
        gains_sq: Sequence[float],
    ) -> np.ndarray:
        return self.total_power(self.rates(ts, level_rates), gains_sq)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def optimize_allocation(
    lib: CorrelatedLibrary,
    channel: ChannelConfig,
    cache_size: Rational,
    grid: int = 20,
    tol: float = 1e-10,
    objective: str = "bound",
    return_trace: bool = False,
):
    """Search for the cache allocation minimizing the scheme's power.

    Coarse simplex grid over the levels with positive rate, then pairwise
    mass transfers refined with breakpoint-aware steps (landing exactly
    on integer replication values) and halving step sizes, stopping once
    a full pass improves by less than ``tol``.  The objective is the
    closed-form bound by default, or the exact constructive rates with
    ``objective="constructive"``.

    Returns (allocation, power) or (allocation, power, trace) where the
    trace lists the best value after each refinement pass.
    """
    if objective not in ("bound", "constructive"):
        raise ValueError("objective must be 'bound' or 'constructive'")
    n, K = lib.n_files, channel.n_users
    cache = as_fraction(cache_size)
    if cache < 0:
        raise ValueError("cache size must be non-negative")
    rates_f = [float(r) for r in lib.level_rates]
    demand = None if objective == "bound" else representative_worst_demand(n, K)
    evaluator = RateEvaluator(n, K, demand)
    gains = channel.gains_sq
    cache_f = float(cache)
    # split parameter per unit share: t_l = share * unit_l
    unit = np.array(
        [
            K * cache_f / (binom(n, lvl + 1) * rates_f[lvl]) if rates_f[lvl] else 0.0
            for lvl in range(n)
        ]
    )

    def evaluate(shares_rows: np.ndarray) -> np.ndarray:
        return evaluator.power(shares_rows * unit, rates_f, gains)

    def finish(shares: tuple[Fraction, ...], value: float, trace: list[float]):
        result = (CacheAllocation(shares), value)
        return (*result, trace) if return_trace else result

    active = [lvl for lvl in range(n) if rates_f[lvl] > 0]
    if n == 1:
        value = float(evaluate(np.ones((1, 1)))[0])
        return finish((Fraction(1),), value, [value])
    if not active or cache == 0:
        value = float(evaluate(np.zeros((1, n)))[0])
        return finish(tuple(_ZERO for _ in range(n)), value, [value])

    def embed(sub: Sequence[float]) -> np.ndarray:
        full = np.zeros(n)
        full[active] = sub
        return full

    comps = np.array(list(_compositions(grid, len(active))), dtype=float) / grid
    rows = np.zeros((len(comps), n))
    rows[:, active] = comps
    values = evaluate(rows)
    best_idx = int(np.argmin(values))
    best = list(comps[best_idx])
    best_value = float(values[best_idx])
    trace = [best_value]

    # Share values at which a level's split parameter is integral.
    def breakpoints(pos: int) -> list[float]:
        u = unit[active[pos]]
        return [m / u for m in range(K + 1) if m / u <= 1.0] if u else []

    pairs = [
        (i, j)
        for i in range(len(active))
        for j in range(len(active))
        if i != j
    ]
    step = 1.0 / grid
    min_step = 1.0 / grid / 2**24
    for _ in range(500):
        pass_gain = 0.0
        for i, j in pairs:
            lo = -min(best[j], 1.0 - best[i])  # amount moved from level i to j
            hi = min(best[i], 1.0 - best[j])
            deltas = {step, -step}
            deltas.update(best[i] - b for b in breakpoints(i))
            deltas.update(b - best[j] for b in breakpoints(j))
            moves = [d for d in sorted(deltas) if lo <= d <= hi and d != 0.0]
            if not moves:
                continue
            batch = np.empty((len(moves), n))
            for m, d in enumerate(moves):
                row = list(best)
                row[i] -= d
                row[j] += d
                batch[m] = embed(row)
            vals = evaluate(batch)
            k = int(np.argmin(vals))
            if vals[k] < best_value - 1e-15:
                pass_gain = max(pass_gain, best_value - float(vals[k]))
                best[i] -= moves[k]
                best[j] += moves[k]
                best_value = float(vals[k])
        trace.append(best_value)
        if pass_gain < tol:
            if step <= min_step:
                break
            step /= 2
    shares = [_ZERO] * n
    for pos, lvl in enumerate(active):
        shares[lvl] = min(max(as_fraction(best[pos]), _ZERO), Fraction(1))
    return finish(tuple(shares), best_value, trace)
