"""Independent token-level decodability checker.

Placement and delivery are replayed symbolically: every stored part is a
token, every cache entry or received XOR is a GF(2) equation over tokens
with known value, and a user can decode its file iff each needed token
lies in the row space of its knowledge.  The checker never consults rate
formulas, so it exercises the schemes through a separate route.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Optional, Sequence, Union

from . import piggyback as pb
from . import superposition as sp
from .model import (
    ChannelConfig,
    CorrelatedLibrary,
    DemandVector,
    Rational,
    as_fraction,
    representative_worst_demand,
)

_SAMPLE_LIMIT = 4096


class TokenSpace:
    """Dense indexing of tokens with size consistency checks."""

    def __init__(self) -> None:
        self._index: dict = {}
        self._rates: list[Fraction] = []

    def add(self, token, rate: Rational) -> int:
        rate = as_fraction(rate)
        if rate <= 0:
            raise ValueError(f"token {token} must have positive size")
        if token in self._index:
            idx = self._index[token]
            if self._rates[idx] != rate:
                raise ValueError(f"token {token} registered with two sizes")
            return idx
        self._index[token] = len(self._rates)
        self._rates.append(rate)
        return self._index[token]

    def index(self, token) -> int:
        return self._index[token]

    def rate(self, token) -> Fraction:
        return self._rates[self._index[token]]

    def vector(self, tokens: Iterable) -> int:
        """GF(2) membership vector of an XOR; all sizes must agree."""
        vec = 0
        size = None
        for tok in tokens:
            idx = self._index[tok]
            if size is None:
                size = self._rates[idx]
            elif self._rates[idx] != size:
                raise ValueError("XOR mixes tokens of different sizes")
            vec ^= 1 << idx
        return vec

    def __len__(self) -> int:
        return len(self._rates)

    def __contains__(self, token) -> bool:
        return token in self._index


@dataclass
class KnowledgeState:
    """What one user knows: values of XOR combinations of tokens."""

    space: TokenSpace
    vectors: list[int] = field(default_factory=list)

    def add_token(self, token) -> None:
        self.vectors.append(1 << self.space.index(token))

    def add_equation(self, tokens: Iterable) -> None:
        vec = self.space.vector(tokens)
        if vec:
            self.vectors.append(vec)


def _reduce(basis: dict[int, int], vec: int) -> int:
    while vec:
        top = vec.bit_length() - 1
        row = basis.get(top)
        if row is None:
            return vec
        vec ^= row
    return 0


def can_decode(state: KnowledgeState, targets: Iterable) -> bool:
    """Gaussian elimination over GF(2): every target token derivable?"""
    basis: dict[int, int] = {}
    for vec in state.vectors:
        residue = _reduce(basis, vec)
        if residue:
            basis[residue.bit_length() - 1] = residue
    for token in targets:
        if _reduce(basis, 1 << state.space.index(token)):
            return False
    return True


@dataclass(frozen=True)
class OracleReport:
    """Outcome of a decodability sweep."""

    scheme: str
    passed: bool
    demands_checked: int
    decode_checks: int
    counterexample: Optional[tuple[tuple[int, ...], int]] = None
    note: str = ""

    def __str__(self) -> str:
        if self.passed:
            return (
                f"{self.scheme}: PASS "
                f"({self.demands_checked} demands, {self.decode_checks} decode checks)"
            )
        d, u = self.counterexample
        return f"{self.scheme}: FAIL at demand {d}, user {u} {self.note}"


def _demand_iter(n_files: int, n_users: int, demands):
    if demands is not None:
        for d in demands:
            yield d if isinstance(d, DemandVector) else DemandVector(tuple(d))
        return
    if n_files**n_users <= _SAMPLE_LIMIT:
        for combo in product(range(1, n_files + 1), repeat=n_users):
            yield DemandVector(combo)
        return
    # deterministic sample: representative, uniform demand, random rest
    rng = random.Random(0)
    seen = set()
    picks = [
        representative_worst_demand(n_files, n_users).demands,
        (1,) * n_users,
    ]
    while len(picks) < _SAMPLE_LIMIT // 4:
        picks.append(tuple(rng.randint(1, n_files) for _ in range(n_users)))
    for combo in picks:
        if combo not in seen:
            seen.add(combo)
            yield DemandVector(combo)


def verify_superposition(
    lib: CorrelatedLibrary,
    n_users: int,
    cache_size: Rational = 0,
    allocation: Optional[sp.CacheAllocation] = None,
    t_values: Optional[Sequence[Rational]] = None,
    demands: Optional[Iterable] = None,
    corrupt: Optional[tuple[str, int]] = None,
) -> OracleReport:
    """Replay placement + delivery and check every user decodes its file.

    User k may use its own cache and the messages assigned to layers
    1..k only (the degraded-channel contract).  Supply either an
    allocation (with cache_size) or explicit per-level split parameters.
    """
    if t_values is not None:
        spec = sp.placement_from_t(lib, n_users, t_values)
    else:
        if allocation is None:
            raise ValueError("need either t_values or an allocation")
        spec = sp.cache_split(lib, n_users, cache_size, allocation)

    space = TokenSpace()
    for token in spec.all_tokens():
        space.add(token, spec.token_rate(token))
    caches = sp.place(spec)
    if corrupt is not None and corrupt[0] == "drop_cache":
        caches = tuple(
            frozenset() if k == corrupt[1] - 1 else c
            for k, c in enumerate(caches)
        )

    checks = 0
    n_demands = 0
    for demand in _demand_iter(lib.n_files, n_users, demands):
        n_demands += 1
        plan = sp.generate_messages(spec, demand)
        messages = list(plan.messages)
        if corrupt is not None and corrupt[0] == "drop_message":
            for i, m in enumerate(messages):
                if m.target == corrupt[1]:
                    del messages[i]
                    break
        vectors_by_layer: list[list[int]] = [[] for _ in range(n_users)]
        for m in messages:
            vectors_by_layer[m.target - 1].append(space.vector(m.tokens))
        running: list[int] = []
        for k in range(1, n_users + 1):
            running = running + vectors_by_layer[k - 1]
            state = KnowledgeState(space)
            state.vectors.extend(1 << space.index(t) for t in caches[k - 1])
            state.vectors.extend(running)
            targets = [
                tok
                for sub in lib.file_subfiles(demand[k - 1])
                if lib.subfile_rate(sub) > 0
                for tok in spec.tokens_of_subfile(sub.mask)
            ]
            checks += 1
            if not can_decode(state, targets):
                return OracleReport(
                    "superposition",
                    False,
                    n_demands,
                    checks,
                    (demand.demands, k),
                )
    return OracleReport("superposition", True, n_demands, checks)


def verify_piggyback(
    lib: CorrelatedLibrary,
    n_users: int,
    cache_size: Rational,
    demands: Optional[Iterable] = None,
    corrupt: Optional[tuple[str, int]] = None,
) -> OracleReport:
    """Two-step decoding check for the joint scheme.

    The i-th served user first decodes everything on levels 1..i-1, then
    its own column with the row known from its cache; users requesting a
    file already served decode the matching leader's levels outright.
    """
    caches = pb.coded_place(lib, n_users, cache_size)
    checks = 0
    n_demands = 0
    for demand in _demand_iter(lib.n_files, n_users, demands):
        n_demands += 1
        levels = pb.build_level_messages(lib, demand, cache_size)
        space = TokenSpace()
        for sub in lib.subfiles():
            for atom in pb.subfile_atoms(lib, n_users, cache_size, sub.mask):
                space.add(atom, pb.atom_rate(lib, n_users, cache_size, atom))
        leader_pos = {demand[lm.target_user - 1]: lm.index for lm in levels}
        for k in range(1, n_users + 1):
            state = KnowledgeState(space)
            pos = leader_pos[demand[k - 1]]
            is_leader = levels[pos - 1].target_user == k
            if is_leader:
                cache = caches[k - 1]
                if not (corrupt is not None and corrupt == ("drop_cache", k)):
                    state.add_equation(cache.atoms)
                upto_full, own_column = pos - 1, True
            else:
                upto_full, own_column = pos, False
            for lm in levels[:upto_full]:
                state.add_equation(lm.row_atoms)
                for atom in lm.column_atoms:
                    state.add_token(atom)
            if own_column:
                for atom in levels[pos - 1].column_atoms:
                    state.add_token(atom)
            targets = [
                atom
                for sub in lib.file_subfiles(demand[k - 1])
                for atom in pb.subfile_atoms(lib, n_users, cache_size, sub.mask)
            ]
            checks += 1
            if not can_decode(state, targets):
                return OracleReport(
                    "piggyback", False, n_demands, checks, (demand.demands, k)
                )
    return OracleReport("piggyback", True, n_demands, checks)


def verify_scheme(
    scheme: str,
    lib: CorrelatedLibrary,
    channel: Union[ChannelConfig, int],
    cache_size: Rational,
    allocation: Optional[sp.CacheAllocation] = None,
    **kwargs,
) -> OracleReport:
    """Dispatch to the per-scheme verifier; channel may be a user count."""
    n_users = channel.n_users if isinstance(channel, ChannelConfig) else int(channel)
    if scheme == "superposition":
        return verify_superposition(
            lib, n_users, cache_size, allocation=allocation, **kwargs
        )
    if scheme == "piggyback":
        return verify_piggyback(lib, n_users, cache_size, **kwargs)
    raise ValueError(f"unknown scheme {scheme!r}")
