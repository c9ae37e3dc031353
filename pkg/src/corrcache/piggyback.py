"""Coded placement with joint cache-channel (piggyback) encoding.

Weak users cache one XOR across a whole sublibrary; delivery builds one
superposition level per distinct demand, arranging each level's codebook
so that the target user indexes rows by its cached XOR value while
stronger users decode rows and columns outright.  Useful for small
caches, where it can meet the uncoded-placement lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

from .bounds import residual_rates
from .model import (
    ChannelConfig,
    CorrelatedLibrary,
    DemandVector,
    Rational,
    as_fraction,
    members_of,
)
from .power import PowerResult


class Atom(NamedTuple):
    """One piece of a subfile: the part entering coded caches or the rest."""

    kind: str  # "cached" | "uncached"
    subfile: int


_ZERO = Fraction(0)


def _cached_levels(n_files: int, n_users: int) -> range:
    """Levels whose subfiles are split and XORed into some cache."""
    low = max(n_files - min(n_files, n_users) + 1, 1)
    return range(low, n_files + 1)


def atom_rate(
    lib: CorrelatedLibrary, n_users: int, cache_size: Rational, atom: Atom
) -> Fraction:
    cache = as_fraction(cache_size)
    level = atom.subfile.bit_count()
    rate = lib.rate(level)
    if level not in _cached_levels(lib.n_files, n_users):
        return rate  # never split: the "uncached" atom is the whole subfile
    if atom.kind == "cached":
        return cache
    return rate - cache


def subfile_atoms(
    lib: CorrelatedLibrary, n_users: int, cache_size: Rational, subfile_mask: int
) -> tuple[Atom, ...]:
    """Positive-rate atoms of one subfile under the coded split.

    Subfiles at levels that never enter a cache stay whole (one
    "uncached" atom of full rate).
    """
    cache = as_fraction(cache_size)
    level = subfile_mask.bit_count()
    rate = lib.rate(level)
    if level not in _cached_levels(lib.n_files, n_users):
        return (Atom("uncached", subfile_mask),) if rate > 0 else ()
    atoms = []
    if cache > 0:
        atoms.append(Atom("cached", subfile_mask))
    if rate - cache > 0:
        atoms.append(Atom("uncached", subfile_mask))
    return tuple(atoms)


def piggyback_applicable(
    lib: CorrelatedLibrary, n_users: int, cache_size: Rational
) -> bool:
    """The coded split requires the cache to fit inside every subfile the
    scheme may split: M <= min R_l over levels max(N-K, 1)..N."""
    cache = as_fraction(cache_size)
    if cache < 0:
        return False
    low = max(lib.n_files - n_users, 1)
    return all(
        cache <= lib.rate(level) for level in range(low, lib.n_files + 1)
    )


@dataclass(frozen=True)
class CodedCache:
    """One user's cache: a single XOR across a sublibrary's cached parts."""

    user: int
    atoms: tuple[Atom, ...]
    rate: Fraction


def coded_place(
    lib: CorrelatedLibrary, n_users: int, cache_size: Rational
) -> tuple[CodedCache, ...]:
    """User k caches the XOR of every level-(N-k+1) cached part.

    Users past min(N, K) get empty caches; the delivery never uses them.
    """
    if not piggyback_applicable(lib, n_users, cache_size):
        raise ValueError("cache size exceeds a splittable subfile rate")
    cache = as_fraction(cache_size)
    out = []
    for user in range(1, n_users + 1):
        level = lib.n_files - user + 1
        if user > min(lib.n_files, n_users) or cache == 0:
            out.append(CodedCache(user, (), _ZERO))
            continue
        atoms = tuple(
            Atom("cached", sub.mask) for sub in lib.subfiles(level)
        )
        out.append(CodedCache(user, atoms, cache))
    return tuple(out)


@dataclass(frozen=True)
class LevelMessage:
    """One superposition level of the joint encoding.

    The row part replays the target user's cache (present only when the
    level index matches the user index); the column part carries the
    fresh content for the target.
    """

    index: int
    target_user: int
    row_atoms: tuple[Atom, ...]
    row_rate: Fraction
    column_atoms: tuple[Atom, ...]
    column_rate: Fraction
    designated: int  # subfile split at this level (mask)


def weakest_distinct_users(demand: DemandVector) -> tuple[int, ...]:
    """For each distinct file, the weakest user requesting it (ascending)."""
    seen: set[int] = set()
    out = []
    for k, d in enumerate(demand, start=1):
        if d not in seen:
            seen.add(d)
            out.append(k)
    return tuple(out)


def build_level_messages(
    lib: CorrelatedLibrary, demand: DemandVector, cache_size: Rational
) -> tuple[LevelMessage, ...]:
    """Messages of the joint scheme for one demand vector.

    Level i serves the i-th weakest distinct-demand user: the subfiles of
    its file not shared with any earlier served file.  Of those, the one
    spanning all still-unserved files is the designated subfile; only its
    uncached part rides in the column (its cached part is recovered from
    the row XOR), everything else goes whole.
    """
    demand.validate_for(lib.n_files)
    if not piggyback_applicable(lib, demand.n_users, cache_size):
        raise ValueError("cache size exceeds a splittable subfile rate")
    cache = as_fraction(cache_size)
    caches = coded_place(lib, demand.n_users, cache_size)
    full_mask = (1 << lib.n_files) - 1
    levels = []
    remaining = full_mask
    for i, user in enumerate(weakest_distinct_users(demand), start=1):
        designated = remaining  # the one needed subfile at level N-i+1
        want_bit = 1 << (demand[user - 1] - 1)
        column: list[Atom] = []
        col_rate = _ZERO
        for sub_mask in _subsets_containing(remaining, want_bit):
            if sub_mask == designated and user == i:
                atoms = tuple(
                    a
                    for a in subfile_atoms(lib, demand.n_users, cache, sub_mask)
                    if a.kind == "uncached"
                )
            else:
                atoms = subfile_atoms(lib, demand.n_users, cache, sub_mask)
            for a in atoms:
                column.append(a)
                col_rate += atom_rate(lib, demand.n_users, cache, a)
        if user == i:
            row_atoms = caches[user - 1].atoms
            row_rate = caches[user - 1].rate
        else:
            row_atoms, row_rate = (), _ZERO
        levels.append(
            LevelMessage(i, user, row_atoms, row_rate, tuple(column), col_rate, designated)
        )
        remaining &= ~want_bit
    return tuple(levels)


def _subsets_containing(universe_mask: int, member_bit: int):
    """All subsets of a file set that include one designated file."""
    rest = [1 << i for i in range(universe_mask.bit_length()) if universe_mask >> i & 1]
    rest = [b for b in rest if b != member_bit]
    for pick in range(1 << len(rest)):
        mask = member_bit
        for pos, bit in enumerate(rest):
            if pick >> pos & 1:
                mask |= bit
        yield mask


def level_power_conditions(
    levels: Sequence[LevelMessage], channel: ChannelConfig
) -> PowerResult:
    """Tight per-level powers for the constructed levels.

    Level i must let users above the target decode row and column
    together, and the target alone decode the column; the first
    constraint disappears when the target is the strongest user.
    """
    n_users = channel.n_users
    powers = [0.0] * len(levels)
    tail = 0.0
    for i in reversed(range(len(levels))):
        lm = levels[i]
        k = lm.target_user
        col = float(lm.column_rate)
        both = col + float(lm.row_rate)
        gain_k = channel.gains_sq[k - 1]
        need = (2.0 ** (2.0 * col) - 1.0) * (1.0 / gain_k + tail)
        if k < n_users:
            gain_up = channel.gains_sq[k]
            need = max(need, (2.0 ** (2.0 * both) - 1.0) * (1.0 / gain_up + tail))
        powers[i] = need
        tail += need
    return PowerResult(tuple(powers))


def _closed_form_levels(
    lib: CorrelatedLibrary, channel: ChannelConfig, cache_size: Rational
) -> list[float]:
    """Worst-case per-level powers, strongest level first in recursion."""
    n_users = channel.n_users
    cache = float(as_fraction(cache_size))
    floor = [float(r) for r in residual_rates(lib, n_users, cache_size)]
    powers = [0.0] * len(floor)
    tail = 0.0
    for k in reversed(range(1, len(floor) + 1)):
        rho = floor[k - 1]
        gain_k = channel.gains_sq[k - 1]
        need = (2.0 ** (2.0 * rho) - 1.0) * (1.0 / gain_k + tail)
        if k < n_users:
            gain_up = channel.gains_sq[k]
            need = max(
                need, (2.0 ** (2.0 * (rho + cache)) - 1.0) * (1.0 / gain_up + tail)
            )
        powers[k - 1] = need
        tail += need
    return powers


def piggyback_power(
    lib: CorrelatedLibrary, channel: ChannelConfig, cache_size: Rational
) -> float:
    """Worst-case transmit power of the joint scheme (closed form)."""
    if not piggyback_applicable(lib, channel.n_users, cache_size):
        raise ValueError("cache size exceeds a splittable subfile rate")
    return math.fsum(_closed_form_levels(lib, channel, cache_size))


def meets_lower_bound(
    lib: CorrelatedLibrary, channel: ChannelConfig, cache_size: Rational
) -> bool:
    """Whether the target user's own constraint binds at every level.

    When true, the joint scheme's power equals the uncoded-placement
    lower bound.
    """
    if not piggyback_applicable(lib, channel.n_users, cache_size):
        raise ValueError("cache size exceeds a splittable subfile rate")
    n_users = channel.n_users
    cache = float(as_fraction(cache_size))
    floor = [float(r) for r in residual_rates(lib, n_users, cache_size)]
    powers = _closed_form_levels(lib, channel, cache_size)
    tail = 0.0
    ok = True
    for k in reversed(range(1, len(floor) + 1)):
        rho = floor[k - 1]
        gain_k = channel.gains_sq[k - 1]
        first = (2.0 ** (2.0 * rho) - 1.0) * (1.0 / gain_k + tail)
        if k < n_users:
            gain_up = channel.gains_sq[k]
            second = (2.0 ** (2.0 * (rho + cache)) - 1.0) * (1.0 / gain_up + tail)
            if first < second - 1e-12 * max(1.0, second):
                ok = False
        tail += powers[k - 1]
    return ok


def describe_levels(levels: Sequence[LevelMessage]) -> str:
    """Human-readable level summary (debugging aid)."""
    lines = []
    for lm in levels:
        row = "+".join(
            f"{a.kind[0]}{members_of(a.subfile)}" for a in lm.row_atoms
        ) or "-"
        col = ", ".join(
            f"{a.kind[0]}{members_of(a.subfile)}" for a in lm.column_atoms
        )
        lines.append(
            f"level {lm.index} -> user {lm.target_user}: row [{row}] "
            f"(rate {lm.row_rate}), column [{col}] (rate {lm.column_rate})"
        )
    return "\n".join(lines)
