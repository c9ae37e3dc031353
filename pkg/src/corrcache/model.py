"""Core data model: correlated library, broadcast channel, demands.

Every nonempty subset of the N files owns one exclusive subfile, and all
subfiles shared by exactly ``level`` files have the same rate.  Rates are
kept as exact fractions so cache/message bookkeeping downstream stays
exact; they are converted to floats only inside power formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations, product
from typing import Iterator, Optional, Sequence, Union

Rational = Union[int, float, str, Fraction]

# Operations that enumerate subfiles or demand vectors refuse instances
# larger than this.  Closed-form operations carry no cap.
EXHAUSTIVE_CAP = 16

_ALPHA_SUM_TOL = 1e-12


def as_fraction(value: Rational) -> Fraction:
    """Exact conversion to Fraction; floats map to their binary value."""
    return value if isinstance(value, Fraction) else Fraction(value)


def binom(n: int, k: int) -> int:
    """C(n, k) with the convention that out-of-range arguments give 0."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def mask_of(members: Sequence[int]) -> int:
    """Bitmask for a set of 1-based file indices."""
    mask = 0
    for i in members:
        if i < 1:
            raise ValueError(f"file index must be >= 1, got {i}")
        mask |= 1 << (i - 1)
    return mask


def members_of(mask: int) -> tuple[int, ...]:
    """Sorted 1-based file indices present in a bitmask."""
    return tuple(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True, order=True)
class SubfileId:
    """One shared subfile, identified by the set of files that contain it.

    The set is stored as a bitmask (bit i-1 set iff file i shares the
    subfile); ordering by mask value gives the deterministic tie-breaking
    used everywhere a choice is otherwise arbitrary.
    """

    mask: int

    def __post_init__(self) -> None:
        if self.mask <= 0:
            raise ValueError("subfile member set must be nonempty")

    @classmethod
    def from_members(cls, members: Sequence[int]) -> "SubfileId":
        return cls(mask_of(members))

    @property
    def members(self) -> tuple[int, ...]:
        return members_of(self.mask)

    @property
    def level(self) -> int:
        """Commonness level: how many files share this subfile."""
        return self.mask.bit_count()

    def has_file(self, file_index: int) -> bool:
        return bool(self.mask >> (file_index - 1) & 1)

    def __repr__(self) -> str:  # compact, e.g. Subfile{1,3}
        return "Subfile{%s}" % ",".join(map(str, self.members))


@dataclass(frozen=True)
class CorrelatedLibrary:
    """N equal-rate files decomposed into 2^N - 1 shared subfiles.

    ``level_rates[l-1]`` is the rate of every subfile shared by exactly
    l files.
    """

    n_files: int
    level_rates: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if self.n_files < 1:
            raise ValueError("n_files must be positive")
        rates = tuple(as_fraction(r) for r in self.level_rates)
        if len(rates) != self.n_files:
            raise ValueError(
                f"expected {self.n_files} level rates, got {len(rates)}"
            )
        if any(r < 0 for r in rates):
            raise ValueError("level rates must be non-negative")
        object.__setattr__(self, "level_rates", rates)

    @classmethod
    def from_rates(cls, rates: Sequence[Rational]) -> "CorrelatedLibrary":
        return cls(len(rates), tuple(as_fraction(r) for r in rates))

    def rate(self, level: int) -> Fraction:
        """Rate of each subfile at a commonness level."""
        if not 1 <= level <= self.n_files:
            raise ValueError(f"level {level} out of [1..{self.n_files}]")
        return self.level_rates[level - 1]

    def subfile_rate(self, subfile: SubfileId) -> Fraction:
        return self.rate(subfile.level)

    def subfiles(self, level: Optional[int] = None) -> Iterator[SubfileId]:
        """All subfiles (or one sublibrary) in ascending bitmask order."""
        if self.n_files > EXHAUSTIVE_CAP:
            raise ValueError(f"subfile enumeration capped at N={EXHAUSTIVE_CAP}")
        for mask in range(1, 1 << self.n_files):
            if level is None or mask.bit_count() == level:
                yield SubfileId(mask)

    def file_subfiles(self, file_index: int) -> Iterator[SubfileId]:
        """Subfiles making up one file."""
        for sub in self.subfiles():
            if sub.has_file(file_index):
                yield sub

    def file_rate_by_enumeration(self, file_index: int) -> Fraction:
        """File rate summed subfile-by-subfile (cross-check for file_rate)."""
        return sum(
            (self.subfile_rate(s) for s in self.file_subfiles(file_index)),
            Fraction(0),
        )


def file_rate(lib: CorrelatedLibrary) -> Fraction:
    """Common rate of every file: sum over levels of C(N-1, l-1) * R_l."""
    n = lib.n_files
    return sum(
        (binom(n - 1, lvl - 1) * lib.rate(lvl) for lvl in range(1, n + 1)),
        Fraction(0),
    )


@dataclass(frozen=True)
class AlphaProfile:
    """Per-level fractions of a file's length, summing to one."""

    fractions: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        fracs = tuple(as_fraction(a) for a in self.fractions)
        if not fracs:
            raise ValueError("profile must be nonempty")
        if any(a < 0 or a > 1 for a in fracs):
            raise ValueError("fractions must lie in [0, 1]")
        if abs(float(sum(fracs)) - 1.0) > _ALPHA_SUM_TOL:
            raise ValueError("fractions must sum to 1")
        object.__setattr__(self, "fractions", fracs)

    @property
    def n_levels(self) -> int:
        return len(self.fractions)


def alpha_to_rates(
    alpha: AlphaProfile, total_rate: Rational, n_files: int
) -> CorrelatedLibrary:
    """Library whose level rates realize the given length fractions."""
    if alpha.n_levels != n_files:
        raise ValueError("profile length must equal n_files")
    total = as_fraction(total_rate)
    rates = tuple(
        alpha.fractions[lvl - 1] * total / binom(n_files - 1, lvl - 1)
        for lvl in range(1, n_files + 1)
    )
    return CorrelatedLibrary(n_files, rates)


def rates_to_alpha(lib: CorrelatedLibrary) -> AlphaProfile:
    """Inverse of alpha_to_rates (requires a positive file rate)."""
    total = file_rate(lib)
    if total == 0:
        raise ValueError("library has zero file rate")
    n = lib.n_files
    return AlphaProfile(
        tuple(
            binom(n - 1, lvl - 1) * lib.rate(lvl) / total
            for lvl in range(1, n + 1)
        )
    )


def correlation_ignorant_projection(lib: CorrelatedLibrary) -> CorrelatedLibrary:
    """Treat each file as one private sequence of the same total rate.

    Feeding the result to the delivery schemes yields the baseline that
    ignores correlation across files.
    """
    rates = [Fraction(0)] * lib.n_files
    rates[0] = file_rate(lib)
    return CorrelatedLibrary(lib.n_files, tuple(rates))


@dataclass(frozen=True)
class ChannelConfig:
    """K receivers of a degraded Gaussian broadcast channel.

    ``gains_sq`` holds squared channel gains sorted weakest-first.
    """

    gains_sq: tuple[float, ...]

    def __post_init__(self) -> None:
        gains = tuple(float(g) for g in self.gains_sq)
        if not gains:
            raise ValueError("need at least one user")
        if any(g <= 0 for g in gains):
            raise ValueError("squared gains must be positive")
        if any(gains[i] > gains[i + 1] for i in range(len(gains) - 1)):
            raise ValueError("squared gains must be sorted weakest-first")
        object.__setattr__(self, "gains_sq", gains)

    @classmethod
    def from_inverse_profile(
        cls, n_users: int, start: float, step: float
    ) -> "ChannelConfig":
        """Gains defined by 1/h_k^2 = start - step*(k-1)."""
        inv = [start - step * k for k in range(n_users)]
        if any(v <= 0 for v in inv):
            raise ValueError("inverse-gain profile must stay positive")
        return cls(tuple(1.0 / v for v in inv))

    @property
    def n_users(self) -> int:
        return len(self.gains_sq)


@dataclass(frozen=True)
class DemandVector:
    """One requested file index (1-based) per user, weakest user first."""

    demands: tuple[int, ...]

    def __post_init__(self) -> None:
        d = tuple(int(x) for x in self.demands)
        if not d:
            raise ValueError("demand vector must be nonempty")
        if any(x < 1 for x in d):
            raise ValueError("file indices are 1-based")
        object.__setattr__(self, "demands", d)

    def validate_for(self, n_files: int) -> None:
        if any(x > n_files for x in self.demands):
            raise ValueError(f"demand exceeds library size {n_files}")

    @property
    def n_users(self) -> int:
        return len(self.demands)

    def distinct(self) -> tuple[int, ...]:
        """Distinct demands in order of first appearance."""
        seen: list[int] = []
        for d in self.demands:
            if d not in seen:
                seen.append(d)
        return tuple(seen)

    def __iter__(self):
        return iter(self.demands)

    def __len__(self) -> int:
        return len(self.demands)

    def __getitem__(self, k: int) -> int:
        return self.demands[k]


def distinct_demand_count(demand: DemandVector) -> int:
    """Number of distinct files requested."""
    return len(set(demand.demands))


def worst_case_demand_set(n_files: int, n_users: int) -> Iterator[DemandVector]:
    """Demand vectors whose first min(N, K) users request distinct files.

    These are the demands that maximize the required transmit power; the
    count is C(N, Ne) * Ne! * N^(K - Ne) with Ne = min(N, K).
    """
    if n_files < 1 or n_users < 1:
        raise ValueError("need at least one file and one user")
    if n_files > EXHAUSTIVE_CAP or n_users > EXHAUSTIVE_CAP:
        raise ValueError(f"demand enumeration capped at {EXHAUSTIVE_CAP}")
    n_distinct = min(n_files, n_users)
    files = range(1, n_files + 1)
    for head in permutations(files, n_distinct):
        for tail in product(files, repeat=n_users - n_distinct):
            yield DemandVector(head + tail)


def representative_worst_demand(n_files: int, n_users: int) -> DemandVector:
    """One canonical member of the worst-case demand set."""
    n_distinct = min(n_files, n_users)
    head = tuple(range(1, n_distinct + 1))
    return DemandVector(head + (1,) * (n_users - n_distinct))
