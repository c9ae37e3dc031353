"""Lower bound on the memory-power trade-off under uncoded placement."""

from __future__ import annotations

from fractions import Fraction

from .model import CorrelatedLibrary, ChannelConfig, Rational, as_fraction, binom
from .power import min_superposition_power


def residual_rates(
    lib: CorrelatedLibrary, n_users: int, cache_size: Rational
) -> tuple[Fraction, ...]:
    """Per-user rates any uncoded placement must still deliver.

    Entry k-1 (k in 1..min(N, K)) is the rate of the content user k can
    still be missing after filling a cache of the given size:
    max(sum_{l=0..N-k} C(N-k, l) * R_{l+1} - M, 0).  The sequence is
    non-increasing; users past min(N, K) need nothing new.
    """
    if n_users < 1:
        raise ValueError("need at least one user")
    cache = as_fraction(cache_size)
    if cache < 0:
        raise ValueError("cache size must be non-negative")
    n = lib.n_files
    values = []
    for k in range(1, min(n, n_users) + 1):
        fresh = sum(
            (binom(n - k, l) * lib.rate(l + 1) for l in range(n - k + 1)),
            Fraction(0),
        )
        values.append(max(fresh - cache, Fraction(0)))
    return tuple(values)


def lower_bound_power(
    lib: CorrelatedLibrary, channel: ChannelConfig, cache_size: Rational
) -> float:
    """Transmit power no uncoded-placement scheme can beat."""
    floor = residual_rates(lib, channel.n_users, cache_size)
    rates = [float(r) for r in floor]
    rates += [0.0] * (channel.n_users - len(rates))
    return min_superposition_power(rates, channel).total
