import itertools
import random
from fractions import Fraction as F

import numpy as np
import pytest

from corrcache.bounds import lower_bound_power
from corrcache.model import (
    ChannelConfig,
    CorrelatedLibrary,
    DemandVector,
    binom,
    file_rate,
    representative_worst_demand,
    worst_case_demand_set,
)
from corrcache.power import min_superposition_power
from corrcache.superposition import (
    CacheAllocation,
    GroupDemand,
    PartToken,
    RateEvaluator,
    _level_masks,
    _overlap_range,
    achievable_power_constructive,
    cache_split,
    constructive_rates,
    generate_messages,
    group_subfiles,
    optimize_allocation,
    per_group_rate_bound,
    place,
    placement_from_t,
    scheme_rate_bound,
    single_demand_messages,
    upper_bound_power,
)

EX2_LIB = CorrelatedLibrary.from_rates([F(1, 5), F(3, 10), F(1, 5)])
EX2_DEMAND = DemandVector((1, 2, 3))


def spent_cache(lib, n_users, t_values):
    return sum(
        t * binom(lib.n_files, lvl) * lib.rate(lvl)
        for lvl, t in enumerate(t_values, start=1)
    ) / n_users


def allocation_for_t(lib, n_users, t_values):
    """Cache size and shares reproducing the given split parameters."""
    cache = spent_cache(lib, n_users, t_values)
    if cache == 0:
        return F(0), CacheAllocation((F(0),) * lib.n_files)
    shares = tuple(
        t * binom(lib.n_files, lvl) * lib.rate(lvl) / (n_users * cache)
        for lvl, t in enumerate(t_values, start=1)
    )
    return cache, CacheAllocation(shares)


def t_grids(n_files, n_users):
    grids = [[F(tau)] * n_files for tau in range(n_users + 1)]
    grids.append(
        [F(lvl % n_users if n_users > 1 else 0) + F(1, 7) for lvl in range(1, n_files + 1)]
    )
    return grids


class TestCacheSplit:
    def test_worked_three_user_example(self):
        r1, r2, r3 = EX2_LIB.level_rates
        cache = r1 + r2 + r3 / 3
        shares = CacheAllocation((r1 / cache, r2 / cache, r3 / (3 * cache)))
        spec = cache_split(EX2_LIB, 3, cache, shares)
        assert [lp.t for lp in spec.per_level] == [1, 1, 1]

    def test_zero_share_means_no_caching(self):
        spec = cache_split(EX2_LIB, 3, F(1), CacheAllocation((F(1), F(0), F(0))))
        assert spec.level(2).t == 0 and spec.level(3).t == 0

    def test_overallocation_clamps_at_user_count(self):
        spec = cache_split(EX2_LIB, 3, F(100), CacheAllocation((F(1), F(0), F(0))))
        assert spec.level(1).t == 3

    def test_uniform_alpha_shares(self):
        lib = CorrelatedLibrary.from_rates([F(1, 16)] * 5)
        spec = cache_split(lib, 5, F(1, 2), CacheAllocation.uniform(5))
        expected = [min(F(8, binom(5, lvl)), F(5)) for lvl in range(1, 6)]
        assert [lp.t for lp in spec.per_level] == expected

    def test_zero_rate_level_gets_no_split(self):
        lib = CorrelatedLibrary.from_rates([F(1), F(0)])
        spec = cache_split(lib, 2, F(1), CacheAllocation((F(1, 2), F(1, 2))))
        assert spec.level(2).t == 0
        assert spec.level(2).part_rate_low == 0


class TestPlacement:
    @pytest.mark.parametrize("n_users", [2, 3, 4])
    def test_part_rates_recompose_each_subfile(self, n_users):
        rng = random.Random(n_users)
        lib = CorrelatedLibrary.from_rates([F(rng.randint(1, 5), 6) for _ in range(3)])
        for ts in t_grids(3, n_users):
            spec = placement_from_t(lib, n_users, ts)
            for lp in spec.per_level:
                total = (
                    binom(n_users, lp.low) * lp.part_rate_low
                    + binom(n_users, lp.high) * lp.part_rate_high
                )
                assert total == lp.rate

    def test_per_user_cache_usage_is_exact(self):
        lib = EX2_LIB
        for ts in t_grids(3, 3):
            spec = placement_from_t(lib, 3, ts)
            caches = place(spec)
            for user_tokens in caches:
                used = sum(
                    (spec.token_rate(tok) for tok in user_tokens), F(0)
                )
                assert used == spent_cache(lib, 3, [lp.t for lp in spec.per_level])

    def test_two_user_unit_split(self):
        lib = CorrelatedLibrary.from_rates([F(1)])
        spec = placement_from_t(lib, 2, [F(1)])
        caches = place(spec)
        assert caches[0] == frozenset({PartToken(1, "low", 0b01)})
        assert caches[1] == frozenset({PartToken(1, "low", 0b10)})

    def test_three_user_example_holds_own_third(self):
        spec = placement_from_t(EX2_LIB, 3, [1, 1, 1])
        caches = place(spec)
        for k in range(3):
            assert caches[k] == frozenset(
                PartToken(sub.mask, "low", 1 << k) for sub in EX2_LIB.subfiles()
            )

    def test_no_split_means_empty_caches(self):
        spec = placement_from_t(EX2_LIB, 3, [0, 0, 0])
        assert all(len(c) == 0 for c in place(spec))


class TestGrouping:
    def test_reproduces_worked_pairwise_grouping(self):
        groups = group_subfiles([0b011, 0b101, 0b110], EX2_DEMAND, 2)
        assert [g.subfiles for g in groups] == [
            (0b011, 0b011, 0b101),
            (0b101, 0b110, 0b110),
        ]
        assert [g.leaders() for g in groups] == [(1, 3), (1, 2)]

    def test_full_overlap_gives_one_group_per_subfile(self):
        groups = group_subfiles([0b111], EX2_DEMAND, 3)
        assert [g.subfiles for g in groups] == [(0b111,) * 3]
        groups = group_subfiles([0b0111, 0b1111], DemandVector((1, 2, 3)), 3)
        assert len(groups) == 2
        for g in groups:
            assert len(set(g.subfiles)) == 1

    def test_every_subfile_assigned_at_least_once(self):
        rng = random.Random(11)
        for trial in range(30):
            n = rng.randint(2, 5)
            k = rng.randint(2, 5)
            demand = DemandVector(tuple(rng.randint(1, n) for _ in range(k)))
            dmask = 0
            for d in demand.distinct():
                dmask |= 1 << (d - 1)
            lvl = rng.randint(1, n)
            for overlap in _overlap_range(lvl, dmask.bit_count(), n):
                masks = [
                    m
                    for m in _level_masks(n, lvl)
                    if (m & dmask).bit_count() == overlap
                ]
                if not masks:
                    continue
                groups = group_subfiles(masks, demand, overlap)
                assigned = {s for g in groups for s in g.subfiles if s is not None}
                assert assigned == set(masks)
                bound = -(-len(demand.distinct()) // overlap) + 1
                for g in groups:
                    assert g.distinct_subfiles() <= bound

    def test_carry_flushes_into_trailing_group(self):
        # the straddling pick empties the pool: its leftover demand still
        # gets served by one final group
        groups = group_subfiles([0b011, 0b101], DemandVector((1, 2, 3)), 2)
        assert [g.subfiles for g in groups] == [
            (0b011, 0b011, 0b101),
            (0b101, None, None),
        ]

    @pytest.mark.parametrize("n_files", range(1, 6))
    @pytest.mark.parametrize("n_users", range(1, 6))
    def test_group_count_formula_on_worst_case_demands(self, n_files, n_users):
        for i, demand in enumerate(worst_case_demand_set(n_files, n_users)):
            if i >= 12:
                break
            dmask = 0
            for d in demand.distinct():
                dmask |= 1 << (d - 1)
            nd = dmask.bit_count()
            for lvl in range(1, n_files + 1):
                for overlap in _overlap_range(lvl, nd, n_files):
                    masks = [
                        m
                        for m in _level_masks(n_files, lvl)
                        if (m & dmask).bit_count() == overlap
                    ]
                    if not masks:
                        continue
                    groups = group_subfiles(masks, demand, overlap)
                    assert len(groups) == binom(n_files - nd, lvl - overlap) * binom(
                        nd - 1, overlap - 1
                    )


class TestSingleDemand:
    def test_distinct_demands_worked_example(self):
        group = GroupDemand((0b001, 0b010, 0b100))
        msgs = single_demand_messages(group, 1, "low", 3)
        expected = [
            (1, (PartToken(1, "low", 2), PartToken(2, "low", 1))),
            (1, (PartToken(1, "low", 4), PartToken(4, "low", 1))),
            (2, (PartToken(2, "low", 4), PartToken(4, "low", 2))),
        ]
        assert msgs == expected

    def test_shared_subfile_only_serves_weakest(self):
        group = GroupDemand((0b111, 0b111, 0b111))
        msgs = single_demand_messages(group, 1, "low", 3)
        assert [m[0] for m in msgs] == [1, 1]
        assert msgs[0][1] == (PartToken(7, "low", 2), PartToken(7, "low", 1))
        assert msgs[1][1] == (PartToken(7, "low", 4), PartToken(7, "low", 1))

    def test_no_replication_sends_leader_subfiles_plain(self):
        group = GroupDemand((0b01, 0b01, 0b10))
        msgs = single_demand_messages(group, 0, "low", 3)
        assert msgs == [
            (1, (PartToken(0b01, "low", 0),)),
            (3, (PartToken(0b10, "low", 0),)),
        ]

    def test_full_replication_sends_nothing(self):
        group = GroupDemand((0b01, 0b10, 0b01))
        assert single_demand_messages(group, 3, "low", 3) == []

    def test_every_message_serves_a_leader(self):
        rng = random.Random(3)
        for _ in range(40):
            k = rng.randint(1, 5)
            subs = [rng.choice([0b01, 0b10, 0b11, None]) for _ in range(k)]
            if all(s is None for s in subs):
                continue
            group = GroupDemand(tuple(subs))
            leaders = group.leaders()
            for t in range(k + 1):
                for target, tokens in single_demand_messages(group, t, "low", k):
                    # some leader's own missing part must ride in the XOR
                    assert any(
                        tok.subfile == subs[lead - 1]
                        and not tok.holders >> (lead - 1) & 1
                        for tok in tokens
                        for lead in leaders
                    )

    def test_trailing_non_leader_receives_nothing(self):
        # weakest two users share the subfile demanded first: user 3 trails
        group = GroupDemand((0b011, 0b101, 0b011))
        assert group.leaders() == (1, 2)
        for t in range(4):
            msgs = single_demand_messages(group, t, "low", 3)
            assert all(target != 3 for target, _ in msgs)


class TestMessagePlanAccounting:
    def test_worked_example_rates(self):
        spec = placement_from_t(EX2_LIB, 3, [1, 1, 1])
        plan = generate_messages(spec, EX2_DEMAND)
        r1, r2, r3 = EX2_LIB.level_rates
        assert plan.rho_vector() == (
            F(2, 3) * (r1 + 2 * r2 + r3),
            F(1, 3) * (r1 + 2 * r2),
            F(0),
        )

    def test_everything_cached_needs_no_messages(self):
        spec = placement_from_t(EX2_LIB, 3, [3, 3, 3])
        assert generate_messages(spec, EX2_DEMAND).messages == ()

    def test_single_distinct_demand_serves_weakest_only(self):
        lib = CorrelatedLibrary.from_rates([F(0), F(0), F(2, 5)])
        spec = placement_from_t(lib, 3, [0, 0, 0])
        plan = generate_messages(spec, DemandVector((1, 1, 1)))
        assert plan.rho_vector() == (F(2, 5), F(0), F(0))

    @pytest.mark.parametrize("n_files,n_users", [(2, 2), (3, 3), (4, 3), (3, 4)])
    def test_per_group_totals_match_clique_counting(self, n_files, n_users):
        rng = random.Random(n_files * 10 + n_users)
        lib = CorrelatedLibrary.from_rates(
            [F(rng.randint(1, 4), 5) for _ in range(n_files)]
        )
        demand = representative_worst_demand(n_files, n_users)
        for ts in t_grids(n_files, n_users):
            spec = placement_from_t(lib, n_users, ts)
            plan = generate_messages(spec, demand)
            keyed = {}
            for m in plan.messages:
                keyed.setdefault((m.level, m.overlap, m.group_index, m.split), []).append(m)
            dmask = 0
            for d in demand.distinct():
                dmask |= 1 << (d - 1)
            for (lvl, overlap, gi, split), msgs in keyed.items():
                masks = [
                    m
                    for m in _level_masks(n_files, lvl)
                    if (m & dmask).bit_count() == overlap
                ]
                grp = group_subfiles(masks, demand, overlap)[gi]
                g = len(grp.leaders())
                t = spec.level(lvl).low if split == "low" else spec.level(lvl).high
                n_cliques = binom(n_users, t + 1) - binom(n_users - g, t + 1)
                assert len(msgs) == n_cliques
                size = msgs[0].size
                assert sum(m.size for m in msgs) == n_cliques * size
                # per-user counts follow the leader position structure
                lead = grp.leaders()
                for user in range(1, n_users + 1):
                    got = sum(1 for m in msgs if m.target == user)
                    after = sum(1 for x in lead if x > user)
                    if user in lead:
                        expected = binom(n_users - user, t)
                    else:
                        expected = binom(n_users - user, t) - binom(
                            n_users - user - after, t
                        )
                    assert got == expected

    @pytest.mark.parametrize("n_files,n_users", [(2, 2), (3, 3), (2, 4), (4, 2), (4, 4)])
    def test_profile_rates_match_generated_messages(self, n_files, n_users):
        rng = random.Random(n_files + 10 * n_users)
        lib = CorrelatedLibrary.from_rates(
            [F(rng.randint(0, 4), 5) for _ in range(n_files)]
        )
        demand = representative_worst_demand(n_files, n_users)
        for ts in t_grids(n_files, n_users):
            spec = placement_from_t(lib, n_users, ts)
            assert (
                generate_messages(spec, demand).rho_vector()
                == constructive_rates(lib, n_users, demand, ts)
            )


class TestWorstCaseDemands:
    @pytest.mark.parametrize("n_files,n_users", [(3, 4), (4, 3), (3, 3), (2, 4)])
    def test_rates_identical_across_worst_case_set(self, n_files, n_users):
        rng = random.Random(n_files * n_users)
        lib = CorrelatedLibrary.from_rates(
            [F(rng.randint(1, 4), 5) for _ in range(n_files)]
        )
        for ts in t_grids(n_files, n_users):
            spec = placement_from_t(lib, n_users, ts)
            rates = {
                generate_messages(spec, d).rho_vector()
                for d in worst_case_demand_set(n_files, n_users)
            }
            assert len(rates) == 1

    @pytest.mark.parametrize("n_files,n_users", [(3, 3), (2, 3), (3, 2)])
    def test_representative_dominates_all_demands(self, n_files, n_users):
        lib = CorrelatedLibrary.from_rates(
            [F(1, 3), F(1, 4), F(1, 5)][:n_files]
        )
        ch = ChannelConfig.from_inverse_profile(n_users, 2.0, 0.3)
        for ts in t_grids(n_files, n_users):
            cache, alloc = allocation_for_t(lib, n_users, ts)
            rep = achievable_power_constructive(lib, ch, cache, alloc)
            for combo in itertools.product(range(1, n_files + 1), repeat=n_users):
                other = achievable_power_constructive(
                    lib, ch, cache, alloc, demand=DemandVector(combo)
                )
                assert other <= rep + 1e-9


class TestClosedForm:
    def test_unit_ratio_cases(self):
        assert per_group_rate_bound(1, 1, 3, 3, 1, 1) == F(2, 3)
        assert per_group_rate_bound(1, 1, 3, 3, F(3, 2), 1) == F(1, 2)
        # past the pessimistic leader count the bound gives nothing
        assert per_group_rate_bound(5, 3, 3, 5, 0, 1) == 0

    def test_worked_example_bound_dominates_construction(self):
        r1, r2, r3 = EX2_LIB.level_rates
        cache, alloc = allocation_for_t(EX2_LIB, 3, [1, 1, 1])
        rho = scheme_rate_bound(EX2_LIB, 3, cache, alloc)
        assert rho[0] == F(2, 3) * (r1 + 2 * r2 + r3)
        assert rho[1] == F(1, 3) * (r1 + 2 * r2 + r3)
        assert rho[2] == F(0)

    @pytest.mark.parametrize("n_files", range(1, 5))
    @pytest.mark.parametrize("n_users", range(1, 5))
    def test_construction_never_beats_bound_backwards(self, n_files, n_users):
        rng = random.Random(17 + n_files + 10 * n_users)
        lib = CorrelatedLibrary.from_rates(
            [F(rng.randint(1, 4), 5) for _ in range(n_files)]
        )
        ch = ChannelConfig(
            tuple(sorted(0.4 + 1.5 * rng.random() for _ in range(n_users)))
        )
        for ts in t_grids(n_files, n_users):
            cache, alloc = allocation_for_t(lib, n_users, ts)
            built = achievable_power_constructive(lib, ch, cache, alloc)
            bound = upper_bound_power(lib, ch, cache, alloc)
            assert built <= bound + 1e-9
            assert lower_bound_power(lib, ch, cache) <= built + 1e-9

    def test_no_cache_power_matches_direct_rate_evaluation(self):
        lib = EX2_LIB
        ch = ChannelConfig((0.5, 1.0, 2.0))
        alloc = CacheAllocation.uniform(3)
        built = achievable_power_constructive(lib, ch, 0, alloc)
        spec = placement_from_t(lib, 3, [0, 0, 0])
        rates = generate_messages(spec, EX2_DEMAND).rho_vector()
        direct = min_superposition_power([float(r) for r in rates], ch).total
        assert built == pytest.approx(direct, abs=1e-12)


class TestRateEvaluator:
    @pytest.mark.parametrize("mode", ["bound", "constructive"])
    def test_matches_exact_paths(self, mode):
        rng = random.Random(23)
        n_files, n_users = 4, 3
        lib = CorrelatedLibrary.from_rates(
            [F(rng.randint(0, 4), 5) for _ in range(n_files)]
        )
        demand = representative_worst_demand(n_files, n_users)
        ev = RateEvaluator(n_files, n_users, None if mode == "bound" else demand)
        rates_f = [float(r) for r in lib.level_rates]
        for _ in range(20):
            ts = [F(rng.randint(0, 3 * n_users), 3) for _ in range(n_files)]
            got = ev.rates(np.array([[float(t) for t in ts]]), rates_f)[0]
            if mode == "bound":
                cache, alloc = allocation_for_t(
                    lib, n_users, [min(t, n_users) for t in ts]
                )
                exact = scheme_rate_bound(lib, n_users, cache, alloc)
            else:
                exact = constructive_rates(lib, n_users, demand, ts)
            assert np.allclose(got, [float(x) for x in exact], atol=1e-12)


class TestOptimizeAllocation:
    CH3 = ChannelConfig.from_inverse_profile(3, 2.0, 0.3)

    def test_single_level_forced(self):
        lib = CorrelatedLibrary.from_rates([F(1)])
        alloc, val = optimize_allocation(lib, ChannelConfig((1.0,)), F(1, 2))
        assert alloc.shares == (F(1),)
        assert val == pytest.approx(
            upper_bound_power(lib, ChannelConfig((1.0,)), F(1, 2), alloc), abs=1e-12
        )

    def test_zero_rate_level_gets_nothing(self):
        lib = CorrelatedLibrary.from_rates([F(1, 2), F(0), F(1, 4)])
        alloc, _ = optimize_allocation(lib, self.CH3, F(1, 3))
        assert alloc.shares[1] == 0

    def test_trace_is_non_increasing(self):
        lib = CorrelatedLibrary.from_rates([F(1, 3), F(1, 4), F(1, 5)])
        _, _, trace = optimize_allocation(
            lib, self.CH3, F(1, 2), return_trace=True
        )
        assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))

    def test_not_worse_than_any_integer_split(self):
        lib = CorrelatedLibrary.from_rates([F(1, 3), F(1, 4), F(1, 5)])
        cache = F(2, 5)
        _, val = optimize_allocation(lib, self.CH3, cache)
        costs = [binom(3, lvl) * lib.rate(lvl) for lvl in range(1, 4)]
        for tvec in itertools.product(range(4), repeat=3):
            spend = sum(t * c for t, c in zip(tvec, costs))
            if spend > 3 * cache:
                continue
            if spend == 0:
                alloc = CacheAllocation((F(0),) * 3)
            else:
                alloc = CacheAllocation(
                    tuple(t * c / (3 * cache) for t, c in zip(tvec, costs))
                )
            assert val <= upper_bound_power(lib, self.CH3, cache, alloc) + 1e-9

    def test_library_sized_cache_drives_power_to_zero(self):
        lib = CorrelatedLibrary.from_rates([F(1, 3), F(1, 4), F(1, 5)])
        whole = sum(binom(3, lvl) * lib.rate(lvl) for lvl in range(1, 4))
        _, val = optimize_allocation(lib, self.CH3, whole)
        assert val <= 1e-12

    def test_constructive_objective_not_above_bound_objective(self):
        lib = CorrelatedLibrary.from_rates([F(1, 3), F(1, 4), F(1, 5)])
        for cache in (F(0), F(1, 4), F(1, 2)):
            _, bound_val = optimize_allocation(lib, self.CH3, cache)
            alloc, built_val = optimize_allocation(
                lib, self.CH3, cache, objective="constructive"
            )
            assert built_val <= bound_val + 1e-9
            assert built_val == pytest.approx(
                achievable_power_constructive(lib, self.CH3, cache, alloc), abs=1e-9
            )
