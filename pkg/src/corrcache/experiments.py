"""Configuration-driven sweeps producing the memory-power trade-off curves.

A sweep evaluates, per point, the uncoded-placement lower bound, the
superposition scheme (allocation optimized, power from the constructed
messages), the coded-placement piggyback scheme where applicable, and
the correlation-ignorant baseline.  Output is a CSV with a fixed column
contract; identical configs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from itertools import product
from pathlib import Path
from types import SimpleNamespace
from typing import Optional, Sequence, Union

import numpy as np

from . import oracle as oracle_mod
from . import piggyback as pb
from . import superposition as sp
from .bounds import lower_bound_power
from .model import (
    AlphaProfile,
    ChannelConfig,
    CorrelatedLibrary,
    alpha_to_rates,
    as_fraction,
    binom,
    correlation_ignorant_projection,
    file_rate,
    representative_worst_demand,
)

CSV_HEADER = "sweep,P_LB,P_UB,P_PB,P_IGN,meets_LB,pi_star"
_ORDER_TOL = 1e-9
_SCHEMES = ("lb", "ub", "pb", "ign")


class ConfigError(ValueError):
    """Invalid experiment configuration; names the offending field."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: library, channel, sweep variable, scheme selection."""

    label: str
    n_files: int
    n_users: int
    level_rates: Optional[tuple[Fraction, ...]]
    alpha: Optional[tuple[Fraction, ...]]
    total_rate: Optional[Fraction]
    gains_sq: tuple[float, ...]
    sweep: str  # "M" | "alpha"
    sweep_index: Optional[int]
    cache_size: Optional[Fraction]
    sweep_start: Fraction
    sweep_stop: Fraction
    sweep_step: Fraction
    schemes: tuple[str, ...] = _SCHEMES
    pi_grid: int = 20
    pi_tol: float = 1e-10

    def channel(self) -> ChannelConfig:
        return ChannelConfig(self.gains_sq)

    def sweep_values(self) -> list[Fraction]:
        values = []
        v = self.sweep_start
        while v <= self.sweep_stop:
            values.append(v)
            v += self.sweep_step
        return values

    def library_at(self, value: Fraction) -> CorrelatedLibrary:
        if self.sweep == "M":
            if self.level_rates is not None:
                return CorrelatedLibrary(self.n_files, self.level_rates)
            return alpha_to_rates(
                AlphaProfile(self.alpha), self.total_rate, self.n_files
            )
        fractions = [Fraction(0)] * self.n_files
        fractions[self.sweep_index - 1] = value
        fractions[0] = 1 - value
        return alpha_to_rates(
            AlphaProfile(tuple(fractions)), self.total_rate, self.n_files
        )

    def cache_at(self, value: Fraction) -> Fraction:
        return value if self.sweep == "M" else self.cache_size


_KEYS = {
    "label",
    "n_files",
    "n_users",
    "level_rates",
    "alpha",
    "total_rate",
    "gains_sq",
    "inv_gain_profile",
    "sweep",
    "sweep_index",
    "cache_size",
    "sweep_start",
    "sweep_stop",
    "sweep_step",
    "schemes",
    "pi_grid",
    "pi_tol",
}


def _fraction(field: str, raw: str) -> Fraction:
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(field, f"not a number: {raw!r}") from exc


def _fraction_list(field: str, raw: str) -> tuple[Fraction, ...]:
    return tuple(_fraction(field, part.strip()) for part in raw.split(","))


def parse_config(text: str, label: str = "config") -> ExperimentConfig:
    """Parse the flat key = value format (see README for the schema)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value

    def require(key: str) -> str:
        if key not in raw:
            raise ConfigError(key, "missing required key")
        return raw[key]

    try:
        n_files = int(require("n_files"))
        n_users = int(require("n_users"))
    except ValueError as exc:
        raise ConfigError("n_files/n_users", str(exc)) from exc
    if n_files < 1 or n_users < 1:
        raise ConfigError("n_files/n_users", "must be positive")

    if "gains_sq" in raw and "inv_gain_profile" in raw:
        raise ConfigError("gains_sq", "give either gains_sq or inv_gain_profile")
    if "gains_sq" in raw:
        gains = tuple(float(g) for g in _fraction_list("gains_sq", raw["gains_sq"]))
    elif "inv_gain_profile" in raw:
        prof = _fraction_list("inv_gain_profile", raw["inv_gain_profile"])
        if len(prof) != 2:
            raise ConfigError("inv_gain_profile", "expected 'start, step'")
        try:
            gains = ChannelConfig.from_inverse_profile(
                n_users, float(prof[0]), float(prof[1])
            ).gains_sq
        except ValueError as exc:
            raise ConfigError("inv_gain_profile", str(exc)) from exc
    else:
        raise ConfigError("gains_sq", "missing channel specification")
    if len(gains) != n_users:
        raise ConfigError("gains_sq", f"expected {n_users} entries")
    try:
        ChannelConfig(gains)
    except ValueError as exc:
        raise ConfigError("gains_sq", str(exc)) from exc

    sweep = require("sweep")
    if sweep not in ("M", "alpha"):
        raise ConfigError("sweep", "must be 'M' or 'alpha'")
    start = _fraction("sweep_start", require("sweep_start"))
    stop = _fraction("sweep_stop", require("sweep_stop"))
    step = _fraction("sweep_step", require("sweep_step"))
    if step <= 0:
        raise ConfigError("sweep_step", "must be positive")
    if stop < start:
        raise ConfigError("sweep_stop", "must be >= sweep_start")

    level_rates = alpha = total_rate = None
    sweep_index = cache_size = None
    if sweep == "M":
        if "sweep_index" in raw:
            raise ConfigError("sweep_index", "only valid for alpha sweeps")
        if "cache_size" in raw:
            raise ConfigError("cache_size", "the M sweep sets the cache size")
        if ("level_rates" in raw) == ("alpha" in raw):
            raise ConfigError("level_rates", "give exactly one of level_rates/alpha")
        if "level_rates" in raw:
            level_rates = _fraction_list("level_rates", raw["level_rates"])
            if len(level_rates) != n_files:
                raise ConfigError("level_rates", f"expected {n_files} entries")
            if any(r < 0 for r in level_rates):
                raise ConfigError("level_rates", "must be non-negative")
        else:
            alpha = _fraction_list("alpha", raw["alpha"])
            total_rate = _fraction("total_rate", require("total_rate"))
            if len(alpha) != n_files:
                raise ConfigError("alpha", f"expected {n_files} entries")
            try:
                AlphaProfile(alpha)
            except ValueError as exc:
                raise ConfigError("alpha", str(exc)) from exc
        if start < 0:
            raise ConfigError("sweep_start", "cache sizes must be non-negative")
    else:
        for key in ("level_rates", "alpha"):
            if key in raw:
                raise ConfigError(key, "alpha sweeps build the profile per point")
        total_rate = _fraction("total_rate", require("total_rate"))
        try:
            sweep_index = int(require("sweep_index"))
        except ValueError as exc:
            raise ConfigError("sweep_index", str(exc)) from exc
        if not 2 <= sweep_index <= n_files:
            raise ConfigError("sweep_index", f"must lie in [2, {n_files}]")
        cache_size = _fraction("cache_size", require("cache_size"))
        if cache_size < 0:
            raise ConfigError("cache_size", "must be non-negative")
        if start < 0 or stop > 1:
            raise ConfigError("sweep_start", "alpha sweeps stay within [0, 1]")

    schemes = tuple(_SCHEMES)
    if "schemes" in raw:
        schemes = tuple(s.strip() for s in raw["schemes"].split(","))
        bad = [s for s in schemes if s not in _SCHEMES]
        if bad:
            raise ConfigError("schemes", f"unknown scheme(s) {bad}")
    pi_grid = int(raw.get("pi_grid", "20"))
    if pi_grid < 1:
        raise ConfigError("pi_grid", "must be positive")
    try:
        pi_tol = float(raw.get("pi_tol", "1e-10"))
    except ValueError as exc:
        raise ConfigError("pi_tol", str(exc)) from exc

    return ExperimentConfig(
        label=raw.get("label", label),
        n_files=n_files,
        n_users=n_users,
        level_rates=level_rates,
        alpha=alpha,
        total_rate=total_rate,
        gains_sq=gains,
        sweep=sweep,
        sweep_index=sweep_index,
        cache_size=cache_size,
        sweep_start=start,
        sweep_stop=stop,
        sweep_step=step,
        schemes=schemes,
        pi_grid=pi_grid,
        pi_tol=pi_tol,
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), label=path.stem)


def preset_names() -> tuple[str, ...]:
    root = resources.files(__package__) / "presets"
    return tuple(sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg")))


def preset_config(name: str) -> ExperimentConfig:
    """Load one of the bundled sweep configurations by name."""
    resource = resources.files(__package__) / "presets" / f"{name}.cfg"
    if not resource.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}; have {preset_names()}")
    return parse_config(resource.read_text(encoding="utf-8"), label=name)


@dataclass(frozen=True)
class CurvePoint:
    """One sweep point; absent schemes leave their fields None."""

    sweep: float
    p_lb: float
    p_ub: Optional[float] = None
    pi_star: Optional[tuple[Fraction, ...]] = None
    p_pb: Optional[float] = None
    meets_lb: Optional[bool] = None
    p_ign: Optional[float] = None

    def __post_init__(self) -> None:
        if self.p_ub is not None and self.p_lb > self.p_ub + _ORDER_TOL:
            raise ValueError(
                f"lower bound {self.p_lb} exceeds upper bound {self.p_ub}"
            )
        if self.p_ign is not None and self.p_lb > self.p_ign + _ORDER_TOL:
            raise ValueError(
                f"lower bound {self.p_lb} exceeds ignorant power {self.p_ign}"
            )


def _split_costs(lib: CorrelatedLibrary) -> list[Fraction]:
    """Cache spend per unit of the split parameter, level by level."""
    return [
        binom(lib.n_files, lvl) * lib.rate(lvl)
        for lvl in range(1, lib.n_files + 1)
    ]


def _integer_directions(n_files: int, n_users: int) -> np.ndarray:
    if (n_users + 1) ** n_files > 200_000:
        return np.zeros((0, n_files))
    rows = np.array(
        [
            row
            for row in product(range(n_users + 1), repeat=n_files)
            if any(row)
        ],
        dtype=float,
    )
    return rows


class _UpperBoundSolver:
    """Shared direction family for the superposition curve of one sweep.

    Each candidate is a ray in split-parameter space, scaled per point to
    exhaust the cache budget; the family is fixed across the sweep, so
    along an M sweep every candidate's power is non-increasing and the
    pointwise minimum inherits that monotonicity.
    """

    def __init__(self, cfg: ExperimentConfig, channel: ChannelConfig) -> None:
        self.n_files = cfg.n_files
        self.channel = channel
        self.evaluator = sp.RateEvaluator(
            cfg.n_files,
            channel.n_users,
            representative_worst_demand(cfg.n_files, channel.n_users),
        )
        rays = [_integer_directions(cfg.n_files, channel.n_users)]
        comps = np.array(
            list(sp._compositions(cfg.pi_grid, cfg.n_files)), dtype=float
        )
        rays.append(comps[np.any(comps > 0, axis=1)])
        self.extra: list[tuple[Fraction, ...]] = []
        self._base = np.vstack(rays)

    def add_direction(self, t_values: Sequence[Fraction]) -> None:
        if any(t > 0 for t in t_values):
            self.extra.append(tuple(t_values))

    def solve(
        self, lib: CorrelatedLibrary, cache_size: Fraction
    ) -> tuple[float, tuple[Fraction, ...], tuple[Fraction, ...]]:
        """Best power, its split parameters, and the matching allocation."""
        K = self.channel.n_users
        costs = _split_costs(lib)
        budget = K * cache_size
        dirs = self._base
        if self.extra:
            dirs = np.vstack([dirs, np.array(self.extra, dtype=float)])
        costs_f = np.array([float(c) for c in costs])
        spend = dirs @ costs_f
        keep = spend > 0
        dirs, spend = dirs[keep], spend[keep]
        if cache_size > 0 and len(dirs):
            ts = np.minimum(dirs * (float(budget) / spend)[:, None], float(K))
            ts = np.vstack([ts, np.zeros(self.n_files)])
        else:
            ts = np.zeros((1, self.n_files))
        rates_f = [float(r) for r in lib.level_rates]
        powers = self.evaluator.power(ts, rates_f, self.channel.gains_sq)
        best = int(np.argmin(powers))
        # Rebuild the winner exactly for reporting.
        if best < len(ts) - 1 and cache_size > 0:
            row = dirs[best]
            direction = [as_fraction(x) for x in row]
            spend_exact = sum(d * c for d, c in zip(direction, costs))
            scale = budget / spend_exact
            t_exact = tuple(
                min(d * scale, Fraction(K)) for d in direction
            )
            shares = tuple(
                t * c / budget for t, c in zip(t_exact, costs)
            )
        else:
            t_exact = tuple(Fraction(0) for _ in range(self.n_files))
            shares = t_exact
        return float(powers[best]), t_exact, shares


def run_experiment(cfg: ExperimentConfig) -> list[CurvePoint]:
    """Evaluate every selected curve at every sweep point.

    The allocation search runs first at each point; the split-parameter
    directions it finds are pooled into one family shared by the whole
    sweep, and each point's upper bound is the family's best constructed
    power there.
    """
    channel = cfg.channel()
    values = cfg.sweep_values()
    solver = None
    if "ub" in cfg.schemes:
        solver = _UpperBoundSolver(cfg, channel)
        for v in values:
            lib, cache = cfg.library_at(v), cfg.cache_at(v)
            for objective in ("bound", "constructive"):
                alloc, _ = sp.optimize_allocation(
                    lib,
                    channel,
                    cache,
                    grid=cfg.pi_grid,
                    tol=cfg.pi_tol,
                    objective=objective,
                )
                spec = sp.cache_split(lib, channel.n_users, cache, alloc)
                solver.add_direction([lp.t for lp in spec.per_level])

    points = []
    for v in values:
        lib, cache = cfg.library_at(v), cfg.cache_at(v)
        p_lb = lower_bound_power(lib, channel, cache)
        p_ub = pi_star = None
        if "ub" in cfg.schemes:
            p_ub, t_star, pi_star = solver.solve(lib, cache)
            exact = sp.achievable_power_constructive(
                lib, channel, cache, sp.CacheAllocation(pi_star)
            )
            if abs(exact - p_ub) > 1e-9 * max(1.0, abs(exact)):
                raise AssertionError(
                    f"rate-table power {p_ub} disagrees with message accounting {exact}"
                )
        p_pb = meets = None
        if "pb" in cfg.schemes and pb.piggyback_applicable(
            lib, channel.n_users, cache
        ):
            p_pb = pb.piggyback_power(lib, channel, cache)
            meets = pb.meets_lower_bound(lib, channel, cache)
        p_ign = None
        if "ign" in cfg.schemes:
            flat = correlation_ignorant_projection(lib)
            full = sp.CacheAllocation(
                (Fraction(1),) + (Fraction(0),) * (cfg.n_files - 1)
            )
            p_ign = sp.achievable_power_constructive(flat, channel, cache, full)
        points.append(
            CurvePoint(
                sweep=float(v),
                p_lb=p_lb,
                p_ub=p_ub,
                pi_star=pi_star,
                p_pb=p_pb,
                meets_lb=meets,
                p_ign=p_ign,
            )
        )
    return points


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.11e}"


def _fmt_row(p) -> str:
    meets = "" if p.meets_lb is None else ("true" if p.meets_lb else "false")
    pi = "" if p.pi_star is None else ";".join(str(f) for f in p.pi_star)
    return ",".join(
        [_fmt(p.sweep), _fmt(p.p_lb), _fmt(p.p_ub), _fmt(p.p_pb), _fmt(p.p_ign), meets, pi]
    )


def csv_bytes(points: Sequence) -> bytes:
    lines = [CSV_HEADER] + [_fmt_row(p) for p in points]
    return ("\n".join(lines) + "\n").encode("utf-8")


def emit_csv(points: Sequence, path: Union[str, Path]) -> None:
    """Write the sweep as UTF-8 CSV (12 significant digits per number)."""
    if not points:
        raise ValueError("no points to write")
    path = Path(path)
    try:
        path.write_bytes(csv_bytes(points))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path: Union[str, Path]) -> list[SimpleNamespace]:
    """Parse a sweep CSV back into rows mirroring CurvePoint's fields."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected header in {path}")
    rows = []
    for line in lines[1:]:
        sweep, lb, ub, pbv, ign, meets, pi = line.split(",")
        rows.append(
            SimpleNamespace(
                sweep=float(sweep),
                p_lb=float(lb),
                p_ub=float(ub) if ub else None,
                p_pb=float(pbv) if pbv else None,
                p_ign=float(ign) if ign else None,
                meets_lb=None if not meets else meets == "true",
                pi_star=None
                if not pi
                else tuple(Fraction(part) for part in pi.split(";")),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Verification entry point
# ---------------------------------------------------------------------------


def verify_command(cfg: ExperimentConfig, corrupt=None, echo=print) -> int:
    """Oracle sweep plus closed-form/constructive cross-checks.

    Returns 0 when everything passes, 1 with a counterexample printed
    otherwise.  ``corrupt`` is a test hook forwarded to the verifiers.
    """
    if cfg.n_files > 6 or cfg.n_users > 6:
        raise ConfigError("n_files/n_users", "verification is capped at 6")
    channel = cfg.channel()
    n, K = cfg.n_files, channel.n_users
    mid = cfg.sweep_values()[len(cfg.sweep_values()) // 2]
    lib = cfg.library_at(mid)
    failures = 0

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" {detail}" if not ok else ""))
        if not ok:
            failures += 1

    # Superposition: uniform integer splits plus one staggered fractional.
    t_grids = [[Fraction(tau)] * n for tau in range(K + 1)]
    t_grids.append([Fraction(lvl % K if K > 1 else 0) + Fraction(1, 7) for lvl in range(1, n + 1)])
    for ts in t_grids:
        report = oracle_mod.verify_superposition(
            lib, K, t_values=ts, corrupt=corrupt
        )
        check(f"superposition decodable at t={[str(t) for t in ts]}", report.passed, str(report))
        if not report.passed:
            break

    # Piggyback: five cache sizes across the applicable range.
    low = max(n - K, 1)
    max_cache = min(lib.rate(lvl) for lvl in range(low, n + 1))
    cache_grid = sorted({Fraction(j) * max_cache / 4 for j in range(5)})
    for cache in cache_grid:
        report = oracle_mod.verify_piggyback(lib, K, cache, corrupt=corrupt)
        check(f"piggyback decodable at M={cache}", report.passed, str(report))
        if not report.passed:
            break

    # Closed form vs construction and bound ordering.
    total = file_rate(lib)
    for cache in (Fraction(0), total / 3, total):
        alloc, _ = sp.optimize_allocation(lib, channel, cache, grid=cfg.pi_grid)
        built = sp.achievable_power_constructive(lib, channel, cache, alloc)
        bound = sp.upper_bound_power(lib, channel, cache, alloc)
        check(
            f"constructed power within closed-form bound at M={cache}",
            built <= bound + 1e-9,
            f"built={built} bound={bound}",
        )
        check(
            f"lower bound below constructed power at M={cache}",
            lower_bound_power(lib, channel, cache) <= built + 1e-9,
        )
    for cache in cache_grid:
        closed = pb.piggyback_power(lib, channel, cache)
        levels = pb.build_level_messages(
            lib, representative_worst_demand(n, K), cache
        )
        built = pb.level_power_conditions(levels, channel).total
        check(
            f"piggyback closed form matches construction at M={cache}",
            abs(closed - built) <= 1e-9 * max(1.0, closed),
            f"closed={closed} built={built}",
        )
        if pb.meets_lower_bound(lib, channel, cache):
            check(
                f"piggyback meets lower bound at M={cache}",
                abs(closed - lower_bound_power(lib, channel, cache)) <= 1e-9,
            )
    return 1 if failures else 0
