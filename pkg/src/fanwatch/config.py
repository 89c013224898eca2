"""Run configuration: a sectioned key = value file (INI syntax)."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from fanwatch.core import ConfigError
from fanwatch.evaluation import GridConfig
from fanwatch.forest import ForestParams
from fanwatch.preprocess import parse_reduction
from fanwatch.splits import RNG_NAME, PartitionPlan
from fanwatch.synthgen import DEFAULT_SAMPLE_BUDGET, ImpellerProfile, ScheduleConfig

ENV_VAR = "FANWATCH_CONFIG"
DEFAULT_NAME = "default"


@dataclass(frozen=True)
class RunConfig:
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    healthy_profile: ImpellerProfile = field(default_factory=ImpellerProfile)
    damaged_profile: ImpellerProfile = field(default_factory=lambda: ImpellerProfile().damaged(3.0))
    grid: GridConfig = field(default_factory=GridConfig)
    forest: ForestParams = field(default_factory=ForestParams)
    master_seed: int = 0
    sample_budget: int = DEFAULT_SAMPLE_BUDGET
    damage_scale: float = 3.0
    out_dir: str = "out"

    def grid_config(self, jobs: int | None = None) -> GridConfig:
        return replace(self.grid, forest=self.forest, master_seed=self.master_seed,
                       jobs=self.grid.jobs if jobs is None else jobs)


_SCHEDULE_DOC = {
    "rpm_step": "rpm increment between plateaus",
    "rpm_max": "last plateau; integer multiple of rpm_step",
    "plateau_s": "seconds per plateau (10 at desk scale, 900 for the full protocol)",
    "ramp_s": "seconds per ramp between plateaus",
    "gyro_rate_hz": "gyro sample rate, also the aligned table rate",
    "rpm_rate_hz": "tachometer sample rate",
}
_PROFILE_DOC = {
    "imbalance_amp": "once-per-revolution amplitude per rpm",
    "blade_pass_amp": "12x-per-revolution amplitude per rpm",
    "static_coupling": "non-oscillating imbalance load, in units of imbalance_amp * rpm",
    "noise_floor": "gyro noise sd at 0 rpm",
    "noise_gain": "gyro noise sd growth per rpm",
    "rpm_noise_floor": "tachometer noise sd at 0 rpm",
    "rpm_noise_gain": "tachometer noise sd growth per rpm",
}
_FOREST_DOC = {
    "n_trees": "trees in the forest",
    "row_fraction": "rows drawn per tree, with replacement",
    "feature_fraction": "share of features tried at each split (at least one)",
    "min_leaf": "minimum rows per leaf",
    "max_depth": "empty for unlimited",
    "bootstrap": "draw rows with replacement; false gives every tree all rows",
}


def _num(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _steps(s) -> str:
    return ", ".join(str(v) for v in sorted(s))


def emit(cfg: RunConfig | None = None) -> str:
    """Config file text with every value and a comment per key."""
    cfg = cfg or RunConfig()
    out = ["# fanwatch-format v1", "# fanwatch run configuration", ""]

    def section(name, items):
        out.append(f"[{name}]")
        for key, value, doc in items:
            out.append(f"# {doc}")
            out.append(f"{key} = {value}")
        out.append("")

    section("run", [
        ("master_seed", cfg.master_seed, "seeds every randomized step (splits, forests)"),
        ("rng", RNG_NAME, "generator identity; only this value is supported"),
        ("damage_scale", _num(cfg.damage_scale),
         "damaged profile = healthy amplitudes x this, unless [damaged_profile] sets them"),
        ("sample_budget", cfg.sample_budget, "max samples per channel a run may generate"),
        ("out_dir", cfg.out_dir, "default output directory of grid and health"),
    ])
    section("schedule", [(k, _num(getattr(cfg.schedule, k)), d) for k, d in _SCHEDULE_DOC.items()])
    section("healthy_profile",
            [(k, _num(getattr(cfg.healthy_profile, k)), d) for k, d in _PROFILE_DOC.items()])
    out.append("[damaged_profile]")
    out.append("# keys set here override the scaled healthy profile")
    out.append("")
    g = cfg.grid
    section("grid", [
        ("reductions", ", ".join(r.config_id for r in g.reductions),
         "ds-<fraction> or bin-<size>-<mean|mean_std|all|feature_feature...>"),
        ("splits", ", ".join(g.splits), "shuffled and/or partitioned"),
        ("models", ", ".join(g.models), "lr and/or rf"),
        ("ratio", _num(g.ratio), "train share of the shuffled split"),
        ("health_config", g.health_config, "reduction whose shuffled rf model feeds the health figure"),
        ("jobs", g.jobs, "worker processes; results do not depend on it"),
    ])
    section("partition", [
        ("train_steps", _steps(g.plan.train_steps), "plateau ordinals used for training"),
        ("test_steps", _steps(g.plan.test_steps), "plateau ordinals used for testing"),
        ("excluded_steps", _steps(g.plan.excluded_steps), "plateau ordinals left out"),
    ])
    f = cfg.forest
    section("forest", [
        (k, "" if getattr(f, k) is None else str(getattr(f, k)).lower()
         if isinstance(getattr(f, k), bool) else _num(getattr(f, k)), d)
        for k, d in _FOREST_DOC.items()
    ])
    return "\n".join(out)


def _get(parser, sec, key, conv, default):
    if not parser.has_option(sec, key):
        return default
    raw = parser.get(sec, key).strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _int_set(text: str) -> frozenset[int]:
    return frozenset(int(v) for v in text.replace(",", " ").split())


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


_KNOWN = {
    "run": {"master_seed", "rng", "damage_scale", "sample_budget", "out_dir"},
    "schedule": set(_SCHEDULE_DOC),
    "healthy_profile": set(_PROFILE_DOC),
    "damaged_profile": set(_PROFILE_DOC),
    "grid": {"reductions", "splits", "models", "ratio", "health_config", "jobs"},
    "partition": {"train_steps", "test_steps", "excluded_steps"},
    "forest": set(_FOREST_DOC),
}


def parse(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    for sec in parser.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        unknown = set(parser.options(sec)) - _KNOWN[sec]
        if unknown:
            raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(unknown))}")

    d = RunConfig()
    rng = _get(parser, "run", "rng", str, RNG_NAME)
    if rng != RNG_NAME:
        raise ConfigError(f"unsupported rng {rng!r}; expected {RNG_NAME}")
    seed = _get(parser, "run", "master_seed", int, d.master_seed)
    if seed < 0:
        raise ConfigError("master_seed must be unsigned")
    scale = _get(parser, "run", "damage_scale", float, d.damage_scale)

    schedule = ScheduleConfig(**{k: _get(parser, "schedule", k, float, getattr(d.schedule, k))
                                 for k in _SCHEDULE_DOC})
    healthy = ImpellerProfile(**{k: _get(parser, "healthy_profile", k, float,
                                         getattr(d.healthy_profile, k)) for k in _PROFILE_DOC})
    damaged = healthy.damaged(scale)
    damaged = replace(damaged, **{k: _get(parser, "damaged_profile", k, float, getattr(damaged, k))
                                  for k in _PROFILE_DOC})

    g = d.grid
    reductions = _get(parser, "grid", "reductions",
                      lambda s: tuple(parse_reduction(r) for r in _names(s)), g.reductions)
    if not reductions:
        raise ConfigError("[grid] reductions is empty")
    plan = PartitionPlan(
        _get(parser, "partition", "train_steps", _int_set, g.plan.train_steps),
        _get(parser, "partition", "test_steps", _int_set, g.plan.test_steps),
        _get(parser, "partition", "excluded_steps", _int_set, g.plan.excluded_steps),
    )
    fd = d.forest
    forest = ForestParams(
        n_trees=_get(parser, "forest", "n_trees", int, fd.n_trees),
        row_fraction=_get(parser, "forest", "row_fraction", float, fd.row_fraction),
        feature_fraction=_get(parser, "forest", "feature_fraction", float, fd.feature_fraction),
        min_leaf=_get(parser, "forest", "min_leaf", int, fd.min_leaf),
        max_depth=_get(parser, "forest", "max_depth", lambda s: int(s) if s else None, fd.max_depth),
        bootstrap=_get(parser, "forest", "bootstrap", _bool, fd.bootstrap),
    )
    ratio = _get(parser, "grid", "ratio", float, g.ratio)
    if not 0 < ratio < 1:
        raise ConfigError("[grid] ratio must lie in (0, 1)")
    jobs = _get(parser, "grid", "jobs", int, g.jobs)
    if jobs < 1:
        raise ConfigError("[grid] jobs must be >= 1")
    try:
        grid = GridConfig(
            reductions=reductions,
            splits=_get(parser, "grid", "splits", _names, g.splits),
            models=_get(parser, "grid", "models", _names, g.models),
            forest=forest, plan=plan, ratio=ratio, master_seed=seed, jobs=jobs,
            health_config=_get(parser, "grid", "health_config", str, g.health_config),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        schedule=schedule, healthy_profile=healthy, damaged_profile=damaged, grid=grid,
        forest=forest, master_seed=seed,
        sample_budget=_get(parser, "run", "sample_budget", int, d.sample_budget),
        damage_scale=scale, out_dir=_get(parser, "run", "out_dir", str, d.out_dir),
    )


def load(path: str | os.PathLike | None = None) -> RunConfig:
    """Load a config file; ``None`` falls back to $FANWATCH_CONFIG, then defaults.

    The literal name ``default`` selects the built-in defaults.
    """
    if path is None:
        path = os.environ.get(ENV_VAR) or DEFAULT_NAME
    if str(path) == DEFAULT_NAME:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse(p.read_text(encoding="utf-8"))
