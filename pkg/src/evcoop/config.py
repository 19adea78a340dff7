"""Run configuration: schema-validated JSON with every default resolved.

An empty document is a complete configuration: it trains on the bundled
two-station sample scenario with the stock station parameters (0.99 leakage,
200 kWh capacity, 0.05/0.95 SOC window, 0.99 discount, the 0.0005/0.001
learning-rate split).  ``resolved_dict`` echoes the fully-resolved form;
loading that echo reproduces the identical RunConfig.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .core import EssParams
from .data import (
    DemandModel,
    PriceSeries,
    PvSeries,
    ScenarioDataError,
    load_price_csv,
    load_pv_csv,
    sample_data_path,
    synth_price_series,
    synth_pv_series,
)
from .marl.encoding import ActionGrid, ObsScales
from .marl.trainer import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration document; message names the offending field."""


SAMPLE_SCENARIOS = {
    "two_station_48h": {
        "price": "two_station_48h_price.csv",
        "pv": "two_station_48h_pv.csv",
        "station_count": 2,
    },
}

# evening-shifted charging demand, station 1 runs lighter than station 0
_DEFAULT_PROFILE = (
    8.0, 6.0, 5.0, 5.0, 6.0, 8.0, 12.0, 18.0, 22.0, 20.0, 16.0, 14.0,
    13.0, 13.0, 14.0, 16.0, 20.0, 26.0, 30.0, 28.0, 22.0, 16.0, 12.0, 9.0,
)

DEFAULTS: dict = {
    "scenario": {
        "mode": "sample",
        "sample_name": "two_station_48h",
        "price_csv": None,
        "pv_csv": None,
        "station_count": 2,
        "horizon": 48,
        "price_base": 0.10,
        "price_swing": 0.06,
        "price_noise_sigma": 0.004,
        "pv_peak_kwh": 40.0,
        "series_seed": 2024,
        "multipliers": {"ev": 1.2, "trade": 0.9, "buyback": 0.8},
        "demand": {
            "profiles": [
                list(_DEFAULT_PROFILE),
                [round(0.75 * v, 4) for v in _DEFAULT_PROFILE],
            ],
            "noise_sigma": 3.0,
            "urgent_fraction": 0.2,
        },
        "initial_soc": 0.5,
    },
    "ess": {
        "capacity_max": 200.0,
        "soc_min": 0.05,
        "soc_max": 0.95,
        "leakage_beta": 0.99,
        "export_cap": None,
        "import_cap": None,
    },
    "grid": {"ev_fractions": [0.0, 0.5, 1.0], "cs_levels": 5},
    "scales": {
        "demand_all": 100.0, "soc": 1.0, "urgent": 25.0,
        "regular": 50.0, "renewable": 50.0, "price": 0.1,
    },
    "train": {
        "episodes": 300,
        "gamma": 0.99,
        "lr_agent": 0.001,
        "lr_mixer": 0.0005,
        "epsilon_start": 1.0,
        "epsilon_end": 0.05,
        "epsilon_decay_frac": 0.5,
        "target_period": 10,
        "batch_episodes": 8,
        "capacity": 256,
        "reward_scale": 0.001,
        "agent_loss_mode": "direct",
        "hidden_dim": 64,
        "embed_dim": 32,
        "hyper_hidden": 64,
        "debug_checks": False,
    },
    "algorithms": ["double_qmix"],
    "seeds": [0],
    "out_dir": "runs",
}


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str
    sample_name: str
    price_csv: str | None
    pv_csv: str | None
    station_count: int
    horizon: int
    price_base: float
    price_swing: float
    price_noise_sigma: float
    pv_peak_kwh: float
    series_seed: int
    multipliers: tuple[float, float, float]  # (ev, trade, buyback)
    demand_profiles: tuple[tuple[float, ...], ...]
    demand_noise_sigma: float
    urgent_fraction: float
    initial_soc: float


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    ess: EssParams
    grid: ActionGrid
    scales: ObsScales
    train: TrainConfig
    algorithms: tuple[str, ...]
    seeds: tuple[int, ...]
    out_dir: str


def _schema() -> dict:
    text = resources.files("evcoop").joinpath("config_schema.json").read_text()
    return json.loads(text)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_dict(document: dict) -> RunConfig:
    """Validate a parsed JSON document and resolve every default."""
    if not isinstance(document, dict):
        raise ConfigError(f"configuration must be a JSON object, got {type(document).__name__}")
    validator = jsonschema.Draft7Validator(_schema())
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "(root)"
        raise ConfigError(f"{path}: {err.message}")

    doc = _deep_merge(DEFAULTS, document)
    sc = doc["scenario"]
    mult = sc["multipliers"]
    if not (0.0 < mult["buyback"] < mult["trade"] < 1.0 < mult["ev"]):
        raise ConfigError(
            "scenario.multipliers: ordering must satisfy 0 < buyback < trade < 1 < ev, "
            f"got buyback={mult['buyback']}, trade={mult['trade']}, ev={mult['ev']}")

    if sc["mode"] == "csv":
        for key in ("price_csv", "pv_csv"):
            if not sc[key]:
                raise ConfigError(f"scenario.{key}: required when scenario.mode is 'csv'")
            if not Path(sc[key]).exists():
                raise ConfigError(f"scenario.{key}: file not found: {sc[key]}")
    if sc["mode"] == "sample" and sc["sample_name"] not in SAMPLE_SCENARIOS:
        known = ", ".join(sorted(SAMPLE_SCENARIOS))
        raise ConfigError(f"scenario.sample_name: unknown sample {sc['sample_name']!r} "
                          f"(available: {known})")

    try:
        ess = EssParams(
            capacity_max=float(doc["ess"]["capacity_max"]),
            soc_min=float(doc["ess"]["soc_min"]),
            soc_max=float(doc["ess"]["soc_max"]),
            leakage_beta=float(doc["ess"]["leakage_beta"]),
            export_cap=None if doc["ess"]["export_cap"] is None else float(doc["ess"]["export_cap"]),
            import_cap=None if doc["ess"]["import_cap"] is None else float(doc["ess"]["import_cap"]),
        )
        grid = ActionGrid(
            ev_fractions=tuple(float(f) for f in doc["grid"]["ev_fractions"]),
            cs_levels=int(doc["grid"]["cs_levels"]),
        )
        scales = ObsScales(**{k: float(v) for k, v in doc["scales"].items()})
        train = TrainConfig(**doc["train"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if not (ess.soc_min <= sc["initial_soc"] <= ess.soc_max):
        raise ConfigError(
            f"scenario.initial_soc: {sc['initial_soc']} outside the SOC window "
            f"[{ess.soc_min}, {ess.soc_max}]")

    scenario = ScenarioConfig(
        mode=sc["mode"],
        sample_name=sc["sample_name"],
        price_csv=sc["price_csv"],
        pv_csv=sc["pv_csv"],
        station_count=int(sc["station_count"]),
        horizon=int(sc["horizon"]),
        price_base=float(sc["price_base"]),
        price_swing=float(sc["price_swing"]),
        price_noise_sigma=float(sc["price_noise_sigma"]),
        pv_peak_kwh=float(sc["pv_peak_kwh"]),
        series_seed=int(sc["series_seed"]),
        multipliers=(float(mult["ev"]), float(mult["trade"]), float(mult["buyback"])),
        demand_profiles=tuple(tuple(float(v) for v in p) for p in sc["demand"]["profiles"]),
        demand_noise_sigma=float(sc["demand"]["noise_sigma"]),
        urgent_fraction=float(sc["demand"]["urgent_fraction"]),
        initial_soc=float(sc["initial_soc"]),
    )
    return RunConfig(
        scenario=scenario, ess=ess, grid=grid, scales=scales, train=train,
        algorithms=tuple(doc["algorithms"]), seeds=tuple(int(s) for s in doc["seeds"]),
        out_dir=str(doc["out_dir"]),
    )


def load_config(path: str | Path) -> RunConfig:
    """Read, parse, and validate a JSON configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return load_config_dict(document)


def resolved_dict(config: RunConfig) -> dict:
    """The full configuration as a plain dict; reloading it is the identity."""
    sc = config.scenario
    ess = config.ess
    return {
        "scenario": {
            "mode": sc.mode,
            "sample_name": sc.sample_name,
            "price_csv": sc.price_csv,
            "pv_csv": sc.pv_csv,
            "station_count": sc.station_count,
            "horizon": sc.horizon,
            "price_base": sc.price_base,
            "price_swing": sc.price_swing,
            "price_noise_sigma": sc.price_noise_sigma,
            "pv_peak_kwh": sc.pv_peak_kwh,
            "series_seed": sc.series_seed,
            "multipliers": {
                "ev": sc.multipliers[0],
                "trade": sc.multipliers[1],
                "buyback": sc.multipliers[2],
            },
            "demand": {
                "profiles": [list(p) for p in sc.demand_profiles],
                "noise_sigma": sc.demand_noise_sigma,
                "urgent_fraction": sc.urgent_fraction,
            },
            "initial_soc": sc.initial_soc,
        },
        "ess": {
            "capacity_max": ess.capacity_max,
            "soc_min": ess.soc_min,
            "soc_max": ess.soc_max,
            "leakage_beta": ess.leakage_beta,
            "export_cap": ess.export_cap,
            "import_cap": ess.import_cap,
        },
        "grid": {
            "ev_fractions": list(config.grid.ev_fractions),
            "cs_levels": config.grid.cs_levels,
        },
        "scales": {
            "demand_all": config.scales.demand_all,
            "soc": config.scales.soc,
            "urgent": config.scales.urgent,
            "regular": config.scales.regular,
            "renewable": config.scales.renewable,
            "price": config.scales.price,
        },
        "train": {
            "episodes": config.train.episodes,
            "gamma": config.train.gamma,
            "lr_agent": config.train.lr_agent,
            "lr_mixer": config.train.lr_mixer,
            "epsilon_start": config.train.epsilon_start,
            "epsilon_end": config.train.epsilon_end,
            "epsilon_decay_frac": config.train.epsilon_decay_frac,
            "target_period": config.train.target_period,
            "batch_episodes": config.train.batch_episodes,
            "capacity": config.train.capacity,
            "reward_scale": config.train.reward_scale,
            "agent_loss_mode": config.train.agent_loss_mode,
            "hidden_dim": config.train.hidden_dim,
            "embed_dim": config.train.embed_dim,
            "hyper_hidden": config.train.hyper_hidden,
            "debug_checks": config.train.debug_checks,
        },
        "algorithms": list(config.algorithms),
        "seeds": list(config.seeds),
        "out_dir": config.out_dir,
    }


def build_scenario(config: RunConfig) -> tuple[PriceSeries, PvSeries, DemandModel, int]:
    """Materialize the price/PV series and demand model a config describes."""
    sc = config.scenario
    mult = sc.multipliers
    try:
        if sc.mode == "csv":
            price = load_price_csv(sc.price_csv, mult)
            pv = load_pv_csv(sc.pv_csv, sc.station_count)
            stations = sc.station_count
        elif sc.mode == "sample":
            entry = SAMPLE_SCENARIOS[sc.sample_name]
            stations = entry["station_count"]
            price = load_price_csv(sample_data_path(entry["price"]), mult)
            pv = load_pv_csv(sample_data_path(entry["pv"]), stations)
        else:
            stations = sc.station_count
            price = synth_price_series(
                sc.horizon, sc.series_seed, base=sc.price_base, swing=sc.price_swing,
                noise_sigma=sc.price_noise_sigma, multipliers=mult)
            pv = synth_pv_series(sc.horizon, stations, sc.series_seed + 1,
                                 peak_kwh=sc.pv_peak_kwh)
    except ScenarioDataError as exc:
        raise ConfigError(str(exc)) from exc
    if len(price) != len(pv):
        raise ConfigError(
            f"price series has {len(price)} slots but PV series has {len(pv)}")
    demand = DemandModel(
        profiles=sc.demand_profiles,
        noise_sigma=sc.demand_noise_sigma,
        urgent_fraction=sc.urgent_fraction,
    )
    return price, pv, demand, stations
