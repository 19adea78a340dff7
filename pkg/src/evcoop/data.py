"""Scenario ingestion and synthesis: prices, PV generation, EV demand, episodes.

CSV formats (UTF-8, decimal point, ISO-8601 local hour timestamps):

* price:  header ``timestamp,price_usd_per_kwh``, one row per hour,
  strictly consecutive hours, positive prices.
* PV:     header ``timestamp,station_id,kwh``, one row per station per hour,
  nonnegative generation, dense in both dimensions.

The bundled ``sample_data/*.csv`` files are synthetic stand-ins for regional
market feeds, generated from smooth daily shapes; they exist so the package
runs out of the box and carry no claim of matching any real market.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path

import numpy as np

from .core import EssParams, PriceQuote, StationState


class ScenarioDataError(ValueError):
    """Malformed or inconsistent scenario input."""


DEFAULT_MULTIPLIERS = (1.2, 0.9, 0.8)  # (ev, trade, buyback) applied to the utility price


@dataclass(frozen=True)
class PriceSeries:
    """Hourly utility prices plus the multipliers that derive the other three prices."""

    timestamps: tuple[datetime, ...]
    utility: tuple[float, ...]
    m_ev: float = DEFAULT_MULTIPLIERS[0]
    m_trade: float = DEFAULT_MULTIPLIERS[1]
    m_back: float = DEFAULT_MULTIPLIERS[2]

    def __post_init__(self) -> None:
        if not (0.0 < self.m_back < self.m_trade < 1.0 < self.m_ev):
            raise ScenarioDataError(
                f"multipliers must satisfy 0 < back < trade < 1 < ev, got "
                f"({self.m_back}, {self.m_trade}, {self.m_ev})"
            )

    def __len__(self) -> int:
        return len(self.utility)

    def quote(self, t: int) -> PriceQuote:
        p = self.utility[t]
        return PriceQuote(utility=p, ev=self.m_ev * p, trade=self.m_trade * p, buyback=self.m_back * p)


@dataclass(frozen=True)
class PvSeries:
    """Per-station hourly PV generation, stations in columns."""

    timestamps: tuple[datetime, ...]
    generation: tuple[tuple[float, ...], ...]  # [t][station] kWh

    def __len__(self) -> int:
        return len(self.generation)

    @property
    def station_count(self) -> int:
        return len(self.generation[0]) if self.generation else 0


@dataclass(frozen=True)
class DemandModel:
    """Seeded generator of urgent/regular EV arrivals around a daily profile.

    ``profiles`` holds one 24-value mean hourly profile (kWh) per station; a
    single profile is shared by all stations.  Hourly totals are the profile
    value plus Gaussian noise, truncated at zero, and split by a fixed
    urgent fraction.
    """

    profiles: tuple[tuple[float, ...], ...]
    noise_sigma: float = 0.0
    urgent_fraction: float = 0.2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for prof in self.profiles:
            if len(prof) != 24:
                raise ScenarioDataError(f"profile must have 24 values, got {len(prof)}")
            if any(v < 0.0 for v in prof):
                raise ScenarioDataError("profile values must be nonnegative")
        if not (0.0 <= self.urgent_fraction <= 1.0):
            raise ScenarioDataError(f"urgent_fraction must be in [0, 1], got {self.urgent_fraction}")
        if self.noise_sigma < 0.0:
            raise ScenarioDataError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")

    def profile_for(self, station: int) -> tuple[float, ...]:
        return self.profiles[station % len(self.profiles)]


@dataclass(frozen=True)
class Episode:
    """Aligned per-slot scenario data plus initial station states."""

    quotes: tuple[PriceQuote, ...]
    renewables: tuple[tuple[float, ...], ...]  # [t][station]
    arrivals: tuple[tuple[tuple[float, float], ...], ...]  # [t][station] -> (urgent, regular)
    initial_states: tuple[StationState, ...]

    def __post_init__(self) -> None:
        T = len(self.quotes)
        if T < 1:
            raise ScenarioDataError("episode must have at least one slot")
        if len(self.renewables) != T or len(self.arrivals) != T:
            raise ScenarioDataError(
                f"misaligned episode: {T} quotes, {len(self.renewables)} renewable slots, "
                f"{len(self.arrivals)} arrival slots"
            )
        n = len(self.initial_states)
        for t in range(T):
            if len(self.renewables[t]) != n or len(self.arrivals[t]) != n:
                raise ScenarioDataError(f"slot {t}: station count differs from {n}")

    @property
    def length(self) -> int:
        return len(self.quotes)

    @property
    def station_count(self) -> int:
        return len(self.initial_states)


def _parse_hour(text: str, path: str, line: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ScenarioDataError(f"{path}:{line}: bad timestamp {text!r}: {exc}") from None
    if ts.minute or ts.second or ts.microsecond:
        raise ScenarioDataError(f"{path}:{line}: timestamp {text!r} is not on the hour")
    return ts


def load_price_csv(
    path: str | Path, multipliers: tuple[float, float, float] = DEFAULT_MULTIPLIERS
) -> PriceSeries:
    """Load and gap-check an hourly utility price series."""
    path = Path(path)
    timestamps: list[datetime] = []
    prices: list[float] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ScenarioDataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["timestamp", "price_usd_per_kwh"]:
            raise ScenarioDataError(f"{path}:1: expected header 'timestamp,price_usd_per_kwh'")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ScenarioDataError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            ts = _parse_hour(row[0].strip(), str(path), line)
            try:
                price = float(row[1])
            except ValueError:
                raise ScenarioDataError(f"{path}:{line}: bad price {row[1]!r}") from None
            if not math.isfinite(price) or price <= 0.0:
                raise ScenarioDataError(f"{path}:{line}: price must be positive and finite, got {price}")
            if timestamps:
                expected = timestamps[-1] + timedelta(hours=1)
                if ts == timestamps[-1]:
                    raise ScenarioDataError(f"{path}:{line}: duplicated hour {ts.isoformat()}")
                if ts != expected:
                    raise ScenarioDataError(
                        f"{path}:{line}: missing hour {expected.isoformat()} (got {ts.isoformat()})"
                    )
            timestamps.append(ts)
            prices.append(price)
    if not prices:
        raise ScenarioDataError(f"{path}: no data rows")
    m_ev, m_trade, m_back = multipliers
    return PriceSeries(tuple(timestamps), tuple(prices), m_ev, m_trade, m_back)


def load_pv_csv(path: str | Path, station_count: int) -> PvSeries:
    """Load per-station hourly PV generation; every station-hour must be present."""
    path = Path(path)
    if station_count < 1:
        raise ScenarioDataError(f"station_count must be >= 1, got {station_count}")
    cells: dict[datetime, dict[int, float]] = {}
    order: list[datetime] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ScenarioDataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["timestamp", "station_id", "kwh"]:
            raise ScenarioDataError(f"{path}:1: expected header 'timestamp,station_id,kwh'")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ScenarioDataError(f"{path}:{line}: expected 3 columns, got {len(row)}")
            ts = _parse_hour(row[0].strip(), str(path), line)
            try:
                sid = int(row[1])
                kwh = float(row[2])
            except ValueError:
                raise ScenarioDataError(f"{path}:{line}: bad station_id or kwh") from None
            if not 0 <= sid < station_count:
                raise ScenarioDataError(
                    f"{path}:{line}: station_id {sid} outside [0, {station_count})"
                )
            if not math.isfinite(kwh) or kwh < 0.0:
                raise ScenarioDataError(f"{path}:{line}: kwh must be nonnegative, got {kwh}")
            per_hour = cells.setdefault(ts, {})
            if not per_hour:
                order.append(ts)
            if sid in per_hour:
                raise ScenarioDataError(f"{path}:{line}: duplicate ({ts.isoformat()}, station {sid})")
            per_hour[sid] = kwh
    if not order:
        raise ScenarioDataError(f"{path}: no data rows")
    order.sort()
    for prev, cur in zip(order, order[1:]):
        if cur != prev + timedelta(hours=1):
            raise ScenarioDataError(f"{path}: missing hour {(prev + timedelta(hours=1)).isoformat()}")
    generation = []
    for ts in order:
        per_hour = cells[ts]
        missing = [i for i in range(station_count) if i not in per_hour]
        if missing:
            raise ScenarioDataError(f"{path}: hour {ts.isoformat()} missing stations {missing}")
        generation.append(tuple(per_hour[i] for i in range(station_count)))
    return PvSeries(tuple(order), tuple(generation))


def synth_demand(
    model: DemandModel, T: int, station_count: int,
    rng: np.random.Generator | None = None,
) -> tuple[tuple[tuple[float, float], ...], ...]:
    """Draw an arrivals sequence: ``[t][station] -> (urgent, regular)``.

    With no ``rng`` the draw is fixed by ``model.rng_seed``; passing a
    generator consumes its state, so successive calls give fresh episodes.
    """
    if T < 1:
        raise ScenarioDataError(f"T must be >= 1, got {T}")
    if rng is None:
        rng = np.random.default_rng(model.rng_seed)
    noise = rng.normal(0.0, model.noise_sigma, size=(T, station_count)) if model.noise_sigma > 0.0 \
        else np.zeros((T, station_count))
    out = []
    for t in range(T):
        row = []
        for i in range(station_count):
            total = max(0.0, model.profile_for(i)[t % 24] + float(noise[t, i]))
            urgent = model.urgent_fraction * total
            row.append((urgent, total - urgent))
        out.append(tuple(row))
    return tuple(out)


def build_episode(
    price: PriceSeries,
    pv: PvSeries,
    arrivals: tuple[tuple[tuple[float, float], ...], ...],
    initial_soc: float,
    params: EssParams,
) -> Episode:
    """Assemble one aligned episode; all series must have equal length."""
    T = len(price)
    if len(pv) != T or len(arrivals) != T:
        raise ScenarioDataError(
            f"misaligned series: {T} price slots, {len(pv)} PV slots, {len(arrivals)} arrival slots"
        )
    if not (params.soc_min <= initial_soc <= params.soc_max):
        raise ScenarioDataError(
            f"initial_soc {initial_soc} outside [{params.soc_min}, {params.soc_max}]"
        )
    n = pv.station_count
    battery = initial_soc * params.capacity_max
    # Slot 0 arrivals seed the initial pending demand; the stored arrival
    # stream is what lands during each slot, consumed at slot end.
    first = arrivals[0]
    initial_states = tuple(
        StationState(battery_kwh=battery, urgent_demand=first[i][0], regular_demand=first[i][1])
        for i in range(n)
    )
    # Shift: slot t consumes arrivals[t + 1]; the final slot sees none.
    shifted = tuple(arrivals[1:]) + (tuple((0.0, 0.0) for _ in range(n)),)
    quotes = tuple(price.quote(t) for t in range(T))
    return Episode(quotes=quotes, renewables=pv.generation, arrivals=shifted, initial_states=initial_states)


def synth_price_series(
    T: int,
    seed: int,
    base: float = 0.10,
    swing: float = 0.06,
    noise_sigma: float = 0.004,
    multipliers: tuple[float, float, float] = DEFAULT_MULTIPLIERS,
    start: datetime | None = None,
) -> PriceSeries:
    """Generate a smooth synthetic daily price curve: cheap overnight, evening peak."""
    if T < 1:
        raise ScenarioDataError(f"T must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    start = start or datetime(2024, 6, 1, 0)
    timestamps = []
    prices = []
    for t in range(T):
        hour = (start + timedelta(hours=t)).hour
        shape = math.sin((hour - 9.0) * math.pi / 12.0)  # trough ~03:00, peak ~15:00-18:00
        p = base + swing * shape + float(rng.normal(0.0, noise_sigma))
        prices.append(max(p, 0.02))
        timestamps.append(start + timedelta(hours=t))
    m_ev, m_trade, m_back = multipliers
    return PriceSeries(tuple(timestamps), tuple(prices), m_ev, m_trade, m_back)


def synth_pv_series(
    T: int,
    station_count: int,
    seed: int,
    peak_kwh: float = 40.0,
    start: datetime | None = None,
) -> PvSeries:
    """Generate a synthetic solar bell curve per station with mild noise."""
    if T < 1 or station_count < 1:
        raise ScenarioDataError("T and station_count must be >= 1")
    rng = np.random.default_rng(seed)
    start = start or datetime(2024, 6, 1, 0)
    scale = 1.0 + 0.2 * rng.standard_normal(station_count)
    timestamps = []
    generation = []
    for t in range(T):
        ts = start + timedelta(hours=t)
        hour = ts.hour
        bell = max(0.0, math.sin((hour - 6.0) * math.pi / 12.0)) if 6 <= hour <= 18 else 0.0
        row = []
        for i in range(station_count):
            kwh = peak_kwh * abs(scale[i]) * bell * (1.0 + 0.1 * float(rng.standard_normal()))
            row.append(max(0.0, kwh))
        generation.append(tuple(row))
        timestamps.append(ts)
    return PvSeries(tuple(timestamps), tuple(generation))


def sample_data_path(name: str) -> Path:
    """Path of a bundled sample CSV, e.g. ``two_station_48h_price.csv``."""
    with resources.as_file(resources.files("evcoop") / "sample_data" / name) as p:
        if not p.exists():
            raise ScenarioDataError(f"no bundled sample file named {name!r}")
        return p
