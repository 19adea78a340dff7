"""Observation encoding and the discrete, feasibility-masked action grid.

Each agent sees a six-feature vector: fleet-wide demand, its own state of
charge, its urgent and regular demand, its renewable generation, and the
utility price, each divided by a fixed normalization scale.  Actions are a
``K_ev x K_cs`` grid: a supply fraction applied to regular demand crossed
with battery control levels spaced linearly over the feasible interval that
results from that supply choice, so every decodable action already respects
the demand and battery constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import (
    EssParams,
    InfeasibleIntervalError,
    StationAction,
    StationState,
    curtail_renewable,
    ess_bounds,
    soc,
)

OBS_DIM = 6


class InfeasibleActionError(ValueError):
    """Raised when decoding an action index the current mask forbids."""


@dataclass(frozen=True)
class ObsScales:
    """Per-feature divisors; defaults sized for tens-of-kWh stations."""

    demand_all: float = 100.0
    soc: float = 1.0
    urgent: float = 25.0
    regular: float = 50.0
    renewable: float = 50.0
    price: float = 0.1

    def __post_init__(self):
        for name in ("demand_all", "soc", "urgent", "regular", "renewable", "price"):
            if not getattr(self, name) > 0:
                raise ValueError(f"scale {name} must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.demand_all, self.soc, self.urgent,
                         self.regular, self.renewable, self.price])


def encode_observation(states: Sequence[StationState], station: int,
                       renewable: float, price_utility: float,
                       params: EssParams, scales: ObsScales) -> np.ndarray:
    """Feature vector [D_all, SOC_i, D_urgent, D_regular, E_renewable, price]."""
    own = states[station]
    demand_all = sum(s.total_demand for s in states)
    raw = np.array([
        demand_all,
        soc(own, params),
        own.urgent_demand,
        own.regular_demand,
        renewable,
        price_utility,
    ])
    return raw / scales.as_array()


def global_state(observations: np.ndarray) -> np.ndarray:
    """Concatenate the (I, 6) observation block into the shared state vector."""
    return np.asarray(observations).reshape(-1)


@dataclass(frozen=True)
class ActionGrid:
    """Joint discretization of per-station supply and battery control.

    Flat index ``e * cs_levels + c`` selects supply fraction ``ev_fractions[e]``
    and the ``c``-th of ``cs_levels`` control levels spaced inclusively over
    the feasible interval for that supply.
    """

    ev_fractions: tuple[float, ...] = (0.0, 0.5, 1.0)
    cs_levels: int = 5

    def __post_init__(self):
        if len(self.ev_fractions) == 0:
            raise ValueError("need at least one supply fraction")
        for f in self.ev_fractions:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"supply fraction {f} outside [0, 1]")
        if self.cs_levels < 1:
            raise ValueError("cs_levels must be >= 1")

    @property
    def n_actions(self) -> int:
        return len(self.ev_fractions) * self.cs_levels

    def decode_table(self, state: StationState, renewable: float,
                     params: EssParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All decoded (supplies, controls, mask) for one station at one slot.

        A supply fraction whose battery interval is empty (possible under
        tight export/import caps) has its block masked out; at least one
        block must survive.
        """
        n = self.n_actions
        supplies = np.zeros(n)
        controls = np.zeros(n)
        mask = np.zeros(n, dtype=bool)
        for e, frac in enumerate(self.ev_fractions):
            supply = state.urgent_demand + frac * state.regular_demand
            flow, _ = curtail_renewable(renewable, supply, state.battery_kwh, params)
            try:
                lo, hi = ess_bounds(state.battery_kwh, flow, params)
            except InfeasibleIntervalError:
                continue
            block = slice(e * self.cs_levels, (e + 1) * self.cs_levels)
            supplies[block] = supply
            controls[block] = np.linspace(lo, hi, self.cs_levels)
            mask[block] = True
        if not mask.any():
            raise InfeasibleActionError(
                "no feasible action: every supply fraction leaves an empty control interval")
        return supplies, controls, mask

    def decode(self, index: int, state: StationState, renewable: float,
               params: EssParams) -> StationAction:
        """Turn a flat action index into a concrete StationAction."""
        if not 0 <= index < self.n_actions:
            raise InfeasibleActionError(f"action index {index} outside grid of {self.n_actions}")
        supplies, controls, mask = self.decode_table(state, renewable, params)
        if not mask[index]:
            raise InfeasibleActionError(f"action index {index} is masked infeasible at this step")
        return StationAction(ev_supply=supplies[index], ess_control=controls[index])
