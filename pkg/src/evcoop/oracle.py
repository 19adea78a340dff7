"""Exhaustive ground truth for tiny horizons, plus a rolling lookahead baseline.

The oracle enumerates the same discrete action grid the agents use, so its
optimum is an exact upper bound on anything a policy over that grid can earn.
Depth-first search shares slot prefixes; determinism comes from ascending
index order with strict improvement, so ties keep the first sequence found.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import EssParams, PriceQuote, StationAction, StationState, step as env_step
from .data import Episode
from .marl.encoding import ActionGrid, InfeasibleActionError

ENUMERATION_BUDGET = 10_000_000


class BudgetExceededError(ValueError):
    """Raised when the joint action space is too large to enumerate."""


class MismatchedInstanceError(ValueError):
    """Raised when comparing results computed on different instances."""


@dataclass(frozen=True)
class TinyInstance:
    """A small scenario plus the action grid to enumerate over."""

    episode: Episode
    params: EssParams
    grid: ActionGrid

    def __post_init__(self):
        k = self.grid.n_actions
        cells = self.episode.station_count * self.episode.length
        if cells * math.log(k) > math.log(ENUMERATION_BUDGET):
            raise BudgetExceededError(
                f"{k}^{cells} joint sequences exceed the {ENUMERATION_BUDGET:.0e} budget")


@dataclass
class OracleResult:
    """Optimal profit with the sequence achieving it."""

    profit: float
    actions: tuple[tuple[int, ...], ...]  # [slot][station] flat grid indices
    nodes: int
    wall_time_s: float
    fingerprint: str


def instance_fingerprint(instance: TinyInstance) -> str:
    """Stable digest of the instance's data, for mismatch detection."""
    h = hashlib.sha256()
    ep = instance.episode
    for q in ep.quotes:
        h.update(np.array([q.utility, q.ev, q.trade, q.buyback]).tobytes())
    h.update(np.array(ep.renewables).tobytes())
    h.update(np.array(ep.arrivals).tobytes())
    for s in ep.initial_states:
        h.update(np.array([s.battery_kwh, s.urgent_demand, s.regular_demand]).tobytes())
    p = instance.params
    h.update(np.array([p.capacity_max, p.soc_min, p.soc_max, p.leakage_beta,
                       p.export_cap, p.import_cap]).tobytes())
    h.update(np.array(instance.grid.ev_fractions).tobytes())
    h.update(np.array([instance.grid.cs_levels]).tobytes())
    return h.hexdigest()


def _slot_options(grid: ActionGrid, states, renewables, params):
    """Per-station (supplies, controls, feasible indices) for one slot."""
    options = []
    for i, state in enumerate(states):
        supplies, controls, mask = grid.decode_table(state, renewables[i], params)
        options.append((supplies, controls, np.flatnonzero(mask)))
    return options


def _search(episode: Episode, params: EssParams, grid: ActionGrid,
            start_states, t_start: int, depth: int) -> tuple[float, tuple, int]:
    """Best cumulative profit over ``depth`` slots from ``start_states``.

    Returns (profit, action index sequence, environment steps evaluated).
    Infeasible branches (empty mask under tight caps) are pruned.
    """
    n = episode.station_count
    best_profit = -math.inf
    best_seq: tuple = ()
    nodes = 0

    def recurse(t, states, acc, prefix):
        nonlocal best_profit, best_seq, nodes
        if t == t_start + depth:
            if acc > best_profit:
                best_profit = acc
                best_seq = prefix
            return
        try:
            options = _slot_options(grid, states, episode.renewables[t], params)
        except InfeasibleActionError:
            return
        quote = episode.quotes[t]
        renew = list(episode.renewables[t])
        arrivals = list(episode.arrivals[t])
        for combo in itertools.product(*(opt[2] for opt in options)):
            actions = [
                StationAction(ev_supply=options[i][0][a], ess_control=options[i][1][a])
                for i, a in enumerate(combo)
            ]
            out = env_step(list(states), actions, renew, quote, arrivals, params)
            nodes += 1
            recurse(t + 1, out.next_states, acc + out.profit.total_profit,
                    prefix + (tuple(int(a) for a in combo),))

    recurse(t_start, list(start_states), 0.0, ())
    if not math.isfinite(best_profit):
        raise InfeasibleActionError("no feasible joint action sequence")
    return best_profit, best_seq, nodes


def brute_force(instance: TinyInstance) -> OracleResult:
    """Exact maximum profit over every feasible joint action sequence."""
    t0 = time.perf_counter()
    ep = instance.episode
    profit, seq, nodes = _search(ep, instance.params, instance.grid,
                                 ep.initial_states, 0, ep.length)
    return OracleResult(profit=profit, actions=seq, nodes=nodes,
                        wall_time_s=time.perf_counter() - t0,
                        fingerprint=instance_fingerprint(instance))


def rolling_greedy(instance: TinyInstance, lookahead: int
                   ) -> tuple[float, tuple[tuple[int, ...], ...]]:
    """Plan ``lookahead`` slots ahead, execute the first joint action, repeat."""
    if lookahead < 1:
        raise ValueError("lookahead must be >= 1")
    ep = instance.episode
    params, grid = instance.params, instance.grid
    states = list(ep.initial_states)
    total = 0.0
    taken: list[tuple[int, ...]] = []
    for t in range(ep.length):
        depth = min(lookahead, ep.length - t)
        _, seq, _ = _search(ep, params, grid, states, t, depth)
        combo = seq[0]
        options = _slot_options(grid, states, ep.renewables[t], params)
        actions = [
            StationAction(ev_supply=options[i][0][a], ess_control=options[i][1][a])
            for i, a in enumerate(combo)
        ]
        out = env_step(states, actions, list(ep.renewables[t]), ep.quotes[t],
                       list(ep.arrivals[t]), params)
        total += out.profit.total_profit
        states = list(out.next_states)
        taken.append(combo)
    return total, tuple(taken)


def replay_sequence(instance: TinyInstance, actions: tuple[tuple[int, ...], ...]
                    ) -> tuple[float, tuple[float, ...]]:
    """Re-execute an index sequence; returns (total, per-station totals).

    Raises if any index is infeasible at its slot, so it doubles as a
    feasibility check on reported optimal sequences.
    """
    ep = instance.episode
    params, grid = instance.params, instance.grid
    if len(actions) != ep.length:
        raise ValueError(f"sequence has {len(actions)} slots, episode has {ep.length}")
    states = list(ep.initial_states)
    total = 0.0
    per_station = np.zeros(ep.station_count)
    for t, combo in enumerate(actions):
        decoded = [
            grid.decode(int(a), states[i], ep.renewables[t][i], params)
            for i, a in enumerate(combo)
        ]
        out = env_step(states, decoded, list(ep.renewables[t]), ep.quotes[t],
                       list(ep.arrivals[t]), params)
        total += out.profit.total_profit
        per_station += np.asarray(out.profit.station_profit)
        states = list(out.next_states)
    return total, tuple(float(v) for v in per_station)


@dataclass
class GapRow:
    algorithm: str
    profit: float
    abs_gap: float
    rel_gap: float


def compare(run_profits: dict[str, float], oracle: OracleResult,
            fingerprint: str) -> list[GapRow]:
    """Gap of each algorithm's profit to the enumerated optimum."""
    if fingerprint != oracle.fingerprint:
        raise MismatchedInstanceError(
            "profits and oracle result come from different instances")
    rows = []
    for name in sorted(run_profits):
        p = run_profits[name]
        gap = oracle.profit - p
        if oracle.profit != 0.0:
            rel = gap / abs(oracle.profit)
        else:
            rel = 0.0 if gap == 0.0 else math.inf
        rows.append(GapRow(algorithm=name, profit=p, abs_gap=gap, rel_gap=rel))
    return rows


def random_tiny_instance(rng: np.random.Generator,
                         station_count: int = 2, horizon: int = 3,
                         grid: ActionGrid | None = None) -> TinyInstance:
    """A randomized small scenario with valid price ordering and mixed dynamics."""
    if grid is None:
        choices = (
            ActionGrid(ev_fractions=(0.0, 1.0), cs_levels=3),
            ActionGrid(ev_fractions=(0.0, 1.0), cs_levels=2),
            ActionGrid(ev_fractions=(0.0, 0.5, 1.0), cs_levels=2),
            ActionGrid(ev_fractions=(1.0,), cs_levels=5),
        )
        grid = choices[rng.integers(len(choices))]
    params = EssParams(
        capacity_max=float(rng.uniform(30.0, 80.0)),
        leakage_beta=float(rng.choice([1.0, 0.99])),
    )
    quotes = []
    for _ in range(horizon):
        u = float(rng.uniform(0.05, 0.50))
        quotes.append(PriceQuote(utility=u, ev=1.2 * u, trade=0.9 * u, buyback=0.8 * u))
    renewables = tuple(
        tuple(float(rng.uniform(0.0, 20.0)) for _ in range(station_count))
        for _ in range(horizon)
    )
    arrivals = tuple(
        tuple((float(rng.uniform(0.0, 6.0)), float(rng.uniform(0.0, 12.0)))
              for _ in range(station_count))
        for _ in range(horizon)
    )
    initial_states = tuple(
        StationState(
            battery_kwh=float(rng.uniform(params.capacity_min, params.usable_max)),
            urgent_demand=float(rng.uniform(0.0, 6.0)),
            regular_demand=float(rng.uniform(0.0, 12.0)),
        )
        for _ in range(station_count)
    )
    episode = Episode(quotes=tuple(quotes), renewables=renewables,
                      arrivals=arrivals, initial_states=initial_states)
    return TinyInstance(episode=episode, params=params, grid=grid)
