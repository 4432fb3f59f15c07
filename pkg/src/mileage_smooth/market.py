"""Performance-based regulation market.

Clearing is a uniform marginal price over offers adjusted by each unit's
performance score (offer / score). Units are filled in that merit order,
all moving in the direction of the imbalance, each up to its symmetric
capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class AgcUnit:
    id: int
    perf_score: float
    offer_price: float
    capacity: float

    def __post_init__(self):
        if not 0 < self.perf_score <= 1:
            raise ValueError(f"unit {self.id}: perf_score must be in (0, 1], got {self.perf_score}")
        if self.offer_price < 0:
            raise ValueError(f"unit {self.id}: negative offer price")
        if self.capacity <= 0:
            raise ValueError(f"unit {self.id}: capacity must be positive")

    @property
    def adjusted_price(self) -> float:
        return self.offer_price / self.perf_score


DEFAULT_UNITS = (
    AgcUnit(1, 0.7168, 2.0, 1.5),
    AgcUnit(2, 0.6074, 4.0, 4.0),
    AgcUnit(3, 1.0, 1.0, 2.5),
)


@dataclass(frozen=True)
class DispatchResult:
    g: tuple[float, ...]
    gamma: float
    feasible: bool
    residual: float


def adjusted_offers(units: Sequence[AgcUnit]) -> list[AgcUnit]:
    """Units sorted by adjusted price, then larger capacity, then id."""
    if not units:
        raise ValueError("no AGC units")
    for u in units:
        if u.perf_score <= 0:
            raise ValueError(f"unit {u.id}: zero performance score")
    return sorted(units, key=lambda u: (u.adjusted_price, -u.capacity, u.id))


class MeritOrder:
    """Precomputed merit order for repeated (and vectorized) dispatch."""

    def __init__(self, units: Sequence[AgcUnit]):
        self.units = tuple(units)
        ranked = adjusted_offers(units)
        index = {id(u): k for k, u in enumerate(self.units)}
        self.order = np.array([index[id(u)] for u in ranked])
        self.caps = np.array([u.capacity for u in ranked])
        self.prices = np.array([u.adjusted_price for u in ranked])
        self.cum = np.cumsum(self.caps)
        self.before = self.cum - self.caps
        self.total_capacity = float(self.cum[-1])
        self.max_price = float(self.prices.max())

    def dispatch_arrays(self, imbalance):
        """Vectorized dispatch. Returns ``(g, gamma)`` with ``g[..., k]`` in original unit order."""
        imb = np.asarray(imbalance, dtype=float)
        mag = np.abs(imb)
        fill = np.clip(mag[..., None] - self.before, 0.0, self.caps)
        g = np.empty_like(fill)
        g[..., self.order] = np.sign(imb)[..., None] * fill
        k = np.minimum(np.searchsorted(self.cum, mag, side="left"), len(self.caps) - 1)
        return g, self.prices[k]

    def dispatch(self, imbalance: float) -> DispatchResult:
        mag = abs(imbalance)
        sign = 1.0 if imbalance >= 0 else -1.0
        g = [0.0] * len(self.units)
        remaining = mag
        gamma = float(self.prices[0])
        for k, pos in enumerate(self.order):
            if remaining <= 0:
                break
            take = min(remaining, self.caps[k])
            g[pos] = sign * float(take)
            gamma = float(self.prices[k])
            remaining -= take
        feasible = mag <= self.total_capacity
        residual = 0.0 if feasible else sign * (mag - self.total_capacity)
        return DispatchResult(tuple(g), gamma, feasible, residual)


def dispatch(imbalance: float, units: Sequence[AgcUnit]) -> DispatchResult:
    """Clear the regulation market for one imbalance (MW, positive = regulation up)."""
    return MeritOrder(units).dispatch(imbalance)


def step_mileage_penalty(gamma, g) -> float:
    return float(np.sum(np.square(gamma * np.asarray(g, dtype=float))))


class MileageTotals(NamedTuple):
    settlement: float
    quadratic: float


def settlement_mileage_cost(dispatch_series: Sequence[DispatchResult], dt: float) -> MileageTotals:
    """Movement-based settlement sum(gamma_t * |g_t - g_{t-1}|) with g_0 = 0.

    The quadratic companion is the time integral of :func:`step_mileage_penalty`.
    """
    if not dispatch_series:
        raise ValueError("empty dispatch series")
    prev = np.zeros(len(dispatch_series[0].g))
    settlement = 0.0
    quadratic = 0.0
    for d in dispatch_series:
        g = np.asarray(d.g)
        settlement += d.gamma * float(np.sum(np.abs(g - prev)))
        quadratic += step_mileage_penalty(d.gamma, g) * dt
        prev = g
    return MileageTotals(settlement, quadratic)
