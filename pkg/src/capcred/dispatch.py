"""Scenario dispatch: availability draws in, per-hour shortfall out.

Shortfall is computed on the net-load margin (load minus available capacity),
so firm-capacity additions and load reductions flow through literally the
same arithmetic. Storage is dispatched greedily and chronologically: cover
any deficit first, then soak up any surplus, subject to power, energy, and
efficiency limits. No foresight.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .metrics import MetricError
from .streams import BatchError, ScenarioBatch
from .system import StorageSpec, SystemSpec

_CHUNK = 8192  # scenarios per work unit; fixed so thread count never changes results


@dataclass(frozen=True)
class DispatchPolicy:
    kind: str = "greedy_shortfall"

    def __post_init__(self):
        if self.kind != "greedy_shortfall":
            raise MetricError(f"unknown dispatch policy {self.kind!r}")


GREEDY = DispatchPolicy()


@dataclass
class ShortfallSurface:
    """Per-scenario, per-hour shortfall after dispatch, plus SoC traces."""

    shortfall: np.ndarray  # (n, horizon) MWh, >= 0
    soc: np.ndarray | None  # (n, n_storages, horizon) MWh when storage present

    @cached_property
    def shortage(self) -> np.ndarray:
        """Shortage indicator S: 1 exactly where shortfall > 0 (strict)."""
        return self.shortfall > 0.0

    @cached_property
    def shortage_float(self) -> np.ndarray:
        return self.shortage.astype(np.float64)

    @property
    def n(self) -> int:
        return self.shortfall.shape[0]


def greedy_storage_dispatch(
    net_load: np.ndarray, storages: tuple[StorageSpec, ...]
) -> tuple[np.ndarray, np.ndarray | None]:
    """Resolve net load (n, T) into shortfall, charging/discharging storage.

    Storages act in the given order each hour. Discharge d delivers d MWh
    while drawing d / eta_d from the store; charging c MWh of surplus stores
    c * eta_c. SoC stays within [0, energy_mwh] by construction.
    """
    if not storages:
        return np.maximum(net_load, 0.0), None
    n, horizon = net_load.shape
    shortfall = np.empty_like(net_load)
    soc_trace = np.empty((n, len(storages), horizon), dtype=np.float64)
    soc = [np.full(n, s.initial_soc_fraction * s.energy_mwh) for s in storages]
    for tau in range(horizon):
        deficit = np.maximum(net_load[:, tau], 0.0)
        surplus = np.maximum(-net_load[:, tau], 0.0)
        for k, spec in enumerate(storages):
            discharge = np.minimum(
                np.minimum(spec.power_mw, soc[k] * spec.efficiency_discharge), deficit
            )
            deficit = deficit - discharge
            soc[k] = soc[k] - discharge / spec.efficiency_discharge
            headroom = (spec.energy_mwh - soc[k]) / spec.efficiency_charge
            charge = np.minimum(np.minimum(spec.power_mw, surplus), headroom)
            surplus = surplus - charge
            soc[k] = soc[k] + charge * spec.efficiency_charge
            soc_trace[:, k, tau] = soc[k]
        shortfall[:, tau] = deficit
    return shortfall, soc_trace


def fleet_capacity(system: SystemSpec, batch: ScenarioBatch) -> np.ndarray:
    """Total available capacity (n, T): sum of nameplate times availability.

    Accumulates one resource at a time over views of the batch, in fleet
    order, so results are reproducible and no scenario-sized copy is made.
    """
    if batch.horizon_hours != system.horizon_hours:
        raise BatchError(
            f"batch horizon {batch.horizon_hours} != system horizon {system.horizon_hours}"
        )
    xhat = np.zeros((batch.n, system.horizon_hours), dtype=np.float64)
    for g in system.generators:
        xhat += g.nameplate_mw * batch.availability[batch.index_of(g.id)]
    return xhat


def dispatch_scenario(
    system: SystemSpec, availability: np.ndarray, policy: DispatchPolicy = GREEDY
) -> tuple[np.ndarray, np.ndarray | None]:
    """Dispatch one scenario; availability rows follow system.generators order.

    Returns the per-hour shortfall vector and, when storage is present, the
    per-storage SoC trace.
    """
    availability = np.asarray(availability, dtype=np.float64)
    expected = (len(system.generators), system.horizon_hours)
    if availability.shape != expected:
        raise BatchError(f"availability shape {availability.shape} != {expected}")
    # same accumulation order as fleet_capacity, for bitwise agreement
    xhat = np.zeros(system.horizon_hours, dtype=np.float64)
    for j, g in enumerate(system.generators):
        xhat += g.nameplate_mw * availability[j]
    net = (system.load_array() - xhat)[None, :]
    shortfall, soc = greedy_storage_dispatch(net, system.storages)
    return shortfall[0], (soc[0] if soc is not None else None)


def shortfall_surface(
    system: SystemSpec,
    batch: ScenarioBatch,
    policy: DispatchPolicy = GREEDY,
    threads: int = 1,
) -> ShortfallSurface:
    """Dispatch every scenario in the batch. Row i equals dispatch_scenario(i)."""
    net = system.load_array()[None, :] - fleet_capacity(system, batch)
    if threads > 1 and batch.n > _CHUNK and system.storages:
        shortfall = np.empty_like(net)
        soc = np.empty((batch.n, len(system.storages), system.horizon_hours))
        spans = [(lo, min(lo + _CHUNK, batch.n)) for lo in range(0, batch.n, _CHUNK)]

        def work(span):
            lo, hi = span
            shortfall[lo:hi], soc[lo:hi] = greedy_storage_dispatch(
                net[lo:hi], system.storages
            )

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))
        return ShortfallSurface(shortfall=shortfall, soc=soc)
    shortfall, soc = greedy_storage_dispatch(net, system.storages)
    return ShortfallSurface(shortfall=shortfall, soc=soc)
