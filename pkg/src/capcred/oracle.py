"""Exact ground truth by outage-state enumeration.

For fleets with at most 20 thermal units and no storage, every per-hour
expectation is computed exactly over all 2^K thermal outage combinations
(hours are independent, so per-hour enumeration suffices). This is the
reference the Monte Carlo engine and both gradient estimators are validated
against, and it also builds exact-weight pseudo-batches: ScenarioBatch
objects whose "scenarios" are the enumerated states carrying their true
probabilities, on which the sampling-based code paths become exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import ScenarioBatch
from .system import Direction, GeneratorSpec, SystemSpec

MAX_THERMAL_UNITS = 20
KINK_TOLERANCE_MW = 1e-9


class OracleUnsupportedError(ValueError):
    """System outside the enumerable class (too many units, or storage)."""


class IrregularBaselineError(ValueError):
    """Some outage state sits exactly on the load: no one-sided derivative."""


class AdequateBaselineError(ValueError):
    """Baseline has zero expected shortfall; accreditation is undefined."""


@dataclass
class StateTable:
    """All thermal outage combinations with probabilities and capacities."""

    probs: np.ndarray  # (K,) state probabilities, sum to 1
    thermal_caps: np.ndarray  # (K,) total thermal capacity per state
    det_capacity: np.ndarray  # (T,) deterministic profile + perfect capacity
    thermal_bits: np.ndarray  # (K, n_thermal) up/down flags
    thermal_ids: tuple[str, ...]


@dataclass
class ExactAssessment:
    eue: float
    lolh: float
    lolp_per_hour: np.ndarray
    eue_per_hour: np.ndarray
    state_table: StateTable


def _check_eligible(system: SystemSpec) -> None:
    if system.storages:
        raise OracleUnsupportedError("oracle does not support storage")
    n_thermal = sum(1 for g in system.generators if g.kind == "thermal")
    if n_thermal > MAX_THERMAL_UNITS:
        raise OracleUnsupportedError(
            f"{n_thermal} thermal units exceeds enumeration limit {MAX_THERMAL_UNITS}"
        )


def build_state_table(
    system: SystemSpec, extra_thermal: tuple[GeneratorSpec, ...] = ()
) -> StateTable:
    _check_eligible(system)
    thermal = [g for g in system.generators if g.kind == "thermal"] + list(extra_thermal)
    if len(thermal) > MAX_THERMAL_UNITS:
        raise OracleUnsupportedError("too many thermal units after augmentation")
    n_states = 1 << len(thermal)
    probs = np.ones(n_states, dtype=np.float64)
    caps = np.zeros(n_states, dtype=np.float64)
    bits = np.zeros((n_states, len(thermal)), dtype=np.float64)
    state_index = np.arange(n_states)
    for j, g in enumerate(thermal):
        up = ((state_index >> j) & 1).astype(np.float64)
        bits[:, j] = up
        probs *= np.where(up == 1.0, 1.0 - g.for_rate, g.for_rate)
        caps += up * g.nameplate_mw
    det = np.zeros(system.horizon_hours, dtype=np.float64)
    for g in system.generators:
        if g.kind == "perfect":
            det += g.nameplate_mw
        elif g.kind == "profile":
            det += g.nameplate_mw * np.asarray(
                system.profile_by_id(g.profile_id).values, dtype=np.float64
            )
    return StateTable(
        probs=probs,
        thermal_caps=caps,
        det_capacity=det,
        thermal_bits=bits,
        thermal_ids=tuple(g.id for g in thermal),
    )


def _hourly_margins(system: SystemSpec, table: StateTable) -> np.ndarray:
    """Load-minus-capacity margin, shape (n_states, T)."""
    load = system.load_array()
    return (load - table.det_capacity)[None, :] - table.thermal_caps[:, None]


def oracle_assess(system: SystemSpec) -> ExactAssessment:
    """Exact EUE, LOLH, and per-hour LOLP by full state enumeration."""
    table = build_state_table(system)
    margins = _hourly_margins(system, table)
    shortfall = np.maximum(margins, 0.0)
    eue_per_hour = table.probs @ shortfall
    lolp = table.probs @ (margins > 0.0)
    return ExactAssessment(
        eue=float(eue_per_hour.sum()),
        lolh=float(lolp.sum()),
        lolp_per_hour=lolp,
        eue_per_hour=eue_per_hour,
        state_table=table,
    )


def _require_regular(system: SystemSpec, table: StateTable) -> None:
    margins = _hourly_margins(system, table)
    on_kink = (np.abs(margins) < KINK_TOLERANCE_MW) & (table.probs[:, None] > 0.0)
    if on_kink.any():
        state, hour = np.argwhere(on_kink)[0]
        raise IrregularBaselineError(
            f"irregular baseline: state {state} has load equal to capacity at hour {hour}"
        )


def oracle_gradient(system: SystemSpec, direction: Direction | GeneratorSpec) -> float:
    """Exact directional derivative of EUE: minus shortage-weighted availability.

    Supported directions: perfect, explicit profile vectors, independent
    thermal/profile candidate units, and existing fleet members. The baseline
    must be regular (no outage state exactly on the load).
    """
    table = build_state_table(system)
    _require_regular(system, table)
    margins = _hourly_margins(system, table)
    shortage = margins > 0.0
    lolp = table.probs @ shortage

    if isinstance(direction, GeneratorSpec):
        if direction.kind == "perfect":
            return -float(lolp.sum())
        if direction.kind == "thermal":
            return -(1.0 - direction.for_rate) * float(lolp.sum())
        values = np.asarray(system.profile_by_id(direction.profile_id).values)
        return -float(values @ lolp)

    if direction.kind == "perfect":
        return -float(lolp.sum())
    if direction.kind == "profile_vector":
        values = np.asarray(direction.values, dtype=np.float64)
        if values.size != system.horizon_hours:
            raise ValueError("profile_vector length must equal the horizon")
        return -float(values @ lolp)
    if direction.kind == "resource":
        gen = system.generator_by_id(direction.resource_id)
        if gen.kind == "perfect":
            return -float(lolp.sum())
        if gen.kind == "profile":
            values = np.asarray(system.profile_by_id(gen.profile_id).values)
            return -float(values @ lolp)
        j = table.thermal_ids.index(gen.id)
        up_and_short = (table.probs * table.thermal_bits[:, j]) @ shortage
        return -float(up_and_short.sum())
    if direction.kind == "portfolio":
        return sum(oracle_gradient(system, m) for m in direction.members)
    raise OracleUnsupportedError(f"oracle gradient unsupported for {direction.kind}")


def _eue_with_candidate(
    system: SystemSpec, candidate: Direction | GeneratorSpec, delta_x: float
) -> float:
    """Exact EUE after adding delta_x MW along the candidate's availability."""
    if isinstance(candidate, GeneratorSpec) and candidate.kind == "thermal":
        table = build_state_table(system, extra_thermal=(candidate,))
        j = table.thermal_ids.index(candidate.id)
        margins = _hourly_margins(system, table)
        margins = margins - delta_x * table.thermal_bits[:, j][:, None]
        return float(table.probs @ np.maximum(margins, 0.0).sum(axis=1))
    if isinstance(candidate, GeneratorSpec):
        if candidate.kind == "perfect":
            values = np.ones(system.horizon_hours)
        else:
            values = np.asarray(system.profile_by_id(candidate.profile_id).values)
    elif candidate.kind == "perfect":
        values = np.ones(system.horizon_hours)
    elif candidate.kind == "profile_vector":
        values = np.asarray(candidate.values, dtype=np.float64)
    else:
        raise OracleUnsupportedError(f"oracle ELCC unsupported for {candidate!r}")
    table = build_state_table(system)
    margins = _hourly_margins(system, table) - delta_x * values[None, :]
    return float(table.probs @ np.maximum(margins, 0.0).sum(axis=1))


def eue_at_firm(system: SystemSpec, firm_mw: float) -> float:
    """Exact EUE with firm_mw of always-available capacity added."""
    table = build_state_table(system)
    margins = _hourly_margins(system, table) - firm_mw
    return float(table.probs @ np.maximum(margins, 0.0).sum(axis=1))


def oracle_elcc(
    system: SystemSpec,
    candidate: Direction | GeneratorSpec,
    delta_x: float,
    tolerance: float = 1e-9,
) -> tuple[float, float]:
    """Exact ELCC root: firm capacity L_c matching the candidate addition.

    Solves EUE(x + c*1) = EUE(x + delta_x*A_candidate) by deterministic
    bisection on [0, delta_x]; the firm-capacity and load-shift realizations
    of the left side are asserted equal along the way. Returns (L_c, alpha).
    """
    if delta_x <= 0:
        raise ValueError("delta_x must be positive")
    baseline = oracle_assess(system)
    if baseline.eue <= 0.0:
        raise AdequateBaselineError("baseline has zero expected shortfall")
    target = _eue_with_candidate(system, candidate, delta_x)
    table = build_state_table(system)
    base_margins = _hourly_margins(system, table)

    def eue_firm(c: float) -> float:
        # firm capacity +c and load -c land on the identical margin arithmetic
        shifted = base_margins - c
        return float(table.probs @ np.maximum(shifted, 0.0).sum(axis=1))

    lo, hi = 0.0, float(delta_x)
    # guard against enumeration round-off when the candidate adds nothing
    f_lo = eue_firm(lo) - target
    if f_lo <= 1e-12 * max(1.0, abs(target)):
        return 0.0, 0.0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if eue_firm(mid) - target > 0.0:
            lo = mid
        else:
            hi = mid
    l_c = 0.5 * (lo + hi)
    return l_c, l_c / delta_x


def exact_weight_batch(
    system: SystemSpec, extra_generators: tuple[GeneratorSpec, ...] = ()
) -> ScenarioBatch:
    """Enumeration as a weighted pseudo-batch: one scenario per outage state.

    Each scenario holds its state constant over the horizon and carries the
    state's true probability, so batch-path expectations of per-hour-separable
    metrics (UE, LOLH) equal the enumeration oracle exactly.
    """
    extra_thermal = tuple(g for g in extra_generators if g.kind == "thermal")
    table = build_state_table(system, extra_thermal=extra_thermal)
    n = table.probs.size
    gens = tuple(system.generators) + tuple(extra_generators)
    ids = tuple(g.id for g in gens)
    availability = np.empty((len(gens), n, system.horizon_hours), dtype=np.float64)
    for idx, g in enumerate(gens):
        if g.kind == "thermal":
            j = table.thermal_ids.index(g.id)
            availability[idx] = table.thermal_bits[:, j][:, None]
        elif g.kind == "perfect":
            availability[idx] = 1.0
        else:
            values = np.asarray(system.profile_by_id(g.profile_id).values)
            availability[idx] = values[None, :]
    return ScenarioBatch(
        n=n,
        resource_ids=ids,
        availability=availability,
        policy=None,
        horizon_hours=system.horizon_hours,
        weights=table.probs.copy(),
    )
