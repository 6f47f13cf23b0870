"""Monte Carlo gradient estimation: single-pass IPA and CRN finite differences.

`SystemEvaluator.run` is the unit of cost accounting: one call is one
resource-adequacy run on the shared batch (availability -> total capacity ->
dispatch -> metric -> risk aggregate), and it deliberately recomputes fleet
capacity from the batch every time rather than caching partial sums across
calls, so measured run counters and wall times reflect what a simulator
would actually pay. IPA, by contrast, extracts all non-storage gradients
from one such run plus per-resource dot products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispatch import GREEDY, DispatchPolicy, ShortfallSurface, fleet_capacity, greedy_storage_dispatch
from .metrics import RiskEstimate, aggregate, aggregate_cvar, per_scenario_metric
from .streams import BatchError, ScenarioBatch
from .system import Direction, StorageSpec, SystemSpec


class NegativeCapacityError(ValueError):
    """A resource would be driven below zero capacity at the minus step."""


class IpaUnsupportedError(ValueError):
    """IPA pathwise derivatives are not available for this direction/metric."""


@dataclass(frozen=True)
class GenAddition:
    """Capacity added along an availability shape.

    Exactly one of `resource_id` (draws come from that batch column) or
    `profile` (deterministic per-hour fractions) is set; neither means firm.
    """

    mw: float
    resource_id: str | None = None
    profile: tuple[float, ...] | None = None


@dataclass
class EvalOutcome:
    estimate: RiskEstimate
    values: np.ndarray  # per-scenario metric values
    shortage_hours: np.ndarray | None  # per-scenario shortage-hour counts (ue runs)
    shortfall: np.ndarray | None = None  # (n, T), kept only when requested


@dataclass(frozen=True)
class GradientEstimate:
    value: float
    std_error: float
    method: str  # "ipa" | "central_fd" | "forward_fd"
    n: int
    delta: float | None = None
    fallback: bool = False  # central requested but minus side infeasible


class SystemEvaluator:
    """One resource-adequacy run per `run()` call, with run counting."""

    def __init__(
        self,
        system: SystemSpec,
        batch: ScenarioBatch,
        policy: DispatchPolicy = GREEDY,
        metric: str = "ue",
        risk: str = "expectation",
        beta: float | None = None,
    ):
        if batch.horizon_hours != system.horizon_hours:
            raise BatchError("batch horizon does not match system")
        for g in system.generators:
            batch.index_of(g.id)
        self.system = system
        self.batch = batch
        self.policy = policy
        self.metric = metric
        self.risk = risk
        self.beta = beta
        self.runs = 0
        self._load = system.load_array()

    def _aggregate(self, values: np.ndarray) -> RiskEstimate:
        if self.batch.weights is not None:
            return aggregate(values, self.batch.weights)
        if self.risk == "cvar":
            return aggregate_cvar(values, self.beta if self.beta is not None else 0.95)
        return aggregate(values)

    def run(
        self,
        firm_mw: float = 0.0,
        load_mw: float = 0.0,
        gen_additions: tuple[GenAddition, ...] = (),
        storage_scales: dict[str, float] | None = None,
        storage_additions: tuple[StorageSpec, ...] = (),
        keep_shortfall: bool = False,
    ) -> EvalOutcome:
        """Evaluate the perturbed system on the shared batch (one RAA run).

        Firm capacity and load shifts enter the margin as a single scalar,
        so adding firm capacity and subtracting load are bit-identical.
        """
        system = self.system
        fleet_ids = {g.id: g for g in system.generators}
        totals: dict[str, float] = {}
        for add in gen_additions:
            if add.resource_id is not None:
                base = fleet_ids[add.resource_id].nameplate_mw if add.resource_id in fleet_ids else 0.0
                totals[add.resource_id] = totals.get(add.resource_id, base) + add.mw
        for rid, total in totals.items():
            if total < -1e-12:
                raise NegativeCapacityError(
                    f"resource {rid!r} capacity would be {total:.6g} MW at this step"
                )

        xhat = fleet_capacity(system, self.batch)
        for add in gen_additions:
            if add.resource_id is not None:
                xhat = xhat + add.mw * self.batch.slice(add.resource_id)
            elif add.profile is not None:
                shape = np.asarray(add.profile, dtype=np.float64)
                xhat = xhat + add.mw * shape[None, :]
            else:
                firm_mw += add.mw
        net = (self._load[None, :] - xhat) + (load_mw - firm_mw)

        storages = []
        for s in system.storages:
            factor = (storage_scales or {}).get(s.id, 1.0)
            if factor < 0.0:
                raise NegativeCapacityError(
                    f"storage {s.id!r} scale factor {factor:.6g} is negative"
                )
            storages.append(s if factor == 1.0 else s.scaled(factor))
        storages.extend(storage_additions)
        shortfall, _ = greedy_storage_dispatch(net, tuple(storages))

        values = per_scenario_metric(shortfall, self.metric, system.hours_per_day)
        shortage_hours = (
            (shortfall > 0.0).sum(axis=1).astype(np.float64) if self.metric == "ue" else None
        )
        self.runs += 1
        return EvalOutcome(
            estimate=self._aggregate(values),
            values=values,
            shortage_hours=shortage_hours,
            shortfall=shortfall if keep_shortfall else None,
        )


# ---------------------------------------------------------------------------
# Direction realization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RealizedShift:
    """A direction scaled to `mw`, expressed as evaluator arguments."""

    firm_mw: float = 0.0
    gen_additions: tuple[GenAddition, ...] = ()
    storage_scales: tuple[tuple[str, float], ...] = ()
    storage_additions: tuple[StorageSpec, ...] = ()
    central_feasible: bool = True  # may the minus side be evaluated directly?

    def kwargs(self) -> dict:
        return dict(
            firm_mw=self.firm_mw,
            gen_additions=self.gen_additions,
            storage_scales=dict(self.storage_scales),
            storage_additions=self.storage_additions,
        )


def realize_direction(
    system: SystemSpec, batch: ScenarioBatch, direction: Direction, mw: float
) -> RealizedShift:
    """Scale a perturbation direction to `mw` megawatts of addition.

    Candidates at zero baseline capacity cannot be driven negative, so their
    minus side is flagged infeasible and finite differencing falls back to a
    forward step.
    """
    if direction.kind == "perfect":
        return RealizedShift(firm_mw=mw)
    if direction.kind == "profile_vector":
        values = tuple(direction.values)
        if len(values) != system.horizon_hours:
            raise ValueError("profile_vector length must equal the horizon")
        return RealizedShift(gen_additions=(GenAddition(mw=mw, profile=values),))
    if direction.kind == "resource":
        rid = direction.resource_id
        fleet_gen = next((g for g in system.generators if g.id == rid), None)
        fleet_sto = next((s for s in system.storages if s.id == rid), None)
        if fleet_sto is not None:
            if fleet_sto.power_mw <= 0.0:
                raise NegativeCapacityError(f"storage {rid!r} has zero power capacity")
            factor = (fleet_sto.power_mw + mw) / fleet_sto.power_mw
            return RealizedShift(
                storage_scales=((rid, factor),),
                central_feasible=fleet_sto.power_mw >= abs(mw),
            )
        baseline = fleet_gen.nameplate_mw if fleet_gen is not None else 0.0
        batch.index_of(rid)  # raises if absent
        return RealizedShift(
            gen_additions=(GenAddition(mw=mw, resource_id=rid),),
            central_feasible=baseline >= abs(mw),
        )
    if direction.kind == "storage_policy":
        sto = system.storage_by_id(direction.resource_id)
        if sto.power_mw <= 0.0:
            raise NegativeCapacityError(f"storage {sto.id!r} has zero power capacity")
        factor = (sto.power_mw + mw) / sto.power_mw
        return RealizedShift(
            storage_scales=((sto.id, factor),),
            central_feasible=sto.power_mw >= abs(mw),
        )
    if direction.kind == "portfolio":
        firm = 0.0
        gens: list[GenAddition] = []
        scales: list[tuple[str, float]] = []
        adds: list[StorageSpec] = []
        feasible = True
        for member in direction.members:
            part = realize_direction(system, batch, member, mw)
            firm += part.firm_mw
            gens.extend(part.gen_additions)
            scales.extend(part.storage_scales)
            adds.extend(part.storage_additions)
            feasible = feasible and part.central_feasible
        return RealizedShift(
            firm_mw=firm,
            gen_additions=tuple(gens),
            storage_scales=tuple(scales),
            storage_additions=tuple(adds),
            central_feasible=feasible,
        )
    raise ValueError(f"unknown direction kind {direction.kind!r}")


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def direction_vector(
    batch: ScenarioBatch, direction: Direction, horizon_hours: int
) -> np.ndarray | float:
    """Per-scenario availability v for IPA; scalar 1.0 for the perfect unit."""
    if direction.kind == "perfect":
        return 1.0
    if direction.kind == "resource":
        return batch.slice(direction.resource_id)
    if direction.kind == "profile_vector":
        values = np.asarray(direction.values, dtype=np.float64)
        if values.size != horizon_hours:
            raise ValueError("profile_vector length must equal the horizon")
        return values[None, :]
    if direction.kind == "portfolio":
        if any(m.kind == "storage_policy" for m in direction.members):
            raise IpaUnsupportedError("IPA unsupported for storage directions")
        total = np.zeros((batch.n, horizon_hours))
        for m in direction.members:
            total = total + direction_vector(batch, m, horizon_hours)
        return total
    raise IpaUnsupportedError(
        "IPA unsupported for storage directions: pathwise sensitivity depends on the policy"
    )


def ipa_rows(
    surface: ShortfallSurface, batch: ScenarioBatch, direction: Direction
) -> np.ndarray:
    """Per-scenario pathwise derivatives d_i = -sum_tau v * shortage."""
    if surface.n != batch.n:
        raise BatchError("surface and batch disagree on scenario count")
    v = direction_vector(batch, direction, batch.horizon_hours)
    if np.isscalar(v):
        return -float(v) * surface.shortage.sum(axis=1).astype(np.float64)
    shortage = surface.shortage_float
    if v.shape == shortage.shape:
        return -np.einsum("nt,nt->n", v, shortage)
    return -(v * shortage).sum(axis=1)


def ipa_gradient(
    surface: ShortfallSurface, batch: ScenarioBatch, direction: Direction
) -> GradientEstimate:
    """Pathwise derivative of expected unserved energy along `direction`.

    One pass, no re-simulation: per scenario the derivative is minus the
    shortage-weighted availability, so the whole estimate is an indicator
    dot product on an already-computed surface.
    """
    d = ipa_rows(surface, batch, direction)
    est = aggregate(d, batch.weights)
    return GradientEstimate(
        value=est.mean, std_error=est.std_error, method="ipa", n=batch.n
    )


def fd_rows(
    system: SystemSpec,
    direction: Direction,
    delta: float,
    batch: ScenarioBatch,
    metric: str = "ue",
    policy: DispatchPolicy = GREEDY,
    scheme: str = "auto",
    evaluator: SystemEvaluator | None = None,
    base: EvalOutcome | None = None,
) -> tuple[GradientEstimate, np.ndarray]:
    """Finite-difference gradient plus the per-scenario paired differences."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    ev = evaluator or SystemEvaluator(system, batch, policy=policy, metric=metric)
    plus_shift = realize_direction(system, batch, direction, +delta)
    use_central = plus_shift.central_feasible if scheme == "auto" else scheme == "central"
    if scheme == "central" and not plus_shift.central_feasible:
        raise NegativeCapacityError(
            "central scheme requested but the minus step is infeasible"
        )
    plus = ev.run(**plus_shift.kwargs())
    if use_central:
        minus = ev.run(**realize_direction(system, batch, direction, -delta).kwargs())
        diffs = (plus.values - minus.values) / (2.0 * delta)
        method = "central_fd"
        fallback = False
    else:
        minus = base if base is not None else ev.run()
        diffs = (plus.values - minus.values) / delta
        method = "forward_fd"
        fallback = scheme == "auto"
    est = aggregate(diffs, batch.weights)
    return (
        GradientEstimate(
            value=est.mean,
            std_error=est.std_error,
            method=method,
            n=batch.n,
            delta=delta,
            fallback=fallback,
        ),
        diffs,
    )


def fd_gradient(
    system: SystemSpec,
    direction: Direction,
    delta: float,
    batch: ScenarioBatch,
    metric: str = "ue",
    policy: DispatchPolicy = GREEDY,
    scheme: str = "auto",
    evaluator: SystemEvaluator | None = None,
    base: EvalOutcome | None = None,
) -> GradientEstimate:
    """Finite-difference gradient with common random numbers.

    Central by default; when the minus step would require negative resource
    capacity (any zero-baseline candidate) the estimator falls back to a
    forward difference against the baseline run and flags it. Both sides are
    evaluated on the same batch, so the per-scenario differences are paired.
    """
    est, _ = fd_rows(
        system, direction, delta, batch,
        metric=metric, policy=policy, scheme=scheme, evaluator=evaluator, base=base,
    )
    return est


def default_fd_step(nameplate_mw: float) -> float:
    """Default perturbation step: max(0.5 MW, 0.1% of nameplate)."""
    return max(0.5, 1e-3 * nameplate_mw)
