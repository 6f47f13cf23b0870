"""Capacity accreditation: ELCC root finding, MRI ratios, sweeps, portfolios.

All methods normalize against the perfect resource evaluated on the same
batch, step size, and difference scheme; the numerator and denominator share
their Monte Carlo noise. An `AccreditationStudy` owns the shared evaluator,
the cached baseline run, and the cached perfect-direction runs, so measured
run counters reproduce the per-method cost structure:

    mri_ipa         1 run total for any number of resources
    mri_fd          baseline + perfect pair + one perturbation pair each
    elcc_*          baseline + per resource: candidate run, bracket-end run,
                    and one run per solver iteration
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dispatch import GREEDY, DispatchPolicy, ShortfallSurface
from .gradients import (
    EvalOutcome,
    GradientEstimate,
    IpaUnsupportedError,
    SystemEvaluator,
    default_fd_step,
    ipa_rows,
    realize_direction,
)
from .metrics import aggregate
from .oracle import AdequateBaselineError
from .streams import ScenarioBatch
from .system import (
    Direction,
    GeneratorSpec,
    StorageSpec,
    SystemSpec,
    perfect_direction,
    resource_direction,
    scale_load,
    storage_policy_direction,
)

ELCC_METHODS = ("elcc_bisection", "elcc_secant", "elcc_newton_ipa")
MRI_METHODS = ("mri_fd", "mri_ipa")
DEFAULT_RSE_CEILING = 0.05


class ZeroValueResourceError(ValueError):
    """g(0) is not positive beyond noise: resource indistinguishable from zero."""


class StorageInIpaListError(ValueError):
    pass


@dataclass
class SolverTrace:
    evaluations: list[tuple[float, float]] = field(default_factory=list)
    brackets: list[tuple[float, float]] = field(default_factory=list)
    reason: str = ""


@dataclass
class AccreditationReport:
    resource_id: str
    method: str
    alpha: float
    delta_x_mw: float
    l_c_mw: float | None = None
    iterations: int = 0
    simulation_runs: float = 0.0
    gradient_stderr: float = 0.0
    wall_time_s: float = 0.0
    flags: tuple[str, ...] = ()

    def flagged(self, *extra: str) -> "AccreditationReport":
        self.flags = tuple(self.flags) + extra
        return self


def _wmean(values: np.ndarray, weights: np.ndarray | None) -> float:
    if weights is None:
        return float(values.mean())
    return float(weights @ values)


def _ratio_stderr(
    num_rows: np.ndarray, den_rows: np.ndarray, weights: np.ndarray | None, alpha: float
) -> float:
    """Delta-method standard error of a per-scenario ratio estimator."""
    if weights is not None:
        return 0.0
    den_mean = float(den_rows.mean())
    if den_mean == 0.0:
        return float("inf")
    resid = num_rows - alpha * den_rows
    return float(resid.std(ddof=1) / math.sqrt(resid.size) / abs(den_mean))


@dataclass(frozen=True)
class _Target:
    """A normalized accreditation target: how to shift, label, and (if
    available) which direction feeds the IPA estimator."""

    label: str
    shift: object  # callable mw -> evaluator kwargs
    central_feasible_at: object  # callable delta -> bool (minus side evaluable?)
    ipa_direction: Direction | None
    is_storage: bool


class AccreditationStudy:
    """Shared evaluator, baseline, and perfect-run caches for one batch."""

    def __init__(
        self,
        system: SystemSpec,
        batch: ScenarioBatch,
        policy: DispatchPolicy = GREEDY,
        metric: str = "ue",
        rse_ceiling: float = DEFAULT_RSE_CEILING,
    ):
        self.system = system
        self.batch = batch
        self.policy = policy
        self.metric = metric
        self.rse_ceiling = rse_ceiling
        self.evaluator = SystemEvaluator(system, batch, policy=policy, metric=metric)
        self._baseline: EvalOutcome | None = None
        self._perfect_fd: dict[tuple[float, str], tuple[GradientEstimate, np.ndarray]] = {}

    # -- shared runs --------------------------------------------------------

    @property
    def total_runs(self) -> int:
        return self.evaluator.runs

    def baseline(self) -> EvalOutcome:
        if self._baseline is None:
            self._baseline = self.evaluator.run(keep_shortfall=True)
        return self._baseline

    def surface(self) -> ShortfallSurface:
        return ShortfallSurface(shortfall=self.baseline().shortfall, soc=None)

    def _require_shortfall(self) -> EvalOutcome:
        base = self.baseline()
        if base.estimate.mean <= 0.0:
            raise AdequateBaselineError("baseline has zero estimated shortfall")
        return base

    def perfect_fd(self, delta: float, scheme: str) -> tuple[GradientEstimate, np.ndarray]:
        """Perfect-direction finite difference, cached study-wide per (delta, scheme)."""
        key = (float(delta), scheme)
        if key not in self._perfect_fd:
            base = self.baseline()
            plus = self.evaluator.run(firm_mw=+delta)
            if scheme == "central":
                minus = self.evaluator.run(firm_mw=-delta)
                rows = (plus.values - minus.values) / (2.0 * delta)
                method = "central_fd"
            else:
                rows = (plus.values - base.values) / delta
                method = "forward_fd"
            est = aggregate(rows, self.batch.weights)
            self._perfect_fd[key] = (
                GradientEstimate(
                    value=est.mean, std_error=est.std_error, method=method,
                    n=self.batch.n, delta=delta,
                ),
                rows,
            )
        return self._perfect_fd[key]

    # -- target normalization ------------------------------------------------

    def _nameplate_of(self, resource) -> float:
        if isinstance(resource, (GeneratorSpec, StorageSpec)):
            return getattr(resource, "nameplate_mw", getattr(resource, "power_mw", 0.0))
        if isinstance(resource, str):
            for g in self.system.generators:
                if g.id == resource:
                    return g.nameplate_mw
            for s in self.system.storages:
                if s.id == resource:
                    return s.power_mw
        return 0.0

    def _target(self, resource) -> _Target:
        if isinstance(resource, StorageSpec):
            spec = resource

            def shift(mw: float) -> dict:
                if mw < 0.0:
                    raise ValueError("candidate storage cannot be scaled negative")
                return dict(storage_additions=(spec.scaled(mw / spec.power_mw),))

            return _Target(spec.id, shift, lambda delta: False, None, True)
        if isinstance(resource, GeneratorSpec):
            direction = resource_direction(resource.id)
        elif isinstance(resource, str):
            if any(s.id == resource for s in self.system.storages):
                direction = storage_policy_direction(resource)
            else:
                direction = resource_direction(resource)
        elif isinstance(resource, Direction):
            direction = resource
        else:
            raise TypeError(f"cannot accredit {resource!r}")
        probe = realize_direction(self.system, self.batch, direction, 1.0)

        def shift(mw: float) -> dict:
            return realize_direction(self.system, self.batch, direction, mw).kwargs()

        def feasible(delta: float) -> bool:
            return realize_direction(self.system, self.batch, direction, delta).central_feasible

        is_storage = direction.kind == "storage_policy" or bool(probe.storage_scales)
        ipa_dir = None if is_storage else direction
        return _Target(direction.label(), shift, feasible, ipa_dir, is_storage)

    def _fd_rows(
        self, target: _Target, delta: float, scheme: str
    ) -> tuple[GradientEstimate, np.ndarray, int]:
        """Candidate finite difference; returns (estimate, rows, new runs)."""
        before = self.evaluator.runs
        plus = self.evaluator.run(**target.shift(+delta))
        if scheme == "central":
            minus = self.evaluator.run(**target.shift(-delta))
            rows = (plus.values - minus.values) / (2.0 * delta)
            method = "central_fd"
        else:
            rows = (plus.values - self.baseline().values) / delta
            method = "forward_fd"
        est = aggregate(rows, self.batch.weights)
        grad = GradientEstimate(
            value=est.mean, std_error=est.std_error, method=method,
            n=self.batch.n, delta=delta,
        )
        return grad, rows, self.evaluator.runs - before

    # -- MRI methods ---------------------------------------------------------

    def mri_ipa(self, resources) -> list[AccreditationReport]:
        """Accredit every listed resource from one shortfall surface."""
        t0 = time.perf_counter()
        base = self._require_shortfall()
        rse = base.estimate.rse
        if rse is not None and rse > self.rse_ceiling and not self.batch.is_exact:
            raise AdequateBaselineError(
                f"baseline RSE {rse:.3f} above ceiling {self.rse_ceiling}"
            )
        targets = [self._target(r) for r in resources]
        for t in targets:
            if t.is_storage or t.ipa_direction is None:
                raise StorageInIpaListError(
                    f"{t.label}: IPA accreditation is undefined for storage resources"
                )
        surface = self.surface()
        den_rows = ipa_rows(surface, self.batch, perfect_direction())
        den = _wmean(den_rows, self.batch.weights)
        share = 1.0 / max(len(targets), 1)
        reports = []
        for t in targets:
            num_rows = ipa_rows(surface, self.batch, t.ipa_direction)
            num = _wmean(num_rows, self.batch.weights)
            alpha = num / den
            report = AccreditationReport(
                resource_id=t.label,
                method="mri_ipa",
                alpha=alpha,
                delta_x_mw=0.0,
                simulation_runs=share,
                gradient_stderr=_ratio_stderr(num_rows, den_rows, self.batch.weights, alpha),
                wall_time_s=time.perf_counter() - t0,
            )
            if not -1e-12 <= alpha <= 1.0 + 1e-12:
                report.flagged("alpha-out-of-range")
            reports.append(report)
        return reports

    def mri_fd(self, resource, delta: float | None = None) -> AccreditationReport:
        """Perturbation MRI: candidate and perfect differences share scheme,
        step, and batch; marginal cost is one perturbation pair."""
        if delta is None:
            delta = default_fd_step(self._nameplate_of(resource))
        if delta <= 0.0:
            raise ValueError("delta must be positive")
        t0 = time.perf_counter()
        self._require_shortfall()
        target = self._target(resource)
        scheme = "central" if target.central_feasible_at(delta) else "forward"
        den_est, den_rows = self.perfect_fd(delta, scheme)
        num_est, num_rows, own_runs = self._fd_rows(target, delta, scheme)
        alpha = num_est.value / den_est.value
        report = AccreditationReport(
            resource_id=target.label,
            method="mri_fd",
            alpha=alpha,
            delta_x_mw=delta,
            simulation_runs=own_runs + 1,  # plus the shared baseline
            gradient_stderr=_ratio_stderr(num_rows, den_rows, self.batch.weights, alpha),
            wall_time_s=time.perf_counter() - t0,
        )
        if scheme == "forward":
            report.flagged("forward-difference-fallback")
        if not -1e-12 <= alpha <= 1.0 + 1e-12:
            report.flagged("alpha-out-of-range")
        return report

    # -- ELCC ----------------------------------------------------------------

    def elcc(
        self,
        resource,
        delta_x: float,
        method: str = "elcc_secant",
        tolerance_mw: float = 0.01,
        g_form: str = "firm",
        max_iterations: int = 60,
    ) -> tuple[AccreditationReport, SolverTrace]:
        """Solve for the firm capacity matching a delta_x addition of `resource`.

        phi(c) = M(x + c*1) - M(x + delta_x*A) on the shared batch; the firm
        shift is realized either as added firm capacity (`g_form="firm"`) or
        as an equal load reduction (`g_form="load"`), which are bit-identical
        by construction. Bracket is [0, delta_x].
        """
        if delta_x <= 0.0:
            raise ValueError("delta_x must be positive")
        if method not in ELCC_METHODS:
            raise ValueError(f"unknown ELCC method {method!r}")
        if g_form not in ("firm", "load"):
            raise ValueError("g_form must be 'firm' or 'load'")
        t0 = time.perf_counter()
        base = self._require_shortfall()
        target = self._target(resource)
        trace = SolverTrace()
        before_runs = self.evaluator.runs

        cand = self.evaluator.run(**target.shift(delta_x))

        def phi_outcome(c: float) -> EvalOutcome:
            if g_form == "firm":
                return self.evaluator.run(firm_mw=c)
            return self.evaluator.run(load_mw=-c)

        def phi_of(outcome: EvalOutcome) -> float:
            return outcome.estimate.mean - cand.estimate.mean

        def diff_se(outcome: EvalOutcome) -> float:
            if self.batch.weights is not None:
                return 0.0
            d = outcome.values - cand.values
            return float(d.std(ddof=1) / math.sqrt(d.size))

        g0 = phi_of(base)
        trace.evaluations.append((0.0, g0))
        if g0 <= 2.0 * diff_se(base):
            raise ZeroValueResourceError(
                f"{target.label}: g(0) = {g0:.6g} is not positive beyond noise; "
                "resource indistinguishable from zero value"
            )
        end = phi_outcome(delta_x)
        g_end = phi_of(end)
        trace.evaluations.append((delta_x, g_end))
        if g_end > 0.0:
            raise ZeroValueResourceError(
                f"{target.label}: no sign change on [0, {delta_x}]"
            )

        # slope scale for converting the MW tolerance into metric units
        slope = max((g0 - g_end) / delta_x, 1e-300)
        lo, hi = 0.0, float(delta_x)
        trace.brackets.append((lo, hi))
        iterations = 0
        l_c: float | None = None

        def floor_for(outcome: EvalOutcome) -> float:
            return max(tolerance_mw * slope, 2.0 * diff_se(outcome))

        if method == "elcc_bisection":
            # bracket-width termination only: iteration count is exact
            while hi - lo > tolerance_mw:
                mid = 0.5 * (lo + hi)
                out = phi_outcome(mid)
                g_mid = phi_of(out)
                iterations += 1
                trace.evaluations.append((mid, g_mid))
                if g_mid > 0.0:
                    lo = mid
                else:
                    hi = mid
                trace.brackets.append((lo, hi))
            l_c = 0.5 * (lo + hi)
            trace.reason = "bracket"
        else:
            if method == "elcc_newton_ipa" and self.metric != "ue":
                raise IpaUnsupportedError("newton_ipa requires the UE metric")
            c_prev, g_prev = 0.0, g0
            c_cur, g_cur = float(delta_x), g_end
            cur_outcome = end
            if g_cur > 0.0:
                lo = c_cur
            else:
                hi = c_cur
            while iterations < max_iterations:
                if abs(g_cur) <= floor_for(cur_outcome):
                    l_c = c_cur
                    trace.reason = "g-below-tolerance"
                    break
                if hi - lo <= tolerance_mw:
                    l_c = 0.5 * (lo + hi)
                    trace.reason = "bracket"
                    break
                if method == "elcc_secant":
                    denom = g_cur - g_prev
                    proposal = (
                        c_cur - g_cur * (c_cur - c_prev) / denom if denom != 0.0 else None
                    )
                else:  # newton: slope from the same run's shortage indicators
                    dphi = -_wmean(cur_outcome.shortage_hours, self.batch.weights)
                    proposal = c_cur - g_cur / dphi if dphi < 0.0 else None
                if proposal is None or not (lo < proposal < hi):
                    proposal = 0.5 * (lo + hi)  # safeguarded fallback step
                out = phi_outcome(proposal)
                g_new = phi_of(out)
                iterations += 1
                trace.evaluations.append((proposal, g_new))
                if g_new > 0.0:
                    lo = proposal
                else:
                    hi = proposal
                trace.brackets.append((lo, hi))
                c_prev, g_prev = c_cur, g_cur
                c_cur, g_cur, cur_outcome = proposal, g_new, out
            if l_c is None:
                l_c = 0.5 * (lo + hi)
                trace.reason = "max-iterations"

        # newton's first step uses the baseline run's indicators; phi(0) and
        # phi(delta_x) are the two structural runs in the 2 + k accounting
        alpha = l_c / delta_x
        se_alpha = 0.0
        if self.batch.weights is None:
            se_alpha = diff_se(base) / (slope * delta_x)
        report = AccreditationReport(
            resource_id=target.label,
            method=method,
            alpha=alpha,
            delta_x_mw=delta_x,
            l_c_mw=l_c,
            iterations=iterations,
            simulation_runs=self.evaluator.runs - before_runs,
            gradient_stderr=se_alpha,
            wall_time_s=time.perf_counter() - t0,
        )
        if not -1e-12 <= alpha <= 1.0 + 1e-12:
            report.flagged("alpha-out-of-range")
        return report, trace


# ---------------------------------------------------------------------------
# Spec-level convenience entry points
# ---------------------------------------------------------------------------


def accredit_mri_ipa(
    system: SystemSpec, batch: ScenarioBatch, resources, **kwargs
) -> list[AccreditationReport]:
    return AccreditationStudy(system, batch, **kwargs).mri_ipa(resources)


def accredit_mri_fd(
    system: SystemSpec,
    batch: ScenarioBatch,
    resource,
    delta: float,
    study: AccreditationStudy | None = None,
) -> AccreditationReport:
    study = study or AccreditationStudy(system, batch)
    return study.mri_fd(resource, delta)


def elcc_solve(
    system: SystemSpec,
    batch: ScenarioBatch,
    resource,
    delta_x: float,
    method: str = "elcc_secant",
    tolerance_mw: float = 0.01,
    study: AccreditationStudy | None = None,
    **kwargs,
) -> tuple[AccreditationReport, SolverTrace]:
    study = study or AccreditationStudy(system, batch)
    return study.elcc(resource, delta_x, method=method, tolerance_mw=tolerance_mw, **kwargs)


def sweep_step_size(
    system: SystemSpec,
    batch: ScenarioBatch,
    resource,
    deltas,
    methods=("mri_fd",),
    tolerance_mw: float = 0.01,
    metric: str = "ue",
) -> list[dict]:
    """Accreditation factor per (step size, method), CSV-ready rows."""
    deltas = list(deltas)
    if not deltas:
        raise ValueError("empty step-size list")
    if any(d <= 0 for d in deltas) or deltas != sorted(deltas):
        raise ValueError("step sizes must be positive and ascending")
    study = AccreditationStudy(system, batch, metric=metric)
    rows = []
    for delta in deltas:
        for method in methods:
            if method == "mri_ipa":
                report = study.mri_ipa([resource])[0]
            elif method == "mri_fd":
                report = study.mri_fd(resource, delta)
            else:
                report, _ = study.elcc(resource, delta, method=method, tolerance_mw=tolerance_mw)
            rows.append(
                {
                    "delta_mw": delta,
                    "method": method,
                    "alpha": report.alpha,
                    "gradient_stderr": report.gradient_stderr,
                    "flags": ";".join(report.flags),
                }
            )
    return rows


def sweep_load_scale(
    system: SystemSpec,
    batch: ScenarioBatch,
    multipliers,
    resource,
    method: str = "mri_ipa",
    delta: float = 0.5,
    tolerance_mw: float = 0.01,
    metric: str = "ue",
) -> list[dict]:
    """Accreditation factor per load multiplier; adequate baselines flagged.

    The same batch serves every multiplier: availability draws are
    independent of load, so scaling is CRN across the sweep for free.
    """
    multipliers = list(multipliers)
    if not multipliers:
        raise ValueError("empty multiplier list")
    if any(m <= 0 for m in multipliers):
        raise ValueError("multipliers must be positive")
    rows = []
    for mult in multipliers:
        scaled = scale_load(system, mult)
        study = AccreditationStudy(scaled, batch, metric=metric)
        row = {"multiplier": mult, "method": method, "alpha": "", "flag": ""}
        try:
            if method == "mri_ipa":
                row["alpha"] = study.mri_ipa([resource])[0].alpha
            elif method == "mri_fd":
                row["alpha"] = study.mri_fd(resource, delta).alpha
            else:
                report, _ = study.elcc(resource, delta, method=method, tolerance_mw=tolerance_mw)
                row["alpha"] = report.alpha
        except (AdequateBaselineError, ZeroValueResourceError):
            row["flag"] = "adequate"
        rows.append(row)
    return rows


@dataclass
class PortfolioResult:
    baseline_metric: float
    joint_mw: float
    joint_delta: float
    joint_alpha: float
    standalone: list[tuple[str, float, float]]  # (label, mw, delta metric)
    gap: float


def portfolio_perturb(
    system: SystemSpec,
    batch: ScenarioBatch,
    members,
    scale: float = 1.0,
) -> PortfolioResult:
    """Joint versus component-wise perturbation on one shared batch.

    `members` are (resource, mw) pairs, where resource is anything
    `AccreditationStudy` accepts (fleet id, direction, candidate generator,
    or candidate storage spec). The additivity gap is the joint metric change
    minus the sum of standalone changes.
    """
    members = list(members)
    if not members:
        raise ValueError("empty portfolio")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    study = AccreditationStudy(system, batch)
    base = study.baseline()
    targets = [(study._target(r), mw * scale) for r, mw in members]

    standalone = []
    joint_kwargs: dict = {"firm_mw": 0.0, "gen_additions": (), "storage_scales": {}, "storage_additions": ()}
    for target, mw in targets:
        kwargs = target.shift(mw)
        out = study.evaluator.run(**kwargs)
        standalone.append((target.label, mw, base.estimate.mean - out.estimate.mean))
        joint_kwargs["firm_mw"] += kwargs.get("firm_mw", 0.0)
        joint_kwargs["gen_additions"] += tuple(kwargs.get("gen_additions", ()))
        joint_kwargs["storage_additions"] += tuple(kwargs.get("storage_additions", ()))
        for sid, factor in dict(kwargs.get("storage_scales", {})).items():
            prev = joint_kwargs["storage_scales"].get(sid, 1.0)
            joint_kwargs["storage_scales"][sid] = prev + (factor - 1.0)
    joint_out = study.evaluator.run(**joint_kwargs)
    joint_delta = base.estimate.mean - joint_out.estimate.mean
    total_mw = sum(mw for _, mw in targets)

    perfect_est, _ = study.perfect_fd(total_mw, "forward")
    joint_alpha = (joint_delta / total_mw) / abs(perfect_est.value) if perfect_est.value else 0.0
    gap = joint_delta - sum(d for _, _, d in standalone)
    return PortfolioResult(
        baseline_metric=base.estimate.mean,
        joint_mw=total_mw,
        joint_delta=joint_delta,
        joint_alpha=joint_alpha,
        standalone=standalone,
        gap=gap,
    )
