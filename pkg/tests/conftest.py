"""Shared fixtures: canonical small systems plus an independent brute-force
reference implementation used to freeze expected values. The reference
deliberately avoids every package code path (pure-python itertools loops)
so oracle regressions cannot hide behind shared bugs."""

from __future__ import annotations

import itertools
import math
import random

import pytest

from capcred import (
    AvailabilityProfile,
    GeneratorSpec,
    LoadTrajectory,
    StorageSpec,
    SystemSpec,
)


def build_system(generators, load, hours_per_day=24, storages=(), profiles=()):
    return SystemSpec(
        generators=tuple(generators),
        storages=tuple(storages),
        profiles=tuple(profiles),
        load=LoadTrajectory(tuple(load)),
        horizon_hours=len(load),
        hours_per_day=hours_per_day,
    )


@pytest.fixture
def toy3():
    """Three thermal units (100 MW FOR 0.10, 2x 50 MW FOR 0.05), flat 149 MW."""
    return build_system(
        [
            GeneratorSpec("g1", 100.0, "thermal", for_rate=0.10),
            GeneratorSpec("g2", 50.0, "thermal", for_rate=0.05),
            GeneratorSpec("g3", 50.0, "thermal", for_rate=0.05),
        ],
        [149.0] * 24,
    )


@pytest.fixture
def toy3_cand():
    """toy3 plus a zero-baseline Bernoulli candidate with availability 0.9."""
    return build_system(
        [
            GeneratorSpec("g1", 100.0, "thermal", for_rate=0.10),
            GeneratorSpec("g2", 50.0, "thermal", for_rate=0.05),
            GeneratorSpec("g3", 50.0, "thermal", for_rate=0.05),
            GeneratorSpec("c1", 0.0, "thermal", for_rate=0.10),
        ],
        [149.0] * 24,
    )


@pytest.fixture
def toy3_derated():
    """toy3 plus a zero-baseline derated candidate: deterministic 0.9 output."""
    return build_system(
        [
            GeneratorSpec("g1", 100.0, "thermal", for_rate=0.10),
            GeneratorSpec("g2", 50.0, "thermal", for_rate=0.05),
            GeneratorSpec("g3", 50.0, "thermal", for_rate=0.05),
            GeneratorSpec("d1", 0.0, "profile", profile_id="flat09"),
        ],
        [149.0] * 24,
        profiles=[AvailabilityProfile("flat09", (0.9,) * 24)],
    )


@pytest.fixture
def synergy_system():
    """Two-hour fixture: flat 5 MW load, no fleet capacity, PV shape [1, 0]."""
    return build_system(
        [GeneratorSpec("pv", 0.0, "profile", profile_id="pv-shape")],
        [5.0, 5.0],
        hours_per_day=2,
        profiles=[AvailabilityProfile("pv-shape", (1.0, 0.0))],
    )


@pytest.fixture
def synergy_storage():
    return StorageSpec("batt", power_mw=5.0, energy_mwh=5.0, initial_soc_fraction=0.0)


@pytest.fixture
def kink_system():
    """Load exactly equal to one outage state's capacity (100 + 50 = 150)."""
    return build_system(
        [
            GeneratorSpec("g1", 100.0, "thermal", for_rate=0.10),
            GeneratorSpec("g2", 50.0, "thermal", for_rate=0.05),
            GeneratorSpec("g3", 50.0, "thermal", for_rate=0.05),
        ],
        [150.0] * 24,
    )


# ---------------------------------------------------------------------------
# Independent brute-force reference
# ---------------------------------------------------------------------------


def reference_enumeration(units, load):
    """Exact per-hour EUE/LOLP for thermal-only fleets, stdlib arithmetic only.

    units: iterable of (capacity_mw, for_rate); load: per-hour list.
    Returns (eue_total, lolh_total, lolp_per_hour list, eue_per_hour list).
    """
    units = list(units)
    eue_hours, lolp_hours = [], []
    states = list(itertools.product((0, 1), repeat=len(units)))
    for l_tau in load:
        eue = 0.0
        lolp = 0.0
        for bits in states:
            prob = 1.0
            cap = 0.0
            for (c, f), up in zip(units, bits):
                prob *= (1.0 - f) if up else f
                cap += c * up
            short = l_tau - cap
            if short > 0.0:
                eue += prob * short
                lolp += prob
        eue_hours.append(eue)
        lolp_hours.append(lolp)
    return math.fsum(eue_hours), math.fsum(lolp_hours), lolp_hours, eue_hours


def random_small_system(seed: int, with_candidate: bool = True):
    """A randomized 3-6 unit thermal system with positive expected shortfall."""
    rng = random.Random(seed)
    while True:
        n_units = rng.randint(3, 6)
        units = [
            GeneratorSpec(
                f"u{k}",
                rng.uniform(20.0, 120.0),
                "thermal",
                for_rate=rng.uniform(0.02, 0.20),
            )
            for k in range(n_units)
        ]
        total = sum(g.nameplate_mw for g in units)
        load = rng.uniform(0.70, 0.95) * total
        gens = list(units)
        if with_candidate:
            gens.append(
                GeneratorSpec("cand", 0.0, "thermal", for_rate=rng.uniform(0.05, 0.3))
            )
        system = build_system(gens, [load] * 24)
        pairs = [(g.nameplate_mw, g.for_rate) for g in units]
        eue, _, _, _ = reference_enumeration(pairs, [load])
        # keep clearly-inadequate baselines away from kinks
        caps = [sum(c * b for (c, _), b in zip(pairs, bits))
                for bits in itertools.product((0, 1), repeat=len(pairs))]
        if eue > 0.05 and all(abs(load - c) > 1e-6 for c in caps):
            return system
