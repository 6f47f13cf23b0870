"""Scenario sampling with deterministic, composition-independent random streams.

Every resource draws from its own counter-based Philox stream keyed by
(master_seed, resource_id); scenario i occupies a fixed, 4-aligned block of
the stream's counter space. Draws are therefore a pure function of
(master_seed, scenario_index, resource_id, hour): adding or removing other
resources, changing capacities, or splitting work across threads can never
change a resource's availability realizations. Common random numbers across
paired runs hold by construction.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .system import GeneratorSpec, SpecError, SystemSpec

STREAM_DERIVATION = "philox-sha256-v1"

_DUMP_MAGIC = b"CAPCREDBATCH1\n"


class BatchError(ValueError):
    pass


@dataclass(frozen=True)
class RngPolicy:
    """Master seed plus the stream-derivation rule identifier."""

    master_seed: int
    derivation: str = STREAM_DERIVATION

    def __post_init__(self):
        if self.derivation != STREAM_DERIVATION:
            raise SpecError("rng_policy.derivation", f"unknown rule {self.derivation!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise SpecError("rng_policy.master_seed", "must fit in 64 bits")


def _resource_key(policy: RngPolicy, resource_id: str) -> np.ndarray:
    digest = hashlib.sha256(
        f"{policy.derivation}:{policy.master_seed}:{resource_id}".encode()
    ).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def _block_draws(horizon_hours: int) -> int:
    # Philox advances in 4-draw counter blocks; pad each scenario to alignment.
    return 4 * ((horizon_hours + 3) // 4)


def derive_stream(
    policy: RngPolicy, scenario_index: int, resource_id: str, horizon_hours: int
) -> np.ndarray:
    """Uniform draws u[hour] for one (scenario, resource) pair.

    Pure in (master_seed, scenario_index, resource_id, hour); independent of
    fleet composition and of how many scenarios are sampled.
    """
    if scenario_index < 0:
        raise BatchError("scenario_index must be nonnegative")
    block = _block_draws(horizon_hours)
    bg = np.random.Philox(key=_resource_key(policy, resource_id))
    bg = bg.advance(scenario_index * block // 4)
    return np.random.Generator(bg).random(horizon_hours)


def _resource_uniforms(
    policy: RngPolicy, resource_id: str, n: int, horizon_hours: int
) -> np.ndarray:
    block = _block_draws(horizon_hours)
    gen = np.random.Generator(np.random.Philox(key=_resource_key(policy, resource_id)))
    u = gen.random(n * block).reshape(n, block)
    return u[:, :horizon_hours]


@dataclass
class ScenarioBatch:
    """Materialized availability realizations for n scenarios.

    `availability` is resource-major with shape (n_resources, n, horizon),
    so each resource's draws form one contiguous block; `weights` is None
    for Monte Carlo batches and a probability vector for exact-weight
    pseudo-batches built by the enumeration oracle.
    """

    n: int
    resource_ids: tuple[str, ...]
    availability: np.ndarray
    policy: RngPolicy | None
    horizon_hours: int
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.availability.shape != (len(self.resource_ids), self.n, self.horizon_hours):
            raise BatchError(
                f"availability shape {self.availability.shape} does not match "
                f"(resources={len(self.resource_ids)}, n={self.n}, horizon={self.horizon_hours})"
            )
        if self.weights is not None:
            if self.weights.shape != (self.n,):
                raise BatchError("weights must have one entry per scenario")
            if abs(float(self.weights.sum()) - 1.0) > 1e-12:
                raise BatchError("weights must sum to 1")

    @property
    def is_exact(self) -> bool:
        return self.weights is not None

    def index_of(self, resource_id: str) -> int:
        try:
            return self.resource_ids.index(resource_id)
        except ValueError:
            raise BatchError(f"resource {resource_id!r} not present in batch") from None

    def slice(self, resource_id: str) -> np.ndarray:
        """Availability (n, horizon) for one resource (contiguous view)."""
        return self.availability[self.index_of(resource_id)]

    def dump_thermal_flags(self, path: str | Path, resource_ids=None) -> None:
        """Debug dump: 8-bit availability flags, format in docs/batch_dump_format.md."""
        ids = tuple(resource_ids) if resource_ids is not None else self.resource_ids
        with open(path, "wb") as fh:
            fh.write(_DUMP_MAGIC)
            header = ",".join(ids).encode()
            fh.write(struct.pack("<QQH", self.n, self.horizon_hours, len(header)))
            fh.write(header)
            for rid in ids:
                flags = (self.slice(rid) > 0.5).astype(np.uint8)
                fh.write(flags.tobytes(order="C"))


def _fill_availability(
    out: np.ndarray, gen: GeneratorSpec, system: SystemSpec, policy: RngPolicy
) -> None:
    n, horizon = out.shape
    if gen.kind == "perfect":
        out[:] = 1.0
        return
    if gen.kind == "profile":
        values = np.asarray(system.profile_by_id(gen.profile_id).values, dtype=np.float64)
        out[:] = values[None, :]
        return
    u = _resource_uniforms(policy, gen.id, n, horizon)
    # availability is 1 with probability 1 - FOR; written as 0.0/1.0 in place
    np.greater_equal(u, gen.for_rate, out=out, casting="unsafe")


def sample_batch(
    system: SystemSpec,
    n: int,
    policy: RngPolicy,
    extra_generators: tuple[GeneratorSpec, ...] = (),
    threads: int = 1,
) -> ScenarioBatch:
    """Sample n availability scenarios for the fleet plus any candidate units.

    Candidates in `extra_generators` get their own keyed streams and zero
    baseline capacity; they exist in the batch so that perturbed runs at any
    size share identical draws. Output is bit-identical for any thread count.
    """
    if n < 1:
        raise BatchError("scenario count must be at least 1")
    gens = tuple(system.generators) + tuple(extra_generators)
    ids = tuple(g.id for g in gens)
    if len(set(ids)) != len(ids):
        raise BatchError("duplicate resource ids across fleet and candidates")
    availability = np.empty((len(gens), n, system.horizon_hours), dtype=np.float64)

    def fill(idx: int) -> None:
        _fill_availability(availability[idx], gens[idx], system, policy)

    if threads > 1 and len(gens) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(len(gens))))
    else:
        for idx in range(len(gens)):
            fill(idx)
    return ScenarioBatch(
        n=n,
        resource_ids=ids,
        availability=availability,
        policy=policy,
        horizon_hours=system.horizon_hours,
    )
