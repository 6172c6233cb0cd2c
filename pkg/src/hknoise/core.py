"""Noisy heterogeneous Hegselmann-Krause dynamics.

Four synchronous update rules are supported (see :class:`ModelVariant`).  All
of them read neighbor sets and the population mean from the pre-step state and
project the result back onto ``[0, 1]``.  The per-step arithmetic lives in
numba kernels shared by the single-step API and the long-run driver, so a
one-step simulation is bit-identical to one call of :func:`step_env` or
:func:`step_comm`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numba
import numpy as np

from .errors import DomainError
from .noise import NoiseModel, comm_block, env_block


class ModelVariant(str, Enum):
    ENV_NOISE = "EnvNoise"
    ENV_NOISE_GLOBAL = "EnvNoiseGlobal"
    COMM_NOISE = "CommNoise"
    COMM_NOISE_GLOBAL = "CommNoiseGlobal"

    @property
    def uses_global(self) -> bool:
        return self in (ModelVariant.ENV_NOISE_GLOBAL, ModelVariant.COMM_NOISE_GLOBAL)

    @property
    def is_comm(self) -> bool:
        return self in (ModelVariant.COMM_NOISE, ModelVariant.COMM_NOISE_GLOBAL)


@dataclass(frozen=True)
class Population:
    """Confidence thresholds ``r`` and belief factors ``omega`` of ``n`` agents."""

    r: np.ndarray
    omega: np.ndarray = None
    r_min: float = field(init=False)
    r_max: float = field(init=False)

    def __post_init__(self):
        r = np.array(self.r, dtype=np.float64).reshape(-1)
        n = r.size
        if n < 3:
            raise DomainError(f"need at least 3 agents, got {n}")
        if not np.all((r > 0) & (r <= 1)):
            raise DomainError("every confidence threshold must lie in (0, 1]")
        if self.omega is None:
            omega = np.full(n, 0.5)
        else:
            omega = np.array(self.omega, dtype=np.float64).reshape(-1)
            if omega.size == 1:
                omega = np.full(n, float(omega[0]))
        if omega.size != n:
            raise DomainError(f"omega has {omega.size} entries for {n} agents")
        if not np.all((omega > 0) & (omega < 1)):
            raise DomainError("every belief factor must lie in (0, 1)")
        r.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "r_min", float(r.min()))
        object.__setattr__(self, "r_max", float(r.max()))

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def homogeneous(self) -> bool:
        return self.r_min == self.r_max

    def permuted(self, perm) -> "Population":
        perm = np.asarray(perm)
        return Population(self.r[perm], self.omega[perm])


@dataclass
class OpinionState:
    x: np.ndarray
    t: int = 0


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _clamp01(v):
    if v > 1.0:
        return 1.0
    if v < 0.0:
        return 0.0
    return v


@numba.njit(cache=True)
def _tilde(x, r, omega, use_global, out, counts):
    # means are accumulated as offsets from a pivot and clipped to the range
    # of the averaged values, so equal inputs reproduce themselves exactly
    n = x.shape[0]
    lo = x[0]
    hi = x[0]
    acc = 0.0
    for k in range(n):
        acc += x[k] - x[0]
        if x[k] < lo:
            lo = x[k]
        if x[k] > hi:
            hi = x[k]
    ave = min(max(x[0] + acc / n, lo), hi)
    for i in range(n):
        xi = x[i]
        ri = r[i]
        s = 0.0
        c = 0
        nlo = xi
        nhi = xi
        for j in range(n):
            xj = x[j]
            if abs(xj - xi) <= ri:
                s += xj - xi
                c += 1
                if xj < nlo:
                    nlo = xj
                if xj > nhi:
                    nhi = xj
        m = min(max(xi + s / c, nlo), nhi)
        if use_global:
            m = m + omega[i] * (ave - m)
        out[i] = m
        counts[i] = c


@numba.njit(cache=True)
def _env_step(x, r, omega, use_global, xi, out, tilde, counts):
    _tilde(x, r, omega, use_global, tilde, counts)
    for i in range(x.shape[0]):
        out[i] = _clamp01(tilde[i] + xi[i])


@numba.njit(cache=True)
def _comm_step(x, r, omega, use_global, z, out, tilde, counts):
    # z[j, i] is the perturbation on the message from j to i; only entries
    # with j a neighbor of i (j != i) are read
    _tilde(x, r, omega, use_global, tilde, counts)
    n = x.shape[0]
    for i in range(n):
        xi = x[i]
        ri = r[i]
        zs = 0.0
        for j in range(n):
            if j != i and abs(x[j] - xi) <= ri:
                zs += z[j, i]
        kappa = 1.0 - omega[i] if use_global else 1.0
        out[i] = _clamp01(tilde[i] + kappa * zs / counts[i])


@numba.njit(cache=True)
def _max_diff(x):
    lo = x[0]
    hi = x[0]
    for k in range(1, x.shape[0]):
        if x[k] < lo:
            lo = x[k]
        if x[k] > hi:
            hi = x[k]
    return hi - lo


@numba.njit(cache=True)
def _advance(x, r, omega, use_global, comm, noise, t0, d, rec, every):
    """Advance ``x`` in place through ``noise.shape[0]`` steps.

    ``d[t0 + s + 1]`` receives the diameter after step ``s``; states at times
    divisible by ``every`` are copied into ``rec``.
    """
    n = x.shape[0]
    nxt = np.empty(n)
    tilde = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    for s in range(noise.shape[0]):
        if comm:
            _comm_step(x, r, omega, use_global, noise[s], nxt, tilde, counts)
        else:
            _env_step(x, r, omega, use_global, noise[s, 0], nxt, tilde, counts)
        for i in range(n):
            x[i] = nxt[i]
        t = t0 + s + 1
        d[t] = _max_diff(x)
        if t % every == 0:
            row = t // every
            for i in range(n):
                rec[row, i] = x[i]


# ---------------------------------------------------------------------------
# validation helpers


def _as_state(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if n is not None and x.size != n:
        raise DomainError(f"state has {x.size} entries, expected {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("state contains non-finite values")
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError("opinions must lie in [0, 1]")
    return np.ascontiguousarray(x)


# ---------------------------------------------------------------------------
# public single-step API


def project_unit(v: float) -> float:
    """Projection of a real number onto ``[0, 1]``."""
    v = float(v)
    if not math.isfinite(v):
        raise DomainError(f"cannot project non-finite value {v}")
    return _clamp01(v)


def neighbor_set(x, i: int, r_i: float) -> tuple[int, ...]:
    """Indices ``j`` with ``|x_j - x_i| <= r_i`` (0-based, always contains ``i``)."""
    x = _as_state(x)
    if not (0 <= i < x.size):
        raise DomainError(f"agent index {i} out of range for n={x.size}")
    return tuple(int(j) for j in np.flatnonzero(np.abs(x - x[i]) <= r_i))


def edges(x, pop: Population) -> list[tuple[int, int]]:
    """Ordered pairs ``(j, i)`` with ``j`` a neighbor of ``i`` and ``j != i``."""
    x = _as_state(x, pop.n)
    out = []
    for i in range(pop.n):
        for j in neighbor_set(x, i, pop.r[i]):
            if j != i:
                out.append((j, i))
    return out


def tilde_x(x, pop: Population, variant: ModelVariant) -> np.ndarray:
    """Neighbor mean, blended with the population mean for global variants."""
    variant = ModelVariant(variant)
    x = _as_state(x, pop.n)
    out = np.empty(pop.n)
    counts = np.empty(pop.n, dtype=np.int64)
    _tilde(x, pop.r, pop.omega, variant.uses_global, out, counts)
    return out


def step_env(x, pop: Population, variant: ModelVariant, xi, eta: float) -> np.ndarray:
    variant = ModelVariant(variant)
    if variant.is_comm:
        raise DomainError(f"{variant.value} is a communication-noise variant")
    x = _as_state(x, pop.n)
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    if xi.size != pop.n:
        raise DomainError(f"noise has {xi.size} entries, expected {pop.n}")
    if not np.all(np.abs(xi) <= eta):
        raise DomainError(f"environment noise outside [-{eta}, {eta}]")
    out = np.empty(pop.n)
    _env_step(x, pop.r, pop.omega, variant.uses_global, xi, out, np.empty(pop.n), np.empty(pop.n, dtype=np.int64))
    return out


def step_comm(
    x, pop: Population, variant: ModelVariant, zeta: Mapping[tuple[int, int], float], eta: float
) -> np.ndarray:
    """One communication-noise step; ``zeta`` maps each edge ``(j, i)`` to its noise."""
    variant = ModelVariant(variant)
    if not variant.is_comm:
        raise DomainError(f"{variant.value} is an environment-noise variant")
    x = _as_state(x, pop.n)
    expected = set(edges(x, pop))
    given = set(zeta)
    if given - expected:
        raise DomainError(f"noise supplied for non-edges {sorted(given - expected)}")
    if expected - given:
        raise DomainError(f"missing noise for edges {sorted(expected - given)}")
    z = np.zeros((pop.n, pop.n))
    for (j, i), v in zeta.items():
        if not abs(v) <= eta:
            raise DomainError(f"communication noise {v} on ({j}, {i}) outside [-{eta}, {eta}]")
        z[j, i] = v
    out = np.empty(pop.n)
    _comm_step(x, pop.r, pop.omega, variant.uses_global, z, out, np.empty(pop.n), np.empty(pop.n, dtype=np.int64))
    return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryRecord:
    """Diameter at every step plus a downsampled opinion history."""

    variant: ModelVariant
    eta: float
    seed: int
    replicate: int
    d: np.ndarray  # d[t] for t = 0..horizon
    times: np.ndarray  # times of the rows of ``states``
    states: np.ndarray
    final: np.ndarray
    every: int

    @property
    def horizon(self) -> int:
        return self.d.size - 1


def default_downsample(horizon: int) -> int:
    return 100 if horizon >= 100_000 else 1


def simulate(
    pop: Population,
    variant: ModelVariant,
    noise_model: NoiseModel,
    x0,
    horizon: int,
    seed: int,
    replicate: int = 0,
    downsample: int | None = None,
    chunk: int = 16384,
) -> TrajectoryRecord:
    """Run one trajectory of ``horizon`` steps; deterministic in ``(seed, replicate)``."""
    variant = ModelVariant(variant)
    if horizon < 1:
        raise DomainError(f"horizon must be at least 1, got {horizon}")
    every = default_downsample(horizon) if downsample is None else int(downsample)
    if every < 1:
        raise DomainError("downsample factor must be >= 1")
    x = _as_state(x0, pop.n).copy()
    n = pop.n
    d = np.empty(horizon + 1)
    d[0] = _max_diff(x)
    rec = np.empty((horizon // every + 1, n))
    rec[0] = x
    comm = variant.is_comm
    if comm:
        # n*n noise words per step; keep blocks around a few MB
        chunk = max(1, min(chunk, 262144 // (n * n)))
    t = 0
    while t < horizon:
        steps = min(chunk, horizon - t)
        if comm:
            block = comm_block(noise_model, n, seed, replicate, t, steps)
        else:
            block = env_block(noise_model, n, seed, replicate, t, steps)[:, None, :]
        _advance(x, pop.r, pop.omega, variant.uses_global, comm, block, t, d, rec, every)
        t += steps
    times = np.arange(rec.shape[0]) * every
    return TrajectoryRecord(variant, noise_model.eta, seed, replicate, d, times, rec, x.copy(), every)
