"""Bounded noise generators for the environment and communication channels.

All generators are state independent and counter based: the value of a draw is
a pure function of ``(seed, replicate, step, agent or edge)``.  Layout of the
underlying word stream:

* environment noise uses ``n + 1`` words per step; word ``i`` belongs to agent
  ``i`` and word ``n`` is the shared shock of :attr:`NoiseKind.COMMON_SHOCK`;
* communication noise uses ``n * n`` words per step; word ``j * n + i`` belongs
  to the ordered edge ``(j, i)`` (sender ``j``, receiver ``i``).  Self pairs never
  carry noise, so slot ``(0, 0)`` is reused for the shared shock.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.special import ndtr, ndtri

from . import rng
from .errors import DomainError


class NoiseKind(str, Enum):
    UNIFORM = "uniform"
    TRUNCATED_GAUSSIAN = "truncated_gaussian"
    COMMON_SHOCK = "common_shock"


@dataclass(frozen=True)
class NoiseModel:
    """A bounded noise family supported on ``[-eta, eta]``.

    ``sigma`` parametrizes :attr:`NoiseKind.TRUNCATED_GAUSSIAN`; ``beta`` is the
    weight of the shared shock in :attr:`NoiseKind.COMMON_SHOCK`.
    """

    eta: float
    kind: NoiseKind = NoiseKind.UNIFORM
    sigma: float | None = None
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise DomainError(f"eta must be positive and finite, got {self.eta}")
        if self.kind is NoiseKind.TRUNCATED_GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise DomainError("truncated_gaussian needs sigma > 0")
        if self.kind is NoiseKind.COMMON_SHOCK:
            # beta >= 1/2 leaves no interval on which every shock value gives
            # positive conditional density, so no lower bound can be stated
            if self.beta is None or not (0.0 <= self.beta < 0.5):
                raise DomainError("common_shock needs beta in [0, 0.5)")

    @property
    def rho_lower(self) -> float:
        return density_lower_bound(self)


@dataclass(frozen=True)
class RngContext:
    seed: int
    step: int
    replicate: int = 0


def density_lower_bound(model: NoiseModel) -> float:
    """Per-coordinate lower bound on the noise density.

    For the common-shock mixture the bound holds conditionally on the shock and
    only on :func:`density_support`, not on the whole of ``[-eta, eta]``.
    """
    eta = model.eta
    if model.kind is NoiseKind.UNIFORM:
        return 1.0 / (2.0 * eta)
    if model.kind is NoiseKind.TRUNCATED_GAUSSIAN:
        a = eta / model.sigma
        mass = ndtr(a) - ndtr(-a)
        phi = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
        return phi / (model.sigma * mass)
    if model.kind is NoiseKind.COMMON_SHOCK:
        return (1.0 - model.beta) / (2.0 * eta)
    raise DomainError(f"unsupported noise kind {model.kind!r}")


def density_support(model: NoiseModel) -> tuple[float, float]:
    """Interval on which :func:`density_lower_bound` is guaranteed."""
    if model.kind is NoiseKind.COMMON_SHOCK:
        half = (1.0 - 2.0 * model.beta) * model.eta
        return -half, half
    return -model.eta, model.eta


def _transform(model: NoiseModel, u: np.ndarray, shock: np.ndarray | None) -> np.ndarray:
    """Map unit uniforms ``u`` (and per-row shock uniforms) to noise values."""
    eta = model.eta
    if model.kind is NoiseKind.UNIFORM:
        out = eta * (2.0 * u - 1.0)
    elif model.kind is NoiseKind.TRUNCATED_GAUSSIAN:
        a = eta / model.sigma
        lo = ndtr(-a)
        out = model.sigma * ndtri(lo + u * (ndtr(a) - lo))
    else:
        z = eta * (2.0 * shock - 1.0)
        out = (1.0 - model.beta) * eta * (2.0 * u - 1.0) + model.beta * z
    return np.clip(out, -eta, eta)


def env_block(model: NoiseModel, n: int, seed: int, replicate: int, t0: int, steps: int) -> np.ndarray:
    """Environment noise for steps ``t0 .. t0+steps-1`` as a ``(steps, n)`` array."""
    stride = n + 1
    u = rng.uniforms(seed, replicate, rng.ENV, t0 * stride, steps * stride).reshape(steps, stride)
    return _transform(model, u[:, :n], u[:, n:])


def comm_block(model: NoiseModel, n: int, seed: int, replicate: int, t0: int, steps: int) -> np.ndarray:
    """Communication noise as a ``(steps, n, n)`` array indexed ``[t, sender, receiver]``.

    Diagonal entries are zero.
    """
    stride = n * n
    u = rng.uniforms(seed, replicate, rng.COMM, t0 * stride, steps * stride).reshape(steps, n, n)
    out = _transform(model, u, u[:, :1, :1])
    idx = np.arange(n)
    out[:, idx, idx] = 0.0
    return out


def sample_env(model: NoiseModel, n: int, ctx: RngContext) -> np.ndarray:
    return env_block(model, n, ctx.seed, ctx.replicate, ctx.step, 1)[0]


def sample_comm(
    model: NoiseModel, n: int, edges: Iterable[tuple[int, int]], ctx: RngContext
) -> dict[tuple[int, int], float]:
    """One bounded value per ordered edge ``(sender, receiver)``."""
    edges = list(edges)
    for j, i in edges:
        if j == i:
            raise DomainError(f"self pair ({j}, {i}) cannot carry communication noise")
        if not (0 <= j < n and 0 <= i < n):
            raise DomainError(f"edge ({j}, {i}) out of range for n={n}")
    if not edges:
        return {}
    block = comm_block(model, n, ctx.seed, ctx.replicate, ctx.step, 1)[0]
    return {(j, i): float(block[j, i]) for j, i in edges}
