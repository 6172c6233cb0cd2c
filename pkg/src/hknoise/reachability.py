"""Control-system counterparts of the noisy dynamics and their steering laws.

In the control systems the noise term of each update is split into a chosen
input ``u`` and an adversarial uncertainty ``b`` with ``|u| <= eta - delta`` and
``|b| <= delta``.  A law that reaches a target set against every admissible
``b`` shows that the same target is hit with positive probability by the noisy
system.  This module implements the steering laws and a certifier that rolls
them forward against a battery of adversaries.

Controls for the environment variants are vectors ``u[i]``; for the
communication variants they are matrices ``u[j, i]`` on the edge from sender
``j`` to receiver ``i`` (entries off the current edge set are ignored).  In both
cases ``delta[i]`` is the uncertainty radius of agent ``i``.

Adversary coverage is sampled: fixed extreme strategies plus seeded uniform
draws.  A certificate is therefore a falsification test, not a proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .core import ModelVariant, Population, _as_state, _comm_step, _env_step, tilde_x
from .errors import BudgetError, DomainError, PreconditionError
from .metrics import comm_band_bound, comm_band_threshold, h_matrix, max_diff, w_underline

# slack used when checking that a pre-positioning phase has finished
_POS_TOL = 1e-12


# ---------------------------------------------------------------------------
# targets and controls


@dataclass(frozen=True)
class TargetSet:
    """``ball``: ``max_i |x_i - z| < alpha``; ``spread``: ``beta <= diameter (<= upper)``."""

    kind: str
    z: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    upper: float | None = None

    def __post_init__(self):
        if self.kind == "ball":
            if not (0.0 <= self.z <= 1.0 and self.alpha > 0):
                raise DomainError("ball target needs z in [0, 1] and alpha > 0")
        elif self.kind == "spread":
            if not (0.0 <= self.beta <= 1.0):
                raise DomainError("spread target needs beta in [0, 1]")
        else:
            raise DomainError(f"unknown target kind {self.kind!r}")

    @classmethod
    def ball(cls, z: float, alpha: float) -> "TargetSet":
        return cls("ball", z=z, alpha=alpha)

    @classmethod
    def spread(cls, beta: float, upper: float | None = None) -> "TargetSet":
        return cls("spread", beta=beta, upper=upper)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        if self.kind == "ball":
            return bool(np.max(np.abs(x - self.z)) < self.alpha)
        d = max_diff(x)
        return d >= self.beta and (self.upper is None or d <= self.upper)

    def describe(self) -> str:
        if self.kind == "ball":
            return f"ball(z={self.z:g},alpha={self.alpha:g})"
        if self.upper is None:
            return f"spread(beta={self.beta:g})"
        return f"spread(beta={self.beta:g},upper={self.upper:g})"


@dataclass
class Controls:
    u: np.ndarray
    delta: np.ndarray
    phase: str = ""


def _finish(u: np.ndarray, delta: np.ndarray, eta: float, phase: str) -> Controls:
    # clipping is a no-op in exact arithmetic; it absorbs rounding at the edges
    # of the admissible box so the budget check can be exact
    delta = np.asarray(delta, dtype=np.float64)
    lim = eta - delta
    if u.ndim == 2:
        u = np.clip(u, -lim[None, :], lim[None, :])
    else:
        u = np.clip(u, -lim, lim)
    return Controls(u, delta, phase)


def _edge_mask(x: np.ndarray, pop: Population) -> np.ndarray:
    """``mask[j, i]`` is True when ``j`` is a neighbor of ``i`` and ``j != i``."""
    mask = np.abs(x[:, None] - x[None, :]) <= pop.r[None, :]
    np.fill_diagonal(mask, False)
    return mask


def check_budget(controls: Controls, b: np.ndarray, eta: float, mask: np.ndarray | None = None) -> None:
    u, delta = controls.u, controls.delta
    if not np.all((delta > 0) & (delta < eta)):
        raise BudgetError("uncertainty radii must lie in (0, eta)")
    if u.ndim == 2:
        m = np.ones_like(u, dtype=bool) if mask is None else mask
        lim = np.broadcast_to(delta[None, :], u.shape)
        bad_u = m & ~(np.abs(u) <= eta - lim)
        bad_b = m & ~(np.abs(b) <= lim)
    else:
        bad_u = ~(np.abs(u) <= eta - delta)
        bad_b = ~(np.abs(b) <= delta)
    if bad_u.any():
        raise BudgetError("control input exceeds eta - delta")
    if bad_b.any():
        raise BudgetError("uncertainty exceeds delta")


def control_step(x, pop: Population, variant: ModelVariant, controls: Controls, b, eta: float) -> np.ndarray:
    """Advance the control system one step under input ``controls`` and uncertainty ``b``."""
    variant = ModelVariant(variant)
    x = _as_state(x, pop.n)
    b = np.asarray(b, dtype=np.float64)
    n = pop.n
    out = np.empty(n)
    tilde = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    if variant.is_comm:
        if controls.u.shape != (n, n) or b.shape != (n, n):
            raise DomainError("communication controls must be n x n matrices")
        mask = _edge_mask(x, pop)
        check_budget(controls, b, eta, mask)
        z = np.where(mask, controls.u + b, 0.0)
        _comm_step(x, pop.r, pop.omega, variant.uses_global, z, out, tilde, counts)
    else:
        if controls.u.shape != (n,) or b.shape != (n,):
            raise DomainError("environment controls must be length-n vectors")
        check_budget(controls, b, eta)
        _env_step(x, pop.r, pop.omega, variant.uses_global, controls.u + b, out, tilde, counts)
    return out


# ---------------------------------------------------------------------------
# single-step laws


def law_drive_to_ball(x, pop: Population, variant: ModelVariant, z: float, alpha: float, eta: float) -> Controls:
    """Three-branch law steering every agent toward ``[z - alpha, z + alpha]``.

    Agents whose local mean is within reach land on ``z + b``; the others move
    toward ``z`` by the largest admissible input.
    """
    variant = ModelVariant(variant)
    if variant.is_comm:
        raise PreconditionError("drive-to-ball applies to the environment-noise variants")
    if not (0.0 < alpha < eta / 2.0):
        raise PreconditionError(f"alpha must lie in (0, eta/2) = (0, {eta / 2}), got {alpha}")
    tx = tilde_x(x, pop, variant)
    reach = eta - alpha
    u = np.where(tx > z + reach, -reach, np.where(tx < z - reach, reach, z - tx))
    return _finish(u, np.full(pop.n, alpha), eta, "center")


def split_extreme_k_bound(pop: Population, eta: float) -> float:
    r, R, n = pop.r_min, pop.r_max, pop.n
    return max(4.0 * (r + eta) / (2.0 * eta - r), 2.0 * n * eta / (n * eta - R))


def _check_split_regime(pop: Population, eta: float) -> None:
    if not pop.r_min < 1.0:
        raise PreconditionError("splitting needs r_min < 1")
    if not eta > max(pop.r_min / 2.0, pop.r_max / pop.n):
        raise PreconditionError(
            f"splitting needs eta > max(r_min/2, r_max/n) = {max(pop.r_min / 2, pop.r_max / pop.n):g}"
        )


def law_split_extreme(x, pop: Population, K: float, eta: float) -> Controls:
    """Push the least-confident agent up and everyone else down at rate ``eta - eta/K``.

    Valid as a first step only from a state packed into
    ``[r_min/2, r_min/2 + 2 r_min/K]``; the push is then repeated unchanged.
    """
    _check_split_regime(pop, eta)
    bound = split_extreme_k_bound(pop, eta)
    if K < bound:
        raise PreconditionError(f"K={K} below the required bound {bound:g}")
    x = _as_state(x, pop.n)
    lo = pop.r_min / 2.0 - _POS_TOL
    hi = pop.r_min / 2.0 + 2.0 * pop.r_min / K + _POS_TOL
    if not np.all((x >= lo) & (x <= hi)):
        raise PreconditionError("state is not pre-positioned near r_min/2")
    return _split_controls(pop, K, eta)


def _split_controls(pop: Population, K: float, eta: float, up: int | None = None) -> Controls:
    up = int(np.argmin(pop.r)) if up is None else up
    step = eta - eta / K
    u = np.full(pop.n, -step)
    u[up] = step
    return _finish(u, np.full(pop.n, eta / K), eta, "split")


def _ball_steps(eta: float, alpha: float) -> int:
    return math.ceil(1.0 / (eta - 2.0 * alpha)) + 1


# ---------------------------------------------------------------------------
# staged controllers


class Controller:
    """A stateful steering law.  Call with the current state to get the next
    controls, or None once the law's schedule is exhausted."""

    variant: ModelVariant
    target: TargetSet
    horizon: int
    phase: str = ""

    def reset(self) -> None:
        self.phase = ""

    def __call__(self, x: np.ndarray) -> Controls | None:
        raise NotImplementedError


class DriveToBall(Controller):
    def __init__(self, pop: Population, variant: ModelVariant, eta: float, z: float, alpha: float,
                 target_alpha: float | None = None):
        self.pop, self.variant, self.eta, self.z, self.alpha = pop, ModelVariant(variant), eta, z, alpha
        law_drive_to_ball(np.full(pop.n, z), pop, self.variant, z, alpha, eta)  # parameter check
        self.target = TargetSet.ball(z, 2.0 * alpha if target_alpha is None else target_alpha)
        self.horizon = _ball_steps(eta, alpha)

    def __call__(self, x):
        self.phase = "center"
        return law_drive_to_ball(x, self.pop, self.variant, self.z, self.alpha, self.eta)

    def packed(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - self.z) <= self.alpha + _POS_TOL))


class _CenterThen(Controller):
    """Run a centering law until its closed ball is reached, then switch."""

    center: Controller

    def reset(self):
        self.phase = "center"
        self.center.reset()
        self._pushes = 0

    def __call__(self, x):
        if self.phase == "center":
            if not self.center.packed(x):
                return self.center(x)
            self.phase = "push"
        out = self.push(x, self._pushes)
        self._pushes += 1
        return out

    def push(self, x, k: int) -> Controls | None:
        raise NotImplementedError


class SplitExtreme(_CenterThen):
    """Pack everyone near ``r_min/2``, then separate the least-confident agent to 1."""

    def __init__(self, pop: Population, eta: float, K: float | None = None):
        _check_split_regime(pop, eta)
        bound = split_extreme_k_bound(pop, eta)
        K = math.ceil(4.0 * bound) if K is None else K
        if K < bound:
            raise PreconditionError(f"K={K} below the required bound {bound:g}")
        self.pop, self.eta, self.K = pop, eta, K
        self.variant = ModelVariant.ENV_NOISE
        r = pop.r_min
        self.center = DriveToBall(pop, self.variant, eta, (K + 2.0) * r / (2.0 * K), r / K)
        self.target = TargetSet.spread(1.0)
        push = math.ceil(1.0 / (eta - 2.0 * eta / K)) + 2
        self.horizon = 2 * (self.center.horizon + push)
        self.reset()

    def push(self, x, k):
        if k == 0:
            return law_split_extreme(x, self.pop, self.K, self.eta)
        return _split_controls(self.pop, self.K, self.eta)


class SpreadOnce(_CenterThen):
    """Center at 1/2, then push two agents apart once at the maximal rate."""

    def __init__(self, pop: Population, variant: ModelVariant, eta: float, epsilon: float):
        variant = ModelVariant(variant)
        if variant.is_comm:
            raise PreconditionError("single-step spreading applies to the environment-noise variants")
        if not (0.0 < epsilon < eta):
            raise PreconditionError(f"epsilon must lie in (0, eta), got {epsilon}")
        self.pop, self.variant, self.eta, self.epsilon = pop, variant, eta, epsilon
        self.center = DriveToBall(pop, variant, eta, 0.5, epsilon / 2.0)
        self.target = TargetSet.spread(min(2.0 * eta - 2.0 * epsilon, 1.0))
        self.horizon = 2 * (self.center.horizon + 1)
        self.reset()

    def push(self, x, k):
        if k > 0:
            return None
        d = self.epsilon / 4.0
        u = np.zeros(self.pop.n)
        u[0] = self.eta - d
        u[1] = -(self.eta - d)
        return _finish(u, np.full(self.pop.n, d), self.eta, "push")


class SpreadGlobal(_CenterThen):
    """Global-information analogue of :class:`SplitExtreme`.

    The agent with the smallest belief factor among those with ``r_i < 2 eta``
    is pushed up; its fixed point under the global pull sets the reachable
    spread ``min(n eta/((n-1) w) - eps, n eta - eps, 1)``.
    """

    def __init__(self, pop: Population, eta: float, epsilon: float, K: float | None = None):
        if not pop.r_min < 1.0:
            raise PreconditionError("needs r_min < 1")
        if not eta > pop.r_min / 2.0:
            raise PreconditionError("needs eta > r_min/2")
        if not epsilon > 0:
            raise PreconditionError("epsilon must be positive")
        n = pop.n
        w = w_underline(eta, pop)
        cand = np.flatnonzero((pop.r < 2.0 * eta) & (pop.omega == w))
        self.up = int(cand[0])
        r1 = float(pop.r[self.up])
        bound = max(4.0 * (r1 + eta) / (2.0 * eta - r1), 4.0 * eta * n / ((n - 1) * w * epsilon), 2.0 * eta * n / epsilon)
        K = math.ceil(4.0 * bound) if K is None else K
        if K < bound:
            raise PreconditionError(f"K={K} below the required bound {bound:g}")
        self.pop, self.eta, self.epsilon, self.K = pop, eta, epsilon, K
        self.variant = ModelVariant.ENV_NOISE_GLOBAL
        self.center = DriveToBall(pop, self.variant, eta, (K + 2.0) * r1 / (2.0 * K), r1 / K)
        beta = min(n * eta / ((n - 1) * w) - epsilon, n * eta - epsilon, 1.0)
        if beta <= 0:
            raise PreconditionError("epsilon too large: empty target")
        self.target = TargetSet.spread(beta)
        gain = (n - 1) * w * epsilon / (2.0 * n)
        self.horizon = 2 * (self.center.horizon + math.ceil(1.0 / gain) + 2)
        self.reset()

    def push(self, x, k):
        return _split_controls(self.pop, self.K, self.eta, up=self.up)


# -- communication noise with global information ---------------------------


class CommGlobalCenter(Controller):
    """Steer every connected agent's update onto ``z`` through its incoming edges.

    Isolated agents receive no input; the global term pulls them toward the
    population mean until they connect.
    """

    def __init__(self, pop: Population, eta: float, z: float, alpha: float):
        if not (0.0 < alpha < eta):
            raise PreconditionError("alpha must lie in (0, eta)")
        self.pop, self.eta, self.z, self.alpha = pop, eta, z, alpha
        self.variant = ModelVariant.COMM_NOISE_GLOBAL
        self.target = TargetSet.ball(z, alpha)
        delta = alpha / 2.0
        w_hi, w_lo = float(pop.omega.max()), float(pop.omega.min())
        drift = math.ceil(2.0 / ((1.0 - w_hi) * (eta - delta)))
        merge = math.ceil(math.log(delta / 2.0) / math.log(1.0 - w_lo))
        self.horizon = 2 * (drift + merge) + 2

    def __call__(self, x):
        self.phase = "center"
        pop, n = self.pop, self.pop.n
        x = np.asarray(x)
        delta = np.full(n, self.alpha / 2.0)
        tx = tilde_x(x, pop, self.variant)
        mask = _edge_mask(x, pop)
        deg = mask.sum(axis=0)  # |N_i| - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            per_edge = (self.z - tx) * (deg + 1) / ((1.0 - pop.omega) * deg)
        per_edge = np.where(deg > 0, per_edge, 0.0)
        u = np.where(mask, per_edge[None, :], 0.0)
        return _finish(u, delta, self.eta, "center")

    def packed(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - self.z) < self.alpha))


class CommPairSpread(_CenterThen):
    """Center, then push one pair apart through all incoming edges in one step.

    The pair maximizing ``a_i + a_j`` is used; reachable spread ``min(a_ij - 2 eps, 1)``.
    """

    def __init__(self, pop: Population, eta: float, epsilon: float, pair: tuple[int, int] | None = None):
        if not (0.0 < epsilon < eta):
            raise PreconditionError("epsilon must lie in (0, eta)")
        pc = h_matrix(eta, pop)
        if pair is None:
            pair = np.unravel_index(np.nanargmax(pc.A), pc.A.shape)
        p, q = int(pair[0]), int(pair[1])
        n = pop.n
        self.eps_i = n * epsilon / ((1.0 - pop.omega) * (n - 1))
        if not np.all(self.eps_i[[p, q]] / 4.0 < eta):
            raise PreconditionError("epsilon too large for the per-agent uncertainty radii")
        self.pop, self.eta, self.epsilon, self.p, self.q = pop, eta, epsilon, p, q
        self.variant = ModelVariant.COMM_NOISE_GLOBAL
        x_star = min(max(0.5 + (pc.a[q] - pc.a[p]) / 2.0, 0.0), 1.0)
        # a ball narrower than r_min keeps everyone connected at the push step
        self.center = CommGlobalCenter(pop, eta, x_star, min(epsilon, pop.r_min) / 2.0)
        beta = min(float(pc.A[p, q]) - 2.0 * epsilon, 1.0)
        if beta <= 0:
            raise PreconditionError("epsilon too large: empty target")
        self.target = TargetSet.spread(beta)
        self.horizon = self.center.horizon + 2
        self.reset()

    def push(self, x, k):
        if k > 0:
            return None
        n, eta = self.pop.n, self.eta
        delta = np.full(n, self.epsilon / 4.0)
        delta[self.p] = self.eps_i[self.p] / 4.0
        delta[self.q] = self.eps_i[self.q] / 4.0
        u = np.zeros((n, n))
        u[:, self.p] = eta - delta[self.p]
        u[:, self.q] = -(eta - delta[self.q])
        return _finish(u, delta, eta, "push")


def pair_spread_center(pc, p: int, q: int) -> float:
    """Where to center before the two-step pair push, following the case split on ``a`` vs ``h``."""
    a_p, a_q = float(pc.a[p]), float(pc.a[q])
    h_pq, h_qp = float(pc.H[p, q]), float(pc.H[q, p])
    if a_p + a_q >= 1.0:
        return min(max(0.5 + (a_q - a_p) / 2.0, 0.0), 1.0)
    if a_p <= h_pq and a_q <= h_qp:
        return min(max(h_qp, a_q), 1.0 - a_p)
    if a_p > h_pq and a_q <= h_qp:
        return 1.0 - a_p
    if a_p <= h_pq and a_q > h_qp:
        return a_q
    return 0.5 + (a_q - a_p) / 2.0


class CommPairTwoStep(_CenterThen):
    """Two-step pair push whose second step exploits the pushed agents' new neighborhoods.

    Reaches ``c_pq - eps`` up to an O(1/K) shortfall from the finite ``K``;
    the certifier reports the achieved spread.
    """

    def __init__(self, pop: Population, eta: float, epsilon: float, K: float = 1000.0, M: float = 1000.0,
                 pair: tuple[int, int] | None = None):
        if not epsilon > 0:
            raise PreconditionError("epsilon must be positive")
        if not (K > 3 and M >= 1):
            raise PreconditionError("need K > 3 and M >= 1")
        pc = h_matrix(eta, pop)
        if pair is None:
            pair = np.unravel_index(np.nanargmax(pc.C), pc.C.shape)
        p, q = int(pair[0]), int(pair[1])
        self.pop, self.eta, self.epsilon, self.K, self.M, self.p, self.q = pop, eta, epsilon, K, M, p, q
        self.variant = ModelVariant.COMM_NOISE_GLOBAL
        self.x_star = pair_spread_center(pc, p, q)
        self.center = CommGlobalCenter(pop, eta, self.x_star, eta / (2.0 * K))
        beta = float(pc.C[p, q]) - epsilon
        if beta <= 0:
            raise PreconditionError("epsilon too large: empty target")
        self.target = TargetSet.spread(min(beta, 1.0))
        self.horizon = self.center.horizon + 3
        self.reset()

    def push(self, x, k):
        if k > 1:
            return None
        n, eta, K = self.pop.n, self.eta, self.K
        delta = np.full(n, eta / (self.M * K))
        delta[[self.p, self.q]] = eta / K
        rate = eta - (2.0 * eta / K if k == 0 else eta / K)
        u = np.zeros((n, n))
        u[:, self.p] = rate
        u[:, self.q] = -rate
        return _finish(u, delta, eta, "push1" if k == 0 else "push2")


# -- homogeneous communication noise ----------------------------------------


def _check_homogeneous_comm(pop: Population) -> float:
    if not pop.homogeneous:
        raise PreconditionError("communication-noise laws need equal confidence thresholds")
    r = pop.r_min
    if not (1.0 / (pop.n - 1) <= r < 1.0):
        raise PreconditionError(f"need r in [1/(n-1), 1), got r={r}")
    return r


class CommCenter(Controller):
    """Contract the profile through non-isolated agents, then translate it to ``z``.

    Contraction pulls everyone toward the maximum when the minimum agent has a
    neighbor (toward the minimum otherwise) until the diameter is at most
    ``2 eta/K``; translation then moves the midpoint at rate about
    ``(n-1)/n * eta`` and finally lands every agent on ``z`` up to the
    averaged uncertainty.
    """

    def __init__(self, pop: Population, eta: float, z: float, alpha: float, K: float | None = None):
        r = _check_homogeneous_comm(pop)
        if not alpha > 0:
            raise PreconditionError("alpha must be positive")
        K = max(math.ceil(eta / alpha) + 1, math.ceil(4.0 * eta / r), 16) if K is None else K
        if K * alpha < eta or K < 8:
            raise PreconditionError("need K >= eta/alpha and K >= 8")
        self.pop, self.eta, self.z, self.alpha, self.K = pop, eta, z, alpha, K
        self.variant = ModelVariant.COMM_NOISE
        self.target = TargetSet.ball(z, alpha)
        n = pop.n
        shrink = min(eta / 2.0 - 2.0 * eta / K, r)
        contract = 2 * (math.ceil(1.0 / shrink) + 1)
        translate = math.ceil(1.0 / ((n - 1) / n * (eta - 4.0 * eta / K))) + 2
        self.horizon = 2 * (contract + translate)

    def packed(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - self.z) < self.alpha))

    def __call__(self, x):
        pop, n, eta, K = self.pop, self.pop.n, self.eta, self.K
        x = np.asarray(x)
        delta = np.full(n, eta / K)
        tx = tilde_x(x, pop, self.variant)
        mask = _edge_mask(x, pop)
        size = mask.sum(axis=0) + 1  # |N_i|
        lo, hi = float(x.min()), float(x.max())
        if hi - lo > 2.0 * eta / K:
            connected = size > 1
            if connected[x == lo].any():
                self.phase = "contract-up"
                per = np.minimum(eta, (hi - tx) * size / np.maximum(size - 1, 1)) - eta / K
            elif connected[x == hi].any():
                self.phase = "contract-down"
                per = np.maximum(-eta, (lo - tx) * size / np.maximum(size - 1, 1)) + eta / K
            else:
                self.phase = "contract-isolated"
                per = np.minimum(eta, (hi - tx) * size / np.maximum(size - 1, 1)) - eta / K
        else:
            mid = (lo + hi) / 2.0
            band = (n - 1) / n * (eta - 3.0 * eta / K)
            if mid > self.z + band:
                self.phase = "translate"
                per = (mid - tx) * n / (n - 1) - (eta - 3.0 * eta / K)
            elif mid < self.z - band:
                self.phase = "translate"
                per = (mid - tx) * n / (n - 1) + (eta - 3.0 * eta / K)
            else:
                self.phase = "land"
                per = (self.z - tx) * n / (n - 1)
        u = np.where(mask, per[None, :], 0.0)
        return _finish(u, delta, eta, self.phase)


def comm_split_k_bound(r: float, n: int, eta: float) -> float:
    s = (n - 1) * eta / n
    return (r + s) / (s - r / 2.0)


class CommSplit(_CenterThen):
    """Homogeneous communication noise above threshold: isolate one agent at 0, drive the rest to 1."""

    def __init__(self, pop: Population, eta: float, K: float | None = None):
        r = _check_homogeneous_comm(pop)
        n = pop.n
        if not eta > comm_band_threshold(r, n):
            raise PreconditionError(f"needs eta > n r/(2(n-1)) = {comm_band_threshold(r, n):g}")
        bound = comm_split_k_bound(r, n, eta)
        K = math.ceil(4.0 * bound) if K is None else K
        if K < bound:
            raise PreconditionError(f"K={K} below the required bound {bound:g}")
        self.pop, self.eta, self.K = pop, eta, K
        self.variant = ModelVariant.COMM_NOISE
        self.center = CommCenter(pop, eta, r / 2.0, r / K)
        self.target = TargetSet.spread(1.0)
        climb = math.ceil(1.0 / ((n - 2) / (n - 1) * (eta - 2.0 * eta / K))) + 2
        self.horizon = 2 * (self.center.horizon + climb)
        self.reset()

    def push(self, x, k):
        n, eta, K = self.pop.n, self.eta, self.K
        step = eta - eta / K
        u = np.full((n, n), step)
        u[:, 0] = -step
        return _finish(u, np.full(n, eta / K), eta, "split")


class CommBand(_CenterThen):
    """Homogeneous communication noise at or below threshold: one push to a diameter
    in ``[2 eta (n-1)/n - eps, 2 eta (n-1)/n]``."""

    def __init__(self, pop: Population, eta: float, epsilon: float, K: float | None = None):
        r = _check_homogeneous_comm(pop)
        n = pop.n
        if not eta <= comm_band_threshold(r, n):
            raise PreconditionError(f"needs eta <= n r/(2(n-1)) = {comm_band_threshold(r, n):g}")
        if not epsilon > 0:
            raise PreconditionError("epsilon must be positive")
        c = comm_band_bound(eta, n)
        bound = max(2.0 * c / epsilon, 4.0)
        K = math.ceil(2.0 * bound) if K is None else K
        if K < bound:
            raise PreconditionError(f"K={K} below the required bound {bound:g}")
        self.pop, self.eta, self.epsilon, self.K = pop, eta, epsilon, K
        self.variant = ModelVariant.COMM_NOISE
        self.center = CommCenter(pop, eta, 0.5, r / K)
        self.target = TargetSet.spread(max(c - epsilon, 0.0), upper=c)
        self.horizon = self.center.horizon + 2
        self.reset()

    def push(self, x, k):
        if k > 0:
            return None
        n, eta, K = self.pop.n, self.eta, self.K
        step = eta - eta / K
        u = np.full((n, n), step)
        u[:, 0] = -step
        return _finish(u, np.full(n, eta / K), eta, "push")


class ZeroControl(Controller):
    """No input and a vanishing uncertainty radius: reproduces the noiseless model."""

    def __init__(self, pop: Population, variant: ModelVariant, eta: float, horizon: int = 50, delta: float = 1e-300):
        self.pop, self.variant, self.eta, self.delta = pop, ModelVariant(variant), eta, delta
        self.target = TargetSet.spread(1.0)
        self.horizon = horizon

    def __call__(self, x):
        n = self.pop.n
        shape = (n, n) if self.variant.is_comm else (n,)
        return Controls(np.zeros(shape), np.full(n, self.delta), "hold")


# ---------------------------------------------------------------------------
# factories matching the law names used in task files


def law_spread_once(pop: Population, variant: ModelVariant, eta: float, epsilon: float) -> SpreadOnce:
    return SpreadOnce(pop, variant, eta, epsilon)


def law_spread_global(pop: Population, eta: float, epsilon: float, K: float | None = None) -> SpreadGlobal:
    return SpreadGlobal(pop, eta, epsilon, K)


def law_comm_spread(pop: Population, variant: ModelVariant, eta: float, epsilon: float,
                    construction: str = "auto", K: float | None = None, M: float = 1000.0) -> Controller:
    """Spreading law for the communication-noise variants.

    Global information: ``construction`` is ``"pair"`` (one-step push, target
    ``a_ij - 2 eps``), ``"two_step"`` (target ``c_ij - eps``) or ``"auto"``
    (whichever target is larger).  Homogeneous communication noise: split to
    diameter 1 above the threshold, band push at or below it.
    """
    variant = ModelVariant(variant)
    if variant is ModelVariant.COMM_NOISE_GLOBAL:
        if construction == "auto":
            pc = h_matrix(eta, pop)
            construction = "pair" if np.nanmax(pc.A) - 2 * epsilon >= np.nanmax(pc.C) - epsilon else "two_step"
        if construction == "pair":
            return CommPairSpread(pop, eta, epsilon)
        if construction == "two_step":
            return CommPairTwoStep(pop, eta, epsilon, K=1000.0 if K is None else K, M=M)
        raise PreconditionError(f"unknown construction {construction!r}")
    if variant is ModelVariant.COMM_NOISE:
        r = _check_homogeneous_comm(pop)
        if eta > comm_band_threshold(r, pop.n):
            return CommSplit(pop, eta, K)
        return CommBand(pop, eta, epsilon, K)
    raise PreconditionError("communication spreading needs a communication-noise variant")


def build_controller(law: str, pop: Population, variant: ModelVariant, eta: float, **params) -> Controller:
    variant = ModelVariant(variant)
    if law == "drive_to_ball":
        # the law lands on the closed ball of radius law_alpha; the open target
        # ball of radius alpha must strictly contain it
        alpha = params["alpha"]
        return DriveToBall(pop, variant, eta, params["z"], params.get("law_alpha", alpha / 2.0), alpha)
    if law == "split_extreme":
        return SplitExtreme(pop, eta, params.get("K"))
    if law == "spread_once":
        return SpreadOnce(pop, variant, eta, params["epsilon"])
    if law == "spread_global":
        return SpreadGlobal(pop, eta, params["epsilon"], params.get("K"))
    if law == "comm_spread":
        return law_comm_spread(pop, variant, eta, params["epsilon"], params.get("construction", "auto"),
                               params.get("K"), params.get("M", 1000.0))
    if law == "comm_center":
        if variant is ModelVariant.COMM_NOISE_GLOBAL:
            return CommGlobalCenter(pop, eta, params["z"], params["alpha"])
        return CommCenter(pop, eta, params["z"], params["alpha"], params.get("K"))
    if law == "zero":
        return ZeroControl(pop, variant, eta, params.get("horizon", 50))
    raise PreconditionError(f"unknown law {law!r}")


# ---------------------------------------------------------------------------
# adversaries and certification

DETERMINISTIC_ADVERSARIES = ("plus", "minus", "oppose")


def adversary_move(name: str, controls: Controls, t: int, seed: int = 0) -> np.ndarray:
    """Uncertainty chosen by strategy ``name`` against the given controls.

    ``plus``/``minus`` sit at ``+delta``/``-delta``; ``oppose`` counteracts the
    sign of each input; ``random:k`` draws uniformly from ``[-delta, delta]``
    with stream ``k``.
    """
    u, delta = controls.u, controls.delta
    lim = np.broadcast_to(delta[None, :], u.shape) if u.ndim == 2 else delta
    if name == "plus":
        return np.array(lim, dtype=np.float64)
    if name == "minus":
        return -np.array(lim, dtype=np.float64)
    if name == "oppose":
        return np.where(u > 0, -lim, lim)
    if name.startswith("random:"):
        k = int(name.split(":", 1)[1])
        size = u.size
        w = rng.uniforms(seed, k, rng.ADVERSARY, t * size, size).reshape(u.shape)
        return np.clip(lim * (2.0 * w - 1.0), -lim, lim)
    raise DomainError(f"unknown adversary {name!r}")


def adversary_names(n_random: int) -> list[str]:
    return list(DETERMINISTIC_ADVERSARIES) + [f"random:{k}" for k in range(n_random)]


@dataclass
class ReachRun:
    """One roll-out of a law from one initial state against one adversary."""

    x0_index: int
    adversary: str
    reached: bool
    hit_time: int | None
    horizon: int
    phase: str
    achieved_spread: float
    states: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    uncertainties: list = field(default_factory=list)
    phases: list = field(default_factory=list)


@dataclass
class ReachReport:
    """Outcome of certifying a law over all tested initial states and adversaries.

    ``reached`` holds only when every run hit the target within ``horizon``;
    ``hit_time`` is the worst hit time and ``adversary``/``trace`` describe the
    first failing run (or the slowest run when all succeed).
    """

    reached: bool
    hit_time: int | None
    horizon: int
    adversary: str
    trace: ReachRun
    target: TargetSet
    runs: list[ReachRun]


@dataclass
class ReachTask:
    pop: Population
    variant: ModelVariant
    eta: float
    law: str
    params: dict
    x0s: list
    adversaries: list[str]
    seed: int = 0
    horizon: int | None = None
    keep_traces: bool = True


def roll_out(controller: Controller, pop: Population, eta: float, x0, adversary: str, horizon: int,
             seed: int = 0, keep_trace: bool = True, x0_index: int = 0) -> ReachRun:
    controller.reset()
    variant = controller.variant
    target = controller.target
    x = _as_state(x0, pop.n).copy()
    run = ReachRun(x0_index, adversary, False, None, horizon, controller.phase, max_diff(x))
    if keep_trace:
        run.states.append(x.copy())
    t = 0
    while True:
        run.achieved_spread = max(run.achieved_spread, max_diff(x))
        if target.contains(x):
            run.reached, run.hit_time = True, t
            break
        if t >= horizon:
            break
        controls = controller(x)
        if controls is None:
            break
        b = adversary_move(adversary, controls, t, seed)
        x = control_step(x, pop, variant, controls, b, eta)
        t += 1
        if keep_trace:
            run.states.append(x.copy())
            run.controls.append(controls)
            run.uncertainties.append(b)
            run.phases.append(controls.phase)
    run.phase = controller.phase
    return run


def certify(task: ReachTask) -> ReachReport:
    controller = build_controller(task.law, task.pop, task.variant, task.eta, **task.params)
    horizon = controller.horizon if task.horizon is None else task.horizon
    runs = []
    for k, x0 in enumerate(task.x0s):
        for adv in task.adversaries:
            runs.append(roll_out(controller, task.pop, task.eta, x0, adv, horizon, task.seed, task.keep_traces, k))
    failed = [r for r in runs if not r.reached]
    if failed:
        worst = failed[0]
        return ReachReport(False, None, horizon, worst.adversary, worst, controller.target, runs)
    worst = max(runs, key=lambda r: r.hit_time)
    return ReachReport(True, worst.hit_time, horizon, "all", worst, controller.target, runs)
