"""Observables of a run and the closed-form thresholds they are compared with."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelVariant, Population
from .errors import DomainError


# ---------------------------------------------------------------------------
# diameter series and limit estimates


def max_diff(x) -> float:
    """Diameter ``max_i x_i - min_i x_i`` of an opinion profile."""
    x = np.asarray(x, dtype=np.float64)
    return float(x.max() - x.min())


@dataclass(frozen=True)
class DiffSeries:
    d: np.ndarray
    burn_in: int | None = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64).reshape(-1)
        if d.size == 0:
            raise DomainError("empty diameter series")
        if np.any(d < 0) or np.any(d > 1):
            raise DomainError("diameters must lie in [0, 1]")
        object.__setattr__(self, "d", d)

    @property
    def horizon(self) -> int:
        return self.d.size - 1

    @property
    def window_start(self) -> int:
        return self.horizon // 2 if self.burn_in is None else int(self.burn_in)


@dataclass(frozen=True)
class LimitEstimate:
    dbar_hat: float
    dunder_hat: float
    window: tuple[int, int]


def estimate_limits(series: DiffSeries) -> LimitEstimate:
    """Bracket limsup/liminf of the diameter by max/min over ``[burn_in, T]``."""
    start = series.window_start
    end = series.horizon
    if not (0 <= start <= end):
        raise DomainError(f"tail window [{start}, {end}] is empty")
    tail = series.d[start:]
    return LimitEstimate(float(tail.max()), float(tail.min()), (start, end))


def hitting_time(d, level: float) -> int | None:
    """First index with ``d[t] <= level``, or None."""
    hits = np.flatnonzero(np.asarray(d) <= level)
    return int(hits[0]) if hits.size else None


def quasi_sync_verdict(series: DiffSeries, est: LimitEstimate, pop: Population, eta: float) -> tuple[bool, int | None]:
    """Whether the tail diameter stays within ``r_min``, plus the first time with ``d <= 2 eta``."""
    return est.dbar_hat <= pop.r_min, hitting_time(series.d, 2.0 * eta)


# ---------------------------------------------------------------------------
# alternating stopping times


@dataclass(frozen=True)
class StoppingTimes:
    taus: np.ndarray
    alpha: float
    c: float
    censored: bool

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.taus)

    @property
    def n_cycles(self) -> int:
        """Number of completed low-then-high excursions."""
        return (self.taus.size - 1) // 2


def stopping_times(series: DiffSeries | np.ndarray, alpha: float, c: float) -> StoppingTimes:
    """Alternating first passages below ``alpha`` (odd k) and above ``c`` (even k)."""
    if not alpha < c:
        raise DomainError(f"need alpha < c, got alpha={alpha}, c={c}")
    d = series.d if isinstance(series, DiffSeries) else np.asarray(series, dtype=np.float64)
    low = np.flatnonzero(d <= alpha)
    high = np.flatnonzero(d >= c)
    taus = [0]
    k = 1
    while True:
        pool = low if k % 2 else high
        pos = np.searchsorted(pool, taus[-1], side="right")
        if pos == pool.size:
            break
        taus.append(int(pool[pos]))
        k += 1
    # the wait for tau_k is open at the horizon unless the series ends on it
    censored = taus[-1] < d.size - 1
    return StoppingTimes(np.asarray(taus, dtype=np.int64), alpha, c, censored)


@dataclass(frozen=True)
class TailEstimate:
    t: np.ndarray
    survival: np.ndarray
    geo_rate_hat: float
    r_squared: float
    n_gaps: int
    n_censored: int


def empirical_survival(samples) -> tuple[np.ndarray, np.ndarray]:
    """``P(X > t)`` for ``t = 0 .. max(samples)``."""
    s = np.sort(np.asarray(samples, dtype=np.int64))
    t = np.arange(int(s[-1]) + 1)
    surv = 1.0 - np.searchsorted(s, t, side="right") / s.size
    return t, surv


def fit_log_survival(t: np.ndarray, surv: np.ndarray, n: int) -> tuple[float, float]:
    """Least-squares slope of ``log S(t)`` and its R^2, over the support where ``S >= 5/n``."""
    keep = surv >= 5.0 / n
    if keep.sum() < 2:
        raise DomainError("survival support too short for a log-linear fit")
    tt = t[keep].astype(np.float64)
    y = np.log(surv[keep])
    slope, intercept = np.polyfit(tt, y, 1)
    resid = y - (slope * tt + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def tail_estimate_from_samples(samples, n_censored: int = 0) -> TailEstimate:
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size < 2:
        raise DomainError(f"need at least 2 uncensored samples, got {samples.size}")
    t, surv = empirical_survival(samples)
    slope, r2 = fit_log_survival(t, surv, samples.size)
    return TailEstimate(t, surv, -slope, r2, int(samples.size), n_censored)


def tail_estimate(st: StoppingTimes) -> TailEstimate:
    """Empirical survival of the gaps between stopping times with a geometric fit.

    The wait still open at the horizon is not a gap; it is counted in
    ``n_censored`` and left out of the fit.
    """
    return tail_estimate_from_samples(st.gaps, n_censored=int(st.censored))


# ---------------------------------------------------------------------------
# closed-form thresholds


def c_alpha1(eta: float, alpha: float, pop: Population) -> float:
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if eta > max(pop.r_min / 2.0, pop.r_max / pop.n):
        return 1.0
    return 2.0 * eta - alpha


def w_underline(eta: float, pop: Population) -> float:
    """Smallest belief factor among agents with ``r_i < 2 eta``."""
    mask = pop.r < 2.0 * eta
    if not mask.any():
        raise DomainError(f"no agent has r_i < 2*eta (eta={eta}, r_min={pop.r_min})")
    return float(pop.omega[mask].min())


def c_eta2(eta: float, pop: Population) -> float:
    if not eta > pop.r_min / 2.0:
        raise DomainError("c_eta2 is defined only for eta > r_min/2")
    n = pop.n
    w = w_underline(eta, pop)
    return max(2.0 * eta, min(n * eta / ((n - 1) * w), n * eta))


def c_alpha3(eta: float, alpha: float, pop: Population) -> float:
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if eta <= pop.r_min / 2.0:
        return 2.0 * eta - alpha
    return min(c_eta2(eta, pop) - alpha, 1.0)


@dataclass(frozen=True)
class PairConstants:
    a: np.ndarray  # a_i
    A: np.ndarray  # a_ij = a_i + a_j
    H: np.ndarray  # h_ij
    C: np.ndarray  # c_ij


def h_matrix(eta: float, pop: Population) -> PairConstants:
    """Per-agent and per-pair constants of the global communication-noise model.

    Diagonal entries of ``A``, ``H`` and ``C`` are NaN; only ``i != j`` is defined.
    """
    n = pop.n
    w = pop.omega
    r = pop.r
    a = (n - 1) * (1.0 - w) * eta / n
    A = a[:, None] + a[None, :]
    wi = w[:, None]
    wj = w[None, :]
    ai = a[:, None]
    ri = r[:, None]
    h_isolated = (n - 1) * eta / n * ((1.0 - wi) ** 2 + wi * (wj - wi) / n)
    h_partial = (1.0 - wi) * eta * ((1.0 - wi) / n + (n - 2) / (n - 1)) + wi * (n - 1) * (wj - wi) * eta / n**2
    h_full = (n - 1) * eta / n * (1.0 - wi + (wj - wi) / n)
    H = np.where(ri < ai, h_isolated, np.where(ri < A, h_partial, h_full))
    HT = H.T
    C = np.minimum(
        H + HT,
        1.0 - np.where(ai > H, ai - H, 0.0) - np.where(ai.T > HT, ai.T - HT, 0.0),
    )
    off = ~np.eye(n, dtype=bool)
    A = np.where(off, A, np.nan)
    H = np.where(off, H, np.nan)
    C = np.where(off, C, np.nan)
    return PairConstants(a, A, H, C)


def comm_band_bound(eta: float, n: int) -> float:
    """Limiting diameter ``2 eta (n-1)/n`` of homogeneous communication noise."""
    return 2.0 * eta * (n - 1) / n


def comm_band_threshold(r: float, n: int) -> float:
    """Largest ``eta`` for which homogeneous communication noise stays synchronized."""
    return n * r / (2.0 * (n - 1))


def comm_global_threshold(pop: Population) -> float:
    """``min_{i != j} n r_i / ((n-1)(2 - w_i - w_j))``."""
    n = pop.n
    ratio = n * pop.r[:, None] / ((n - 1) * (2.0 - pop.omega[:, None] - pop.omega[None, :]))
    return float(ratio[~np.eye(n, dtype=bool)].min())


def switching_threshold(variant: ModelVariant, eta: float, alpha: float, pop: Population) -> float:
    """Upper level ``c`` of the alternating stopping times for each variant."""
    variant = ModelVariant(variant)
    if variant is ModelVariant.ENV_NOISE:
        return c_alpha1(eta, alpha, pop)
    if variant is ModelVariant.ENV_NOISE_GLOBAL:
        return c_alpha3(eta, alpha, pop)
    if variant is ModelVariant.COMM_NOISE:
        if eta <= comm_band_threshold(pop.r_min, pop.n):
            return comm_band_bound(eta, pop.n) - alpha
        return 1.0
    pc = h_matrix(eta, pop)
    return min(float(np.nanmax(np.fmax(pc.A, pc.C))), 1.0) - alpha


@dataclass(frozen=True)
class ThresholdConstants:
    r_min: float
    r_max: float
    w_underline_eta: float | None
    c_alpha1: float
    c_eta2: float | None
    c_alpha3: float
    a: np.ndarray
    A: np.ndarray
    H: np.ndarray
    C: np.ndarray
    theorem6_bound: float
    theorem6_threshold: float
    comm_global_threshold: float

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def constants(eta: float, alpha: float, pop: Population) -> ThresholdConstants:
    above = eta > pop.r_min / 2.0
    pc = h_matrix(eta, pop)
    return ThresholdConstants(
        r_min=pop.r_min,
        r_max=pop.r_max,
        w_underline_eta=w_underline(eta, pop) if above else None,
        c_alpha1=c_alpha1(eta, alpha, pop),
        c_eta2=c_eta2(eta, pop) if above else None,
        c_alpha3=c_alpha3(eta, alpha, pop),
        a=pc.a,
        A=pc.A,
        H=pc.H,
        C=pc.C,
        theorem6_bound=comm_band_bound(eta, pop.n),
        theorem6_threshold=comm_band_threshold(pop.r_min, pop.n),
        comm_global_threshold=comm_global_threshold(pop),
    )
