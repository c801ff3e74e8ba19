"""
Analysis
========
Exact evaluation of the per-generation decoding probability p_m for the RL,
RLS and MDS schemes, the delivery packet count distribution p_t under
round-robin scheduling over n generations, and E[T] with its bracketing
bounds.

Binomial probabilities come from scipy.stats.binom, which stays accurate in
the tails for long runs of transmissions.

Note on the regrouped series for E[T]: summing 1 - p_t over one complete
round gives n - p_m (p_{m+1}^n - p_m^n) / (p_{m+1} - p_m). A form with
exponent n-1 also circulates; `expected_T_regrouped(exponent_offset=-1)`
reproduces it for comparison. The direct sum is the primary path.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import binom

from .codec import MdsCodeSpec, Scheme
from .errors import BadSpec, NoConvergence
from .field import FieldSpec, gf

DEFAULT_TOL = 1e-12
DEFAULT_MAX_TERMS = 10 ** 7
CLAMP_WARN = 1e-9
RS_DEFAULT_LENGTH = 255


class ProbabilityClampWarning(RuntimeWarning):
    """A probability left [0, 1] by more than round-off before clamping."""


@dataclass(frozen=True)
class ChannelModel:
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise BadSpec(f"erasure probability must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class SchemeParams:
    """One experiment point: scheme, generation size, file size and channel.

    n = ceil(N / g); the last generation is padded with zero blocks.
    """
    scheme: Scheme
    g: int
    N: int
    epsilon: float
    field_bits: int = 1
    K: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.from_name(self.scheme))
        if self.g < 1 or self.N < 1:
            raise BadSpec(f"need g >= 1 and N >= 1, got g={self.g}, N={self.N}")
        ChannelModel(self.epsilon)
        if self.K is None and self.scheme.is_mds:
            default_k = {Scheme.RS: RS_DEFAULT_LENGTH, Scheme.PC: self.g + 1, Scheme.REP: self.g}
            object.__setattr__(self, "K", default_k[self.scheme])
        if self.scheme.is_mds:
            try:
                self.mds_spec()
            except ValueError as exc:
                raise BadSpec(str(exc)) from exc
        else:
            gf(self.field_bits)

    @classmethod
    def for_generations(cls, scheme: Union[Scheme, str], g: int, n: int, epsilon: float, **kwargs) -> "SchemeParams":
        return cls(scheme=scheme, g=g, N=n * g, epsilon=epsilon, **kwargs)

    @property
    def n(self) -> int:
        return -(-self.N // self.g)

    @property
    def pad_blocks(self) -> int:
        return self.n * self.g - self.N

    @property
    def channel(self) -> ChannelModel:
        return ChannelModel(self.epsilon)

    @property
    def payload_field(self) -> FieldSpec:
        if self.scheme is Scheme.RS:
            return gf(8)
        if self.scheme is Scheme.PC:
            return gf(1)
        return gf(self.field_bits)

    @property
    def q(self) -> int:
        return self.payload_field.q

    def mds_spec(self) -> Optional[MdsCodeSpec]:
        if self.scheme is Scheme.RS:
            return MdsCodeSpec.reed_solomon(self.g, self.K)
        if self.scheme is Scheme.PC:
            if self.K != self.g + 1:
                raise BadSpec(f"parity check needs K = g+1, got K={self.K}")
            return MdsCodeSpec.parity_check(self.g)
        if self.scheme is Scheme.REP:
            if self.K != self.g:
                raise BadSpec(f"repetition needs K = g, got K={self.K}")
            return MdsCodeSpec.repetition(self.g, self.payload_field)
        return None

    def with_epsilon(self, epsilon: float) -> "SchemeParams":
        return replace(self, epsilon=epsilon)


def _clamp(value: float, what: str) -> float:
    if value < -CLAMP_WARN or value > 1.0 + CLAMP_WARN:
        warnings.warn(f"{what} = {value!r} outside [0, 1]; clamping", ProbabilityClampWarning, stacklevel=3)
    return min(max(float(value), 0.0), 1.0)


def _cap(n: int) -> int:
    return max(64, 1 << (max(n, 1) - 1).bit_length())


def binom_pmf(trials: int, p: float) -> np.ndarray:
    """P(k successes), k = 0..trials."""
    if trials == 0 or p <= 0.0:
        out = np.zeros(trials + 1)
        out[0] = 1.0
        return out
    if p >= 1.0:
        out = np.zeros(trials + 1)
        out[trials] = 1.0
        return out
    return binom.pmf(np.arange(trials + 1), trials, p)


def full_rank_prob(j: int, g: int, q: int) -> float:
    """Probability that a uniformly random j x g matrix over GF(q) has rank g."""
    if j < g:
        return 0.0
    return math.prod(1.0 - float(q) ** (s - j) for s in range(g))


def full_rank_lower_bound(j: int, g: int, q: int) -> float:
    if j < g:
        return 0.0
    if q == 2 and j == g:
        return 0.288
    return 1.0 - 1.0 / (float(q) ** (j - g) * (q - 1))


@functools.lru_cache(maxsize=64)
def _full_rank_table(g: int, q: int, j_cap: int) -> np.ndarray:
    s = np.arange(g)[:, None]
    j = np.arange(j_cap + 1)[None, :]
    factors = np.where(s < j, 1.0 - np.power(float(q), np.minimum(s - j, 0)), 0.0)
    table = np.vstack([np.ones((1, j_cap + 1)), np.cumprod(factors, axis=0)])
    table.setflags(write=False)
    return table


def full_rank_table(g: int, q: int, j_max: int) -> np.ndarray:
    """Rows g' = 0..g, columns j = 0..j_max: P(random j x g' matrix has rank g')."""
    return _full_rank_table(g, q, _cap(j_max))[:, :j_max + 1]


def p_rl(m: int, g: int, eps: float, q: int) -> float:
    if m < g:
        return 0.0
    received = binom_pmf(m, 1.0 - eps)
    return _clamp(received @ full_rank_table(g, q, m)[g], "p_rl")


def p_rl_large_q_lower_bound(m: int, g: int, eps: float, q: int) -> float:
    """Two-term large-q approximation of p_rl, clamped to [0, 1]."""
    if m < g:
        return 0.0
    received = binom_pmf(m, 1.0 - eps)[g:]
    j = np.arange(g, m + 1)
    value = received.sum() - (received * np.power(float(q), g - j)).sum() / (q - 1)
    return min(max(float(value), 0.0), 1.0)


def p_rls(m: int, g: int, eps: float, q: int) -> float:
    if m < g:
        return 0.0
    systematic = binom_pmf(g, 1.0 - eps)
    coded = m - g
    # p_rl(coded, g') for every g' = 0..g in one product
    rl_by_rank = full_rank_table(g, q, coded) @ binom_pmf(coded, 1.0 - eps)
    value = systematic[g] + systematic[:g] @ rl_by_rank[g:0:-1]
    return _clamp(value, "p_rls")


def p_rls_lower_bound(m: int, g: int, eps: float, q: int) -> float:
    """Closed-form lower bound on p_rls (unclamped)."""
    if m < g:
        return 0.0
    received = binom_pmf(m, 1.0 - eps)[g:]
    j = np.arange(g, m + 1)
    head = received.sum()
    dependent = (received * np.power(float(q), g - j)).sum() / (q - 1)
    systematic = (1.0 - eps) ** g / (q - 1) * ((1.0 - eps) / q + eps) ** (m - g)
    return float(head - dependent + systematic)


def p_mds(m: int, K: int, g: int, eps: float) -> float:
    if g > K:
        raise BadSpec(f"MDS code needs g <= K, got g={g}, K={K}")
    if m < g:
        return 0.0
    u, v = divmod(m, K)
    slack = K - g
    # missing counts among the first v symbols (sent u+1 times) and the rest (sent u times)
    missing_head = binom_pmf(v, eps ** (u + 1))
    missing_tail_cdf = np.cumsum(binom_pmf(K - v, eps ** u))
    l = np.arange(min(v, slack) + 1)
    value = missing_head[l] @ missing_tail_cdf[np.minimum(slack - l, K - v)]
    return _clamp(value, "p_mds")


def p_m(m: int, params: SchemeParams) -> float:
    """P(M <= m) for one generation under params."""
    if params.scheme is Scheme.RL:
        return p_rl(m, params.g, params.epsilon, params.q)
    if params.scheme is Scheme.RLS:
        return p_rls(m, params.g, params.epsilon, params.q)
    return p_mds(m, params.K, params.g, params.epsilon)


class DeliveryDistribution:
    """Distribution of the delivery packet count T for one SchemeParams.

    p_m values are cached as they are requested, so sweeping t or summing
    for E[T] evaluates each p_m once.
    """

    def __init__(self, params: SchemeParams, tol: float = DEFAULT_TOL, max_terms: int = DEFAULT_MAX_TERMS):
        self.params = params
        self.tol = tol
        self.max_terms = max_terms
        self._pm: List[float] = []
        self._sums: Optional[Tuple[float, float, float, float]] = None

    def p_m(self, m: int) -> float:
        while len(self._pm) <= m:
            self._pm.append(p_m(len(self._pm), self.params))
        return self._pm[m]

    def cdf(self, t: int) -> float:
        n = self.params.n
        m, r = divmod(t, n)
        return self.p_m(m + 1) ** r * self.p_m(m) ** (n - r)

    def cdf_array(self, ts: Sequence[int]) -> np.ndarray:
        return np.array([self.cdf(int(t)) for t in ts])

    def _summation(self) -> Tuple[float, float, float, float]:
        if self._sums is not None:
            return self._sums
        n = self.params.n
        r = np.arange(n)
        total = lower = upper = second = 0.0
        previous_upper = None
        m = 0
        while True:
            if (m + 1) * n > self.max_terms:
                raise NoConvergence(f"p_t still below 1 - {self.tol} after {self.max_terms} terms for {self.params}")
            pm, pm1 = self.p_m(m), self.p_m(m + 1)
            terms = 1.0 - pm1 ** r * pm ** (n - r)
            round_sum = float(terms.sum())
            round_upper = n * (1.0 - pm ** n)
            round_lower = n * (1.0 - pm1 ** n)
            total += round_sum
            upper += round_upper
            lower += round_lower
            second += float(((2 * (m * n + r) + 1) * terms).sum())
            if 1.0 - pm1 ** n < self.tol:
                break
            previous_upper = round_upper
            m += 1
        # geometric tail past the truncation point
        if previous_upper:
            ratio = round_upper / previous_upper
            if 0.0 < ratio < 1.0:
                factor = ratio / (1.0 - ratio)
                total += round_sum * factor
                upper += round_upper * factor
                lower += round_lower * factor
        self._sums = (total, lower, upper, second)
        return self._sums

    @property
    def expectation(self) -> float:
        return self._summation()[0]

    @property
    def lower_bound(self) -> float:
        return self._summation()[1]

    @property
    def upper_bound(self) -> float:
        return self._summation()[2]

    @property
    def variance(self) -> float:
        total, _, _, second = self._summation()
        return max(second - total ** 2, 0.0)


def cdf_T(t: int, params: SchemeParams) -> float:
    if t < 0:
        raise BadSpec(f"t must be non-negative, got {t}")
    return DeliveryDistribution(params).cdf(t)


def expected_T(params: SchemeParams, tol: float = DEFAULT_TOL,
               max_terms: int = DEFAULT_MAX_TERMS) -> Tuple[float, float, float]:
    """(E[T], lower, upper) with n Σ_{m>=1}(1-p_m^n) < E[T] <= n Σ_{m>=0}(1-p_m^n)."""
    dist = DeliveryDistribution(params, tol, max_terms)
    return dist.expectation, dist.lower_bound, dist.upper_bound


def variance_T(params: SchemeParams, tol: float = DEFAULT_TOL, max_terms: int = DEFAULT_MAX_TERMS) -> float:
    return DeliveryDistribution(params, tol, max_terms).variance


def expected_T_regrouped(params: SchemeParams, tol: float = DEFAULT_TOL, exponent_offset: int = 0,
                         max_rounds: int = 10 ** 6) -> float:
    """Round-by-round closed form for E[T]; exponent n + exponent_offset."""
    n = params.n
    e = n + exponent_offset
    dist = DeliveryDistribution(params, tol)
    total = 0.0
    for m in range(max_rounds):
        pm, pm1 = dist.p_m(m), dist.p_m(m + 1)
        if abs(pm1 - pm) < 1e-15:
            total += n - e * pm ** e
        else:
            total += n - pm * (pm1 ** e - pm ** e) / (pm1 - pm)
        if 1.0 - pm1 ** n < tol:
            return total
    raise NoConvergence(f"regrouped series did not converge in {max_rounds} rounds")


def generation_pmf(params: SchemeParams, m_max: int) -> np.ndarray:
    """P(M = m) for m = 0..m_max, M the transmissions one generation needs."""
    cdf = np.array([p_m(m, params) for m in range(m_max + 1)])
    return np.diff(cdf, prepend=0.0)


@dataclass(frozen=True)
class PerformanceMeasures:
    delivery_time_s: float
    net_rate_Bps: float
    energy_J: float


def performance_measures(T: float, params: SchemeParams, packet_bytes: int, nominal_rate: float,
                         rx_power: float) -> PerformanceMeasures:
    """Delivery time, net rate and modelled receive energy for T transmissions."""
    if nominal_rate <= 0 or rx_power <= 0 or packet_bytes <= 0:
        raise BadSpec("packet size, nominal rate and receive power must be positive")
    delivery_time = T * packet_bytes / nominal_rate
    file_size = params.N * packet_bytes
    net_rate = file_size / delivery_time if delivery_time > 0 else math.inf
    return PerformanceMeasures(delivery_time, net_rate, rx_power * delivery_time)
