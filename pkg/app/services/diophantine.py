# app/services/diophantine.py
"""Continued fractions, small divisors and resonances of a rotation number"""

import math
from fractions import Fraction
from math import isqrt, lcm
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.constants import MIN_DEPTH, PERIODIC_GUARD_BITS
from app.core.errors import ConfigError, DepthInsufficient, PrecisionExhausted, RationalInput
from app.core.logging import get_logger
from app.core.precision import make_context, to_decimal
from app.schemas.frequency import (
    BetaProfile,
    CFExpansion,
    DiophantineCheck,
    FrequencySpec,
    ResonanceGapProfile,
    ResonanceGapRow,
    ResonanceSequence,
    SmallDivisorProfile,
)

logger = get_logger("diophantine")

GUARD_BITS = 32
SCAN_BLOCK = 1 << 20
MAX_SCAN = 1 << 27  # k * alpha_hi stays exact in float64 below this


def _frac_to_mpf(ctx, value: Fraction):
    return ctx.mpf(value.numerator) / value.denominator


def to_mpf(ctx, value):
    """Accept floats, ints, decimal strings, Fractions and mpf values"""
    if isinstance(value, Fraction):
        return _frac_to_mpf(ctx, value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            return _frac_to_mpf(ctx, Fraction(text))
        return ctx.mpf(text)
    return ctx.mpf(value)


# ---------------------------------------------------------------------------
# Partial quotients and complete quotients per input form
# ---------------------------------------------------------------------------

def _quadratic_quotients(spec: FrequencySpec, depth: int, ctx):
    desc = spec.quadratic
    d = desc.d
    if isqrt(d) ** 2 == d:
        raise RationalInput("radicand is a perfect square", key="d", value=d)

    offset, scale = Fraction(desc.offset), Fraction(desc.scale)
    denom = lcm(offset.denominator, scale.denominator)
    P = offset.numerator * (denom // offset.denominator)
    m = scale.numerator * (denom // scale.denominator)
    Q = denom
    if m < 0:
        P, Q, m = -P, -Q, -m
    D = m * m * d
    # x = (P + sqrt(D)) / Q with Q | D - P^2
    if (D - P * P) % Q != 0:
        P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
    root = isqrt(D)

    def floor_surd(P: int, Q: int) -> int:
        if Q > 0:
            return (P + root) // Q
        return (-P - root - 1) // (-Q)

    P -= floor_surd(P, Q) * Q
    sqrt_d = ctx.sqrt(D)
    alpha = (P + sqrt_d) / Q

    P, Q = -P, (D - P * P) // Q
    quotients: List[int] = []
    x_mid = []
    for _ in range(depth):
        a = floor_surd(P, Q)
        quotients.append(a)
        x_mid.append((P + sqrt_d) / Q)
        P = a * Q - P
        Q = (D - P * P) // Q
    rel = ctx.ldexp(ctx.mpf(1), -(ctx.prec - 8))
    x_rad = [abs(x) * rel for x in x_mid]
    return quotients, x_mid, x_rad, alpha


def _stream_quotients(spec: FrequencySpec, depth: int, ctx):
    base = list(spec.partial_quotients)
    if spec.periodic:
        terms = [base[i % len(base)] for i in range(depth)]
        target = 1 << (ctx.prec + PERIODIC_GUARD_BITS)
        q_prev, q_cur = 0, 1
        i = depth
        while q_cur < target:
            a = base[i % len(base)]
            q_prev, q_cur = q_cur, a * q_cur + q_prev
            terms.append(a)
            i += 1
    else:
        if len(base) < depth:
            raise RationalInput(
                "partial-quotient stream terminates before the requested depth",
                partial_quotients=tuple(base),
                key="depth",
                value=depth,
            )
        terms = base

    # complete quotients x_j = [a_j; a_{j+1}, ..., a_L + t], t in [0, 1)
    lo = ctx.mpf(terms[-1])
    hi = ctx.mpf(terms[-1] + 1)
    lows, highs = [lo], [hi]
    for a in reversed(terms[:-1]):
        lo, hi = a + 1 / lo, a + 1 / hi
        lows.append(lo)
        highs.append(hi)
    lows.reverse()
    highs.reverse()
    x_mid = [(lows[j] + highs[j]) / 2 for j in range(depth)]
    x_rad = [abs(highs[j] - lows[j]) / 2 + ctx.eps * x_mid[j] for j in range(depth)]
    return terms[:depth], x_mid, x_rad, 1 / x_mid[0]


def _decimal_quotients(spec: FrequencySpec, depth: int, ctx):
    text = spec.decimal
    center = Fraction(text)
    center -= math.floor(center)
    mantissa = text.lower().split("e")[0]
    frac_digits = len(mantissa.split(".")[1]) if "." in mantissa else 0
    radius = max(Fraction(1, 2 ** spec.precision_bits), Fraction(1, 2 * 10 ** frac_digits))
    lo, hi = center - radius, center + radius
    if lo <= 0 or hi >= 1:
        raise RationalInput("declared precision cannot separate alpha from an integer", key="decimal", value=text)

    quotients: List[int] = []
    q_prev, q_cur = 0, 1
    x_mid, x_rad = [], []
    for k in range(1, depth + 1):
        xl, xh = 1 / hi, 1 / lo
        al, ah = math.floor(xl), math.floor(xh)
        if al != ah:
            candidate = ah * q_cur + q_prev
            if candidate * candidate <= 2 ** (spec.precision_bits // 2):
                raise RationalInput(
                    "decimal input is indistinguishable from a rational",
                    partial_quotients=tuple(quotients) + (ah,),
                    key="decimal",
                    value=text,
                )
            raise PrecisionExhausted(
                f"declared precision resolves only {k - 1} partial quotients",
                deepest_safe_depth=k - 1,
                key="depth",
                value=depth,
            )
        quotients.append(al)
        x_mid.append(_frac_to_mpf(ctx, (xl + xh) / 2))
        x_rad.append(_frac_to_mpf(ctx, (xh - xl) / 2))
        q_prev, q_cur = q_cur, al * q_cur + q_prev
        lo, hi = xl - al, xh - al
        if lo <= 0:
            raise RationalInput(
                "decimal input is indistinguishable from a rational",
                partial_quotients=tuple(quotients),
                key="decimal",
                value=text,
            )
    return quotients, x_mid, x_rad, _frac_to_mpf(ctx, center)


def cf_expand(spec: FrequencySpec, depth: int) -> CFExpansion:
    """Expand alpha to the given depth with exact convergents.

    Args:
        spec: frequency description
        depth: number of partial quotients a_1..a_depth

    Returns:
        CFExpansion with p_0..p_depth, q_0..q_depth and gaps Delta_0..Delta_{depth-1}
    """
    if depth < MIN_DEPTH:
        raise ConfigError(f"depth must be at least {MIN_DEPTH}", key="depth", value=depth)
    ctx = make_context(spec.precision_bits + GUARD_BITS)

    if spec.kind == "quadratic":
        quotients, x_mid, x_rad, alpha = _quadratic_quotients(spec, depth, ctx)
    elif spec.kind == "stream":
        quotients, x_mid, x_rad, alpha = _stream_quotients(spec, depth, ctx)
    else:
        quotients, x_mid, x_rad, alpha = _decimal_quotients(spec, depth, ctx)

    p, q = [0, 1], [1, quotients[0]]
    for k in range(2, depth + 1):
        a = quotients[k - 1]
        p.append(a * p[-1] + p[-2])
        q.append(a * q[-1] + q[-2])

    alpha = 1 / x_mid[0] if spec.kind != "decimal" else alpha
    alpha_radius = x_rad[0] * alpha * alpha + ctx.eps

    gaps = [min(alpha, 1 - alpha)]
    offsets = [alpha]
    radius = alpha_radius
    for k in range(1, depth):
        gap = 1 / (x_mid[k] * q[k] + q[k - 1])
        gaps.append(gap)
        offsets.append(gap if k % 2 == 0 else -gap)
        radius = max(radius, q[k] * gap * gap * x_rad[k] + ctx.eps * gap)

    logger.debug("Continued fraction expanded", source=spec.kind, depth=depth, q_depth=str(q[depth]))
    return CFExpansion(
        depth=depth,
        partial_quotients=tuple(quotients),
        p=tuple(p),
        q=tuple(q),
        gaps=tuple(gaps),
        offsets=tuple(offsets),
        gap_radius=radius,
        alpha=alpha,
        alpha_radius=alpha_radius,
        precision_bits=spec.precision_bits,
        source=spec.kind,
    )


# ---------------------------------------------------------------------------
# Distances to the integers
# ---------------------------------------------------------------------------

def _require_resolved(cf: CFExpansion, k: int, key: str) -> None:
    if abs(k) >= cf.q_depth:
        raise DepthInsufficient(
            f"|k| must stay below q_depth = {cf.q_depth}; expand further",
            key=key,
            value=k,
        )


def _context(cf: CFExpansion):
    return make_context(cf.precision_bits + GUARD_BITS)


def norm_dist(k: int, cf: CFExpansion):
    """||k alpha|| from the deepest convergent with a known offset"""
    if k == 0:
        raise ConfigError("k must be nonzero", key="k", value=k)
    _require_resolved(cf, k, "k")
    k = abs(k)
    ctx = _context(cf)
    m = cf.depth - 1
    p_m, q_m = cf.p[m], cf.q[m]
    ell, r = divmod(k * p_m, q_m)
    shift = ctx.mpf(k) * cf.offsets[m]
    best = None
    for step in (-1, 0, 1):
        value = abs(ctx.mpf(r - step * q_m) + shift)
        best = value if best is None else min(best, value)
    return best / q_m


def norm_dist_direct(k: int, cf: CFExpansion):
    """||k alpha|| by multiplying the stored extended-precision alpha"""
    ctx = _context(cf)
    value = ctx.mpf(k) * cf.alpha
    return abs(value - ctx.nint(value))


def _split_alpha(cf: CFExpansion) -> Tuple[float, float]:
    # 26-bit head so that k * head is exact for |k| < 2^27
    head = math.ldexp(math.floor(math.ldexp(float(cf.alpha), 26)), -26)
    tail = float(cf.alpha - head)
    return head, tail


def _check_scan(K: int, key: str) -> None:
    if K < 1:
        raise ConfigError("scan range must be positive", key=key, value=K)
    if K > MAX_SCAN:
        raise ConfigError(f"scan range exceeds {MAX_SCAN}", key=key, value=K)


def _grid_phase(ks: np.ndarray, head: float, tail: float) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.float64)
    return np.mod(ks * head, 1.0) + ks * tail


def norm_dist_grid(ks: Sequence[int], cf: CFExpansion) -> np.ndarray:
    """Vectorized ||k alpha|| in float64 (absolute error near 1e-16)"""
    head, tail = _split_alpha(cf)
    t = _grid_phase(np.asarray(ks), head, tail)
    return np.abs(t - np.rint(t))


def shift_dist_grid(two_theta: float, ks: Sequence[int], cf: CFExpansion) -> np.ndarray:
    """Vectorized ||2 theta - k alpha||"""
    head, tail = _split_alpha(cf)
    t = two_theta - _grid_phase(np.asarray(ks), head, tail)
    return np.abs(t - np.rint(t))


def _two_theta(theta, cf: CFExpansion):
    ctx = _context(cf)
    value = to_mpf(ctx, theta)
    value = 2 * (value - ctx.floor(value))
    return ctx, value - ctx.floor(value)


# ---------------------------------------------------------------------------
# beta and Diophantine classes
# ---------------------------------------------------------------------------

def _log_ratio(numerator: int, denominator: int) -> float:
    """ln(numerator) / denominator for arbitrarily large integers"""
    if numerator <= 1:
        return 0.0
    log_num = math.log(numerator)
    if denominator.bit_length() < 1000:
        return log_num / denominator
    return math.exp(math.log(log_num) - math.log(denominator))


def beta_estimate(cf: CFExpansion) -> BetaProfile:
    """Finite-depth upper profile of limsup ln(q_{n+1})/q_n.

    beta_hat is the largest ratio over the available indices and
    tail_estimate the running sup from the middle index on, the better proxy
    for the limsup once the first few ratios dominate. Both are finite-depth
    profiles, never a certified value of beta.
    """
    if cf.depth < 2:
        raise DepthInsufficient("beta estimate needs depth >= 2", key="depth", value=cf.depth)
    ratios = [_log_ratio(cf.q[n + 1], cf.q[n]) for n in range(cf.depth)]
    tail_sup = list(np.maximum.accumulate(np.array(ratios)[::-1])[::-1])
    return BetaProfile(
        beta_hat=float(max(ratios)),
        tail_estimate=float(tail_sup[cf.depth // 2]),
        depth_used=cf.depth,
        ratios=ratios,
        tail_sup=[float(v) for v in tail_sup],
    )


def _scan_condition(cf: CFExpansion, K: int, threshold, normalizer, condition: str) -> DiophantineCheck:
    best, witness, first_failure = math.inf, 1, None
    for start in range(1, K + 1, SCAN_BLOCK):
        ks = np.arange(start, min(start + SCAN_BLOCK, K + 1), dtype=np.float64)
        dist = norm_dist_grid(ks, cf)
        normalized = dist * normalizer(ks)
        i = int(np.argmin(normalized))
        if normalized[i] < best:
            best, witness = float(normalized[i]), int(ks[i])
        if first_failure is None:
            bad = np.nonzero(dist <= threshold(ks))[0]
            if bad.size:
                first_failure = int(ks[bad[0]])
    return DiophantineCheck(
        holds=first_failure is None,
        witness=witness,
        witness_norm=to_decimal(norm_dist(witness, cf), 30),
        min_normalized=best,
        first_failure=first_failure,
        scanned=K,
        condition=condition,
    )


def dc_check(cf: CFExpansion, kappa: float, tau: float, K: int) -> DiophantineCheck:
    """Check ||k alpha|| > kappa |k|^-tau for 0 < |k| <= K"""
    _check_scan(K, "K")
    _require_resolved(cf, K, "K")
    return _scan_condition(
        cf, K,
        threshold=lambda ks: kappa * ks ** (-tau),
        normalizer=lambda ks: ks ** tau,
        condition="power",
    )


def strong_dc_check(cf: CFExpansion, kappa: float, tau: float, K: int) -> DiophantineCheck:
    """Check ||k alpha|| > kappa / (|k| (ln(1+|k|))^tau) for 0 < |k| <= K"""
    _check_scan(K, "K")
    _require_resolved(cf, K, "K")
    return _scan_condition(
        cf, K,
        threshold=lambda ks: kappa / (ks * np.log1p(ks) ** tau),
        normalizer=lambda ks: ks * np.log1p(ks) ** tau,
        condition="strong",
    )


# ---------------------------------------------------------------------------
# Resonances
# ---------------------------------------------------------------------------

def resonances(theta, cf: CFExpansion, epsilon0: float, k_max: int) -> ResonanceSequence:
    """All epsilon0-resonances of theta with |k| <= k_max, ordered by |k|.

    k is listed when ||2theta - k alpha|| <= exp(-epsilon0 |k|) and the gap
    equals the running minimum over |j| <= |k|. Equal |k| lists k > 0 first.
    """
    if epsilon0 <= 0:
        raise ConfigError("epsilon0 must be positive", key="epsilon0", value=epsilon0)
    if k_max < 0:
        raise ConfigError("K_max must be non-negative", key="K_max", value=k_max)
    _require_resolved(cf, k_max, "K_max")
    ctx, two_theta = _two_theta(theta, cf)
    alpha = cf.alpha

    def gap(k: int):
        v = two_theta - k * alpha
        return abs(v - ctx.nint(v))

    found, gaps = [0], [gap(0)]
    running = gaps[0]
    for m in range(1, k_max + 1):
        g_pos, g_neg = gap(m), gap(-m)
        running = min(running, g_pos, g_neg)
        threshold = ctx.exp(-epsilon0 * m)
        for k, g in ((m, g_pos), (-m, g_neg)):
            if g <= threshold and g == running:
                found.append(k)
                gaps.append(g)

    theta_value = to_mpf(ctx, theta)
    return ResonanceSequence(
        theta=theta_value - ctx.floor(theta_value),
        epsilon0=epsilon0,
        k_max=k_max,
        resonances=tuple(found),
        gaps=tuple(gaps),
    )


def scan_resonances(theta, cf: CFExpansion, epsilon0: float, k_max: int) -> Tuple[List[int], np.ndarray]:
    """float64 fast path of `resonances`; returns (resonances, gaps)"""
    if epsilon0 <= 0:
        raise ConfigError("epsilon0 must be positive", key="epsilon0", value=epsilon0)
    _check_scan(max(k_max, 1), "K_max")
    _require_resolved(cf, k_max, "K_max")
    _, two_theta = _two_theta(theta, cf)
    two_theta = float(two_theta)
    g0 = abs(two_theta - round(two_theta))
    if k_max == 0:
        return [0], np.array([g0])
    ks = np.arange(1, k_max + 1)
    g_pos = shift_dist_grid(two_theta, ks, cf)
    g_neg = shift_dist_grid(two_theta, -ks, cf)
    running = np.minimum.accumulate(np.concatenate(([g0], np.minimum(g_pos, g_neg))))[1:]
    threshold = np.exp(-epsilon0 * ks)
    pos = (g_pos <= threshold) & (g_pos <= running)
    neg = (g_neg <= threshold) & (g_neg <= running)

    found, gaps = [0], [g0]
    for i in np.nonzero(pos | neg)[0]:
        if pos[i]:
            found.append(int(ks[i]))
            gaps.append(float(g_pos[i]))
        if neg[i]:
            found.append(-int(ks[i]))
            gaps.append(float(g_neg[i]))
    return found, np.array(gaps)


def small_divisor_profile(cf: CFExpansion, theta, K: int,
                          beta_hat: Optional[float] = None,
                          epsilon0: Optional[float] = None) -> SmallDivisorProfile:
    """Table of ||k alpha|| and ||2theta - k alpha|| for 0 < |k| <= K with fitted constants"""
    _check_scan(K, "K")
    _require_resolved(cf, K, "K")
    beta = beta_estimate(cf).beta_hat if beta_hat is None else beta_hat
    ks = np.concatenate((np.arange(-K, 0), np.arange(1, K + 1)))
    _, two_theta = _two_theta(theta, cf)
    norm_k = norm_dist_grid(ks, cf)
    norm_shift = shift_dist_grid(float(two_theta), ks, cf)
    c_fitted = float(np.min(norm_k * np.exp(2 * beta * np.abs(ks))))

    c_resonant = None
    if epsilon0 is not None:
        found, _ = scan_resonances(theta, cf, epsilon0, K)
        for n_j in found[1:]:
            mask = (np.abs(ks) <= abs(n_j)) & (ks != n_j)
            if not mask.any():
                continue
            value = float(np.min(norm_shift[mask]) * math.exp(4 * beta * abs(n_j)))
            c_resonant = value if c_resonant is None else min(c_resonant, value)

    return SmallDivisorProfile(
        ks=ks,
        norm_k=norm_k,
        norm_shift=norm_shift,
        beta_hat=beta,
        c_fitted=c_fitted,
        c_resonant=c_resonant,
    )


def resonance_gap_profile(sequence: ResonanceSequence, beta_hat: float) -> ResonanceGapProfile:
    """Compare ||2theta - n_j alpha|| against exp(-8 beta |n_{j+1}|)"""
    rows = []
    fitted = 0.0
    for j in range(len(sequence.resonances) - 1):
        n_j, n_next = sequence.resonances[j], sequence.resonances[j + 1]
        gap = float(sequence.gaps[j])
        bound = math.exp(-8 * beta_hat * abs(n_next))
        rows.append(ResonanceGapRow(n_j=n_j, n_next=n_next, gap=gap, bound=bound, holds=gap >= bound))
        rate = math.inf if gap == 0 else -math.log(gap) / abs(n_next)
        fitted = max(fitted, rate)
    return ResonanceGapProfile(rows=rows, beta_hat=beta_hat, fitted_rate=fitted)


def orbit_phases(start: float, ns: Sequence[int], cf: CFExpansion) -> np.ndarray:
    """start + n alpha reduced mod 1 for each integer n, in float64"""
    head, tail = _split_alpha(cf)
    return np.mod(start + _grid_phase(np.asarray(ns), head, tail), 1.0)


def select_scale(k: int, cf: CFExpansion) -> Tuple[int, int, int]:
    """(n, q_n, s) with q_n <= k/8 < q_{n+1} and s the largest integer with s q_n <= k/8"""
    n = None
    for index in range(cf.depth):
        if 8 * cf.q[index] <= k < 8 * cf.q[index + 1]:
            n = index
    if n is None:
        if k < 8:
            raise ConfigError("scale selection needs k >= 8", key="k", value=k)
        raise DepthInsufficient("expansion too shallow to select a scale", key="k", value=k)
    q_n = cf.q[n]
    return n, q_n, k // (8 * q_n)
