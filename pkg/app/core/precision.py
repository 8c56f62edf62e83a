# app/core/precision.py
"""Extended-precision helpers built on per-invocation mpmath contexts"""

from mpmath.ctx_mp import MPContext

from app.core.constants import SIGNIFICANT_DIGITS


def make_context(bits: int) -> MPContext:
    """A private mpmath context; never touches the global mp precision"""
    ctx = MPContext()
    ctx.prec = bits
    return ctx


def to_decimal(value, digits: int = SIGNIFICANT_DIGITS, ctx: MPContext | None = None) -> str:
    """Decimal string of an mpf (or anything mpmath accepts)"""
    ctx = ctx or make_context(max(64, int(digits * 3.33) + 8))
    return ctx.nstr(ctx.mpf(value), digits, strip_zeros=False)


def decimal_digits(bits: int) -> int:
    return int(bits * 0.30103) + 1


def format_float(value: float) -> str:
    """Shortest-round-trip-safe float text with 17 significant digits"""
    if value != value:
        return "nan"
    if value in (float("inf"), float("-inf")):
        return "inf" if value > 0 else "-inf"
    return format(value, f".{SIGNIFICANT_DIGITS}g")
