"""Platform-independent evaluation of the few transcendental functions that
feed the entropy coder.

Library ``exp``/``tanh`` implementations differ in the last ulp between CPUs
and numpy builds; a probability that lands on the other side of a 16-bit
rounding boundary on the receiver corrupts the stream. Anything that becomes
a coding probability is therefore computed here with software decimal
arithmetic, which is bit-reproducible everywhere.
"""

from __future__ import annotations

import decimal
from functools import lru_cache

import numpy as np

from .coder import PROB_ONE

_CTX = decimal.Context(prec=40, rounding=decimal.ROUND_HALF_EVEN)
D = _CTX.create_decimal

LOGIT_SCALE = 256
LOGIT_LIMIT = 12 * LOGIT_SCALE


def context():
    """Pin the decimal context for operator arithmetic (``+``, ``*``, ``/``)."""
    return decimal.localcontext(_CTX)


def dec(x) -> decimal.Decimal:
    """Exact decimal image of a binary float (or int)."""
    return _CTX.create_decimal_from_float(float(x)) if isinstance(x, float) else D(x)


def exp(x: decimal.Decimal) -> decimal.Decimal:
    return _CTX.exp(x)


def logistic(x: decimal.Decimal) -> decimal.Decimal:
    return _CTX.divide(1, _CTX.add(1, exp(_CTX.minus(x))))


def tanh(x: decimal.Decimal) -> decimal.Decimal:
    e = exp(_CTX.multiply(2, x))
    return _CTX.divide(_CTX.subtract(e, 1), _CTX.add(e, 1))


def softplus(x: decimal.Decimal) -> decimal.Decimal:
    if x > 30:
        return _CTX.add(x, _CTX.ln(_CTX.add(1, exp(_CTX.minus(x)))))
    return _CTX.ln(_CTX.add(1, exp(x)))


def to_grid(p: decimal.Decimal) -> int:
    """Round a probability to the 16-bit coder grid, clamped to [1, 65535]."""
    q = int(_CTX.multiply(p, PROB_ONE).to_integral_value(rounding=decimal.ROUND_HALF_EVEN))
    return min(max(q, 1), PROB_ONE - 1)


@lru_cache(maxsize=1)
def logistic_grid_table() -> np.ndarray:
    """``table[i]`` = 16-bit probability for logit ``(i - LOGIT_LIMIT) / LOGIT_SCALE``."""
    steps = range(-LOGIT_LIMIT, LOGIT_LIMIT + 1)
    table = [to_grid(logistic(_CTX.divide(i, LOGIT_SCALE))) for i in steps]
    return np.asarray(table, dtype=np.int64)


def logits_to_grid(logits) -> np.ndarray:
    """Quantise logits to 1/256 steps and look up their 16-bit probabilities.

    Multiplying by a power of two and rounding are exact IEEE operations, so
    the lookup index is identical on every platform.
    """
    idx = np.rint(np.asarray(logits, np.float64) * LOGIT_SCALE)
    idx = np.clip(idx, -LOGIT_LIMIT, LOGIT_LIMIT).astype(np.int64) + LOGIT_LIMIT
    return logistic_grid_table()[idx]
