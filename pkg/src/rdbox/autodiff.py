"""Forward-mode differentiation with vector dual numbers.

A :class:`Dual` carries a value and the gradient of that value with respect
to a fixed set of seed inputs. The scalar helpers in this module (``sin``,
``kmin``, ...) accept plain floats or duals, so one kernel serves both value
and gradient evaluation.

Branch selections in ``kmin``/``kmax``/``kabs`` take the first argument on a
tie. Inside :func:`track_ties` every such comparison between duals is logged
so callers can tell when a probe point sits on (or near) a kink.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np


class Dual:
    __slots__ = ("val", "der")

    def __init__(self, val, der):
        self.val = float(val)
        self.der = der

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r})"

    def __float__(self):
        return self.val

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, self.der)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.der)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.der * other.val + other.der * self.val)
        return Dual(self.val * other, self.der * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, (self.der - other.der * q) / other.val)
        return Dual(self.val / other, self.der / other)

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(q, self.der * (-q / self.val))

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        if p == 2:
            return Dual(self.val * self.val, self.der * (2.0 * self.val))
        return Dual(self.val**p, self.der * (p * self.val ** (p - 1)))

    # comparisons look at the value only
    def __lt__(self, other):
        return self.val < value_of(other)

    def __le__(self, other):
        return self.val <= value_of(other)

    def __gt__(self, other):
        return self.val > value_of(other)

    def __ge__(self, other):
        return self.val >= value_of(other)

    def __abs__(self):
        return kabs(self)


def value_of(x) -> float:
    return x.val if isinstance(x, Dual) else float(x)


def _der(x, n):
    return x.der if isinstance(x, Dual) else np.zeros(n)


def seed(values: Sequence[float]) -> List[Dual]:
    """Independent duals, one per input, with unit gradient on their own slot."""
    eye = np.eye(len(values))
    return [Dual(v, eye[i]) for i, v in enumerate(values)]


def sin(x):
    if isinstance(x, Dual):
        return Dual(math.sin(x.val), x.der * math.cos(x.val))
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.val), x.der * -math.sin(x.val))
    return math.cos(x)


def atan(x):
    if isinstance(x, Dual):
        return Dual(math.atan(x.val), x.der / (1.0 + x.val * x.val))
    return math.atan(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(math.log(x.val), x.der / x.val)
    return math.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = math.sqrt(x.val)
        return Dual(r, x.der / (2.0 * r))
    return math.sqrt(x)


@dataclass
class TieEvent:
    """A branch comparison: ``gap`` is |a - b|, ``slope`` is d(a - b)."""

    gap: float
    slope: np.ndarray


_tracker: contextvars.ContextVar[Optional[List[TieEvent]]] = contextvars.ContextVar(
    "rdbox_tie_tracker", default=None
)


@contextlib.contextmanager
def track_ties():
    events: List[TieEvent] = []
    token = _tracker.set(events)
    try:
        yield events
    finally:
        _tracker.reset(token)


def _record(a, b):
    events = _tracker.get()
    if events is None:
        return
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return
    n = len(a.der) if isinstance(a, Dual) else len(b.der)
    events.append(TieEvent(abs(value_of(a) - value_of(b)), _der(a, n) - _der(b, n)))


def kmin(a, b):
    _record(a, b)
    return a if value_of(a) <= value_of(b) else b


def kmax(a, b):
    _record(a, b)
    return a if value_of(a) >= value_of(b) else b


def kabs(x):
    if isinstance(x, Dual):
        _record(x, -x)
        return x if x.val >= 0 else -x
    return abs(x)
