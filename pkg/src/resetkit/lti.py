"""Rational transfer functions, frequency response and Tustin discretization.

Coefficients are stored in descending powers of ``s`` (or ``z``).  No
pole-zero cancellation is ever attempted: products keep every factor so that
simulation state dimensions stay predictable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "RationalTF", "DiscreteTF", "FrequencyGrid", "PoleOnAxisError",
    "eval_freq", "freqresp", "series", "invert", "tustin", "pid",
    "default_grid", "ONE", "ZERO",
]


class PoleOnAxisError(ZeroDivisionError):
    """Denominator vanishes at the requested frequency."""

    def __init__(self, omega, tf=None):
        self.omega = omega
        super().__init__(f"transfer function has a pole at s = j*{omega!r} rad/s")


def _coeffs(values: Sequence[float], name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D coefficient list")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite coefficients")
    return tuple(float(v) for v in arr)


def _strip(c: tuple[float, ...]) -> tuple[float, ...]:
    i = 0
    while i < len(c) - 1 and c[i] == 0.0:
        i += 1
    return c[i:]


@dataclass(frozen=True)
class RationalTF:
    """Real rational transfer function ``num(s)/den(s)``.

    Leading zeros of the numerator are dropped.  The denominator's leading
    coefficient must be nonzero.  Numerators up to two degrees above the
    denominator are accepted here; improper blocks are rejected only where
    they cannot be realized (discretization, simulation).
    """

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __init__(self, num, den=(1.0,)):
        n = _strip(_coeffs(num, "num"))
        d = _coeffs(den, "den")
        if d[0] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        if len(n) - len(d) > 2:
            raise ValueError("numerator degree exceeds denominator degree + 2")
        object.__setattr__(self, "num", n)
        object.__setattr__(self, "den", d)

    @property
    def num_degree(self) -> int:
        return len(self.num) - 1

    @property
    def den_degree(self) -> int:
        return len(self.den) - 1

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.num)

    @property
    def is_proper(self) -> bool:
        return self.is_zero or self.num_degree <= self.den_degree

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return series(self, other)
        return RationalTF(np.asarray(self.num) * float(other), self.den)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}


ONE = RationalTF([1.0], [1.0])
ZERO = RationalTF([0.0], [1.0])


@dataclass(frozen=True)
class DiscreteTF:
    """Rational transfer function in ``z`` with its sample period."""

    num: tuple[float, ...]
    den: tuple[float, ...]
    sample_period: float

    def __init__(self, num, den, sample_period):
        d = _coeffs(den, "den")
        if d[0] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        if not sample_period > 0:
            raise ValueError("sample_period must be positive")
        object.__setattr__(self, "num", _strip(_coeffs(num, "num")))
        object.__setattr__(self, "den", d)
        object.__setattr__(self, "sample_period", float(sample_period))

    def __call__(self, z):
        return np.polyval(self.num, z) / np.polyval(self.den, z)

    def freqresp(self, omega):
        """Response at ``z = exp(j*omega*Ts)``."""
        return self(np.exp(1j * np.asarray(omega) * self.sample_period))


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies in rad/s."""

    omegas: tuple[float, ...]

    def __init__(self, omegas):
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        if w.ndim != 1 or w.size == 0:
            raise ValueError("frequency grid must be a nonempty 1-D sequence")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("grid frequencies must be finite and > 0")
        if np.any(np.diff(w) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        object.__setattr__(self, "omegas", tuple(float(v) for v in w))

    @classmethod
    def logspace_hz(cls, lo_hz: float, hi_hz: float, points: int) -> "FrequencyGrid":
        if points == 1:
            return cls([2 * math.pi * lo_hz])
        return cls(2 * np.pi * np.logspace(np.log10(lo_hz), np.log10(hi_hz), points))

    def __len__(self):
        return len(self.omegas)

    def __iter__(self):
        return iter(self.omegas)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.omegas, dtype=dtype)


def default_grid() -> FrequencyGrid:
    """300 log-spaced points over 1 Hz .. 1 kHz."""
    return FrequencyGrid.logspace_hz(1.0, 1000.0, 300)


def freqresp(tf: RationalTF, omega) -> np.ndarray:
    """Vectorized ``tf(j*omega)``; raises :class:`PoleOnAxisError` on a pole."""
    s = 1j * np.asarray(omega, dtype=float)
    den = np.polyval(tf.den, s)
    if np.any(den == 0):
        bad = np.atleast_1d(np.asarray(omega))[np.atleast_1d(den) == 0][0]
        raise PoleOnAxisError(float(bad))
    return np.polyval(tf.num, s) / den


def eval_freq(tf: RationalTF, omega: float) -> complex:
    if not omega > 0:
        raise ValueError(f"omega must be > 0, got {omega!r}")
    return complex(freqresp(tf, omega))


def series(a: RationalTF, b: RationalTF) -> RationalTF:
    return RationalTF(np.polymul(a.num, b.num), np.polymul(a.den, b.den))


def invert(tf: RationalTF) -> RationalTF:
    if tf.is_zero:
        raise ZeroDivisionError("cannot invert a transfer function with zero numerator")
    return RationalTF(tf.den, tf.num)


def tustin(tf: RationalTF, Ts: float) -> DiscreteTF:
    """Bilinear map ``s <- (2/Ts)(z-1)/(z+1)``."""
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    if not tf.is_proper:
        raise ValueError("cannot discretize an improper transfer function")
    order = tf.den_degree
    k = 2.0 / Ts
    zm1 = np.array([1.0, -1.0])
    zp1 = np.array([1.0, 1.0])

    def mapped(coeffs):
        out = np.zeros(order + 1)
        deg = len(coeffs) - 1
        for i, c in enumerate(coeffs):
            p = deg - i  # power of s
            term = c * k**p * np.poly1d(zm1) ** p * np.poly1d(zp1) ** (order - p)
            tc = np.atleast_1d(term.coeffs)
            out[order + 1 - len(tc):] += tc
        return out

    num = mapped(tf.num)
    den = mapped(tf.den)
    return DiscreteTF(num / den[0], den / den[0], Ts)


def pid(kp: float, omega_i: float, omega_d: float, omega_t: float,
        omega_LF: float) -> RationalTF:
    """Tamed PID with low-pass:
    ``kp (1 + wi/s) (1 + s/wd)/(1 + s/wt) * 1/(1 + s/wLF)``.
    """
    for name, w in (("omega_i", omega_i), ("omega_d", omega_d),
                    ("omega_t", omega_t), ("omega_LF", omega_LF)):
        if not w > 0:
            raise ValueError(f"{name} must be > 0")
    integral = RationalTF([1.0, omega_i], [1.0, 0.0])
    lead = RationalTF([1.0 / omega_d, 1.0], [1.0 / omega_t, 1.0])
    lowpass = RationalTF([1.0], [1.0 / omega_LF, 1.0])
    return series(series(integral, lead), lowpass) * kp
