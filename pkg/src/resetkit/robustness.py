"""Robustness factor sigma_2, its filtered form, and the filter bound Psi.

sigma_2 measures how much the error's RMS grows because of harmonics above
the first.  Psi turns a ceiling on sigma_2 into a magnitude budget for a
shaping pair (F before the reset element, F^-1 after it): any F with
``|F(jw)| max_{odd n>=3} |F^-1(jnw)| <= Psi(w)`` keeps sigma_2 under the
ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloop import DEFAULT_N_MAX, HarmonicSpectrum, LoopConfig, spectrum_sweep
from .errors import DegenerateSpectrumError, PoleAtHarmonicError
from .lti import FrequencyGrid, PoleOnAxisError, RationalTF, freqresp

__all__ = [
    "Sigma2Curve", "PsiCurve", "BoundReport", "sigma2", "sigma2_filtered", "psi",
    "km_factor", "verify_bound", "sigma_p_timedomain", "sigma2_curve", "psi_curve",
    "reconstruct", "SpectrumTable",
]


def _split(spectrum: HarmonicSpectrum):
    s1 = abs(spectrum[1])
    if s1 == 0:
        raise DegenerateSpectrumError(f"|S1| = 0 at omega={spectrum.omega!r}")
    orders = spectrum.orders
    mags = np.abs(spectrum.values)
    return s1, orders[orders >= 3], mags[orders >= 3]


def _rel_increase(q: float) -> float:
    # sqrt(1 + q) - 1 without cancellation for tiny q
    return math.expm1(0.5 * math.log1p(q))


def sigma2(spectrum: HarmonicSpectrum) -> float:
    s1, _, hi = _split(spectrum)
    return _rel_increase(float(np.sum((hi / s1) ** 2)))


def _inverse_gain(F: RationalTF, omegas, orders, omega):
    # |F^-1| straight from the coefficients: a pole of F is a harmless zero of F^-1
    s = 1j * np.asarray(omegas, dtype=float)
    num = np.abs(np.polyval(F.num, s))
    if np.any(num == 0):
        k = int(np.flatnonzero(num == 0)[0])
        raise PoleAtHarmonicError(omega, int(orders[k]), "F^-1")
    return np.abs(np.polyval(F.den, s)) / num


def sigma2_filtered(spectrum: HarmonicSpectrum, F: RationalTF, omega: float | None = None) -> float:
    """sigma_2 after inserting F before and F^-1 after the reset element.

    The first harmonic is untouched exactly; harmonic ``n >= 3`` is scaled by
    ``|F(jw)| |F^-1(jnw)|``.
    """
    omega = spectrum.omega if omega is None else omega
    s1, orders, hi = _split(spectrum)
    if orders.size == 0:
        return 0.0
    try:
        f1 = abs(complex(freqresp(F, omega)))
    except PoleOnAxisError:
        raise PoleAtHarmonicError(omega, 1, "F") from None
    finv = _inverse_gain(F, orders * omega, orders, omega)
    return _rel_increase(float(np.sum((f1 * finv * hi / s1) ** 2)))


def psi(spectrum: HarmonicSpectrum, sigma2_max: float) -> float:
    """Filter budget; ``math.inf`` when there are no higher harmonics."""
    if sigma2_max < 0:
        raise ValueError("sigma2_max must be >= 0")
    s1, _, hi = _split(spectrum)
    denom = float(np.sum(hi**2))
    if denom == 0:
        return math.inf
    return s1 * math.sqrt((sigma2_max**2 + 2 * sigma2_max) / denom)


def km_factor(F: RationalTF, omega: float, n_max: int = DEFAULT_N_MAX) -> tuple[int, float]:
    """Odd order ``n`` in ``[3, n_max]`` maximizing ``|F^-1(jn omega)|``.

    Ties go to the smaller order.  A zero of F at a harmonic yields
    ``(n, inf)``.
    """
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    orders = np.arange(3, n_max + 1, 2)
    s = 1j * orders * float(omega)
    mag = np.abs(np.polyval(F.num, s))
    if np.any(mag == 0):
        return int(orders[np.flatnonzero(mag == 0)[0]]), math.inf
    inv = np.abs(np.polyval(F.den, s)) / mag
    k = int(np.argmax(inv))
    return int(orders[k]), float(inv[k])


def sigma_p_timedomain(e, e1, p: float = 2.0, dt: float = 1.0) -> float:
    """``(||e||_p - ||e1||_p)/||e1||_p`` with sample-period-scaled discrete norms."""
    e = np.asarray(e, dtype=float)
    e1 = np.asarray(e1, dtype=float)
    if e.shape != e1.shape:
        raise ValueError("signals must have the same length")
    if p < 1:
        raise ValueError("p must be >= 1")

    def norm(x):
        if math.isinf(p):
            return float(np.max(np.abs(x)))
        return float((np.sum(np.abs(x) ** p) * dt) ** (1.0 / p))

    n1 = norm(e1)
    if n1 == 0:
        raise DegenerateSpectrumError("first-harmonic signal has zero norm")
    return (norm(e) - n1) / n1


def reconstruct(spectrum: HarmonicSpectrum, t, scale: float = 1.0, orders=None) -> np.ndarray:
    """``sum_n scale |C_n| sin(n w t + arg C_n)`` over the selected orders."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for n in (spectrum.orders if orders is None else orders):
        out += scale * np.imag(spectrum[n] * np.exp(1j * n * spectrum.omega * t))
    return out


@dataclass(frozen=True)
class Sigma2Curve:
    grid: FrequencyGrid
    values: np.ndarray
    n_max: int

    def peak(self) -> tuple[float, float]:
        k = int(np.argmax(self.values))
        return self.grid.omegas[k], float(self.values[k])


@dataclass(frozen=True)
class PsiCurve:
    grid: FrequencyGrid
    values: np.ndarray
    sigma2_max: float


class SpectrumTable:
    """Magnitude table of a sweep: ``|S1|`` per point and ``|S^n|``, ``n >= 3``."""

    def __init__(self, spectra: list[HarmonicSpectrum]):
        if not spectra:
            raise ValueError("empty sweep")
        self.spectra = spectra
        self.omegas = np.array([s.omega for s in spectra])
        self.orders = spectra[0].orders
        if np.any(self.orders != np.arange(1, 2 * len(self.orders), 2)):
            raise ValueError("spectra must hold every odd order 1..N_max")
        mags = np.array([np.abs(s.values) for s in spectra])
        self.s1 = mags[:, 0]
        if np.any(self.s1 == 0):
            raise DegenerateSpectrumError("|S1| = 0 somewhere on the grid")
        self.hi = mags[:, 1:]
        self.hi_orders = self.orders[1:]
        self.n_max = int(self.orders[-1])

    @classmethod
    def from_loop(cls, cfg: LoopConfig, grid: FrequencyGrid, n_max: int = DEFAULT_N_MAX):
        return cls(spectrum_sweep(cfg, grid, n_max))

    def sigma2(self) -> np.ndarray:
        q = np.sum((self.hi / self.s1[:, None]) ** 2, axis=1)
        return np.expm1(0.5 * np.log1p(q))

    def psi(self, sigma2_max: float) -> np.ndarray:
        if sigma2_max < 0:
            raise ValueError("sigma2_max must be >= 0")
        denom = np.sum(self.hi**2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.s1 * np.sqrt((sigma2_max**2 + 2 * sigma2_max) / denom)
        out[denom == 0] = math.inf
        return out

    def filter_gains(self, F: RationalTF):
        """``|F(jw)|`` per point and ``|F^-1(jnw)|`` per point and order."""
        f1 = np.abs(freqresp(F, self.omegas))
        s = 1j * np.outer(self.omegas, self.hi_orders)
        with np.errstate(divide="ignore"):
            return f1, np.abs(np.polyval(F.den, s)) / np.abs(np.polyval(F.num, s))

    def sigma2_filtered(self, f1, finv) -> np.ndarray:
        q = np.sum((f1[:, None] * finv * self.hi / self.s1[:, None]) ** 2, axis=1)
        return np.expm1(0.5 * np.log1p(q))


def sigma2_curve(cfg: LoopConfig, grid: FrequencyGrid, n_max: int = DEFAULT_N_MAX,
                 F: RationalTF | None = None) -> Sigma2Curve:
    table = SpectrumTable.from_loop(cfg, grid, n_max)
    if F is None:
        vals = table.sigma2()
    else:
        vals = table.sigma2_filtered(*table.filter_gains(F))
    return Sigma2Curve(grid, vals, n_max)


def psi_curve(cfg: LoopConfig, grid: FrequencyGrid, sigma2_max: float,
              n_max: int = DEFAULT_N_MAX) -> PsiCurve:
    return PsiCurve(grid, SpectrumTable.from_loop(cfg, grid, n_max).psi(sigma2_max), sigma2_max)


@dataclass(frozen=True)
class BoundReport:
    """Outcome of checking a filter against the Psi budget.

    ``feasible`` is the sufficient-condition verdict; ``direct_ok`` is the
    verdict of recomputing sigma_2 with the filter in place.
    """

    feasible: bool
    direct_ok: bool
    omegas: np.ndarray
    psi: np.ndarray
    product: np.ndarray
    margin: np.ndarray
    k_m: np.ndarray
    sigma2_filtered: np.ndarray
    sigma2_max: float

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def worst_omega(self) -> float:
        return float(self.omegas[int(np.argmin(self.margin))])


def verify_bound(cfg: LoopConfig | SpectrumTable, F: RationalTF, grid: FrequencyGrid | None = None,
                 sigma2_max: float = 0.15, n_max: int = DEFAULT_N_MAX) -> BoundReport:
    """Check ``|F(jw)||F^-1(j k_m w)| <= Psi(w)`` on the grid, then recheck sigma_2 directly."""
    table = cfg if isinstance(cfg, SpectrumTable) else SpectrumTable.from_loop(cfg, grid, n_max)
    psi_vals = table.psi(sigma2_max)
    f1, finv = table.filter_gains(F)
    k = np.argmax(finv, axis=1)  # first max -> smallest order on ties
    peak = finv[np.arange(len(k)), k]
    product = f1 * peak
    with np.errstate(invalid="ignore"):
        margin = psi_vals - product
    margin = np.where(np.isinf(psi_vals) & np.isfinite(product), math.inf, margin)
    margin = np.where(np.isnan(margin), -math.inf, margin)
    s2f = table.sigma2_filtered(f1, finv)
    return BoundReport(
        feasible=bool(np.all(margin >= 0)),
        direct_ok=bool(np.all(s2f <= sigma2_max)),
        omegas=table.omegas,
        psi=psi_vals,
        product=product,
        margin=margin,
        k_m=table.hi_orders[k],
        sigma2_filtered=s2f,
        sigma2_max=sigma2_max,
    )
