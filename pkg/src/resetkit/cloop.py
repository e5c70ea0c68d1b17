"""Open-loop HOSIDFs and HOSIDF-based closed-loop sensitivities.

Loop wiring (``d_n`` omitted)::

    r -(+)- e -> C_pre -> e_r -+-> R -----+-> C_pos -(+)- u -> G -> y
       ^-                      +-> C_par -+          d_i
       |___________________________________________________________|

With a shaping pair the effective pre/post filters become ``C_pre F`` and
``C_pos F^-1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SingularSensitivityError
from .lti import ONE, ZERO, FrequencyGrid, RationalTF, default_grid, freqresp, series
from .reset import ResetElement, base_linear_tf, hosidf_harmonics

__all__ = [
    "LoopConfig", "HarmonicSpectrum", "SweepError", "open_loop_Ln",
    "base_linear_sensitivity", "sensitivity_n", "disturbance_sensitivity_n",
    "spectrum_sweep", "loop_harmonics", "DEFAULT_N_MAX",
]

DEFAULT_N_MAX = 61


@dataclass(frozen=True, eq=False)
class LoopConfig:
    plant: RationalTF
    element: ResetElement
    c_pre: RationalTF = ONE
    c_par: RationalTF = ZERO
    c_pos: RationalTF = ONE
    shaping: Optional[tuple[RationalTF, RationalTF]] = None

    def __post_init__(self):
        if self.shaping is not None:
            F, F_inv = self.shaping
            w = np.asarray(default_grid())
            prod = freqresp(F, w) * freqresp(F_inv, w)
            if np.max(np.abs(prod - 1.0)) > 1e-9:
                warnings.warn("shaping pair is not mutually inverse on the default grid",
                              stacklevel=3)

    @property
    def pre(self) -> RationalTF:
        """Effective filter before the reset element."""
        return self.c_pre if self.shaping is None else series(self.c_pre, self.shaping[0])

    @property
    def pos(self) -> RationalTF:
        """Effective filter after the reset element."""
        return self.c_pos if self.shaping is None else series(self.shaping[1], self.c_pos)

    @property
    def r_bl(self) -> RationalTF:
        return base_linear_tf(self.element)

    def with_shaping(self, F: RationalTF, F_inv: RationalTF) -> "LoopConfig":
        return LoopConfig(self.plant, self.element, self.c_pre, self.c_par,
                          self.c_pos, (F, F_inv))

    def without_shaping(self) -> "LoopConfig":
        return LoopConfig(self.plant, self.element, self.c_pre, self.c_par, self.c_pos)

    def linearized(self) -> "LoopConfig":
        """Same loop with the reset action disabled (A_rho = I)."""
        el = self.element
        lin = ResetElement(el.A_r, el.B_r, el.C_r, el.D_r, np.ones(el.n_states))
        return LoopConfig(self.plant, lin, self.c_pre, self.c_par, self.c_pos,
                          self.shaping)


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Complex coefficients by odd harmonic order at one frequency."""

    omega: float
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        for n, v in self.coeffs.items():
            if n < 1 or n % 2 == 0:
                raise ValueError(f"harmonic spectra hold odd orders only, got n={n}")
            if not np.isfinite(v):
                raise ValueError(f"non-finite coefficient at n={n}")

    @property
    def orders(self) -> np.ndarray:
        return np.array(sorted(self.coeffs), dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.coeffs[n] for n in sorted(self.coeffs)], dtype=complex)

    def __getitem__(self, n: int) -> complex:
        if n % 2 == 0:
            return 0j
        return self.coeffs.get(n, 0j)

    def scaled(self, factors: dict) -> "HarmonicSpectrum":
        return HarmonicSpectrum(self.omega,
                                {n: v * factors.get(n, 1.0) for n, v in self.coeffs.items()})


class SweepError(ArithmeticError):
    def __init__(self, failures):
        self.failures = failures
        lines = "; ".join(f"omega={w:.6g}: {exc}" for w, exc in failures[:5])
        more = f" (+{len(failures) - 5} more)" if len(failures) > 5 else ""
        super().__init__(f"{len(failures)} grid point(s) failed: {lines}{more}")


def _odd_orders(n_max: int) -> np.ndarray:
    if n_max < 1 or n_max % 2 == 0:
        raise ValueError(f"N_max must be an odd positive integer, got {n_max}")
    return np.arange(1, n_max + 1, 2)


def loop_harmonics(cfg: LoopConfig, omega: float, n_max: int = DEFAULT_N_MAX) -> dict:
    """All per-harmonic quantities at one frequency, odd orders ``1..n_max``.

    Returns a dict of arrays keyed ``n``, ``H``, ``L``, ``S_bl``, ``S_re``,
    ``S_de``.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    n = _odd_orders(n_max)
    nw = n * omega
    H = hosidf_harmonics(cfg.element, omega, n)
    pre1 = complex(freqresp(cfg.pre, omega))
    G = freqresp(cfg.plant, nw)
    pos = freqresp(cfg.pos, nw)
    par = freqresp(cfg.c_par, nw)
    rbl = freqresp(cfg.r_bl, nw)
    pre_n = freqresp(cfg.pre, nw)

    L = G * pos * H * pre1 * np.exp(1j * (n - 1) * np.angle(pre1))
    L[0] = G[0] * pos[0] * (H[0] + par[0]) * pre1

    one_plus_bl = 1.0 + G * pos * (par + rbl) * pre_n
    if np.any(one_plus_bl == 0):
        k = int(np.flatnonzero(one_plus_bl == 0)[0])
        raise SingularSensitivityError(float(nw[k]), "1 + L_bl")
    S_bl = 1.0 / one_plus_bl

    if L[0] == -1.0:
        raise SingularSensitivityError(omega)
    S1 = 1.0 / (1.0 + L[0])
    S = -L * S_bl * abs(S1) * np.exp(1j * n * np.angle(S1))
    S[0] = S1
    Sd1 = G[0] * S1
    Sd = -L * S_bl * abs(Sd1) * np.exp(1j * n * np.angle(Sd1))
    Sd[0] = Sd1
    return {"n": n, "H": H, "L": L, "S_bl": S_bl, "S_re": S, "S_de": Sd}


def _pick(cfg, omega, n, key):
    if n < 1:
        raise ValueError("n must be >= 1")
    if n % 2 == 0:
        return 0j
    return complex(loop_harmonics(cfg, omega, n)[key][-1])


def open_loop_Ln(cfg: LoopConfig, omega: float, n: int) -> complex:
    """Open-loop n-th order HOSIDF of the loop."""
    return _pick(cfg, omega, n, "L")


def base_linear_sensitivity(cfg: LoopConfig, omega: float) -> complex:
    """``1/(1 + L_bl(j omega))``; pass ``n*omega`` for the harmonic frequency."""
    lbl = complex(freqresp(series(series(cfg.plant, cfg.pos), cfg.pre), omega)) * complex(
        freqresp(cfg.c_par, omega) + freqresp(cfg.r_bl, omega))
    if 1.0 + lbl == 0:
        raise SingularSensitivityError(omega, "1 + L_bl")
    return 1.0 / (1.0 + lbl)


def sensitivity_n(cfg: LoopConfig, omega: float, n: int) -> complex:
    """n-th order reference-to-error sensitivity."""
    return _pick(cfg, omega, n, "S_re")


def disturbance_sensitivity_n(cfg: LoopConfig, omega: float, n: int) -> complex:
    """n-th order input-disturbance-to-error sensitivity."""
    return _pick(cfg, omega, n, "S_de")


def spectrum_sweep(cfg: LoopConfig, grid: FrequencyGrid, n_max: int = DEFAULT_N_MAX,
                   quantity: str = "S_re") -> list[HarmonicSpectrum]:
    """One :class:`HarmonicSpectrum` per grid point for ``L``, ``S_re`` or ``S_de``."""
    if quantity not in ("L", "S_re", "S_de", "H"):
        raise ValueError(f"unknown quantity {quantity!r}")
    _odd_orders(n_max)
    out, failures = [], []
    for w in grid:
        try:
            h = loop_harmonics(cfg, w, n_max)
        except (ArithmeticError, ValueError) as exc:
            failures.append((w, exc))
            continue
        out.append(HarmonicSpectrum(w, dict(zip(h["n"].tolist(), h[quantity].tolist()))))
    if failures:
        raise SweepError(failures)
    return out

