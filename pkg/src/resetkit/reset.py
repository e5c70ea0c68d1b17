"""Reset elements: base-linear dynamics, convergence check, HOSIDFs and the CgLp builder.

A reset element is an LTI filter ``(A_r, B_r, C_r, D_r)`` whose state is
mapped ``x <- A_rho x`` whenever its input crosses zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AssumptionViolation, PoleAtHarmonicError
from .linalg import charpoly_adjugate, expm, spectral_radius
from .lti import RationalTF

__all__ = [
    "ResetElement", "Assumption1Report", "CgLpDesign", "base_linear_tf",
    "check_assumption1", "hosidf", "hosidf_harmonics", "build_cglp",
    "clegg_integrator", "gfore", "default_delta_grid",
]


def default_delta_grid() -> np.ndarray:
    return np.logspace(-5, 2, 400)


@dataclass(frozen=True, eq=False)
class ResetElement:
    """State-space reset element.

    ``A_rho`` must be diagonal with entries in (-1, 1]; an entry of exactly 1
    marks a state that is never reset.
    """

    A_r: np.ndarray
    B_r: np.ndarray
    C_r: np.ndarray
    D_r: float
    A_rho: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_r, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A_r must be square")
        B = np.asarray(self.B_r, dtype=float).reshape(-1, 1)
        C = np.asarray(self.C_r, dtype=float).reshape(1, -1)
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError(f"B_r/C_r dimensions do not match n_r={n}")
        rho = np.asarray(self.A_rho, dtype=float)
        if rho.ndim <= 1:
            rho = np.diag(np.atleast_1d(rho))
        if rho.shape != (n, n):
            raise ValueError(f"A_rho must be {n}x{n} or a length-{n} diagonal")
        if np.any(rho != np.diag(np.diag(rho))):
            raise ValueError("A_rho must be diagonal")
        g = np.diag(rho)
        if np.any(g <= -1.0) or np.any(g > 1.0):
            raise ValueError("A_rho diagonal entries must lie in (-1, 1]")
        for name, val in (("A_r", A), ("B_r", B), ("C_r", C), ("A_rho", rho)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "D_r", float(self.D_r))

    @property
    def n_states(self) -> int:
        return self.A_r.shape[0]

    @property
    def gammas(self) -> np.ndarray:
        return np.diag(self.A_rho)

    @property
    def is_linear(self) -> bool:
        """True when no state is ever reset (A_rho = I)."""
        return bool(np.all(self.gammas == 1.0))

    @cached_property
    def assumption1(self) -> "Assumption1Report":
        return check_assumption1(self)

    def to_dict(self) -> dict:
        return {
            "A_r": self.A_r.tolist(),
            "B_r": self.B_r.tolist(),
            "C_r": self.C_r.tolist(),
            "D_r": self.D_r,
            "A_rho": self.gammas.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResetElement":
        return cls(d["A_r"], d["B_r"], d["C_r"], d.get("D_r", 0.0), d["A_rho"])


def clegg_integrator(gamma: float = 0.0) -> ResetElement:
    return ResetElement([[0.0]], [1.0], [1.0], 0.0, [gamma])


def gfore(omega_r: float, gamma: float = 0.0, D_r: float = 0.0) -> ResetElement:
    """Generalized first-order reset element ``omega_r/(s + omega_r) + D_r``."""
    return ResetElement([[-omega_r]], [1.0], [omega_r], D_r, [gamma])


def base_linear_tf(el: ResetElement) -> RationalTF:
    """``C_r (sI - A_r)^-1 B_r + D_r`` expanded with Faddeev-LeVerrier."""
    c, Ns = charpoly_adjugate(el.A_r)
    num = np.array([0.0] + [(el.C_r @ Nk @ el.B_r).item() for Nk in Ns])
    return RationalTF(num + el.D_r * c, c)


@dataclass(frozen=True)
class Assumption1Report:
    holds: bool
    worst_delta: float
    worst_radius: float

    def __bool__(self):
        return self.holds


def check_assumption1(el: ResetElement, delta_grid=None) -> Assumption1Report:
    """Check ``rho(A_rho exp(A_r delta)) < 1`` over a grid of reset intervals."""
    deltas = default_delta_grid() if delta_grid is None else np.atleast_1d(
        np.asarray(delta_grid, dtype=float))
    if deltas.size == 0 or np.any(deltas <= 0):
        raise ValueError("delta grid must be nonempty with all entries > 0")
    radii = np.array([spectral_radius(el.A_rho @ expm(el.A_r * d)) for d in deltas])
    k = int(np.argmax(radii))
    return Assumption1Report(bool(radii[k] < 1.0), float(deltas[k]), float(radii[k]))


def _solve_checked(M, rhs, omega, n):
    if np.linalg.cond(M) > 1e14:
        raise PoleAtHarmonicError(omega, n)
    return np.linalg.solve(M, rhs)


def hosidf_harmonics(el: ResetElement, omega: float, orders) -> np.ndarray:
    """HOSIDFs ``H_n(omega)`` for every order in ``orders``.

    For a unit sinusoidal input the periodic solution is half-wave
    antisymmetric with resets at every half period.  The state deviation from
    the linear steady state after each reset is
    ``d = (I + A_rho E)^-1 (A_rho - I) x_ss(0)`` with ``E = exp(pi A_r/omega)``,
    and its odd Fourier coefficients give
    ``H_n = 2j (omega/pi) C_r (j n omega I - A_r)^-1 (I + E) d`` on top of
    the base-linear response at ``n = 1``.  Even orders are exactly zero.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    orders = np.atleast_1d(np.asarray(orders, dtype=int))
    if np.any(orders < 1):
        raise ValueError("harmonic orders must be >= 1")
    out = np.zeros(orders.shape, dtype=complex)
    A, B, C = el.A_r, el.B_r, el.C_r
    ident = np.eye(el.n_states)
    odd = orders % 2 == 1

    lin = _solve_checked(1j * omega * ident - A, B, omega, 1)
    r_bl = (C @ lin).item() + el.D_r
    if el.is_linear:
        out[orders == 1] = r_bl
        return out
    if not el.assumption1.holds:
        rep = el.assumption1
        raise AssumptionViolation(
            f"spectral radius {rep.worst_radius:.6g} >= 1 at delta={rep.worst_delta:.3g} s")

    E = expm(A * (math.pi / omega))
    x_ss0 = lin.imag
    dev = _solve_checked(ident + el.A_rho @ E, (el.A_rho - ident) @ x_ss0, omega, 0)
    w = (ident + E) @ dev
    for idx in np.flatnonzero(odd):
        n = int(orders[idx])
        y = _solve_checked(1j * n * omega * ident - A, w, omega, n)
        out[idx] = 2j * omega / math.pi * (C @ y).item()
    out[orders == 1] += r_bl
    return out


def hosidf(el: ResetElement, omega: float, n: int) -> complex:
    """n-th order sinusoidal-input describing function of the reset element."""
    return complex(hosidf_harmonics(el, omega, [n])[0])


@dataclass(frozen=True)
class CgLpDesign:
    omega_l: float
    omega_f: float
    A_rho_scalar: float
    k_c: float
    C_c: RationalTF
    element: ResetElement
    omega_r: float

    @property
    def post_filter(self) -> RationalTF:
        """``k_c * C_c``, the LTI part placed after the reset element."""
        return self.C_c * self.k_c


def build_cglp(omega_l: float, omega_f: float, A_rho_scalar: float) -> CgLpDesign:
    """Constant-in-gain lead-in-phase element: proportional GFORE, gain and lead-lag."""
    if not 0 < omega_l < omega_f:
        raise ValueError("require 0 < omega_l < omega_f")
    if not -1 < A_rho_scalar < 1:
        raise ValueError("A_rho must lie in (-1, 1)")
    g = A_rho_scalar
    k_c = (omega_f - omega_l) / omega_f
    C_c = RationalTF([1.0 / omega_l, 1.0], [1.0 / omega_f, 1.0])
    omega_r = omega_l / math.sqrt(1.0 + (4.0 * (1.0 - g) / (math.pi * (1.0 + g))) ** 2)
    D_r = omega_l / (omega_f - omega_l)
    el = gfore(omega_r, g, D_r)
    return CgLpDesign(omega_l, omega_f, g, k_c, C_c, el, omega_r)
