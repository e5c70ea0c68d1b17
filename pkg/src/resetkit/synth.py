"""Notch shaping filter and a max-margin search against the Psi budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .cloop import DEFAULT_N_MAX, LoopConfig
from .lti import RationalTF, invert
from .robustness import BoundReport, PsiCurve, SpectrumTable, verify_bound

__all__ = ["NotchParams", "SearchBox", "SearchReport", "notch", "notch_gain",
           "search_notch", "random_shaping_filter", "HAND_TUNED_NOTCH"]


@dataclass(frozen=True)
class NotchParams:
    omega_n: float
    Q1: float
    Q2: float

    def __post_init__(self):
        for name in ("omega_n", "Q1", "Q2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.omega_n > 0 and self.Q1 > 0 and self.Q2 > 0):
            raise ValueError("notch parameters must all be > 0")

    @property
    def depth(self) -> float:
        """Gain at the center frequency, ``Q2/Q1``."""
        return self.Q2 / self.Q1

    def to_dict(self) -> dict:
        return {"omega_n": self.omega_n, "Q1": self.Q1, "Q2": self.Q2}


HAND_TUNED_NOTCH = NotchParams(2 * math.pi * 27.5, 6.79, 2.38)


def notch(p: NotchParams) -> RationalTF:
    """``(s^2/wn^2 + s/(Q1 wn) + 1) / (s^2/wn^2 + s/(Q2 wn) + 1)``."""
    wn = p.omega_n
    return RationalTF([1 / wn**2, 1 / (p.Q1 * wn), 1.0], [1 / wn**2, 1 / (p.Q2 * wn), 1.0])


def random_shaping_filter(rng: np.random.Generator, omega_range=(2 * math.pi, 2 * math.pi * 1e3),
                          max_degree: int = 4) -> RationalTF:
    """Random stable, minimum-phase, biproper filter built from notches and lead/lag sections.

    Both F and its inverse are stable, so any draw is a valid shaping pair.
    """
    lo, hi = np.log(omega_range[0]), np.log(omega_range[1])
    F = RationalTF([1.0], [1.0])
    degree = 0
    for _ in range(int(rng.integers(1, 3))):
        kind = rng.choice(["notch", "leadlag"]) if degree + 2 <= max_degree else "leadlag"
        if degree + 1 > max_degree:
            break
        if kind == "notch":
            wn = math.exp(rng.uniform(lo, hi))
            q1, q2 = np.exp(rng.uniform(np.log(0.3), np.log(20.0), size=2))
            F = F * notch(NotchParams(wn, q1, q2))
            degree += 2
        else:
            wz, wp = np.exp(rng.uniform(lo, hi, size=2))
            F = F * RationalTF([1 / wz, 1.0], [1 / wp, 1.0])
            degree += 1
    return F


def notch_gain(omega, omega_n, Q1, Q2):
    """Broadcasting ``|F(j omega)|`` for the notch family."""
    x = np.asarray(omega) / np.asarray(omega_n)
    a = (1.0 - x * x) ** 2
    return np.sqrt((a + (x / Q1) ** 2) / (a + (x / Q2) ** 2))


@dataclass(frozen=True)
class SearchBox:
    omega_n: tuple[float, float]
    Q1: tuple[float, float] = (0.5, 20.0)
    Q2: tuple[float, float] = (0.5, 20.0)

    @property
    def lo(self):
        return np.log([self.omega_n[0], self.Q1[0], self.Q2[0]])

    @property
    def hi(self):
        return np.log([self.omega_n[1], self.Q1[1], self.Q2[1]])


@dataclass
class SearchReport:
    feasible: bool
    params: NotchParams
    min_margin: float
    bound: BoundReport
    coarse_best: NotchParams
    coarse_margin: float
    evaluations: int
    notes: list = field(default_factory=list)

    def config_fragment(self) -> dict:
        F = notch(self.params)
        return {
            "notch": self.params.to_dict(),
            "F": F.to_dict(),
            "F_inv": invert(F).to_dict(),
            "feasible": self.feasible,
            "min_margin": self.min_margin,
        }


def _min_margins(table: SpectrumTable, psi_vals, params: np.ndarray) -> np.ndarray:
    """Minimum of Psi - |F||F^-1(k_m)| over the grid for each row ``(wn, Q1, Q2)``."""
    finite = np.isfinite(psi_vals)
    if not np.any(finite):
        return np.full(len(params), math.inf)
    w = table.omegas[finite]
    ps = psi_vals[finite]
    wn, q1, q2 = (params[:, i][:, None] for i in range(3))
    f1 = notch_gain(w[None, :], wn, q1, q2)
    wn3, q13, q23 = wn[:, :, None], q1[:, :, None], q2[:, :, None]
    fn = notch_gain(np.outer(w, table.hi_orders)[None], wn3, q13, q23)
    prod = f1 * np.max(1.0 / fn, axis=2)
    return np.min(ps[None, :] - prod, axis=1)


def search_notch(psi_curve: PsiCurve, cfg: LoopConfig | SpectrumTable, sigma2_max: float,
                 box: SearchBox, n_max: int = DEFAULT_N_MAX, coarse: int = 20,
                 polish_iter: int = 200, chunk: int = 200) -> tuple[NotchParams, SearchReport]:
    """Grid search then Nelder-Mead polish for the notch with the largest worst-case margin.

    Parameters are searched in log space.  The returned point is checked with
    :func:`verify_bound`; it is reported feasible only if both the bound and
    the direct sigma_2 recomputation pass.
    """
    table = cfg if isinstance(cfg, SpectrumTable) else SpectrumTable.from_loop(
        cfg, psi_curve.grid, n_max)
    if not np.allclose(table.omegas, np.asarray(psi_curve.grid)):
        raise ValueError("Psi curve and spectrum table use different grids")
    psi_vals = table.psi(sigma2_max)
    lo, hi = box.lo, box.hi

    axes = [np.linspace(lo[i], hi[i], coarse) for i in range(3)]
    mesh = np.exp(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3))
    margins = np.concatenate([_min_margins(table, psi_vals, mesh[i:i + chunk])
                              for i in range(0, len(mesh), chunk)])
    k = int(np.argmax(margins))
    coarse_best = NotchParams(*mesh[k])
    coarse_margin = float(margins[k])
    evaluations = len(mesh)

    best_x, best_m = np.log(mesh[k]), coarse_margin
    if math.isfinite(coarse_margin):
        def objective(x):
            if np.any(x < lo) or np.any(x > hi):
                return math.inf
            return -float(_min_margins(table, psi_vals, np.exp(x)[None])[0])

        step = (hi - lo) / (coarse - 1)
        simplex = np.vstack([best_x] + [best_x + np.eye(3)[i] * step[i] * 0.5 for i in range(3)])
        simplex = np.clip(simplex, lo, hi)
        res = minimize(objective, best_x, method="Nelder-Mead",
                       options={"maxiter": polish_iter, "initial_simplex": simplex,
                                "fatol": 1e-4 * max(abs(coarse_margin), 1e-12),
                                "xatol": 1e-8})
        evaluations += int(res.nfev)
        if np.isfinite(res.fun) and -res.fun >= best_m:
            best_x, best_m = res.x, -float(res.fun)

    params = NotchParams(*np.exp(best_x))
    bound = verify_bound(table, notch(params), sigma2_max=sigma2_max)
    notes = []
    if not bound.feasible and coarse_margin >= 0:
        notes.append("polished point failed the bound check; kept the coarse optimum")
        params = coarse_best
        bound = verify_bound(table, notch(params), sigma2_max=sigma2_max)
    feasible = bound.feasible and bound.direct_ok
    if not feasible:
        notes.append(f"no feasible notch in box; best worst-case margin {bound.min_margin:.6g}")
    report = SearchReport(feasible, params, bound.min_margin, bound, coarse_best,
                          coarse_margin, evaluations, notes)
    return params, report
