"""Shared generators and fixtures-in-code for the test suite."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from hypothesis import strategies as st

from resetkit.lti import RationalTF, series
from resetkit.reset import ResetElement, check_assumption1
from resetkit.scenario import bundled_scenario, load_scenario

TWO_PI = 2 * math.pi


@lru_cache(maxsize=None)
def scenario(name: str):
    return load_scenario(bundled_scenario(name))


def random_reset_element(rng: np.random.Generator, n_states: int | None = None,
                         pole_hz=(0.5, 1000.0)) -> ResetElement:
    """Stable 1- or 2-state element that passes the reset-convergence check."""
    lo, hi = np.log(TWO_PI * pole_hz[0]), np.log(TWO_PI * pole_hz[1])
    while True:
        n = int(rng.integers(1, 3)) if n_states is None else n_states
        if n == 1:
            A = np.array([[-math.exp(rng.uniform(lo, hi))]])
        elif rng.random() < 0.5:
            p = -np.exp(rng.uniform(lo, hi, size=2))
            T = rng.normal(size=(2, 2))
            A = T @ np.diag(p) @ np.linalg.inv(T)
        else:
            wn = math.exp(rng.uniform(lo, hi))
            z = rng.uniform(0.2, 0.9)
            A = np.array([[0.0, 1.0], [-wn * wn, -2 * z * wn]])
        el = ResetElement(A, rng.normal(size=n), rng.normal(size=n), float(rng.normal()),
                          rng.uniform(-0.9, 0.9, size=n))
        if np.linalg.cond(A) < 1e8 and check_assumption1(el).holds:
            return el


def stable_tf(rng: np.random.Generator, degree: int, w_range=(1.0, 1e4),
              proper: str = "biproper") -> RationalTF:
    """Random real TF with stable poles and, for biproper, stable zeros too."""
    def poly(deg):
        c = np.array([1.0])
        k = 0
        while k < deg:
            if deg - k >= 2 and rng.random() < 0.5:
                wn = math.exp(rng.uniform(*np.log(w_range)))
                z = rng.uniform(0.05, 1.5)
                c = np.polymul(c, [1.0, 2 * z * wn, wn * wn])
                k += 2
            else:
                c = np.polymul(c, [1.0, math.exp(rng.uniform(*np.log(w_range)))])
                k += 1
        return c

    num_deg = degree if proper == "biproper" else int(rng.integers(0, degree))
    gain = math.exp(rng.uniform(-2, 2)) * (1 if rng.random() < 0.5 else -1)
    return RationalTF(gain * poly(num_deg), poly(degree))


@st.composite
def biproper_tfs(draw, max_degree: int = 4):
    seed = draw(st.integers(0, 2**32 - 1))
    deg = draw(st.integers(1, max_degree))
    return stable_tf(np.random.default_rng(seed), deg)


@st.composite
def proper_tfs(draw, max_degree: int = 4):
    seed = draw(st.integers(0, 2**32 - 1))
    deg = draw(st.integers(1, max_degree))
    kind = draw(st.sampled_from(["biproper", "strict"]))
    return stable_tf(np.random.default_rng(seed), deg, proper=kind)


omegas = st.floats(1e-2, 1e4, allow_nan=False, allow_infinity=False)


def chain(*tfs) -> RationalTF:
    out = tfs[0]
    for t in tfs[1:]:
        out = series(out, t)
    return out


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
