"""Discrete-time hybrid simulation of the reset control loop.

LTI blocks run as Tustin discretizations.  The reset element's flow is
discretized either with the trapezoidal rule (``flow="tustin"``, default) or
exactly for piecewise-linear input (``flow="foh"``).  Its physical state is
kept so that the jump ``x <- A_rho x`` applies to the true state: a sample
where ``e_r`` is exactly zero or has changed sign since the previous sample
triggers the jump, unless ``(A_rho - I) x = 0``.

The plant's Tustin image has direct feedthrough, so every sample solves the
resulting algebraic loop exactly (it is linear in the current output).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy import linalg, signal

from .cloop import DEFAULT_N_MAX, HarmonicSpectrum, LoopConfig
from .errors import NotSettledError
from .linalg import expm
from .lti import RationalTF
from .reset import ResetElement, base_linear_tf
from .robustness import sigma_p_timedomain

__all__ = [
    "InputDescriptor", "SimResult", "SpectrumResult", "simulate", "simulate_element",
    "simulate_lti_reference", "element_harmonics", "steady_harmonics", "harmonic_coefficients",
    "sigma2_measured", "cpsd", "snap_frequency", "SIGNALS",
]

SIGNALS = ("e", "e_r", "u_r", "u", "y")


@dataclass(frozen=True)
class InputDescriptor:
    """Sinusoidal exogenous input ``amplitude * sin(2 pi f t)`` on ``r`` or ``d_i``."""

    channel: str
    amplitude: float
    frequency_hz: float

    def __post_init__(self):
        if self.channel not in ("r", "d_i"):
            raise ValueError("channel must be 'r' or 'd_i'")
        if self.frequency_hz <= 0 and self.amplitude != 0:
            raise ValueError("frequency must be > 0")


@dataclass(frozen=True, eq=False)
class SimResult:
    sample_period: float
    e: np.ndarray
    e_r: np.ndarray
    u_r: np.ndarray
    u: np.ndarray
    y: np.ndarray
    reset_instants: np.ndarray
    input_descriptor: InputDescriptor
    settled: bool = False
    settle_metric: float = math.inf
    periods: float = 0.0
    orbit_periods: int = 0
    notes: tuple = ()

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.e)) * self.sample_period

    @property
    def samples_per_period(self) -> float:
        return 1.0 / (self.input_descriptor.frequency_hz * self.sample_period)

    def series(self, name: str) -> np.ndarray:
        if name not in SIGNALS:
            raise KeyError(name)
        return getattr(self, name)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    freqs: np.ndarray
    psd: np.ndarray
    cpsd: np.ndarray
    df: float

    @property
    def total_power(self) -> float:
        return float(self.cpsd[-1])

    @property
    def normalized(self) -> np.ndarray:
        return self.cpsd / self.cpsd[-1] if self.cpsd[-1] > 0 else self.cpsd

    def step_at(self, f_hz: float, normalized: bool = True) -> float:
        """Jump of the cumulative spectrum at the bin nearest ``f_hz``."""
        k = int(np.argmin(np.abs(self.freqs - f_hz)))
        c = self.normalized if normalized else self.cpsd
        return float(c[k] - (c[k - 1] if k > 0 else 0.0))


def snap_frequency(f_hz: float, Ts: float) -> float:
    """Nearest frequency whose period is an even number of samples.

    An even count keeps the sampled loop half-wave antisymmetric, so even
    harmonics stay at roundoff level instead of an O(Ts) artifact.
    """
    n = max(2, 2 * int(round(0.5 / (f_hz * Ts))))
    return 1.0 / (n * Ts)


# ---------------------------------------------------------------- realization

@dataclass
class _SS:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def n(self):
        return self.A.shape[0]


def _series_ss(a: _SS, b: _SS) -> _SS:
    """a then b."""
    n1, n2 = a.n, b.n
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = a.A
    A[n1:, :n1] = np.outer(b.B, a.C)
    A[n1:, n1:] = b.A
    B = np.concatenate([a.B, b.B * a.D])
    C = np.concatenate([b.D * a.C, b.C])
    return _SS(A, B, C, b.D * a.D)


def _ss_cont(tf: RationalTF) -> _SS:
    """Balanced continuous-time realization."""
    if not tf.is_proper:
        raise ValueError("improper block")
    if tf.is_zero:
        return _SS(np.zeros((0, 0)), np.zeros(0), np.zeros(0), 0.0)
    if tf.den_degree == 0:
        return _SS(np.zeros((0, 0)), np.zeros(0), np.zeros(0), tf.num[-1] / tf.den[0])
    A, B, C, D = signal.tf2ss(tf.num, tf.den)
    _, (scale, _) = linalg.matrix_balance(A, permute=False, separate=True)
    A = A * (1.0 / scale)[:, None] * scale[None, :]
    return _SS(A, B.ravel() / scale, C.ravel() * scale, float(D.item()))


def _discretize_block(tf: RationalTF, Ts: float, name: str) -> _SS:
    """Tustin image of the block in state-space form."""
    if not tf.is_proper:
        raise ValueError(f"block {name} is improper and cannot be simulated")
    c = _ss_cont(tf)
    if c.n == 0:
        return c
    ident = np.eye(c.n)
    lhs = ident - c.A * Ts / 2
    Bd = np.linalg.solve(lhs, c.B * Ts)
    Cd = np.linalg.solve(lhs.T, c.C)
    return _SS(np.linalg.solve(lhs, ident + c.A * Ts / 2), Bd, Cd, c.D + c.C @ Bd / 2)


def _reset_flow(el: ResetElement, Ts: float, flow: str):
    """``(Phi, N, M)`` with ``x_k = p_k + N e_k`` and ``p_{k+1} = Phi x_k + M e_k``."""
    A, B = el.A_r, el.B_r.ravel()
    n = el.n_states
    if flow == "tustin":
        lhs = np.eye(n) - A * Ts / 2
        Phi = np.linalg.solve(lhs, np.eye(n) + A * Ts / 2)
        N = np.linalg.solve(lhs, B * Ts / 2)
        return Phi, N, N.copy()
    if flow == "foh":
        aug = np.zeros((n + 2, n + 2))
        aug[:n, :n] = A * Ts
        aug[:n, n] = B * Ts
        aug[n, n + 1] = 1.0
        ex = expm(aug)
        Phi, g1, g2 = ex[:n, :n], ex[:n, n], ex[:n, n + 1]
        return Phi, g2, g1 - g2
    raise ValueError(f"unknown flow discretization {flow!r}")


# ----------------------------------------------------------- loop assembly

class _Loop:
    """Stacked linear update of the loop for the no-reset and reset cases."""

    N_OUT = 5

    def __init__(self, cfg: LoopConfig, Ts: float, flow: str, external_measurement: bool):
        self.pre = _discretize_block(cfg.pre, Ts, "C_pre")
        self.par = _discretize_block(cfg.c_par, Ts, "C_par")
        self.pos = _discretize_block(cfg.pos, Ts, "C_pos")
        self.G = _discretize_block(cfg.plant, Ts, "G")
        el = cfg.element
        self.el = el
        self.Phi_r, self.N_r, self.M_r = _reset_flow(el, Ts, flow)
        self.ext = external_measurement
        sizes = [self.pre.n, el.n_states, self.par.n, self.pos.n, self.G.n]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.n = int(self.offsets[-1])
        self.n_r = el.n_states
        self.mats = [self._probe(False), self._probe(True)]
        g = el.gammas
        self.gm1 = g - 1.0
        self.yhat_row = np.zeros(self.n)
        self.yhat_row[self.offsets[4]:] = self.G.C

    def _parts(self, X):
        o = self.offsets
        return [X[o[i]:o[i + 1]] for i in range(5)]

    def step(self, X, w, jump: bool):
        """One linear step; ``w = (r, d_i, measured_y)``."""
        r, d, m = w
        xa, p, xp, xo, xg = self._parts(X)
        pre, par, pos, G, el = self.pre, self.par, self.pos, self.G, self.el
        Aj = el.A_rho if jump else np.eye(self.n_r)
        CR = el.C_r.ravel()
        if self.ext:
            y_fb = m
        else:
            a = G.C @ xg + G.D * d + G.D * (pos.C @ xo + pos.D * (CR @ (Aj @ p) + par.C @ xp))
            K = G.D * pos.D * (CR @ (Aj @ self.N_r) + el.D_r + par.D)
            b = pre.C @ xa + pre.D * r
            y_fb = (a + K * b) / (1.0 + K * pre.D)
        e = r - y_fb
        e_r = pre.C @ xa + pre.D * e
        x_pre_jump = p + self.N_r * e_r
        x_r = Aj @ x_pre_jump
        u_r = CR @ x_r + el.D_r * e_r
        v = u_r + par.C @ xp + par.D * e_r
        u = pos.C @ xo + pos.D * v
        y = G.C @ xg + G.D * (u + d)
        Xn = np.concatenate([
            pre.A @ xa + pre.B * e,
            self.Phi_r @ x_r + self.M_r * e_r,
            par.A @ xp + par.B * e_r,
            pos.A @ xo + pos.B * v,
            G.A @ xg + G.B * (u + d),
        ])
        outs = np.concatenate([[e, e_r, u_r, u, y], x_pre_jump])
        return Xn, outs

    def _probe(self, jump: bool):
        n, n_out = self.n, self.N_OUT + self.n_r
        A = np.zeros((n, n))
        C = np.zeros((n_out, n))
        B = np.zeros((n, 3))
        D = np.zeros((n_out, 3))
        zero_w = np.zeros(3)
        for i in range(n):
            X = np.zeros(n)
            X[i] = 1.0
            A[:, i], C[:, i] = self.step(X, zero_w, jump)
        for j in range(3):
            w = np.zeros(3)
            w[j] = 1.0
            B[:, j], D[:, j] = self.step(np.zeros(n), w, jump)
        return A, B, C, D


@numba.njit(cache=True)
def _run_kernel(A0, B0, C0, D0, A1, B1, C1, D1, gm1, W, X, er_prev, yhat_row, q, n_out):
    K = W.shape[0]
    n = X.shape[0]
    n_r = gm1.shape[0]
    outs = np.empty((K, 6))
    flags = np.zeros(K, dtype=np.bool_)
    w = np.empty(3)
    o = np.empty(n_out)
    Xn = np.empty(n)
    for k in range(K):
        w[0] = W[k, 0]
        w[1] = W[k, 1]
        w[2] = W[k, 2]
        if q > 0.0:
            acc = 0.0
            for i in range(n):
                acc += yhat_row[i] * X[i]
            w[2] = q * np.round(acc / q)
        for i in range(n_out):
            acc = D0[i, 0] * w[0] + D0[i, 1] * w[1] + D0[i, 2] * w[2]
            for j in range(n):
                acc += C0[i, j] * X[j]
            o[i] = acc
        er = o[1]
        u_r_pre = o[2]
        jump = False
        if er == 0.0 or er * er_prev < 0.0:
            for i in range(n_r):
                if gm1[i] * o[5 + i] != 0.0:
                    jump = True
                    break
        if jump:
            for i in range(n_out):
                acc = D1[i, 0] * w[0] + D1[i, 1] * w[1] + D1[i, 2] * w[2]
                for j in range(n):
                    acc += C1[i, j] * X[j]
                o[i] = acc
            for i in range(n):
                acc = B1[i, 0] * w[0] + B1[i, 1] * w[1] + B1[i, 2] * w[2]
                for j in range(n):
                    acc += A1[i, j] * X[j]
                Xn[i] = acc
        else:
            for i in range(n):
                acc = B0[i, 0] * w[0] + B0[i, 1] * w[1] + B0[i, 2] * w[2]
                for j in range(n):
                    acc += A0[i, j] * X[j]
                Xn[i] = acc
        for i in range(n):
            X[i] = Xn[i]
        for i in range(5):
            outs[k, i] = o[i]
        outs[k, 5] = u_r_pre
        flags[k] = jump
        er_prev = o[1]
    return outs, flags, er_prev


def _sinusoid(k: np.ndarray, inp: InputDescriptor, Ts: float) -> np.ndarray:
    if inp.amplitude == 0:
        return np.zeros(len(k))
    spp = 1.0 / (inp.frequency_hz * Ts)
    N = int(round(spp))
    if abs(spp - N) < 1e-9 * spp:
        x = inp.amplitude * np.sin(2 * np.pi * ((k % N) / N))
        if N % 2 == 0:
            x[k % (N // 2) == 0] = 0.0
        return x
    return inp.amplitude * np.sin(2 * np.pi * inp.frequency_hz * Ts * k)


def _orbit(e: np.ndarray, N: int, block: int, max_mult: int, tol: float):
    """Smallest ``m`` such that the last ``block`` periods repeat ``m`` periods back.

    Returns ``(m, metric)``; ``m = 0`` when no multiple up to ``max_mult``
    qualifies, with ``metric`` the best relative RMS mismatch found.
    """
    B = block * N
    tail = e[-B:]
    ref = math.sqrt(float(np.mean(tail**2))) if len(e) >= B else 0.0
    best = math.inf
    for m in range(1, max_mult + 1):
        if len(e) < B + m * N:
            break
        if ref == 0:
            if not np.any(e[-B - m * N:]):
                return m, 0.0
            continue
        d = math.sqrt(float(np.mean((tail - e[-B - m * N:-m * N]) ** 2))) / ref
        if d < tol:
            return m, d
        best = min(best, d)
    return 0, best


def simulate(cfg: LoopConfig, inp: InputDescriptor, Ts: float = 5e-5,
             duration: Optional[float] = None, *, flow: str = "tustin",
             quantizer: float = 0.0, block_periods: int = 10, max_periods: int = 500,
             settle_tol: float = 1e-6, window_periods: int = 40,
             max_orbit: int = 10) -> SimResult:
    """Simulate the loop from zero initial conditions.

    With ``duration=None`` the run proceeds in blocks of ``block_periods``
    input periods until the last block of the error repeats to ``settle_tol``,
    then continues for at least ``window_periods`` more; after ``max_periods``
    without settling the result carries ``settled=False`` and a
    non-convergence note.

    Because resets can only fire on samples, the sampled loop sometimes locks
    into an orbit that repeats every ``m > 1`` input periods (the reset sample
    alternates).  Orbits with ``m <= max_orbit`` count as settled; ``m`` is
    kept in ``orbit_periods`` and extraction windows are whole multiples of it.

    ``quantizer > 0`` rounds the measured plant output to that resolution.
    """
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    loop = _Loop(cfg, Ts, flow, external_measurement=quantizer > 0)
    (A0, B0, C0, D0), (A1, B1, C1, D1) = loop.mats
    n_out = C0.shape[0]
    X = np.zeros(loop.n)
    er_prev = 0.0
    spp = 1.0 / (inp.frequency_hz * Ts) if inp.frequency_hz > 0 else math.inf
    N = int(round(spp)) if math.isfinite(spp) else 0
    integer_period = N > 0 and abs(spp - N) < 1e-9 * spp

    outs, flags = [], []
    done = 0

    def advance(count):
        nonlocal X, er_prev, done
        k = np.arange(done, done + count)
        W = np.zeros((count, 3))
        W[:, 0 if inp.channel == "r" else 1] = _sinusoid(k, inp, Ts)
        o, f, er_prev = _run_kernel(A0, B0, C0, D0, A1, B1, C1, D1, loop.gm1, W, X,
                                    er_prev, loop.yhat_row, float(quantizer), n_out)
        outs.append(o)
        flags.append(f)
        done += count

    notes = []
    m, metric = 0, math.inf

    def check():
        e = np.concatenate([o[:, 0] for o in outs]) if len(outs) > 1 else outs[0][:, 0]
        return _orbit(e, N, block_periods, max_orbit, settle_tol)

    if duration is not None:
        total = int(math.ceil(duration / Ts - 1e-9))
        if math.isfinite(spp) and total < 50 * spp:
            notes.append("duration shorter than 50 input periods")
        advance(total)
        if integer_period:
            m, metric = check()
    else:
        if not integer_period:
            raise ValueError("adaptive simulation needs a whole number of samples per period; "
                             "use snap_frequency()")
        periods = 0
        while periods < max_periods:
            advance(block_periods * N)
            periods += block_periods
            m, metric = check()
            if m:
                break
        if m:
            advance(m * math.ceil(window_periods / m) * N)
            m, metric = check()
    settled = m > 0
    if duration is None or integer_period:
        if settled and m > 1:
            notes.append(f"steady state repeats every {m} input periods "
                         "(sample-aligned reset instants alternate)")
        if not settled and duration is None:
            if metric <= 2 * math.pi * inp.frequency_hz * Ts:
                notes.append(f"reset instants jitter by one sample; the motion repeats only "
                             f"to the sampling floor (metric {metric:.3g})")
            else:
                notes.append(f"no periodic steady state after {periods} periods "
                             f"(metric {metric:.3g}); closed-loop convergence assumption "
                             "likely violated")
    allout = np.concatenate(outs)
    allflags = np.concatenate(flags)
    cols = [np.ascontiguousarray(allout[:, i]) for i in range(5)]
    for c in cols:
        c.setflags(write=False)
    return SimResult(Ts, *cols, reset_instants=np.flatnonzero(allflags),
                     input_descriptor=inp, settled=settled, settle_metric=metric,
                     periods=len(allout) / spp if math.isfinite(spp) else 0.0,
                     orbit_periods=m, notes=tuple(notes))


def simulate_element(el: ResetElement, omega: float, amplitude: float = 1.0,
                     samples_per_period: int = 2000, periods: int = 60,
                     flow: str = "foh") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Drive an isolated reset element with ``amplitude sin(omega t)``.

    Returns ``(e_r, u_r, reset_flags)``.  An even ``samples_per_period`` puts
    the input's zero crossings exactly on samples.  At reset samples ``u_r``
    holds the mean of the pre- and post-jump values, which keeps rectangle-rule
    Fourier sums second-order accurate across the discontinuity.
    """
    Ts = 2 * np.pi / omega / samples_per_period
    Phi, Nr, Mr = _reset_flow(el, Ts, flow)
    n = el.n_states
    CR = el.C_r.ravel()
    gm1 = el.gammas - 1.0
    ident = np.eye(n)

    def mats(Aj):
        A = Phi @ Aj
        B = np.zeros((n, 3))
        B[:, 0] = Phi @ Aj @ Nr + Mr
        C = np.zeros((5 + n, n))
        D = np.zeros((5 + n, 3))
        C[0], D[0, 0] = 0.0, 1.0            # e
        D[1, 0] = 1.0                        # e_r
        C[2] = CR @ Aj
        D[2, 0] = CR @ Aj @ Nr + el.D_r      # u_r
        C[5:] = ident
        D[5:, 0] = Nr                        # pre-jump state
        return A, B, C, D

    A0, B0, C0, D0 = mats(ident)
    A1, B1, C1, D1 = mats(el.A_rho)
    inp = InputDescriptor("r", amplitude, 1.0 / (samples_per_period * Ts))
    k = np.arange(samples_per_period * periods)
    W = np.zeros((len(k), 3))
    W[:, 0] = _sinusoid(k, inp, Ts)
    outs, flags, _ = _run_kernel(A0, B0, C0, D0, A1, B1, C1, D1, gm1, W, np.zeros(n),
                                 0.0, np.zeros(n), 0.0, 5 + n)
    u_r = np.where(flags, 0.5 * (outs[:, 2] + outs[:, 5]), outs[:, 2])
    return outs[:, 1].copy(), u_r, flags


def element_harmonics(el: ResetElement, omega: float, orders=(1, 3, 5), amplitude: float = 1.0,
                      samples_per_period: Optional[int] = None, window_periods: int = 4,
                      settle_tol: float = 1e-10) -> np.ndarray:
    """Measured ``H_n`` of an isolated element: Fourier coefficient of ``u_r`` over input amplitude.

    The sample count per period defaults to at least 2000 and at least enough
    to put 50 samples inside the element's fastest time constant.  The fast
    transient after each jump carries the harmonic content, and the flow's
    second-order error there scales with ``(Ts * |lambda|)**2``.  The lead-in
    is long enough for the per-half-period contraction ``A_rho exp(A_r pi/omega)``
    to shrink the initial transient below ``settle_tol``.
    """
    fast = float(np.max(np.abs(np.linalg.eigvals(el.A_r)))) if el.n_states else 0.0
    if samples_per_period is None:
        samples_per_period = max(2000, 2 * math.ceil(50 * math.pi * fast / omega))
    if samples_per_period % 2:
        raise ValueError("samples_per_period must be even")
    rho = float(np.max(np.abs(np.linalg.eigvals(el.A_rho @ expm(el.A_r * math.pi / omega)))))
    lead = 10
    if 0 < rho < 1:
        lead = max(lead, math.ceil(0.5 * math.log(settle_tol) / math.log(rho)))
    _, u_r, _ = simulate_element(el, omega, amplitude, samples_per_period,
                                 lead + window_periods)
    x = u_r[-window_periods * samples_per_period:]
    X = np.fft.rfft(x) / len(x)
    return 2j * X[np.asarray(orders) * window_periods] / amplitude


def _parallel_ss(a: _SS, b: _SS) -> _SS:
    A = np.zeros((a.n + b.n, a.n + b.n))
    A[:a.n, :a.n] = a.A
    A[a.n:, a.n:] = b.A
    return _SS(A, np.concatenate([a.B, b.B]), np.concatenate([a.C, b.C]), a.D + b.D)


def simulate_lti_reference(cfg: LoopConfig, inp: InputDescriptor, Ts: float,
                           n_samples: int) -> np.ndarray:
    """Error signal of the base-linear loop from an independent realization.

    The loop is closed in continuous time on controllable-canonical block
    realizations and then mapped with the bilinear transform as one system,
    so it shares no code with the hybrid kernel.
    """
    K = _series_ss(_series_ss(_ss_cont(cfg.pre),
                              _parallel_ss(_ss_cont(base_linear_tf(cfg.element)),
                                           _ss_cont(cfg.c_par))),
                   _ss_cont(cfg.pos))
    P = _ss_cont(cfg.plant)
    # e = r - y, u = K e, y = P (u + d); solve the feedthrough loop
    den = 1.0 + K.D * P.D
    if den == 0:
        raise ValueError("ill-posed feedback loop")
    nk, n = K.n, K.n + P.n
    # y = (P.C xg + P.D (K.C xk + K.D r + d)) / den
    cy = np.concatenate([P.D * K.C, P.C]) / den
    dy = np.array([P.D * K.D, P.D]) / den          # columns: r, d
    ce, de = -cy, np.array([1.0, 0.0]) - dy
    A = np.zeros((n, n))
    B = np.zeros((n, 2))
    A[:nk, :nk] = K.A
    A[:nk] += np.outer(K.B, ce)
    B[:nk] = np.outer(K.B, de)
    cu = np.concatenate([K.C, np.zeros(P.n)]) + K.D * ce
    du = K.D * de + np.array([0.0, 1.0])
    A[nk:, nk:] = P.A
    A[nk:] += np.outer(P.B, cu)
    B[nk:] = np.outer(P.B, du)
    _, (scale, _) = linalg.matrix_balance(A, permute=False, separate=True)
    A = A * (1.0 / scale)[:, None] * scale[None, :]
    B = B / scale[:, None]
    ce = ce * scale
    Ad, Bd, Cd, Dd, _ = signal.cont2discrete((A, B, ce[None, :], de[None, :]), Ts,
                                             method="bilinear")
    x = _sinusoid(np.arange(n_samples), inp, Ts)
    U = np.zeros((n_samples, 2))
    U[:, 0 if inp.channel == "r" else 1] = x
    _, yout, _ = signal.dlsim((Ad, Bd, Cd, Dd, Ts), U)
    return yout.ravel()


# ------------------------------------------------------------ post-processing

def _window(res: SimResult, f0: float, periods: Optional[int], require_settled: bool = True):
    if require_settled and not res.settled:
        raise NotSettledError("simulation has not settled; " + "; ".join(res.notes))
    spp = 1.0 / (f0 * res.sample_period)
    N = int(round(spp))
    if abs(spp - N) > 1e-9 * spp:
        raise ValueError(f"{f0} Hz is not a whole number of samples per period "
                         f"({spp:.6f}); use snap_frequency()")
    total = len(res.e)
    avail = total // N
    m = max(res.orbit_periods, 1)
    if periods is None:
        K = min(m * math.ceil(40 / m), avail // m * m)
    else:
        K = periods
        if K % m:
            raise ValueError(f"window of {K} periods is not a multiple of the "
                             f"{m}-period steady orbit")
    if K < 1 or K > avail:
        raise ValueError("window does not fit in the simulated record")
    start = (total - K * N) // N * N
    return start, start + K * N, K, N


def harmonic_coefficients(res: SimResult, f0: float, n_max: int = DEFAULT_N_MAX,
                          signal_name: str = "e", periods: Optional[int] = None,
                          require_settled: bool = True) -> np.ndarray:
    """Complex ``2j c_n / amplitude`` for orders ``0..n_max`` over the steady window.

    With ``x(t) = sum |C_n| sin(n w t + arg C_n)`` the entry at ``n`` is ``C_n``.
    ``require_settled=False`` accepts a run that never became exactly periodic;
    the window then averages over whatever aperiodic residue remains.
    """
    a, b, K, N = _window(res, f0, periods, require_settled)
    x = res.series(signal_name)[a:b]
    X = np.fft.rfft(x) / len(x)
    idx = np.arange(n_max + 1) * K
    if idx[-1] >= len(X):
        raise ValueError("n_max exceeds the Nyquist limit of the record")
    amp = res.input_descriptor.amplitude
    return 2j * X[idx] / amp


def steady_harmonics(res: SimResult, f0: float, n_max: int = DEFAULT_N_MAX,
                     signal_name: str = "e", periods: Optional[int] = None) -> HarmonicSpectrum:
    c = harmonic_coefficients(res, f0, n_max, signal_name, periods)
    return HarmonicSpectrum(2 * math.pi * f0, {n: complex(c[n]) for n in range(1, n_max + 1, 2)})


def sigma2_measured(res: SimResult, f0: float, periods: Optional[int] = None) -> float:
    """Time-domain sigma_2 of the steady error against its first harmonic."""
    a, b, _, _ = _window(res, f0, periods)
    e = res.e[a:b]
    c1 = harmonic_coefficients(res, f0, 1, periods=periods)[1] * res.input_descriptor.amplitude
    t = np.arange(a, b) * res.sample_period
    e1 = np.imag(c1 * np.exp(2j * np.pi * f0 * t))
    return sigma_p_timedomain(e, e1, 2.0, res.sample_period)


def cpsd(res: SimResult, window_len: int, overlap: int = 0, signal_name: str = "e",
         start: Optional[int] = None, window: str = "boxcar") -> SpectrumResult:
    """Averaged-periodogram PSD and its running integral.

    By default only the settled tail is used (the last 40 periods) when the
    run settled, else the whole record.
    """
    x = res.series(signal_name)
    if start is None:
        if res.settled:
            f0 = res.input_descriptor.frequency_hz
            start = _window(res, f0, None)[0]
        else:
            start = 0
    x = x[start:]
    if len(x) < 2 * window_len:
        raise ValueError(f"record of {len(x)} samples is shorter than 2 x window_len")
    fs = 1.0 / res.sample_period
    f, p = signal.welch(x, fs=fs, window=window, nperseg=window_len, noverlap=overlap,
                        detrend=False, scaling="density", return_onesided=True)
    df = f[1] - f[0]
    return SpectrumResult(f, p, np.cumsum(p) * df, df)
