"""Scenario files: YAML description of a loop, grid and simulation settings.

Schema (all keys optional unless noted)::

    name: c_nl
    plant: {num: [...], den: [...]}          # required, rad/s coefficients
    controller:                               # required
      pid:  {kp, f_i, f_d, f_t, f_lf}         # Hz
      cglp: {f_l, f_f, a_rho}                 # Hz
      # or explicit blocks (rad/s coefficients), each overriding the above
      c_pre: {num, den}
      c_par: {num, den}
      c_pos: {num, den}
      element: {A_r, B_r, C_r, D_r, A_rho}
    shaping:
      notch: {f_n, Q1, Q2}                    # Hz
      # or
      F: {num, den}
      F_inv: {num, den}                       # defaults to the inverse of F
    grid: {lo_hz: 1, hi_hz: 1000, points: 300}
    n_max: 61
    sigma2_max: 0.15
    simulation: {Ts: 5.0e-5, amplitude: 1.0, frequencies_hz: [28],
                 channel: r, window_periods: 10, quantizer: 0.0}
    outputs: out/c_nl

With ``pid`` and ``cglp`` the controller is ``C_pre = 1``, ``C_par = 0``,
``C_pos = k_c C_PID C_c`` around the CgLp reset element.  With ``pid``
alone the loop is linear: the reset element is a non-resetting unit
feedthrough and ``C_pos = C_PID``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .cloop import DEFAULT_N_MAX, LoopConfig
from .lti import ONE, ZERO, FrequencyGrid, RationalTF, invert, pid, series
from .reset import ResetElement, build_cglp
from .synth import NotchParams, notch

__all__ = ["Scenario", "SimulationSpec", "ScenarioError", "load_scenario",
           "parse_scenario", "load_shaping", "bundled_scenario", "BUNDLED"]

TWO_PI = 2.0 * math.pi
BUNDLED = ("c_l", "c_nl")

_TOP_KEYS = {"name", "plant", "controller", "shaping", "grid", "n_max", "sigma2_max",
             "simulation", "outputs", "description"}


class ScenarioError(ValueError):
    """Invalid scenario, with the source location when known."""

    def __init__(self, message: str, source: str = "<scenario>", line: Optional[int] = None,
                 path: tuple = ()):
        self.message, self.source, self.line, self.path = message, source, line, path
        where = source if line is None else f"{source}:{line}"
        key = ".".join(str(p) for p in path)
        super().__init__(f"{where}: {key + ': ' if key else ''}{message}")


@dataclass(frozen=True)
class SimulationSpec:
    Ts: float = 5e-5
    amplitude: float = 1.0
    frequencies_hz: tuple = (28.0,)
    channel: str = "r"
    window_periods: int = 10
    quantizer: float = 0.0


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    loop: LoopConfig
    grid: FrequencyGrid
    n_max: int = DEFAULT_N_MAX
    sigma2_max: Optional[float] = None
    simulation: SimulationSpec = field(default_factory=SimulationSpec)
    outputs: Optional[str] = None
    source: str = "<scenario>"
    digest: str = ""


class _Ctx:
    """Tracks YAML node positions so errors can name a line."""

    def __init__(self, source: str, marks: dict):
        self.source, self.marks = source, marks

    def fail(self, path: tuple, message: str):
        p = tuple(path)
        while p and p not in self.marks:
            p = p[:-1]
        mark = self.marks.get(p)
        raise ScenarioError(message, self.source, None if mark is None else mark + 1, tuple(path))


def _collect_marks(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value if isinstance(k, yaml.ScalarNode) else str(k.start_mark)
            _collect_marks(v, path + (key,), out)
            out[path + (key,)] = k.start_mark.line
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _collect_marks(v, path + (i,), out)
    return out


def _number(ctx, d, key, path, *, positive=False, default=None, integer=False):
    if key not in d:
        if default is not None:
            return default
        ctx.fail(path, f"missing required key '{key}'")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path + (key,), f"expected a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        ctx.fail(path + (key,), f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        ctx.fail(path + (key,), "must be finite")
    if positive and not v > 0:
        ctx.fail(path + (key,), f"must be > 0, got {v!r}")
    return int(v) if integer else float(v)


def _mapping(ctx, d, path, allowed=None):
    if not isinstance(d, dict):
        ctx.fail(path, f"expected a mapping, got {type(d).__name__}")
    if allowed is not None:
        for k in d:
            if k not in allowed:
                ctx.fail(path + (k,), f"unknown key '{k}' (allowed: {', '.join(sorted(allowed))})")
    return d


def _coeffs(ctx, v, path):
    if not isinstance(v, list) or not v:
        ctx.fail(path, "expected a nonempty list of numbers")
    for i, c in enumerate(v):
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            ctx.fail(path + (i,), f"expected a finite number, got {c!r}")
    return [float(c) for c in v]


def _tf(ctx, d, path) -> RationalTF:
    _mapping(ctx, d, path, {"num", "den"})
    for k in ("num", "den"):
        if k not in d:
            ctx.fail(path, f"transfer function needs '{k}'")
    try:
        return RationalTF(_coeffs(ctx, d["num"], path + ("num",)),
                          _coeffs(ctx, d["den"], path + ("den",)))
    except ValueError as exc:
        ctx.fail(path, str(exc))


def _matrix(ctx, v, path, shape_hint):
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        ctx.fail(path, f"expected a numeric {shape_hint}")
    if not np.all(np.isfinite(arr)):
        ctx.fail(path, "entries must be finite")
    return arr


def _element(ctx, d, path) -> ResetElement:
    _mapping(ctx, d, path, {"A_r", "B_r", "C_r", "D_r", "A_rho"})
    for k in ("A_r", "B_r", "C_r", "A_rho"):
        if k not in d:
            ctx.fail(path, f"reset element needs '{k}'")
    A = _matrix(ctx, d["A_r"], path + ("A_r",), "square matrix")
    B = _matrix(ctx, d["B_r"], path + ("B_r",), "vector")
    C = _matrix(ctx, d["C_r"], path + ("C_r",), "vector")
    rho = _matrix(ctx, d["A_rho"], path + ("A_rho",), "diagonal vector")
    D = _number(ctx, d, "D_r", path, default=0.0)
    try:
        return ResetElement(A, B, C, D, rho)
    except ValueError as exc:
        ctx.fail(path, str(exc))


def _controller(ctx, d, path):
    d = _mapping(ctx, d, path, {"pid", "cglp", "c_pre", "c_par", "c_pos", "element"})
    c_pre, c_par, c_pos, element = ONE, ZERO, None, None
    if "pid" in d:
        p = _mapping(ctx, d["pid"], path + ("pid",), {"kp", "f_i", "f_d", "f_t", "f_lf"})
        pp = path + ("pid",)
        c_pos = pid(_number(ctx, p, "kp", pp, positive=True),
                    *(TWO_PI * _number(ctx, p, k, pp, positive=True)
                      for k in ("f_i", "f_d", "f_t", "f_lf")))
    if "cglp" in d:
        c = _mapping(ctx, d["cglp"], path + ("cglp",), {"f_l", "f_f", "a_rho"})
        cp = path + ("cglp",)
        try:
            design = build_cglp(TWO_PI * _number(ctx, c, "f_l", cp, positive=True),
                                TWO_PI * _number(ctx, c, "f_f", cp, positive=True),
                                _number(ctx, c, "a_rho", cp, default=0.0))
        except ValueError as exc:
            ctx.fail(cp, str(exc))
        element = design.element
        c_pos = design.post_filter if c_pos is None else series(c_pos, design.post_filter)
    if "c_pre" in d:
        c_pre = _tf(ctx, d["c_pre"], path + ("c_pre",))
    if "c_par" in d:
        c_par = _tf(ctx, d["c_par"], path + ("c_par",))
    if "c_pos" in d:
        c_pos = _tf(ctx, d["c_pos"], path + ("c_pos",))
    if "element" in d:
        element = _element(ctx, d["element"], path + ("element",))
    if element is None:
        # non-resetting unit feedthrough: the loop is linear
        element = ResetElement([[0.0]], [0.0], [0.0], 1.0, [1.0])
    return c_pre, c_par, ONE if c_pos is None else c_pos, element


def _shaping(ctx, d, path):
    d = _mapping(ctx, d, path, {"notch", "F", "F_inv"})
    if "notch" in d:
        if "F" in d:
            ctx.fail(path, "give either 'notch' or 'F', not both")
        n = _mapping(ctx, d["notch"], path + ("notch",), {"f_n", "Q1", "Q2", "omega_n"})
        np_ = path + ("notch",)
        if "omega_n" in n:
            wn = _number(ctx, n, "omega_n", np_, positive=True)
        else:
            wn = TWO_PI * _number(ctx, n, "f_n", np_, positive=True)
        F = notch(NotchParams(wn, _number(ctx, n, "Q1", np_, positive=True),
                              _number(ctx, n, "Q2", np_, positive=True)))
    elif "F" in d:
        F = _tf(ctx, d["F"], path + ("F",))
    else:
        ctx.fail(path, "shaping needs 'notch' or 'F'")
    if "F_inv" in d:
        F_inv = _tf(ctx, d["F_inv"], path + ("F_inv",))
    else:
        try:
            F_inv = invert(F)
        except ZeroDivisionError as exc:
            ctx.fail(path, str(exc))
    return F, F_inv


def _simulation(ctx, d, path) -> SimulationSpec:
    d = _mapping(ctx, d, path, {"Ts", "amplitude", "frequencies_hz", "channel",
                                "window_periods", "quantizer"})
    freqs = d.get("frequencies_hz", [28.0])
    if not isinstance(freqs, list):
        freqs = [freqs]
    for i, f in enumerate(freqs):
        if isinstance(f, bool) or not isinstance(f, (int, float)) or not f > 0:
            ctx.fail(path + ("frequencies_hz", i), f"frequency must be > 0, got {f!r}")
    channel = d.get("channel", "r")
    if channel not in ("r", "d_i"):
        ctx.fail(path + ("channel",), f"channel must be 'r' or 'd_i', got {channel!r}")
    return SimulationSpec(
        Ts=_number(ctx, d, "Ts", path, positive=True, default=5e-5),
        amplitude=_number(ctx, d, "amplitude", path, positive=True, default=1.0),
        frequencies_hz=tuple(float(f) for f in freqs),
        channel=channel,
        window_periods=_number(ctx, d, "window_periods", path, positive=True, default=10,
                               integer=True),
        quantizer=_number(ctx, d, "quantizer", path, default=0.0),
    )


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        msg = getattr(exc, "problem", None) or str(exc)
        raise ScenarioError(f"YAML syntax error: {msg}", source,
                            None if mark is None else mark.line + 1) from None
    if node is None:
        raise ScenarioError("empty scenario", source)
    ctx = _Ctx(source, _collect_marks(node))
    data = _mapping(ctx, data, (), _TOP_KEYS)
    for k in ("plant", "controller"):
        if k not in data:
            ctx.fail((), f"missing required section '{k}'")

    plant = _tf(ctx, data["plant"], ("plant",))
    c_pre, c_par, c_pos, element = _controller(ctx, data["controller"], ("controller",))
    shaping = _shaping(ctx, data["shaping"], ("shaping",)) if "shaping" in data else None

    g = _mapping(ctx, data.get("grid", {}), ("grid",), {"lo_hz", "hi_hz", "points"})
    lo = _number(ctx, g, "lo_hz", ("grid",), positive=True, default=1.0)
    hi = _number(ctx, g, "hi_hz", ("grid",), positive=True, default=1000.0)
    pts = _number(ctx, g, "points", ("grid",), positive=True, default=300, integer=True)
    if not hi > lo:
        ctx.fail(("grid",), "hi_hz must exceed lo_hz")

    n_max = _number(ctx, data, "n_max", (), positive=True, default=DEFAULT_N_MAX, integer=True)
    if n_max % 2 == 0:
        ctx.fail(("n_max",), f"n_max must be odd, got {n_max}")
    sigma2_max = None
    if "sigma2_max" in data:
        sigma2_max = _number(ctx, data, "sigma2_max", ())
        if sigma2_max < 0:
            ctx.fail(("sigma2_max",), "must be >= 0")
    sim = _simulation(ctx, data.get("simulation", {}), ("simulation",))
    outputs = data.get("outputs")
    if outputs is not None and not isinstance(outputs, str):
        ctx.fail(("outputs",), "expected a directory path")
    name = str(data.get("name", Path(source).stem))

    loop = LoopConfig(plant, element, c_pre, c_par, c_pos, shaping)
    return Scenario(name, loop, FrequencyGrid.logspace_hz(lo, hi, pts), n_max, sigma2_max,
                    sim, outputs, source, hashlib.sha256(text.encode()).hexdigest())


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(p)) from None
    return parse_scenario(text, str(p))


def bundled_scenario(name: str) -> Path:
    if name not in BUNDLED:
        raise KeyError(name)
    return Path(__file__).parent / "scenarios" / f"{name}.yaml"


def load_shaping(path) -> tuple[RationalTF, RationalTF]:
    """Read a shaping pair from a file holding ``notch`` or ``F``/``F_inv`` keys.

    The JSON fragment written by ``design-notch`` qualifies (JSON is YAML).
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except OSError as exc:
        raise ScenarioError(f"cannot read filter: {exc.strerror}", str(p)) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError("syntax error", str(p), None if mark is None else mark.line + 1) from None
    if node is None:
        raise ScenarioError("empty filter file", str(p))
    ctx = _Ctx(str(p), _collect_marks(node))
    data = _mapping(ctx, data, ())
    if "F" in data:
        sub = {k: data[k] for k in ("F", "F_inv") if k in data}
    elif "notch" in data:
        n = dict(data["notch"])
        sub = {"notch": n}
    else:
        ctx.fail((), "filter file needs 'F' or 'notch'")
    return _shaping(ctx, sub, ())
