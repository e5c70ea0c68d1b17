import json
import math

import numpy as np
import pytest

from resetkit.lti import eval_freq, invert
from resetkit.scenario import (BUNDLED, ScenarioError, bundled_scenario, load_scenario,
                               load_shaping, parse_scenario)
from resetkit.synth import HAND_TUNED_NOTCH, notch

from support import TWO_PI

MINIMAL = """\
plant: {num: [1.0], den: [1.0, 1.0]}
controller:
  pid: {kp: 2.0, f_i: 1.0, f_d: 5.0, f_t: 50.0, f_lf: 80.0}
"""


def test_bundled_scenarios_load():
    for name in BUNDLED:
        sc = load_scenario(bundled_scenario(name))
        assert sc.name == name
        assert sc.n_max == 61 and sc.sigma2_max == 0.15
        assert len(sc.grid) == 300
        assert sc.simulation.Ts == 5e-5 and sc.simulation.frequencies_hz == (28.0,)
        assert len(sc.digest) == 64
    with pytest.raises(KeyError):
        bundled_scenario("nope")


def test_linear_scenario_has_no_reset():
    assert load_scenario(bundled_scenario("c_l")).loop.element.is_linear
    assert not load_scenario(bundled_scenario("c_nl")).loop.element.is_linear


def test_frequencies_are_converted_from_hz():
    sc = load_scenario(bundled_scenario("c_nl"))
    w = np.asarray(sc.grid)
    assert w[0] == pytest.approx(TWO_PI * 1.0) and w[-1] == pytest.approx(TWO_PI * 1000.0)
    # the CgLp lead filter corner sits at f_l = 80 Hz
    post = sc.loop.c_pos
    zeros = np.roots(post.num)
    assert np.any(np.isclose(np.abs(zeros), TWO_PI * 80.0, rtol=1e-9))


def test_minimal_scenario_defaults():
    sc = parse_scenario(MINIMAL, "mini.yaml")
    assert sc.name == "mini" and sc.n_max == 61 and sc.sigma2_max is None
    assert sc.simulation.channel == "r" and sc.outputs is None
    assert sc.loop.element.is_linear


def test_digest_tracks_text():
    a = parse_scenario(MINIMAL).digest
    assert a == parse_scenario(MINIMAL).digest
    assert a != parse_scenario(MINIMAL + "n_max: 31\n").digest


@pytest.mark.parametrize("text,line,needle", [
    (MINIMAL.replace("kp: 2.0", "kp: -1"), 3, "controller.pid.kp: must be > 0, got -1"),
    (MINIMAL + "bogus: 1\n", 4, "unknown key 'bogus'"),
    (MINIMAL + "n_max: 30\n", 4, "n_max must be odd"),
    (MINIMAL + "grid: {lo_hz: 10, hi_hz: 1}\n", 4, "hi_hz must exceed lo_hz"),
    (MINIMAL + "simulation:\n  channel: y\n", 5, "channel must be"),
    (MINIMAL + "simulation:\n  frequencies_hz: [1, -2]\n", 5, "frequency must be > 0"),
    (MINIMAL.replace("[1.0, 1.0]", "[1.0, \"a\"]"), 1, "plant.den.1"),
    (MINIMAL + "shaping: {}\n", 4, "shaping needs"),
    ("plant: {num: [1], den: [1, 1]}\n", 1, "missing required section 'controller'"),
])
def test_errors_name_the_line(text, line, needle):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text, "x.yaml")
    assert needle in str(info.value)
    assert info.value.line == line
    assert str(info.value).startswith(f"x.yaml:{line}:")


def test_yaml_syntax_error():
    with pytest.raises(ScenarioError, match=r"x.yaml:2: YAML syntax error"):
        parse_scenario("plant: {num: [1]\ncontroller: [\n", "x.yaml")
    with pytest.raises(ScenarioError, match="empty"):
        parse_scenario("", "x.yaml")


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "absent.yaml")


def test_notch_shaping_section():
    text = MINIMAL + "shaping:\n  notch: {f_n: 27.5, Q1: 6.79, Q2: 2.38}\n"
    G, G_inv = parse_scenario(text).loop.shaping
    F = notch(HAND_TUNED_NOTCH)
    for w in (10.0, TWO_PI * 27.5, 1e4):
        assert eval_freq(G, w) == pytest.approx(eval_freq(F, w), rel=1e-12)
        assert eval_freq(G_inv, w) == pytest.approx(eval_freq(invert(F), w), rel=1e-12)


def test_load_shaping_from_design_fragment(tmp_path):
    F = notch(HAND_TUNED_NOTCH)
    frag = {"feasible": True, "notch": HAND_TUNED_NOTCH.to_dict(),
            "F": {"num": list(F.num), "den": list(F.den)},
            "F_inv": {"num": list(F.den), "den": list(F.num)}}
    p = tmp_path / "n.json"
    p.write_text(json.dumps(frag))
    G, G_inv = load_shaping(p)
    assert G.num == F.num and G_inv.num == F.den
    q = tmp_path / "n.yaml"
    q.write_text("notch: {omega_n: %r, Q1: 6.79, Q2: 2.38}\n" % (TWO_PI * 27.5))
    H, _ = load_shaping(q)
    assert eval_freq(H, 100.0) == pytest.approx(eval_freq(F, 100.0), rel=1e-12)
    bad = tmp_path / "bad.yaml"
    bad.write_text("other: 1\n")
    with pytest.raises(ScenarioError, match="needs 'F' or 'notch'"):
        load_shaping(bad)


def test_explicit_element_block():
    text = MINIMAL + """\
  element:
    A_r: [[-10.0]]
    B_r: [1.0]
    C_r: [10.0]
    A_rho: [0.0]
"""
    el = parse_scenario(text).loop.element
    assert not el.is_linear and el.A_r[0, 0] == -10.0
    with pytest.raises(ScenarioError, match="needs 'A_rho'"):
        parse_scenario(text.replace("    A_rho: [0.0]\n", ""), "x.yaml")
    assert math.isfinite(el.D_r)
