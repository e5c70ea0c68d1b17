"""Command-line front end: ``resetkit <subcommand> --scenario <file>``.

Exit status: 0 success, 1 infeasible design or failed validation, 2 usage
error, 3 scenario/config error, 4 numerical error, 5 simulation did not
settle.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cloop import SweepError, loop_harmonics, spectrum_sweep
from .errors import AssumptionViolation, DegenerateSpectrumError, NotSettledError
from .export import sha256_file, write_csv, write_json
from .lti import FrequencyGrid
from .reset import check_assumption1, hosidf_harmonics
from .robustness import PsiCurve, SpectrumTable, reconstruct, sigma_p_timedomain, verify_bound
from .scenario import BUNDLED, Scenario, ScenarioError, bundled_scenario, load_scenario, load_shaping
from .sim import (InputDescriptor, cpsd, sigma2_measured, simulate, element_harmonics,
                  simulate_lti_reference, snap_frequency, steady_harmonics)
from .synth import SearchBox, random_shaping_filter, search_notch

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_UNSETTLED = range(6)
OUT_ENV = "RESETKIT_OUT"
DEFAULT_SIGMA2_MAX = 0.15


class _Run:
    """Resolved scenario plus overrides and the files written so far."""

    def __init__(self, args):
        self.args = args
        src = args.scenario
        path = bundled_scenario(src) if src in BUNDLED and not Path(src).is_file() else Path(src)
        sc = load_scenario(path)
        overrides = {}
        if args.n_max is not None:
            if args.n_max < 1 or args.n_max % 2 == 0:
                raise ScenarioError(f"--n-max must be an odd positive integer, got {args.n_max}",
                                    "command line")
            sc = dataclasses.replace(sc, n_max=args.n_max)
            overrides["n_max"] = args.n_max
        if args.ts is not None:
            if not args.ts > 0:
                raise ScenarioError("--ts must be > 0", "command line")
            sc = dataclasses.replace(sc, simulation=dataclasses.replace(sc.simulation, Ts=args.ts))
            overrides["Ts"] = args.ts
        if args.sigma2_max is not None:
            if args.sigma2_max < 0:
                raise ScenarioError("--sigma2-max must be >= 0", "command line")
            sc = dataclasses.replace(sc, sigma2_max=args.sigma2_max)
            overrides["sigma2_max"] = args.sigma2_max
        if args.grid is not None:
            sc = dataclasses.replace(sc, grid=_parse_grid(args.grid))
            overrides["grid"] = args.grid
        self.filter_digest = ""
        if args.with_filter is not None:
            F, F_inv = load_shaping(args.with_filter)
            sc = dataclasses.replace(sc, loop=sc.loop.with_shaping(F, F_inv))
            self.filter_digest = sha256_file(args.with_filter)
            overrides["with_filter"] = self.filter_digest
        if args.seed is not None:
            overrides["seed"] = args.seed
        self.scenario: Scenario = sc
        self.overrides = overrides
        self.out = self._out_dir()
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def _out_dir(self) -> Path:
        if self.args.out:
            return Path(self.args.out)
        if self.scenario.outputs:
            return Path(self.scenario.outputs)
        return Path(os.environ.get(OUT_ENV, "resetkit-out")) / self.scenario.name

    @property
    def sigma2_max(self) -> float:
        s = self.scenario.sigma2_max
        return DEFAULT_SIGMA2_MAX if s is None else s

    def csv(self, name, header, cols):
        self.written.append(write_csv(self.out / name, header, cols))

    def json(self, name, obj):
        self.written.append(write_json(self.out / name, obj))

    def manifest(self, subcommand: str, status: int):
        h = hashlib.sha256()
        h.update(self.scenario.digest.encode())
        h.update(json.dumps(self.overrides, sort_keys=True).encode())
        write_json(self.out / f"{subcommand}.manifest.json", {
            "subcommand": subcommand,
            "toolkit_version": __version__,
            "scenario": self.scenario.name,
            "scenario_sha256": self.scenario.digest,
            "inputs_sha256": h.hexdigest(),
            "overrides": self.overrides,
            "n_max": self.scenario.n_max,
            "Ts": self.scenario.simulation.Ts,
            "sigma2_max": self.sigma2_max,
            "exit_status": status,
            "outputs": {p.name: sha256_file(p) for p in self.written},
        })


def _parse_grid(text: str) -> FrequencyGrid:
    try:
        lo, hi, pts = text.split(",")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError:
        raise ScenarioError(f"--grid expects lo_hz,hi_hz,points, got {text!r}",
                            "command line") from None
    if not (0 < lo < hi and pts >= 1):
        raise ScenarioError("--grid needs 0 < lo_hz < hi_hz and points >= 1", "command line")
    return FrequencyGrid.logspace_hz(lo, hi, pts)


def _sweep_rows(spectra):
    w, n, vals = [], [], []
    for s in spectra:
        for k, v in zip(s.orders, s.values):
            w.append(s.omega)
            n.append(int(k))
            vals.append(v)
    vals = np.array(vals, dtype=complex)
    return [w, n, vals.real, vals.imag, np.abs(vals), np.angle(vals)]


SWEEP_HEADER = ["omega_rad_s", "n", "re", "im", "abs", "arg"]


def cmd_bode(run: _Run) -> int:
    sc = run.scenario
    run.csv("bode.csv", SWEEP_HEADER, _sweep_rows(spectrum_sweep(sc.loop, sc.grid, sc.n_max, "L")))
    print(f"bode: {len(sc.grid)} frequencies, odd orders 1..{sc.n_max}")
    return EXIT_OK


def cmd_sens(run: _Run) -> int:
    sc = run.scenario
    run.csv("sens.csv", SWEEP_HEADER, _sweep_rows(spectrum_sweep(sc.loop, sc.grid, sc.n_max, "S_re")))
    run.csv("sens_de.csv", SWEEP_HEADER,
            _sweep_rows(spectrum_sweep(sc.loop, sc.grid, sc.n_max, "S_de")))
    print(f"sens: {len(sc.grid)} frequencies, odd orders 1..{sc.n_max}")
    return EXIT_OK


def _table(run: _Run) -> SpectrumTable:
    sc = run.scenario
    return SpectrumTable.from_loop(sc.loop, sc.grid, sc.n_max)


def cmd_sigma2(run: _Run) -> int:
    vals = _table(run).sigma2()
    w = np.asarray(run.scenario.grid)
    run.csv("sigma2.csv", ["omega_rad_s", "value", "percent"], [w, vals, 100 * vals])
    k = int(np.argmax(vals))
    print(f"sigma2: max {vals[k]:.6g} at {w[k] / (2 * math.pi):.6g} Hz")
    return EXIT_OK


def cmd_psi(run: _Run) -> int:
    vals = _table(run).psi(run.sigma2_max)
    w = np.asarray(run.scenario.grid)
    run.csv("psi.csv", ["omega_rad_s", "value"], [w, vals])
    finite = vals[np.isfinite(vals)]
    lo = f"{finite.min():.6g}" if finite.size else "inf"
    print(f"psi: sigma2_max={run.sigma2_max:g}, min {lo}")
    return EXIT_OK


def _notch_box(run: _Run, table: SpectrumTable) -> SearchBox:
    if run.args.notch_box:
        try:
            lo, hi = (float(v) for v in run.args.notch_box.split(","))
        except ValueError:
            raise ScenarioError("--notch-box expects lo_hz,hi_hz", "command line") from None
        if not 0 < lo < hi:
            raise ScenarioError("--notch-box needs 0 < lo_hz < hi_hz", "command line")
    else:
        peak = table.omegas[int(np.argmax(table.sigma2()))] / (2 * math.pi)
        lo, hi = peak / 3, peak * 3
    return SearchBox((2 * math.pi * lo, 2 * math.pi * hi))


def cmd_design_notch(run: _Run) -> int:
    sc = run.scenario
    base = sc.loop.without_shaping()
    table = SpectrumTable.from_loop(base, sc.grid, sc.n_max)
    psi = PsiCurve(sc.grid, table.psi(run.sigma2_max), run.sigma2_max)
    box = _notch_box(run, table)
    params, rep = search_notch(psi, table, run.sigma2_max, box, sc.n_max)
    frag = rep.config_fragment()
    frag["report"] = {
        "sigma2_max": run.sigma2_max,
        "search_box_omega_n": list(box.omega_n),
        "coarse_best": rep.coarse_best.to_dict(),
        "coarse_margin": rep.coarse_margin,
        "evaluations": rep.evaluations,
        "bound_feasible": rep.bound.feasible,
        "direct_check_ok": rep.bound.direct_ok,
        "max_sigma2_filtered": float(np.max(rep.bound.sigma2_filtered)),
        "notes": rep.notes,
    }
    run.json("design-notch.json", frag)
    b = rep.bound
    run.csv("design-notch.csv",
            ["omega_rad_s", "psi", "product", "margin", "k_m", "sigma2_filtered"],
            [b.omegas, b.psi, b.product, b.margin, b.k_m, b.sigma2_filtered])
    print(f"design-notch: f_n={params.omega_n / (2 * math.pi):.6g} Hz Q1={params.Q1:.6g} "
          f"Q2={params.Q2:.6g} min margin {rep.min_margin:.6g} "
          f"{'feasible' if rep.feasible else 'INFEASIBLE'}")
    return EXIT_OK if rep.feasible else EXIT_FAIL


def cmd_simulate(run: _Run) -> int:
    sc = run.scenario
    sim = sc.simulation
    summary = []
    status = EXIT_OK
    for f in sim.frequencies_hz:
        fs = snap_frequency(f, sim.Ts)
        inp = InputDescriptor(sim.channel, sim.amplitude, fs)
        res = simulate(sc.loop, inp, sim.Ts, quantizer=sim.quantizer)
        tag = f"{f:g}Hz"
        run.csv(f"simulate_{tag}.csv", ["t", "e", "e_r", "u_r", "u", "y"],
                [res.t, res.e, res.e_r, res.u_r, res.u, res.y])
        run.csv(f"simulate_{tag}_resets.csv", ["index", "t"],
                [res.reset_instants, res.reset_instants * sim.Ts])
        entry = {"frequency_hz": f, "simulated_frequency_hz": fs, "settled": res.settled,
                 "orbit_periods": res.orbit_periods, "periods": res.periods,
                 "resets": int(len(res.reset_instants)), "notes": list(res.notes)}
        if res.settled:
            N = round(1 / (fs * sim.Ts))
            spec = cpsd(res, sim.window_periods * N)
            run.csv(f"simulate_{tag}_spectrum.csv", ["f_Hz", "psd", "cpsd", "cpsd_normalized"],
                    [spec.freqs, spec.psd, spec.cpsd, spec.normalized])
            n_top = min(sc.n_max, 9)
            meas = steady_harmonics(res, fs, n_top)
            key = "S_re" if sim.channel == "r" else "S_de"
            pred = loop_harmonics(sc.loop, 2 * math.pi * fs, sc.n_max)[key]
            p2 = np.abs(pred)
            entry.update({
                "rms_error": float(np.sqrt(spec.total_power)),
                "sigma2_measured": sigma2_measured(res, fs),
                "sigma2_predicted": float(math.expm1(0.5 * math.log1p(
                    np.sum(p2[1:] ** 2) / p2[0] ** 2))),
                "harmonics": [{"n": int(n), "measured_abs": abs(meas[n]),
                               "predicted_abs": float(p2[i])}
                              for i, n in enumerate(range(1, n_top + 1, 2))],
            })
        else:
            status = EXIT_UNSETTLED
        summary.append(entry)
        print(f"simulate: {fs:.6g} Hz settled={res.settled} resets={len(res.reset_instants)}"
              + (f" sigma2={entry['sigma2_measured']:.4g}" if res.settled else ""))
    run.json("simulate.json", {"runs": summary, "Ts": sim.Ts, "channel": sim.channel,
                               "amplitude": sim.amplitude})
    return status


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **detail}


def validate_scenario(sc: Scenario, sigma2_max: float, seed: int = 0,
                      n_filters: int = 50) -> list[dict]:
    """Oracle checks on a scenario; each entry has ``name``, ``passed`` and details."""
    checks = []
    loop = sc.loop
    el = loop.element
    w = np.asarray(sc.grid)

    if not el.is_linear:
        rep = check_assumption1(el)
        checks.append(_check("reset_convergence", rep.holds, worst_radius=rep.worst_radius,
                             worst_delta=rep.worst_delta))
        worst = 0.0
        for om in np.geomspace(w[0], w[-1], 6):
            pred = hosidf_harmonics(el, om, [1, 3, 5])
            meas = element_harmonics(el, om, [1, 3, 5])
            nz = np.abs(pred) > 0
            worst = max(worst, float(np.max(np.abs(meas - pred)[nz] / np.abs(pred[nz]))))
        checks.append(_check("hosidf_vs_simulation", worst < 0.01, worst_relative_error=worst,
                             tolerance=0.01))

    table = SpectrumTable.from_loop(loop, sc.grid, sc.n_max)
    de = SpectrumTable(spectrum_sweep(loop, sc.grid, sc.n_max, "S_de"))
    s_re, s_de = table.sigma2(), de.sigma2()
    rel = np.max(np.abs(s_de - s_re) / np.maximum(np.abs(s_re), 1e-300)) if np.any(s_re) else \
        float(np.max(np.abs(s_de)))
    checks.append(_check("disturbance_channel_sigma2", rel <= 1e-12 or np.max(np.abs(s_de - s_re)) < 1e-15,
                         worst_relative_difference=float(rel)))

    worst = 0.0
    for k in np.linspace(0, len(table.spectra) - 1, 5).astype(int):
        spec = table.spectra[k]
        M = 64 * sc.n_max
        t = np.arange(M) / M * 2 * math.pi / spec.omega
        e = reconstruct(spec, t)
        e1 = reconstruct(spec, t, orders=[1])
        td = sigma_p_timedomain(e, e1, 2.0, t[1] - t[0])
        fd = float(table.sigma2()[k])
        worst = max(worst, abs(td - fd) / max(abs(fd), 1e-300) if fd else abs(td))
    checks.append(_check("parseval_identity", worst < 1e-6, worst_relative_error=worst))

    rng = np.random.default_rng(seed)
    violations = feasible_count = 0
    for _ in range(n_filters):
        F = random_shaping_filter(rng, (w[0], w[-1]))
        b = verify_bound(table, F, sigma2_max=sigma2_max)
        feasible_count += b.feasible
        violations += b.feasible and np.any(b.sigma2_filtered > sigma2_max)
    checks.append(_check("bound_soundness", violations == 0, filters=n_filters,
                         feasible=int(feasible_count), violations=int(violations), seed=seed))

    lin = loop.linearized()
    sim = sc.simulation
    fs = snap_frequency(sim.frequencies_hz[0], sim.Ts)
    inp = InputDescriptor(sim.channel, 1.0, fs)
    n_samp = int(round(20 / (fs * sim.Ts)))
    res = simulate(lin, inp, sim.Ts, duration=n_samp * sim.Ts)
    ref = simulate_lti_reference(lin, inp, sim.Ts, len(res.e))
    err = float(np.max(np.abs(res.e - ref)))
    checks.append(_check("linear_loop_vs_lti_reference", err < 1e-9, max_abs_difference=err,
                         resets=int(len(res.reset_instants))))
    return checks


def cmd_validate(run: _Run) -> int:
    sc = run.scenario
    seed = run.args.seed if run.args.seed is not None else 0
    checks = validate_scenario(sc, run.sigma2_max, seed)
    run.json("validate.json", {"checks": checks, "passed": all(c["passed"] for c in checks)})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_FAIL


COMMANDS = {
    "bode": (cmd_bode, "open-loop harmonic responses L_n over the grid"),
    "sens": (cmd_sens, "closed-loop harmonic sensitivities (reference and input disturbance)"),
    "sigma2": (cmd_sigma2, "robustness factor sigma_2 over the grid"),
    "psi": (cmd_psi, "shaping-filter budget Psi for --sigma2-max"),
    "design-notch": (cmd_design_notch, "search a notch that meets the Psi budget"),
    "simulate": (cmd_simulate, "hybrid time simulation, harmonics and cumulative PSD"),
    "validate": (cmd_validate, "oracle checks on the scenario"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help=f"scenario YAML path or a bundled name ({', '.join(BUNDLED)})")
    common.add_argument("--out", help=f"output directory (default: scenario 'outputs', "
                                      f"else ${OUT_ENV}/<name>)")
    common.add_argument("--n-max", type=int, help="highest odd harmonic order")
    common.add_argument("--ts", type=float, help="simulation sample period [s]")
    common.add_argument("--sigma2-max", type=float, help="sigma_2 ceiling for psi/design-notch")
    common.add_argument("--with-filter", help="shaping filter file (design-notch JSON or YAML)")
    common.add_argument("--grid", help="frequency grid lo_hz,hi_hz,points")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("--notch-box", help="design-notch center-frequency range lo_hz,hi_hz")
    parser = argparse.ArgumentParser(prog="resetkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = _Run(args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    func = COMMANDS[args.command][0]
    try:
        status = func(run)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except NotSettledError as exc:
        print(f"not settled: {exc}", file=sys.stderr)
        status = EXIT_UNSETTLED
    except (SweepError, ArithmeticError, AssumptionViolation, DegenerateSpectrumError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    run.manifest(args.command, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
