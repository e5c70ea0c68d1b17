"""Compare predicted and simulated error harmonics of the reset loop across frequency.

Writes one CSV row per (Ts, frequency) with the measured and predicted
|e_n| / r_hat for n = 1, 3, 5, both sigma_2 values and the number of resets
per period.  Useful for seeing where the describing-function prediction
holds and where extra zero crossings break it.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from resetkit.cloop import HarmonicSpectrum, loop_harmonics
from resetkit.export import write_csv
from resetkit.robustness import sigma2
from resetkit.scenario import bundled_scenario, load_scenario
from resetkit.sim import (InputDescriptor, harmonic_coefficients, sigma2_measured, simulate,
                          snap_frequency)


def sweep(scenario: str, lo: float, hi: float, points: int, sample_periods):
    sc = load_scenario(bundled_scenario(scenario))
    amp = sc.simulation.amplitude
    rows = []
    for Ts in sample_periods:
        for f0 in np.geomspace(lo, hi, points):
            f = snap_frequency(f0, Ts)
            res = simulate(sc.loop, InputDescriptor("r", amp, f), Ts)
            c = harmonic_coefficients(res, f, 5, require_settled=False)
            h = loop_harmonics(sc.loop, 2 * math.pi * f, sc.n_max)
            pred = np.abs(h["S_re"])
            N = round(1 / (f * Ts))
            tail = res.reset_instants[res.reset_instants >= len(res.e) - 10 * N]
            spec = HarmonicSpectrum(2 * math.pi * f, dict(zip(h["n"].tolist(), h["S_re"].tolist())))
            rows.append([Ts, f, int(res.settled), len(tail) / 10,
                         abs(c[1]), pred[0], abs(c[3]), pred[1], abs(c[5]), pred[2],
                         sigma2_measured(res, f) if res.settled else math.nan, sigma2(spec)])
            r = rows[-1]
            print(f"Ts={Ts:g} f={f:7.2f} Hz resets/period {r[3]:4.1f}  "
                  f"n=3 {abs(r[6] / r[7] - 1):6.3f}  n=5 {abs(r[8] / r[9] - 1):6.3f}")
    return rows


HEADER = ["Ts", "f_Hz", "settled", "resets_per_period", "e1_meas", "e1_pred", "e3_meas",
          "e3_pred", "e5_meas", "e5_pred", "sigma2_meas", "sigma2_pred"]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="c_nl")
    ap.add_argument("--lo", type=float, default=5.0, help="lowest frequency [Hz]")
    ap.add_argument("--hi", type=float, default=200.0, help="highest frequency [Hz]")
    ap.add_argument("--points", type=int, default=20)
    ap.add_argument("--ts", type=float, nargs="+", default=[1e-4, 2.5e-5])
    ap.add_argument("--out", type=Path, default=Path("prediction_sweep.csv"))
    a = ap.parse_args()
    rows = sweep(a.scenario, a.lo, a.hi, a.points, a.ts)
    write_csv(a.out, HEADER, list(zip(*rows)))
    print(f"wrote {a.out}")
