"""Collapse-mass quantization in the radial oracle (scaled down).

A supercritical bump on the disk concentrates in finite time.  The mass
inside the parabolic window r* = 5 sqrt(T_hat - t) settles near 8 pi:
the collapse carries one quantum no matter how much total mass is
available.  At this demo resolution the numbers are a few percent off;
the acceptance suite runs the full-resolution version.

Also shown: a small sweep of total masses. The threshold for radial
blowup on the disk sits between 8 pi and the supercritical runs; below
it the profile relaxes to a steady state instead.
"""

import math

import numpy as np

import collapse_lab as cl
from collapse_lab.diagnostics import NoBlowupTrendError, estimate_blowup_time
from collapse_lab.radial_oracle import (
    mass_at,
    oracle_density,
    oracle_step,
    profile_from_field,
    stable_oracle_dt,
)

EIGHT_PI = 8 * math.pi


def run_to_growth(lam, growth_cap, n=1024, radius=0.5, width=0.1, t_cap=2.0):
    spec = cl.GridSpec("radial-disk", n, radius)
    p = profile_from_field(cl.make_initial(spec, cl.GaussianProfile((0, 0), width, lam)))
    sup0 = oracle_density(p).sup
    series = [(0.0, sup0)]
    snaps = [p]
    last = sup0
    k = 0
    while True:
        p = oracle_step(p, stable_oracle_dt(p, safety=0.9))
        k += 1
        sup = oracle_density(p).sup
        if k % 5 == 0:
            series.append((p.t, sup))
        if sup >= 1.5 * last:
            snaps.append(p)
            last = sup
        if sup >= growth_cap * sup0 or p.t >= t_cap:
            return series, snaps, sup0, p


print("supercritical run: lambda = 10 pi, width 0.1 on the half disk")
series, snaps, sup0, final = run_to_growth(10 * math.pi, 2000.0)
est = estimate_blowup_time(series)
print(f"estimated blowup time T_hat = {est.t_hat:.6f} (fit residual {est.fit_residual:.3f})")
print(f"{'sup growth':>12} {'M(r*)/8pi':>10}")
for p in snaps:
    gap = est.t_hat - p.t
    if gap <= 0:
        continue
    growth = oracle_density(p).sup / sup0
    if growth < 3:
        continue
    ratio = float(mass_at(p, 5 * math.sqrt(gap))) / EIGHT_PI
    print(f"{growth:12.1f} {ratio:10.4f}")

print("\nmass sweep (does the run blow up within t = 2?)")
for lam_over_pi in (6.0, 8.5, 10.0):
    lam = lam_over_pi * math.pi
    series, snaps, sup0, final = run_to_growth(lam, 100.0, n=512)
    try:
        estimate_blowup_time(series)
        verdict = "blowup trend"
    except NoBlowupTrendError:
        verdict = "no blowup trend (relaxes)"
    print(f"  lambda = {lam_over_pi:4.1f} pi: sup growth x{oracle_density(final).sup / sup0:8.1f} -> {verdict}")
