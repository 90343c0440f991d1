"""Smoke test for the Python bindings. Build first with
`maturin build --release -m crates/python/Cargo.toml` and
pip-install the wheel."""

import cmath
import json
import math

import starkloop as sl

op = sl.OperatingPoint.nominal()
sol = sl.solve_pss(op, 3)
p1 = sol.probe_harmonic(1)
assert sol.trace_error < 1e-12 and sol.hermiticity_error < 1e-11

for phi in (0.3, 1.7, -2.5):
    moved = sl.solve_pss(op, 3, phi).probe_harmonic(1)
    resid = cmath.phase(moved / p1) - phi
    assert abs(math.remainder(resid, 2 * math.pi)) < 1e-10

assert abs(sl.solve_pss(op.with_theta(0.0)).probe_harmonic(1)) < 1e-14

eps = sl.convergence_sequence(sl.OperatingPoint.stress(), 8)
assert eps[2] < 1e-7

rmap = sl.response_map(op)
s = rmap.log_sensitivity(0.12)
omega, clamped = rmap.invert(rmap.interpolate(0.12))
assert abs(omega - 0.12) < 1e-8 and not clamped

curves = sl.monte_carlo_rmse(op, rmap, [1e3, 1e4], trials=2000, seed=1)
ratios = [a / b for a, b in zip(curves["rmse_phase"], curves["theory_phase"])]
assert all(abs(r - 1) < 0.1 for r in ratios), ratios

sweep = sl.sweep_theta(op)
assert sweep.theta_phase_star() < sweep.theta_balanced()[0] < sweep.theta_amp_star()

g = sl.coherent_gain(op, 0.01, node_count=101, delta34=8.0)
assert 0.0 < g < 1.0

manifest = json.loads(sl.run_experiment("phase_law", "phi_points = 8\n"))
assert manifest["provenance"]["n_max"] == 3

print(f"ok: P1 = {p1:.6g}, s = {s:.4f}, theta_bal = {sweep.theta_balanced()[0]:.4f}, G(1%) = {g:.4f}")
