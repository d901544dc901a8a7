"""
Escape bounds for a drifting walk
=================================

A walk with drift A and noise variance at most B, started high enough,
never falls below zero with probability at least 1 - theta. The start
level comes from two series f and g, evaluated with certified tails.
"""
import math

from rqso import DriftProcessSpec, choose_escape_constants, evaluate_f, evaluate_g, simulate_drift_process

# the series reduce to zeta values when c = 0
print("f(1, 0, 1) =", evaluate_f(1, 0, 1), " pi^2/6 =", math.pi**2 / 6)
print("g(1, 0, 1) =", evaluate_g(1, 0, 1))

k = choose_escape_constants(A=0.5, B=1.0, theta=0.1)
print(f"c1={k.c1:.0f} c2={k.c2:.0f} start level S={k.S:.0f}, f={k.f:.4f} g={k.g:.4f}")

spec = DriftProcessSpec(A=0.5, B=1.0, a=0.0, Y0=k.S)
st = simulate_drift_process(spec, horizon=2000, trials=2000, seed=0, c1=k.c1, alpha1=k.alpha1)
print("survival:", st.survival_fraction)
print("escape frequency:", st.escape_freq, "<= f + g =", k.f + k.g)
print("growth rate on survivors:", round(st.conditional_growth_mean, 4))

# from a low start the walk can die, but survivors still grow at rate A
low = DriftProcessSpec(A=0.5, B=1.0, a=0.0, Y0=1.0, noise="two-point")
st = simulate_drift_process(low, horizon=2000, trials=2000, seed=1)
print("low start survival:", st.survival_fraction, " growth:", round(st.conditional_growth_mean, 4))
