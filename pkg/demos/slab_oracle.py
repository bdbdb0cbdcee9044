"""Solve a uniformly heated slab and compare it with the closed-form answer.

A 400 um slab (k = 10 W/mK) takes 100 kW/m^2 through its bottom face and
sheds it by convection (h = 1000 W/m^2K) from the top. By hand:

    T_top    = T_amb + q''/h        = 25 + 100      = 125 degC
    dT slab  = q'' t / k            = 1e5 * 4e-4/10 = 4 K

The finite-volume answer should match both to round-off, and the
cell-centred peak should close in on the bottom surface as the pitch halves.
"""
from sipthermal import powermap as pm
from sipthermal.solver import assemble, attach_power, discretize, energy_balance, solve, surface_temperature
from sipthermal.stackmodel import stack_from_layers

Q2, H, T_UM, K = 1e5, 1000.0, 400.0, 10.0
stack = stack_from_layers([("slab", 0.5, 0.5, T_UM, K)], top_htc=H)

print("pitch_um  T_top_degC   peak_rise_K  balance")
for pitch in (100.0, 50.0, 25.0, 12.5):
    n = round(500 / pitch)
    m = pm.gen_uniform(Q2 * 0.25e-6, n, n, pitch, layer="slab")
    mesh = attach_power(discretize(stack, pitch, "max_aspect(1)"), m, side="bottom")
    fld = solve(assemble(mesh), tol=1e-10)
    t_top = surface_temperature(fld, "top").mean()
    print(f"{pitch:8.1f}  {t_top:10.6f}  {fld.t_max - 25:12.6f}  {energy_balance(fld).residual:.1e}")

print(f"\nexpected T_top {25 + Q2 / H:.6f} degC; surface peak rise {Q2 / H + Q2 * T_UM * 1e-6 / K:.6f} K")
