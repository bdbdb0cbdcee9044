"""Global-local refinement on a small stack, checked against a monolithic fine solve.

A 0.6 mm hot core sits in a 3 mm three-layer stack (die, thin bond, copper lid).
The coarse 200 um solve cannot resolve the hot square; the 10 um window solve,
driven by Dirichlet faces taken from the coarse field, should land within a
couple of percent of solving the whole stack at 10 um.
"""
import time

from sipthermal import powermap as pm
from sipthermal.refine import core_peak, extract_boundary, solve_local, window_around
from sipthermal.solver import assemble, attach_power, discretize, solve
from sipthermal.stackmodel import stack_from_layers

stack = stack_from_layers(
    [("die", 3.0, 3.0, 50.0, 140.0), ("bond", 3.0, 3.0, 10.0, 1.5), ("lid", 3.0, 3.0, 200.0, 400.0)],
    top_htc=2500.0, bottom_htc=200.0,
)
core = (1.2, 1.2, 1.8, 1.8)
hot = pm.gen_center_focused(1.0, 120, 120, 5.0, concentration=0.1, origin=core[:2], layer="die")
fine = pm.resample(hot, 10.0)

t0 = time.perf_counter()
g = solve(assemble(attach_power(discretize(stack, 200.0, "max_aspect(8)"), hot)))
w = window_around(stack, core, 10.0, 200.0, 2, None, "max_aspect(2)")
loc = solve_local(stack, w, fine, extract_boundary(g, w), g, layer="die")
t_gl = time.perf_counter() - t0

t0 = time.perf_counter()
mesh = discretize(stack, 10.0, "max_aspect(2)")
mono = solve(assemble(attach_power(mesh, fine)))
t_mono = time.perf_counter() - t0
ref = core_peak(mono, core, "die")

print(f"coarse core peak     {core_peak(g, core, 'die'):8.3f} degC")
print(f"refined local peak   {loc.local_peak:8.3f} degC   ({t_gl:.1f} s)")
print(f"monolithic fine peak {ref:8.3f} degC   ({t_mono:.1f} s, {mesh.n_active} voxels)")
print(f"peak-rise error      {abs((loc.local_peak - 25) / (ref - 25) - 1):8.2%}")
