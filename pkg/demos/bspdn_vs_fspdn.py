"""Backside vs frontside power delivery across power maps of rising concentration.

Runs the shipped desk-tier matrix (20 um local pitch, a few minutes on one
core). Under a flat map the BSPDN stack runs slightly cooler because it drops
the BEOL_MZ layer; once the power concentrates, its low-k backside layer
under the thinned logic die stops spreading heat and the delta turns positive
and grows.

    python3 demos/bspdn_vs_fspdn.py [out_dir] [--full]

``--full`` uses the 5 um matrix instead (much slower).
"""
import sys

from sipthermal import experiments as ex

args = [a for a in sys.argv[1:] if a != "--full"]
matrix = ex.FULL_MATRIX if "--full" in sys.argv else ex.DESK_MATRIX
out = args[0] if args else "bspdn_vs_fspdn_out"

report = ex.run_sweep(ex.load_sweep(matrix), out)
print(ex.sweep_table(report))
print()
for pdn, order in report["ordering_by_peak_rise"].items():
    print(f"{pdn} maps by peak rise: {' < '.join(order)}")
print(f"\nreports in {out}/")
