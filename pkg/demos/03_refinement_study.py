"""Joint time-step / mesh refinement of the lens flow.

Runs the same flow to t = 0.25 while halving tau and doubling the spatial
resolution per level, then compares the states on the shared coarse nodes.
Successive distances should shrink roughly geometrically (the scheme is
first order in tau, so halving tau dominates the observed rate).

The same study is available from the command line:

    thetaflow refine --preset lens --tau 1e-2 --nodes-per-unit 50 \
        --T 0.25 --levels 4
"""

import numpy as np

from thetaflow import FlowConfig, run_flow
from thetaflow.app.presets import preset_symmetric_lens


def main():
    levels = 4
    finals = []
    print("level   tau        h          steps")
    for level in range(levels):
        tau = 1e-2 / 2**level
        npu = 50 * 2**level
        traj = run_flow(preset_symmetric_lens(nodes_per_unit=npu),
                        FlowConfig(tau=tau, T=0.25))
        finals.append(traj.final_state)
        h = traj.final_state.fields[0].grid.spacing
        print(f"{level:5d}   {tau:.2e}  {h:.2e}  {len(traj.reports):5d}")

    print()
    print("inter-level sup distances on shared nodes:")
    prev_d = None
    for i, (coarse, fine) in enumerate(zip(finals, finals[1:])):
        d = 0.0
        for fc, ff in zip(coarse.fields, fine.fields):
            step = (ff.grid.node_count - 1) // (fc.grid.node_count - 1)
            d = max(d, float(np.max(np.abs(fc.values - ff.values[::step]))))
        rate = "" if prev_d is None else f"   observed order {np.log2(prev_d / d):.2f}"
        print(f"  levels {i}->{i + 1}: {d:.6e}{rate}")
        prev_d = d


if __name__ == "__main__":
    main()
