"""Detecting source conflict: per-source posteriors under misspecification.

Here the fitted simulator assumes ONE scalar location shared by both data
sources, but the observed data were generated with different locations:
0.3 for the i.i.d. source and -0.7 for the drift path.  A single combined
discrepancy would quietly average the two and hide the problem.  Keeping
one discrepancy per source lets the engine compute a separate posterior
conditional on each source after one training run — and those posteriors
land in visibly different places, flagging the conflict.

Runs in a couple of minutes.  Usage: python3 demos/conflicting_sources.py
"""
import numpy as np

from mobolfi.engine import RunConfig, posterior_sample, run
from mobolfi.simulators import ToyConfig, simulate_toy

LOC_IID, LOC_PATH = 0.3, -0.7


def histogram_mode(values, bins=50):
    counts, edges = np.histogram(values, bins=bins)
    i = int(np.argmax(counts))
    return 0.5 * (edges[i] + edges[i + 1])


def main():
    obs = simulate_toy([LOC_IID, LOC_PATH],
                       ToyConfig(dim=1, variant="misspecified"), 11)
    print(f"observed data generated with location {LOC_IID} (i.i.d. source) "
          f"and {LOC_PATH} (path source)")
    print("fitted model: one shared scalar location\n")

    cfg = RunConfig("toy", "mobolfi", n_init=60, n_acquisitions=60, toy_dim=1, seed=2)
    result = run(cfg, obs)
    trace = result.training.inputs[:, 0]
    print(f"acquisition trace spans [{trace.min():.2f}, {trace.max():.2f}] — "
          "the optimizer keeps visiting BOTH low-discrepancy regions, because")
    print("no single parameter value makes both sources happy at once.\n")

    estimates = {}
    for mode in ("joint", "source1", "source2"):
        sample = posterior_sample(result, mode, steps=8000, burn_in=6000)
        estimates[mode] = histogram_mode(sample.samples[:, 0])
    print(f"posterior mode, i.i.d. source only : {estimates['source1']:+.3f}   "
          f"(generating value {LOC_IID:+.1f})")
    print(f"posterior mode, path source only   : {estimates['source2']:+.3f}   "
          f"(generating value {LOC_PATH:+.1f})")
    print(f"posterior mode, both sources       : {estimates['joint']:+.3f}   "
          "(a compromise between the two)\n")

    gap = estimates["source1"] - estimates["source2"]
    print(f"per-source modes differ by {gap:.2f}: the sources disagree about the")
    print("parameter, which is exactly the misspecification signature this")
    print("multi-discrepancy design is built to expose.")


if __name__ == "__main__":
    main()
