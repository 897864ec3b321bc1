"""Two data sources, one location parameter: a small end-to-end run.

A 2-dim location parameter drives two very different datasets at once —
i.i.d. Gaussian observations and a discretised drift path.  Both carry
information about the same parameter, and because the model is linear
and Gaussian the exact posterior is known in closed form.  That makes
this the ideal smoke test: run the full likelihood-free pipeline
(simulate, scale discrepancies, fit the bivariate surrogate, acquire,
sample), then hold the result against the conjugate answer.

Runs in a couple of minutes.  Usage: python3 demos/two_source_location.py
"""
import numpy as np

from mobolfi.engine import RunConfig, posterior_sample, run
from mobolfi.simulators import ToyConfig, simulate_toy, toy_true_posterior

THETA_TRUE = np.array([0.4, -0.6])
OBS_SEED = 7

def main():
    model = ToyConfig(dim=2)
    obs = simulate_toy(THETA_TRUE, model, OBS_SEED)
    exact = toy_true_posterior(obs, model)
    print("observed data: "
          f"{obs.gaussian.shape[0]} i.i.d. rows, path of {obs.path.shape[0]} steps")
    print(f"generating parameter: {THETA_TRUE.tolist()}")
    print(f"conjugate joint posterior: mean {np.round(exact.joint.mean, 3).tolist()}, "
          f"sd {np.sqrt(exact.joint.var):.3f} per coordinate\n")

    cfg = RunConfig("toy", "mobolfi", n_init=60, n_acquisitions=60, toy_dim=2, seed=9)
    print("running: 60 initial simulations + 60 acquisitions, bivariate surrogate")
    result = run(cfg, obs, progress=lambda line: print("  " + line))
    counts = result.manifest["simulation_counts"]
    print(f"\nsimulation budget spent: {counts['total']} calls {counts}")
    print(f"discrepancy scaling (median absolute deviations): "
          f"{np.round(result.scaling.mad, 4).tolist()}")
    print(f"tolerance vector: {np.round(result.tolerance.values, 4).tolist()}\n")

    for mode, truth in (("joint", exact.joint),
                        ("source1", exact.source1),
                        ("source2", exact.source2)):
        sample = posterior_sample(result, mode, steps=8000, burn_in=6000)
        mean = sample.samples.mean(axis=0)
        sd = sample.samples.std(axis=0, ddof=1)
        print(f"{mode:8s} posterior: mean {np.round(mean, 3).tolist()} "
              f"sd {np.round(sd, 3).tolist()}  "
              f"(conjugate mean {np.round(truth.mean, 3).tolist()}, "
              f"sd {np.sqrt(truth.var):.3f})")

    print("\nThe approximate posteriors center on the conjugate means; their")
    print("spread is wider, which is the price of the finite tolerance and the")
    print("surrogate's own uncertainty at this small budget.  (Budgets this")
    print("small are seed-sensitive: with an unlucky acquisition trajectory a")
    print("direction can stay unconstrained.  The acceptance checklist runs the")
    print("full-size version of this benchmark.)")


if __name__ == "__main__":
    main()
