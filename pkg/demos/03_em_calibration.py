"""Calibrate the switching model on simulated data and inspect recovery.

Simulates five years from known parameters, runs EM with data-driven
support shifts, and prints fitted vs generating values together with the
log-likelihood ascent.
"""

import numpy as np

from mrspricing import (
    BaseParams,
    DropParams,
    ModelParams,
    RegimeHistory,
    SpikeParams,
    TransitionSpec,
    em_calibrate,
    quartile_shifts,
    simulate_path,
)


def main():
    true = ModelParams(
        base=BaseParams(alpha=5.98, beta=0.16, sigma=np.sqrt(39.53)),
        spike=SpikeParams(mu=2.89, sigma=0.8, shift=30.0),
        drop=DropParams(mu=2.62, sigma=0.57, shift=45.0),
        transitions=TransitionSpec.constant([[0.97, 0.02, 0.01],
                                             [0.30, 0.66, 0.04],
                                             [0.55, 0.05, 0.40]]),
    )
    path = simulate_path(true, None, RegimeHistory.at_base(40.0),
                         horizon=1826, seed=11)
    x = path.x[1:]
    c_s, c_d = quartile_shifts(x)
    print(f"support shifts from the data quartiles: "
          f"spike above {c_s:.3f}, drop below {c_d:.3f}")

    result = em_calibrate(x, (c_s, c_d))
    trace = result.loglik_trace
    print(f"\nEM: {trace.size} iterations, log-likelihood "
          f"{trace[0]:.2f} -> {trace[-1]:.2f}")
    print(f"smallest iteration gain {np.min(np.diff(trace)):.2e} "
          f"(never negative)")

    p = result.params
    rows = [
        ("alpha", true.base.alpha, p.base.alpha),
        ("beta", true.base.beta, p.base.beta),
        ("sigma_b", true.base.sigma, p.base.sigma),
        ("mu_s", true.spike.mu, p.spike.mu),
        ("sigma_s", true.spike.sigma, p.spike.sigma),
        ("mu_d", true.drop.mu, p.drop.mu),
        ("sigma_d", true.drop.sigma, p.drop.sigma),
    ]
    print("\nparameter        true     fitted")
    for name, want, got in rows:
        print(f"  {name:10s} {want:8.4f}  {got:8.4f}")

    print("\ntransition matrix, true vs fitted diagonals")
    fitted = p.transitions.matrices[0]
    for i, name in enumerate(("base", "spike", "drop")):
        print(f"  stay-{name:5s}  {true.transitions.matrices[0][i, i]:.3f}  "
              f"{fitted[i, i]:.3f}")

    agree = np.mean(result.classification == path.regimes[1:])
    print(f"\nclassification agrees with the simulated regimes on "
          f"{agree:.1%} of days")
    print("drop-regime quantities are the loosest: with ~2% occupancy a "
          "five-year path\nholds only a few dozen drop days, so the "
          "mixture likelihood can trade drop\nwidth against drop "
          "persistence with little penalty")


if __name__ == "__main__":
    main()
