"""How much slack do the bounds have?

Shrinking a bound's constant must eventually produce a detected violation.
The smallest constant factor at which the Clopper-Pearson lower limit
crosses the bound measures the slack.
"""
from manifoldconc.experiments import build_experiment
from manifoldconc.montecarlo import critical_constant_factor, dominates, empirical_tail

cases = [("grassmann-dist", 40, 2, {}), ("linf", 30, 2, {}),
         ("lipschitz", 30, 2, {"manifold": "grassmann"}), ("hw1", 60, 2, {}),
         ("thm1.1", 30, 2, {})]

for name, n, d, opts in cases:
    cfg = build_experiment(name, n, d, 50000, seed=7, threads=1, **opts)
    rep = empirical_tail(cfg)
    crit = critical_constant_factor(rep, cfg.bound.prefactor)
    faulty = empirical_tail(build_experiment(name, n, d, 50000, seed=7, threads=1,
                                             constant_factor=0.01, **opts))
    print(f"{name:15s} critical factor {crit:.2g}; "
          f"constant / 100 flagged: {not dominates(faulty).dominated}")

# Bounds whose constants carry a factor e^2 / log 2 and a large rational
# prefactor sit far above the empirical tails: dividing their constant by
# 100 is not enough to cross the sampled survival curve.
