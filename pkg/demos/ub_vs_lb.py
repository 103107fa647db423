"""
Upper bound training against the adversarial lower bound
========================================================

Both methods fit a Gaussian to the mixture; the quadrature divergence of the
result is the common yardstick. Runs are short here; the acceptance suite
uses 20k steps.
"""

from auxfdiv.experiments import ExperimentConfig, run_exact_fit, run_lb_fit, run_ub_fit

for name in ("forward_kl", "reverse_kl", "js"):
    cfg = ExperimentConfig(divergence=name, steps=3000)
    best = run_exact_fit(cfg)
    ub, lb = run_ub_fit(cfg), run_lb_fit(cfg)
    print(name)
    for tag, r in (("exact", best), ("upper", ub), ("lower", lb)):
        print(f"  {tag:5s} mu={r['mu']:.3f} sigma={r['sigma']:.3f} F={r['divergence_value']:.4f}")
