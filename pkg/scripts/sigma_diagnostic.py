"""How well does the ordering-based standard error describe trial-to-trial variation?

For each synthetic dataset, round one of the selector yields (lambda_hat, sigma_hat)
per feature. For irrelevant features we compare the typical sigma_hat with the
spread of lambda_hat across datasets, and report how often |z| crosses the
critical value. A ratio far above 1 means sigma_hat captures only the ordering
noise on a fixed sample, not the sampling noise of the payoff itself.
"""

import argparse

import numpy as np

from mdselect.linmodel import PayoffSpec, payoff_game
from mdselect.mc_valuation import OrderingSampleConfig, critical_value, estimate
from mdselect.simlab import SimConfig, generate_dataset


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--payoffs", nargs="+", default=["ar2", "r2", "f", "bic"])
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--true-size", type=int, default=4)
    ap.add_argument("--gamma", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = SimConfig(n=args.n, true_size=args.true_size, trials=args.trials, seed=args.seed)
    crit = critical_value(0.05)
    print(f"{'payoff':<7}{'sd(lambda) across data':>24}{'median sigma_hat':>18}{'ratio':>8}"
          f"{'P(|z|>=crit) irrelevant':>25}{'P(|z|>=crit) true':>19}")
    for kind in args.payoffs:
        lam, sig, z_irr, z_true = [], [], [], []
        for trial in range(args.trials):
            data, s_true = generate_dataset(cfg, trial)
            est = estimate(payoff_game(data, PayoffSpec(kind)),
                           OrderingSampleConfig(args.gamma, trial, 0.05))
            irr = np.array([i not in s_true for i in range(args.n)])
            lam.append(est.lambda_hat[irr])
            sig.append(est.sigma_hat[irr])
            z_irr.append(np.abs(est.z[irr]) >= crit)
            z_true.append(np.abs(est.z[~irr]) >= crit)
        # spread across datasets, per irrelevant feature, then averaged
        sd = np.std(np.array(lam), axis=0).mean()
        med = np.median(np.array(sig))
        print(f"{kind:<7}{sd:>24.3e}{med:>18.3e}{sd / med:>8.1f}"
              f"{np.mean(z_irr):>25.3f}{np.mean(z_true):>19.3f}")


if __name__ == "__main__":
    main()
