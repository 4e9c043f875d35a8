"""Single-attempt success probability against channel quality.

Prints closed form, branch propagation through the engine, and a seeded
Monte Carlo estimate for each corrector over a grid of alpha^2.

    python scripts/success_scan.py [--trials N] [--seed S]
"""
import argparse
import math

from nonlocal_gate import analysis, protocol
from nonlocal_gate.channel import ChannelSpec
from nonlocal_gate.config import CorrectorKind, RunConfig


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--control", type=float, nargs=2, default=(0.6, 0.8))
    args = parser.parse_args()
    a, b = args.control

    print(f"{'alpha^2':>7} {'kind':<5} {'closed':>8} {'engine':>8} {'mc':>8} {'z':>6}")
    for k in range(10):
        spec = ChannelSpec.from_alpha(math.sqrt(0.5 + 0.05 * k))
        for kind in CorrectorKind:
            closed = analysis.exact_success_probability(spec, kind)
            engine = protocol.propagated_success_probability(a, b, spec, kind)
            config = RunConfig(control=(a, b), alpha=spec.alpha, corrector=kind,
                               trials=args.trials, seed=args.seed, max_attempts=1)
            stats = analysis.monte_carlo_summary((r for _, r in protocol.run_trials(config)), closed)
            z = "-" if stats.z_score is None else f"{stats.z_score:+6.2f}"
            print(f"{spec.alpha**2:7.2f} {kind.value:<5} {closed:8.5f} {engine:8.5f} {stats.rate:8.5f} {z:>6}")


if __name__ == "__main__":
    main()
