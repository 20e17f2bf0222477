#!/usr/bin/env python3
"""
Example usage of the Euler model simulator.

This script demonstrates how to use the system programmatically: closed-form
predictions, the surrogate field, a small right-tail run and the ballot oracle.
Everything runs in surrogate mode, so no sieve is needed.
"""

import os
import sys

# Add the current directory to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from ballot_numerics import LinearSweepPoint, ballot_dp, ballot_mc, linear_barrier_query
from euler_model_system import euler_model_system
from exceptions import EulerModelError
from models import ModelConfig, SamplingMode
from prediction import critical_beta, slope_mu, threshold_log_max


def example_predictions():
    """Closed-form quantities for a few scales"""
    print("📐 Euler Model - Predictions")
    print("=" * 50)

    for t in (2, 3, 4, 8):
        print(f"   t={t}: mu={slope_mu(t, 0.5):.7f}, beta_c={critical_beta(t, 0.5):.7f}, "
              f"threshold(y=0)={threshold_log_max(t, 0.5, 0.0):.7f}")


def example_recentered_maxima():
    """Quantiles of max S_t - mu t across surrogate scales"""
    print("\n📊 Euler Model - Recentered Maximum")
    print("=" * 50)

    for t in (2, 3, 4):
        config = ModelConfig(t=t, alpha=0.5, mode=SamplingMode.SURROGATE, seed=7)
        try:
            runner = euler_model_system.get_runner(config)
            summary = runner.recentered_max_summary(2000)
            print(f"   t={t}: median {summary['q50']:+.3f}, 10-90% [{summary['q10']:+.3f}, {summary['q90']:+.3f}]")
        except EulerModelError as e:
            print(f"❌ t={t}: {e}")


def example_right_tail():
    """A small right-tail run at surrogate t=3"""
    print("\n📈 Euler Model - Right Tail")
    print("=" * 50)

    config = ModelConfig(t=3, alpha=0.5, mode=SamplingMode.SURROGATE, seed=11)
    try:
        runner = euler_model_system.get_runner(config)
        report = runner.estimate_right_tail([0.0, 0.5, 1.0, 1.5], 20_000)
        for y, p in zip(report.y_grid, report.p_hat):
            print(f"   y={y:.1f}: p_hat={p:.5f}")
        if report.fitted_slope is not None:
            print(f"   fitted slope {report.fitted_slope:.3f} (predicted {report.predicted_slope:.3f})")
    except EulerModelError as e:
        print(f"❌ Error: {e}")


def example_ballot():
    """DP against Monte Carlo for one linear barrier"""
    print("\n🎯 Euler Model - Ballot Oracle")
    print("=" * 50)

    query = linear_barrier_query(LinearSweepPoint(j=16, a=0.2, b0=2.0, x=1.0))
    dp = ballot_dp(query)
    mc, stderr = ballot_mc(query, 200_000, seed=3)
    print(f"   DP {dp:.6f}, MC {mc:.6f} ± {stderr:.6f}")


def example_system_stats():
    print("\n📊 Euler Model - System Statistics")
    print("=" * 50)

    stats = euler_model_system.get_system_stats()
    cache = stats.get("cache", {})
    print(f"   Cache directory: {cache.get('cache_dir', 'Unknown')}")
    print(f"   Cached files: {cache.get('total_files', 0)}")
    print(f"   Threads: {stats.get('threads', 'Unknown')}")


def main():
    """Run all examples"""
    print("🎲 Euler Model Simulator - Example Usage")
    print("=" * 60)

    example_predictions()
    example_recentered_maxima()
    example_right_tail()
    example_ballot()
    example_system_stats()

    print("\n🎉 Examples completed!")
    print("\n💡 Next steps:")
    print("   - Run the smoke suite: python cli.py report --suite smoke")
    print("   - Build the t=3 cache: python cli.py sieve --t 3 --alpha 0.5")
    print("   - Check the README.md for the full command list")


if __name__ == "__main__":
    main()
