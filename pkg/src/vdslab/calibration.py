"""Empirically calibrated constants; see scripts/calibrate_rip_constant.py."""

# Smallest C on a 0.05 grid such that m = sample_complexity(mu, ell, log M,
# delta, C) gives a >= 90% isometry hold rate over 200 seeded draws
# (n=256, M=20 random 5-dim subspaces, DFT rows, optimized sampling,
# delta=0.1) while m//8 fails on >= 50% of the same draws.
ISOMETRY_COMPLEXITY_CONSTANT = 0.85
