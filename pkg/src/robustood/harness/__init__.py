"""Synthetic data, certified shifts, experiment suites and the command line."""
