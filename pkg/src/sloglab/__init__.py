"""Deterministic Bayesian lasso (SLOG) solvers and benchmark harness."""
