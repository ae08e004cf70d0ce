"""Analytic cases, error metrics, rate studies, TPFA baseline and monotonicity checks."""
