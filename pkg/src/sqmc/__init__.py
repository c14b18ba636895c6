"""Sequential quasi-Monte Carlo and bootstrap particle filtering."""
