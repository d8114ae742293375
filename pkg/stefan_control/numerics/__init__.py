"""Discrete scheme: grids, controls, averaging, forward march and diagnostics."""
