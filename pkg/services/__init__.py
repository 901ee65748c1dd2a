"""Coefficient, assembly, spectral, transform and oscillation services."""
