"""Hybrid projection solver for J-fixed points, VIs and equilibrium problems."""
