"""Drift fields, nodes and vorticity of the 2-D isotropic oscillator."""
