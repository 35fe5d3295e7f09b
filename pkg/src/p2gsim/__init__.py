"""Co-simulation of an MV electricity grid, an MP gas grid and P2G plants,
with lumped-parameter variants of each subsystem for fidelity studies."""

__version__ = "0.1.0"
