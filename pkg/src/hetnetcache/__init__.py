"""Stochastic-geometry analysis and joint cache/spectrum optimization of mmWave HetNets with IAB."""
