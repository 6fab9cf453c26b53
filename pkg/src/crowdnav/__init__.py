"""Multi-robot navigation among pedestrians with confidence-aware prediction.

Modules: core (grids, boxes, trajectories), prediction (Boltzmann intent
model and occupancy rollouts), planning (time-varying A*), tracking
(double-integrator tracker and TEB checks), stp (priority planning), sim
(closed-loop runs and traces), cli.
"""
__version__ = "0.1.0"
