"""Optimal-horizon social robot navigation.

A desk-scale pipeline for navigating a unicycle robot through heterogeneous
crowds: a partially observable 2D crowd simulator, a spatio-temporal attention
classifier that infers pedestrian cooperation, a PPO-trained policy that picks
the MPC prediction horizon online, and a barrier-constrained MPC planner with
socially conditioned safety margins, plus a benchmark harness.
"""

__version__ = "0.1.0"
