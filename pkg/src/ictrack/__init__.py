"""Constraint-aware trajectory tracking for a planar quadrotor model.

Modules cover polyhedral set algebra (`polytope`), LP/QP solvers
(`solvers`), controller synthesis (`synthesis`), the online controllers
(`controllers`), the simulated vehicle (`plant`), reference trajectory
generation (`trajectories`), and the benchmark harness plus command line
(`harness`, `cli`).  Import the module you need; nothing heavy is pulled
in at package import time.
"""

__version__ = "0.1.0"
