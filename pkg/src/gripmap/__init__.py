"""gripmap: admissible contact-force maps for thin-walled objects.

Pipeline: parse an operator command, probe a triangle mesh for local wall
thickness over a cylindrical grid, convert thickness into an admissible
lateral force map, re-rank externally supplied grasp candidates with it,
and simulate force-map-aware impedance grip execution.
"""

__version__ = "0.1.0"
