"""Divergence-free virtual element solver for steady incompressible flow.

Arbitrary-order (k >= 2) conforming virtual elements on general polygonal
meshes with hanging nodes, augmented with a discrete Smagorinsky eddy
viscosity, plus the verification and cavity-benchmark harness built on top.
"""

__version__ = "0.1.0"
