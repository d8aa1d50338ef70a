"""Nodal finite elements for Maxwell's equations in the A/psi potential formulation.

Quadratic B27/W18 meshes, time-harmonic (conventional and amplitude) and transient
solvers, thin-patch symmetry planes, analytic reference solutions and a case CLI.
Submodules are imported on demand so ``python -m maxpatch`` can set thread limits
before numpy loads.
"""

__version__ = "0.1.0"

__all__ = ["model", "elements", "meshgen", "dofmap", "sparsela", "assembly", "harmonic",
           "transient", "oracles", "cli"]
