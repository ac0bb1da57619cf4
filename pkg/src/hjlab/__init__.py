"""hjlab: viscous Hamilton-Jacobi equations on the torus, their adjoint
densities, and the estimate machinery that couples the two.

The package is organized along the pipeline

    grid -> hamiltonian -> hj_solver -> fp_adjoint -> duality -> estimates,

with counterexample field constructions and a config-driven experiment
runner on top.  Everything is desk scale: d <= 2, modest grids, double
precision throughout.
"""

__version__ = "0.1.0"
