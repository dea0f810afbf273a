"""noetherlab: Lagrangian/Hamiltonian mechanics with conservation-law audits.

Subpackages by concern:

* :mod:`noetherlab.expr` - expression parsing and exact forward-mode jets
* :mod:`noetherlab.systems` - mechanical systems, Legendre correspondence
* :mod:`noetherlab.integrate` - RK4 / Stormer-Verlet trajectory generation
* :mod:`noetherlab.conserve` - Noether charges, Killing checks, drift audits
* :mod:`noetherlab.radial` - radial potentials, Kepler orbit theory
* :mod:`noetherlab.modes` - equilibria, stability, characteristic oscillations
* :mod:`noetherlab.hamjac` - Hamilton-Jacobi families, two-center separation
* :mod:`noetherlab.fields` - 1+1D lattice scalar fields and Yee Maxwell
* :mod:`noetherlab.cli` - scenario-driven batch front door
"""

__version__ = "0.1.0"
