"""Numerical laboratory for Hofer geometry on Poisson manifolds.

Modules: :mod:`poisson` (structures, brackets, leaves), :mod:`flows`
(isotopies and the algebra of Hamiltonians), :mod:`hofer` (oscillation,
length, displacement energy, capacities), :mod:`groupoid` (symplectic
groupoid lifts) and :mod:`harness` (scenarios, suites and the CLI).
"""

__version__ = "0.1.0"
