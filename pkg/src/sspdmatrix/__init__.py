"""Simulation toolkit for waveguide-coupled superconducting single-photon detector matrices.

Modules: ``circuit`` (photonic components, ring transfer and ring-down trains),
``detector`` (nanowire response), ``tcspc`` (time tags and histograms),
``fit`` (least-squares fitting), ``chipmatrix`` (chip layouts) and
``experiments``/``cli`` (end-to-end measurements).
"""

__version__ = "0.1.0"
