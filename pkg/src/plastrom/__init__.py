"""plastrom: hyper-reduced ROMs for parametric quasi-static elastoplasticity.

High-fidelity FE solves, POD(-Greedy) training, element-wise empirical
quadrature, Gappy-POD stress reconstruction and a Riesz-based time-averaged
error indicator, at desk scale.
"""

__version__ = "0.1.0"
