"""Randomly biased random walk on Galton-Watson trees in the boundary case.

Modules: ``environment`` (laws and the lazily realized tree), ``walk``
(trajectories and excursions), ``quenched`` (exact hitting and absorption
probabilities), ``spine`` (size-biased spine samplers), ``rw1d``
(one-dimensional random-walk estimates) and ``cli`` (experiment harness).
"""

__version__ = "0.1.0"
