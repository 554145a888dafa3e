"""Black-box phase estimation toolkit.

Simulates phase estimation of U⊗U† when U is available only as a black box,
and estimates the autocorrelation of the density of states from repeated runs.
"""

__version__ = "0.1.0"
