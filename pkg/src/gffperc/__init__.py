"""Level-set percolation of the discrete Gaussian free field on Z^d."""

__version__ = "0.1.0"
