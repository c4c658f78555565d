"""Spectral analysis on the Sierpinski gasket.

Subpackages are imported explicitly (``from gasket_szego import decimation``);
the top-level module stays import-light so the CLI can configure BLAS
threading before numpy loads.
"""

__version__ = "0.1.0"
