"""Numerical laboratory for the continuum Potts gas with Kac-type repulsion.

Subpackages map onto the pipeline: `meanfield` (phase diagram and
minimizers), `geometry` (multiscale lattices), `kernels` (interaction
tables), `indicators` (phase labels and contours), `functional`
(coarse-grained free energy and its constrained minimization), `simulator`
(grand-canonical Metropolis chain), `cli` (experiments).
"""

__version__ = "0.1.0"

from . import _core

ENGINE_BACKEND = _core.BACKEND
