"""Simulation of dynamically encircling an exceptional point.

Subpackages cover the numerical kernels, the non-Hermitian two-level
model, direct loop dynamics, the Hermitian two-qubit dilation, NV-center
microwave pulse synthesis, and the tomography/readout chain, tied
together by a CLI harness.
"""

__version__ = "0.1.0"
