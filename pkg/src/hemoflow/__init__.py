"""hemoflow: desk-scale multiscale ensemble blood-flow pipeline.

Pulsatile arterial inflow waveforms (lumped-parameter cardiac model)
are coupled one-way into a D3Q19 lattice-Boltzmann solver on sparse
voxelized vessel geometries; an ensemble orchestrator runs one
simulation per patient configuration and cross-analyzes velocity and
wall-shear-stress outputs.
"""

__version__ = "0.1.0"

from . import analysis, cardiac, coupling, ensemble, extraction, geometry, lbm, units  # noqa: E402,F401
