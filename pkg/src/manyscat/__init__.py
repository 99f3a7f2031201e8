"""Electromagnetic scattering by many small perfectly conducting particles.

Submodules
----------
emcore       Green kernel, dipole kernel, plane waves
single_body  boundary-integral solver for one body and small-body formulas
ensemble     densities and particle placement
many_body    effective-field linear system and field evaluation
reduction    cube-partition reduced system
continuum    homogenised volume integral equation on a voxel grid
materials    density <-> refraction coefficient / permeability maps
cli          command-line driver
"""
import os

# TBB shipped in some images is too old for numba; OpenMP is always present.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
