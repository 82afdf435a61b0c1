"""tetmf: matrix-free finite-element operator evaluation on tetrahedral meshes."""

__version__ = "0.1.0"
