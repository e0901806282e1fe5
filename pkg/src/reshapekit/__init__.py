"""Body-shape editing toolkit.

Subpackages cover the parametric body model, semantic attribute sliders,
depth-map conditioning rendering, dataset normalization geometry, the
shape-editing benchmark metrics, and the editing service.
"""

__version__ = "0.1.0"
