"""Adversarial attacks on a differentiable template-matching tracker.

Submodules:

- :mod:`advtrack.geometry` boxes, IoU and center errors
- :mod:`advtrack.frames` pixel grids, clipping, PPM and ``.grid`` I/O
- :mod:`advtrack.scenes` deterministic synthetic videos and target trajectories
- :mod:`advtrack.tracker` NCC tracker with analytic input gradients
- :mod:`advtrack.objectives` untargeted / targeted margin objectives
- :mod:`advtrack.basic` FGSM, BIM, MI-FGSM, C&W and their frame schedules
- :mod:`advtrack.spark` the online incremental attack with L2,1 regularization
- :mod:`advtrack.metrics` precision, success rate, mean absolute perturbation
- :mod:`advtrack.harness` experiment grids and result tables
- :mod:`advtrack.plots` per-run SVG plots and their CSV series
- :mod:`advtrack.gradcheck` finite-difference checks of the analytic gradients
- :mod:`advtrack.cli` the ``advtrack`` command
"""

from .geometry import BBox, Point, cle, iou
from .tracker import FeatureKernel

__version__ = "0.1.0"

__all__ = ["BBox", "Point", "FeatureKernel", "cle", "iou", "__version__"]
