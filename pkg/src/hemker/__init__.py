"""Shishkin-mesh finite differences for the bounded Hemker problem.

Four stages on overlapping polar, Cartesian and parabolic grids produce an
initial composite approximation and a corrected one; the ``verification``
module measures double-mesh convergence of both.
"""

from hemker.mesh import ProblemParams, annulus_mesh, patch_mesh, patch_width, strip_mesh
from hemker.pipeline import PipelineRun, run_pipeline

__all__ = [
    "ProblemParams",
    "PipelineRun",
    "annulus_mesh",
    "patch_mesh",
    "patch_width",
    "run_pipeline",
    "strip_mesh",
]
