"""photogeo: inverse photo-geometric rendering and shape refinement.

Recovers a depth map, albedo map, viewpoint, and lighting from a single
image by analysis-by-synthesis: a coarse shape prior is refined against
pseudo-views projected onto an image manifold (pluggable; a synthetic
oracle manifold ships with the package).
"""

from .camera import (
    DEPTH_MAX,
    DEPTH_MIN,
    CameraIntrinsics,
    Pose,
    Viewpoint,
    compute_normals,
    intrinsics_from_fov,
    unproject,
    viewpoint_to_pose,
    warp_forward,
)
from .shading import CANONICAL_LIGHTING, Lighting, light_direction, shade
from .rendering import (
    RenderOutput,
    TriangleMesh,
    depth_to_mesh,
    rasterize,
    render,
    render_gradients,
    warp_mask,
)
from .priors import PriorSpec, build_prior
from .sampling import (
    LightingDistribution,
    SeedPolicy,
    ViewpointDistribution,
    sample_lightings,
    sample_viewpoints,
)
from .metrics import EvalReport, evaluate_depth, mad, psnr, side
from .scenes import Scene, make_scene
from .errors import ConfigError, DivergenceError
from .manifold import ManifoldProjector, OracleProjector, ProjectionResult, ReplayProjector
from .pipeline import (
    InstanceState,
    PipelineConfig,
    StageConfig,
    default_stages,
    manipulate,
    recon_loss,
    run_pipeline,
    smoothness_loss,
)
from .estimator import ShapeRefiner

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "Pose",
    "Viewpoint",
    "DEPTH_MIN",
    "DEPTH_MAX",
    "intrinsics_from_fov",
    "viewpoint_to_pose",
    "unproject",
    "warp_forward",
    "compute_normals",
    "Lighting",
    "CANONICAL_LIGHTING",
    "light_direction",
    "shade",
    "TriangleMesh",
    "RenderOutput",
    "depth_to_mesh",
    "rasterize",
    "render",
    "render_gradients",
    "warp_mask",
    "PriorSpec",
    "build_prior",
    "SeedPolicy",
    "ViewpointDistribution",
    "LightingDistribution",
    "sample_viewpoints",
    "sample_lightings",
    "EvalReport",
    "side",
    "mad",
    "psnr",
    "evaluate_depth",
    "Scene",
    "make_scene",
    "ConfigError",
    "DivergenceError",
    "ManifoldProjector",
    "OracleProjector",
    "ReplayProjector",
    "ProjectionResult",
    "InstanceState",
    "PipelineConfig",
    "StageConfig",
    "default_stages",
    "recon_loss",
    "smoothness_loss",
    "run_pipeline",
    "manipulate",
    "ShapeRefiner",
    "__version__",
]
