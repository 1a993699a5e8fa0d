from .components import (
    MAP_NAMES,
    ComponentMaps,
    compose_enhanced,
    compose_low,
    render_backward,
    render_components,
)
from .splat import (
    CompositeResult,
    ProjectedSplats,
    RasterResult,
    Splat2D,
    composite,
    project_gaussian,
    project_gaussians,
    rasterize,
    rasterize_backward,
)

__all__ = [
    "MAP_NAMES",
    "ComponentMaps",
    "CompositeResult",
    "ProjectedSplats",
    "RasterResult",
    "Splat2D",
    "compose_enhanced",
    "compose_low",
    "composite",
    "project_gaussian",
    "project_gaussians",
    "rasterize",
    "rasterize_backward",
    "render_backward",
    "render_components",
]
