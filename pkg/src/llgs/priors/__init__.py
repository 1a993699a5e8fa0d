from .base import PriorProvider
from .files import FilePrior
from .gray_world import GrayWorldPrior, gray_world, prior_provider

__all__ = ["FilePrior", "GrayWorldPrior", "PriorProvider", "gray_world", "prior_provider"]
