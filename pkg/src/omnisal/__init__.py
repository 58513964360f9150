"""Saliency estimation for omni-directional images with explicit fixation priors."""
from ._core import IMPLEMENTATION
from .backend import CenterBiasLayer, ConstantBackend, FileBackend, SpectralResidualBackend
from .fusion import estimate, extract_views, integrate_views
from .geometry import view_frame, view_grid
from .prior import (EquatorBias, FitConfig, LatitudeBiasSet, average_equator_bias,
                    compose_bias_equirect, fit_latitude_bias)
from .raster import BlurSpec, gaussian_blur, normalize_sum

__version__ = "0.1.0"
