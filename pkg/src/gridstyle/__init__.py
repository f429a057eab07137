"""Localized photorealistic video stylization via affine bilateral grids.

Core pieces: masked/temporal feature-statistics transfer operators, small
convolutional networks for mask enhancement and adaptive guide maps, soft
grid-mask blending of per-region affine bilateral grids, full-resolution
slicing/rendering, temporal grid sub-sampling, and the training
objectives exposed as evaluation metrics.
"""

from .bilateral_grid import (AffineBilateralGrid, ScalarGrid, blend_grids,
                             composite_grids, grid_from_head, laplacian_reg,
                             lerp_grids, render, slice_affine, slice_scalar)
from .errors import (BadKernel, ChannelMismatch, ConfigError, CorruptFile,
                     DataError, EmptyMask, GridStyleError, LengthMismatch,
                     MissingFlow, MissingFrame, NonDivisibleDims,
                     ShapeMismatch, UnknownVersion, WeightMissing)
from .guidance import guide_map
from .losses import (FLO_MAGIC, LossWeights, content_loss, guide_loss,
                     mask_loss, read_flo, style_loss, temporal_loss,
                     total_loss, visibility_mask, warp, warping_error,
                     write_flo)
from .mask_pipeline import (Mask, enhance_mask, morph, soft_grid_mask,
                            synthesize_noisy_mask)
from .pipeline import (FrameResult, PipelineConfig, PipelineRunner, benchmark,
                       evaluate_metrics, run_pipeline)
from .tensor_core import (ChannelStats, ConvLayerSpec, channel_stats, conv2d,
                          masked_stats, resize_bilinear, to_grayscale)
from .transfer import (FeaturePyramid, FixtureExtractor, TransferState, adain,
                       sa_adain, splat_forward, st_adain, tc_adain)
from .weight_io import WeightBundle, load, save, seeded_init

__version__ = "0.1.0"
