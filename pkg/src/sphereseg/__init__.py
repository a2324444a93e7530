"""Spherical-coordinate resampling and cascaded multi-origin segmentation tooling."""

from .errors import (
    ConfigError,
    DegenerateVolumeError,
    DimensionMismatchError,
    FormatError,
    InputError,
    PassFailedError,
    SegmenterError,
    SpheresegError,
)
from .metrics import CaseMetrics, RegionMetrics, dice, evaluate_case, hausdorff95, sensitivity, specificity
from .origins import (
    OriginSet,
    SelectionConfig,
    first_pass_origins,
    second_pass_origins,
    third_pass_origins,
)
from .phantom import PhantomSpec, generate_phantom
from .pipeline import (
    GridConfig,
    PipelineConfig,
    PipelineReport,
    PostprocessConfig,
    apply_cartesian_filter,
    load_config,
    merge_ensemble,
    postprocess,
    run_cascade,
    run_pass,
)
from .segmenter import ExchangeMeta, ExternalCommand, SegmenterSpec, ThresholdOracle, segment
from .transform import (
    Origin,
    SphericalGrid,
    SphericalVolume,
    cart_to_sph,
    compute_r_max,
    forward_transform,
    inverse_project_labels,
    polar_transform_2d,
    sph_to_cart,
)
from .volume import (
    LabelVolume,
    MultiChannelVolume,
    Region,
    RegionMask,
    ScalarVolume,
    Spacing,
    labels_from_region_masks,
    region_masks_from_labels,
    zscore_normalize,
)

__version__ = "0.1.0"
