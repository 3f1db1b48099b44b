"""Label propagation engine and benchmark harness for dense video correspondence."""

from labelprop.affinity import (
    AffinityBlock,
    TopKSelection,
    column_softmax,
    compute_affinity,
    concat_context,
    soft_copy,
    softmax_over_topk,
    topk_select,
)
from labelprop.errors import ConfigError, FormatError, SpecError
from labelprop.grids import (
    FeatureGrid,
    FeatureMatrix,
    Keypoint,
    KeypointSet,
    LabelGrid,
    LabelMatrix,
    argmax_labels,
    flatten,
    flatten_labels,
    keypoints_to_labelgrid,
    l2_normalize,
    labelgrid_to_keypoints,
    onehot_downsample,
    resize_scores,
    unflatten,
    unflatten_labels,
)
from labelprop.masking import (
    RegionMask,
    TrackBox,
    boxes_to_exclusions,
    estimate_track_box,
    fixed_region_mask,
    grid_coordinates,
    predict_coordinates,
)
from labelprop.metrics import (
    MetricsReport,
    SequenceScore,
    boundary_f,
    davis_aggregate,
    jaccard,
    miou,
    pck,
    recall_over_threshold,
)
from labelprop.propagation import (
    ContextBuffer,
    FixedRegion,
    PropagationConfig,
    Track,
    label_mass_trace,
    propagate_step,
    propagate_video,
)
from labelprop.reference import brute_force_propagate
from labelprop.synth import SynthObject, SynthSpec, gen_synthetic_video

__version__ = "0.1.0"
