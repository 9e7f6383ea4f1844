"""Weakly supervised top-down salient object detection.

Train spatial-pyramid-pooled linear classifiers over dense feature maps,
backtrack their confidence into saliency maps, arbitrate bottom-up maps,
and refine to pixel-accurate category and category-independent saliency.
"""

from .backtrack import Attribution, attribute, backtrack_map
from .bu import (
    BuCandidateSet,
    SelectionScore,
    builtin_bu,
    combine,
    invert_map,
    select,
    selection_objective,
    weighted_pool,
)
from .estimator import TopDownSaliency
from .featsal import FeatureTrainSet, feature_prob, harvest, l_map
from .inference import (
    CategoryModel,
    ModelBundle,
    OpCounters,
    confidence,
    load_bundle,
    s_categ,
    s_ind,
    s_p,
    save_bundle,
)
from .io import (
    DatasetManifest,
    FeatureMap,
    LinearModel,
    ManifestEntry,
    SaliencyMap,
    load_manifest,
    load_map,
    load_tensor,
    save_map,
    save_tensor,
)
from .metrics import detection_ap, f_measure, jaccard, localization_hit, precision_at_eer
from .pooling import PooledVector, PyramidLayout, inverse, layout, pool, pool_single
from .refine import SuperpixelLabeling, multiscale_average, slic, upsample
from .svm import HingeSVC, TrainConfig, score, sigmoid, train
from .synth import SynthSpec, generate
from .tasks import DetectionBox, detect, localize, segment_object, semantic_labels

__version__ = "0.1.0"
