"""Fuse depth-derived and UDA segmentation predictions, and synthesise
depth-ordered copy-paste samples for self-training."""
from .classweights import (ClassWeights, FrequencyStats, class_weights, compute_frequencies,
                           finalize_weights, uda_weights_raw)
from .core import (ClassEntry, ClassTable, DepthMap, SceneSample, default_class_table,
                   validate_sample)
from .dbst import (AugmentConfig, SynthConfig, augment, candidate_depths, composite,
                   depth_threshold, select_sources, synthesize_dataset)
from .fusion import FusionConfig, decide_labels, fuse, fuse_labels, softmax_t
from .kernels import BACKEND
from .metrics import ConfusionMatrix, accumulate, iou_per_class, miou_and_acc

__version__ = "0.1.0"
