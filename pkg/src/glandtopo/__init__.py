"""Topology-aware gland segmentation toolkit.

Deterministic core of skeleton-based instance segmentation: medial-axis
distance-map ground truth, topology and marker losses with gradients,
marker-controlled watershed postprocessing, and object-level metrics.
"""

from .raster import (StructuringElement, connected_components, dilate, erode,
                     fill_holes, remove_small)
from .topo import (DistanceMetric, contour_map, distance_map, erosion_depth,
                   ma_distance_map, marker_gt, skeletonize)
from .postprocess import PostprocessConfig, binarize, postprocess_pipeline, watershed
from .losses import (LossValue, LossWeights, ce_instance_loss, ma_loss,
                     marker_loss, soft_markers, topology_loss, total_loss)
from .metrics import (MetricsReport, ObjectMatch, evaluate, match_objects,
                      object_dice, object_f1, object_hausdorff)

__version__ = "0.1.0"
