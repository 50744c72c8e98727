"""Evaluation metrics: box IoU, AP/recall, ADE, comfort, shape realism."""
from .comfort import comfort_metrics
from .detection import PrPoint, ap_recall, average_precision, match_frames, pr_curve
from .forecast import ade_metrics
from .iou import bev_iou, iou_matrix
from .realism import RealismHistogram, jsd, jsd_realism, library_histogram, mesh_histogram
