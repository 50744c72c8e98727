"""Adversarial objective terms and their aggregation over an episode."""
from .grids import GridSpec, epe_loss, rasterize_boxes, rasterize_outputs, soft_iou_loss
from .objective import (D_MISS, PRESETS, CostWeights, MatchResult, StepCost, ade, combined_step_cost,
                        comfort_cost, detection_loss, episode_cost, make_step_cost, match_detections,
                        match_predictions, prediction_loss, read_step_costs, write_step_costs)
