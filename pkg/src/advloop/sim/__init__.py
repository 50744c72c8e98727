"""Scenario model, scene assembly and LiDAR simulation."""
from .scenario import ActorState, LaneMap, Scenario, ScenarioError, ScenarioSnapshot
from .scene import Scene, SensorPose, assemble_scene, raycast
from .sensor import PointCloud, SensorConfig
