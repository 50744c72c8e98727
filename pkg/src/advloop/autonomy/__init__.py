"""Reference perception, prediction and planning stack."""
from .detect import DetectorConfig, detect
from .plan import PlannerConfig, bicycle_step, plan
from .stack import Autonomy, ReferenceStack, StackConfig
from .track import Tracker, associate, predict
from .types import AutonomyOutput, Detection, Plan, Track, TrajPrediction
