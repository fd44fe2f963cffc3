"""Retarget 3D human keypoint sequences onto a 28-DOF joint chain."""
from .bodymodel import BodyModel, JointSpec, apply_params, default_body
from .evaluation import EvalReport, mpjas, run_experiment
from .kinematics import Hierarchy, KinematicChain, Transform, fk
from .losses import PoseSequence, frame_loss, temporal_loss
from .motiongen import MotionSpec, generate, generate_suite
from .solver import (OptimizerSettings, ik_frame, ik_sequence_frame_by_frame,
                     ik_sequence_temporal, minimize, run_algorithm)

__version__ = "0.1.0"
