"""Synthetic warehouse rack layouts, simulated layout predictors, evaluation and 3D stitching."""
from .errors import ForgeError
from .layout import FRONT, TOP, CameraPose, CellClass, GridSpec, LayoutStack, ProbabilityStack
from .layout import make_shelf_frame, rasterize_front_view, rasterize_top_view, visible_racks
from .scene import BoxInstance, Rack, SceneGraph, Shelf, make_rack
from .waregen import GenConfig, generate_trajectory, generate_warehouse, render_sequence, split_dataset
from .predictor import NOISE_A, NoiseConfig, degrade
from .metrics import average_precision, miou, metrics_table
from .recon import Box3D, FrameRecon, reconstruct_frame
from .stitch import WorldRecon, compare_to_truth, stitch_sequence, world_to_obj

__version__ = "0.1.0"
