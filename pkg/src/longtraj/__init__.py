"""Long-range motion trajectories from dense optical flow.

Frames are sampled into filtered flow vectors, grouped per spatiotemporal
cell, advected into streak flow, turned into streamlines per memory window,
and linked across windows into long trajectories.  Evaluation and motion
segmentation utilities operate on the result.
"""
from .advection import ParticleGrid, StreakFlow, Streakline, advect, collect_streaklines, interpolate_sparse, streak_flow
from .bspline import ScatteredSamples, SplineSurface, fit
from .cell_grid import (Cell, CellGrid, DominantGroup, FineToCoarse, VideoVolumeConfig, cell_entropy, cluster_spatial,
                        distribute, fine_to_coarse, quantise_orientations)
from .config import RunConfig, load_config, parse_config
from .errors import *  # noqa: F401,F403
from .evaluation import fp_error_curve, hungarian_assign, regularise, resample, traj_distance
from .flow_io import FlowMap, parse_flo, read_flo, save_flo, synth_field, write_flo
from .linking import (LinkParams, Track, Trajectory, appearance_similarity, build_and_infer, geometric_candidates,
                      link_windows, motion_prior, motion_similarity, prune)
from .pipeline import emit_plots, run_pipeline, run_sweep
from .sampling import FlowVector, FlowVectors, build_flow_vectors, dual_threshold, remove_outliers, sample_keypoints
from .segmentation import score_segmentation, segment, traj_to_flow
from .streamlines import Streamline, VectorField, build_combined_field, seed_and_diffuse

__version__ = "0.1.0"
