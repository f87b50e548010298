"""Optical motion-capture cleaning and solving toolkit.

The pipeline: estimate locality (low distance-variance neighbors), fill
occlusion gaps by distance-matrix interpolation, repair spike outliers,
optionally refine fills with a learned model, then solve markers into a
skeletal motion with a heterogeneous graph network. Synthetic data
generation and corruption tooling close the loop for training and tests.
"""

from .errors import (
    DegenerateInputError,
    MocapError,
    NumericsError,
    ValidationError,
    VisibilityError,
)
from .sequence import (
    PART_LABELS,
    STREAMS,
    MarkerLayout,
    MarkerSequence,
    load_sequence,
    save_sequence,
)
from .skeleton import (
    Motion,
    Skeleton,
    export_bvh,
    forward_kinematics,
    global_rotations,
    load_motion,
    load_skeleton,
    save_motion,
    save_skeleton,
)
from .rotation import geodesic_angle, gram_schmidt_rotation, is_rotation
from .locality import (
    NeighborTable,
    load_neighbor_table,
    pairwise_distance_stats,
    pooled_distance_stats,
    save_neighbor_table,
    select_neighbors,
)
from .gapfill import edm_fill_gap, fill_sequence, find_gaps, mds_embed, procrustes_align
from .outliers import (
    ThresholdPolicy,
    acceleration_profile,
    detect_outliers,
    repair_outliers,
)
from .align import (
    compute_reference_frame,
    from_local,
    merge_streams,
    motion_from_local,
    motion_to_local,
    reference_frames,
    split_streams,
    to_local,
)
from .metrics import metric_joe, metric_jpe, metric_ompe
from .augment import OcclusionStats, corrupt_sequence, estimate_stats, gap_counts
from .graph import HeteroGraph, build_hetero_graph
from .solver import (
    SolverConfig,
    SolverNet,
    load_solver,
    save_solver,
    solve_sequence,
    solving_loss,
    train_solver,
)
from .refine import RefinerNet, load_refiner, refine, save_refiner, train_refiner
from .datagen import (
    SynthSpec,
    default_body_spec,
    default_hand_spec,
    generate_dataset,
    make_fixture,
)
from .config import PipelineConfig, load_config
