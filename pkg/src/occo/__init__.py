"""Occlusion-completion pre-training for point cloud encoders."""

from .cloud import (PointCloud, TransformSpec, TriMesh, apply_transform, apply_transforms,
                    euler_to_matrix, load_geometry, normalize_unit_sphere, parse_off, parse_part_labels,
                    parse_ply, sample_mesh, write_off, write_ply)
from .dataset import GenConfig, generate_dataset, read_dataset, write_dataset
from .errors import (AllOccluded, ArtifactMismatch, DegenerateMesh, DimsMismatch, InputError,
                     NonFiniteLoss, NonPositiveDepth, NumericError, OccoError)
from .kernels import BACKEND, get_backend, has_compiled
from .losses import (alpha_schedule, chamfer, chamfer_bruteforce, completion_loss, emd_auction,
                     emd_exact)
from .model import (CompletionSample, ModelDims, ModelParams, backward, decode, encoder_forward,
                    forward, init_params, load_encoder, read_checkpoint, save_encoder)
from .occlusion import (CameraIntrinsics, RigidPose, ViewSpec, delaunay_2d, occlude, project_to_camera,
                        sample_views, unproject, visibility_reference, visibility_zbuffer)
from .probes import (activation_mask, ami, count_detected_concepts, dissection_miou, kmeans,
                     landscape_slice, linear_probe, robustness_probe)
from .train import AdamState, TrainConfig, TrainLog, adam_step, lr_schedule, pretrain, resume

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
