"""Gaussian-kernel grasp representation and a lightweight generative grasp
detection network (RFB bottleneck, pixel/channel attention fusion)."""

from .grasp_core import (GaussianEncoderConfig, GraspMaps, GraspRectangle, PlanarGrasp, WorldGrasp,
                         decode_grasps, encode_grasp_maps)
from .network import GraspNet, NetworkConfig, build_network, forward, param_count

__version__ = "0.1.0"

__all__ = [
    "GaussianEncoderConfig", "GraspMaps", "GraspNet", "GraspRectangle", "NetworkConfig", "PlanarGrasp",
    "WorldGrasp", "build_network", "decode_grasps", "encode_grasp_maps", "forward", "param_count",
]
