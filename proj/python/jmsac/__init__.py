"""Python surface for the multimodal masked-latent pretraining pipeline.

Thin re-export of the pybind11 core. Heavy lifting (training, evaluation)
lives in the `jmsac` CLI; these bindings expose the individual operations for
scripting and cross-checking.
"""

from ._core import (
    __version__,
    ade_fde,
    build_codebook,
    cross_entropy,
    generate_dataset,
    gps_inverse_projection,
    gps_local_projection,
    hash64,
    l1_rsrp_diff,
    lda_rank,
    lidar_depth_projection,
    optimal_beam,
    radar_range_angle,
    rankme,
    rmse_mae,
    rsrp_scan,
    sample_mask,
    smooth_l1,
    topn_accuracy,
)

__all__ = [
    "__version__",
    "ade_fde",
    "build_codebook",
    "cross_entropy",
    "generate_dataset",
    "gps_inverse_projection",
    "gps_local_projection",
    "hash64",
    "l1_rsrp_diff",
    "lda_rank",
    "lidar_depth_projection",
    "optimal_beam",
    "radar_range_angle",
    "rankme",
    "rmse_mae",
    "rsrp_scan",
    "sample_mask",
    "smooth_l1",
    "topn_accuracy",
]
