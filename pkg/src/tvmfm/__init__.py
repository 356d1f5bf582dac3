"""Time-varying matrix factor estimation via kernel-weighted local PCA."""

from .estimation import (
    COLUMN,
    ROW,
    FactorPath,
    LoadingPath,
    MatrixSeries,
    estimate_factors,
    estimate_loadings,
    estimate_rank,
    estimate_signal,
    local_pca,
    scatter_matrix,
    scatter_path,
)
from .kernels import (
    LEFT,
    RIGHT,
    TWO_SIDED,
    KernelSpec,
    boundary_weight,
    kernel_density,
    onesided_weight,
    rot_bandwidth,
)
from .metrics import (
    avg_space_distance,
    classify_regions,
    rotation_oracle,
    space_distance,
)
from .simulate import ExperimentConfig, gen_coalescing, gen_dgp1, gen_dgp2, gen_var1
from .smoothing import (
    CoalescingRegion,
    SwitchDiagnostics,
    apply_global_rotation,
    detect_switches,
    mvp_bootstrap_regions,
    repair_and_smooth,
    switch_statistic,
    varimax,
)

__version__ = "0.1.0"
