"""irssim: simulation and SNR optimization of IRS-aided sub-THz downlinks."""

from .geometry import (
    BsSpec,
    ConstantReflection,
    DegenerateGeometryError,
    FresnelReflection,
    IrsSpec,
    NotIlluminatedWarning,
    PathAngles,
    Point2,
    RadioParams,
    Rect,
    Scene,
    TabulatedReflection,
    UeSpec,
    WallSpec,
    los_path,
    reflector_path,
    wall_image_path,
    wall_reflection_coefficient,
)
from .channel import (
    AsymptoticChannel,
    ChannelOperands,
    ChannelRealization,
    asymptotic_channel,
    build_operands,
    dirichlet_ratio,
    evaluate_channel,
    finite_channel_row,
    irs_radiation_pattern,
    misalignment,
    phase_profile,
    quantize_phases,
    quantized_channel_matrix,
    rotation_to_gradient,
    steering_vector,
)
from .precoding import (
    IllConditionedError,
    Precoder,
    SnrReport,
    bs_pattern,
    sinr_with_precoder,
    snr_per_ue,
    throughput_gbps,
    zf_precoder,
)
from .optimize import (
    AssignmentMap,
    ControlVector,
    OptimResult,
    SnrObjective,
    exhaustive_map_search,
    heuristic_optimize,
    hop_configure,
    hop_weights,
    hungarian,
    multistart,
    newton_step,
    prop2_oracle,
)
from .harness import (
    CdfSeries,
    ExperimentConfig,
    Summary,
    TrialRecord,
    cdf,
    make_scene,
    run_experiment,
    run_trial,
    sample_realization,
    summarize,
    sweep,
)

__version__ = "0.1.0"
