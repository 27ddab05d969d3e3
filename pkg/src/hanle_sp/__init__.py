"""Alignment Hanle resonances with spontaneous orientation: models, scans and fits."""

__version__ = "0.1.0"

from .core_types import (  # noqa: E402
    CS_GAMMA_GYRO,
    ActiveRegion,
    FieldVector,
    HalfPlane,
    ModelRates,
    ModifiedModelParams,
    Omega,
    Sector,
    SpinState,
    field_from_omega,
    omega_from_field,
)
from .reference import (  # noqa: E402
    effective_b_y,
    envelope,
    s_b_classic,
    s_b_modified,
    s_t_classic,
    s_t_modified,
)
from .dynamics import (  # noqa: E402
    DynamicsConfig,
    EquilibriumSet,
    IntegratorSettings,
    ThresholdSingularityError,
    Trajectory,
    Variant,
    a_p_closed_form,
    detected_signal,
    integrate,
    steady_state_full,
    steady_state_linear,
)
from .bifurcation import (  # noqa: E402
    BifurcationDiagram,
    FieldRamp,
    HysteresisReport,
    UnboundedGrowthError,
    hysteresis_scan,
    memory_hold,
    pitchfork_amplitude,
    sweep_diagram,
    threshold_check,
)
from .scan import (  # noqa: E402
    Direction,
    Engine,
    ScanKind,
    ScanProtocol,
    ScanTrace,
    SignalMap,
    run_grid_map,
    run_line_scan,
    run_radial_map,
)
from .analysis import (  # noqa: E402
    FitGuess,
    FitOptions,
    FitResult,
    UnresolvedWidthError,
    WidthMethod,
    WidthReport,
    extrema_locus,
    find_extrema,
    fit_amplitude_curve,
    fit_map,
    hwhm_extrema,
    hwhm_half_max,
    normalize_amplitude,
)
from .spin_algebra import (  # noqa: E402
    normalized_projection_ratio,
    quasi_alignment_moment,
    second_moment_x,
    stretched_state_populations,
    wigner_small_d,
)
