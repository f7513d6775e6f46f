"""holosim: dense-array MIMO channel synthesis under physical constraints.

Synthesizes wavenumber-domain channel matrices for planar arrays, imposes
antenna-efficiency bounds, mutual-coupling calibration, and polarization
leakage, and evaluates single- and multi-user capacity.  The ``holosim``
CLI runs the bundled scenario sweeps deterministically and renders their
figures next to the CSV outputs.
"""

__version__ = "0.1.0"

from .geometry import (
    ArrayGeometry,
    WavenumberSampleSet,
    element_positions,
    propagating_sample_set,
    sample_angles,
    steering_matrix,
    steering_vector,
)
from .spectrum import (
    AngularResponse,
    AngularVarianceMap,
    block_solid_angle,
    draw_angular_response,
    variance_map,
)
from .efficiency import (
    EfficiencyProfile,
    ScatteringGrid,
    active_reflection_coefficient,
    calibrate_efficiencies,
    ellipse_rectangle_intersection_area,
    load_scattering_grid,
    radiation_efficiency_bound,
    s_from_z,
    transmission_efficiency_bound,
    transmission_efficiency_from_scattering,
    z_from_s,
)
from .patterns import (
    LeakageMatrix,
    PolarizedPattern,
    XprParameters,
    assemble_pattern_matrix,
    dipole_pattern,
    draw_leakage,
    isotropic_pattern,
    load_pattern_file,
    write_pattern_file,
)
from .channel import (
    ChannelRealization,
    entry_pol,
    load_channel_csv,
    save_channel_csv,
    steered_pattern_matrix,
    synthesize_holo,
    synthesize_mdf,
    synthesize_pol,
)
from .capacity import (
    MultiUserScenario,
    PowerAllocation,
    capacity,
    compensate_efficiency,
    eigen_spectrum,
    ergodic_capacity,
    iterative_water_filling,
    mrt_sum_rate,
    resample_receive_array,
    water_filling,
    waterfilled_covariance,
    zf_sum_rate,
)
from .experiments import (
    ScenarioConfig,
    generate_synthetic_measurement,
    load_config,
    replay_manifest,
    run_scenario,
)
