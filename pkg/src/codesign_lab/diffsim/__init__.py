from .engine import (
    GradientOverflow,
    RigidEllipse,
    SimConfig,
    SimState,
    SimulationDiverged,
    SpringNetwork,
    Trajectory,
    center_of_mass,
    merge_networks,
    rollout,
    rollout_with_gradient,
    simulate,
    step,
    validate_network,
)
from .fd import finite_difference_gradient
from .export import read_trajectory_csv, write_trajectory_csv
