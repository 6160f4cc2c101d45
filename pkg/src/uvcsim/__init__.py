"""uvcsim: 2D simulator, adaptable-autonomy navigation, UVC dose engine,
and teleoperation relay for a mobile disinfection robot."""

from .geometry import Pose2D, normalize_angle
from .world import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    inflate,
    line_of_sight,
    load_map,
    raycast,
)
from .robot import (
    BatteryParams,
    Footprint,
    LaserScan,
    LidarParams,
    RobotState,
    Twist,
    check_collision,
    simulate_lidar,
    step_battery,
    step_kinematics,
)
from .navigation import (
    AssistParams,
    AutonomyLevel,
    FollowParams,
    Path,
    assist_decelerate,
    assist_steer,
    drive_to_point,
    follow_path,
    plan_path,
)
from .disinfection import (
    DisinfectionTarget,
    DoseGrid,
    LampArray,
    LampInterlock,
    accumulate_dose,
    coverage_report,
    dwell_time_for_dose,
    irradiance_at,
    log_reduction,
    plan_disinfection_poses,
)
from .sim import SimConfig, Simulator

__version__ = "0.1.0"
