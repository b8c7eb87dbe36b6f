use rcis::harness::{build_scenario_1, Scenario};
use rcis::planner::{Side, Waypoint};

/// Scenario 1 starting 10 m before the goal: a handful of families, synthesizes in seconds.
pub fn short_scenario() -> Scenario {
    let mut scn = build_scenario_1();
    scn.name = "short".into();
    scn.duration = 3.0;
    scn.ego.x0 = [0.0, 0.0, 0.0, 0.0, -2.0, 40.0];
    scn.waypoints.initial = vec![Waypoint::at(-2.0, 40.0, vec![]), Waypoint::at(-2.0, 50.0, vec![Side::Ahead])];
    scn
}
