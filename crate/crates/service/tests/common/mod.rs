#![allow(dead_code)]

use std::sync::OnceLock;

use bioskin_core::calibration::{build_dataset, CalibrationProfile, SplitMode};
use bioskin_core::sim::{builtin, simulate_scenario, SimParams};
use bioskin_core::FilterSpec;
use bioskin_service::engine::{Engine, Outbound, Target};
use bioskin_service::protocol::{Body, ServiceEvent, StreamMessage};

/// Profile fitted on the simulated bench protocol, shared per test binary.
pub fn profile() -> CalibrationProfile {
    static PROFILE: OnceLock<CalibrationProfile> = OnceLock::new();
    PROFILE
        .get_or_init(|| {
            let spec = FilterSpec::default();
            let run = simulate_scenario(&builtin::calibration_suite(2026), SimParams::default()).unwrap();
            let (cal, _) = build_dataset(run, &spec).unwrap().split(SplitMode::FirstThree).unwrap();
            CalibrationProfile::fit(&cal, spec, "bench").unwrap()
        })
        .clone()
}

/// Messages delivered to `client` (broadcasts included).
pub fn for_client(out: &[Outbound], client: u64) -> Vec<StreamMessage> {
    out.iter()
        .filter_map(|o| match o {
            Outbound::Message(Target::All, m) => Some(m.clone()),
            Outbound::Message(Target::Client(c), m) if *c == client => Some(m.clone()),
            _ => None,
        })
        .collect()
}

pub fn run(engine: &mut Engine, frames: usize) -> Vec<Outbound> {
    (0..frames).flat_map(|_| engine.step().out).collect()
}

pub fn states(msgs: &[StreamMessage]) -> Vec<bioskin_core::ForceState> {
    msgs.iter()
        .filter_map(|m| match &m.body {
            Body::ForceState(s) => Some(*s),
            _ => None,
        })
        .collect()
}

pub fn events(msgs: &[StreamMessage]) -> Vec<ServiceEvent> {
    msgs.iter()
        .filter_map(|m| match &m.body {
            Body::Event(e) => Some(e.clone()),
            _ => None,
        })
        .collect()
}
