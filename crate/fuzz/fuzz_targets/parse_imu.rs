#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use niekf::io::parse_imu;
use niekf::models::ImuFrame;

fuzz_target!(|data: &[u8]| {
    let _ = parse_imu(data, Path::new("imu_robot.csv"), ImuFrame::RobotB);
});
