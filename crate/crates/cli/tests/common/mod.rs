//! Fixtures shared by the binary-level tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Rates and diffusion strengths of the reference scenario.
pub const BETA: [f64; 3] = [0.05, 0.05, 0.02];
pub const SIGMA: [f64; 3] = [0.15, 0.15, 0.1];
pub const DT: f64 = 20.0;
pub const RING_RADIUS: f64 = 1000.0;
pub const POWER_FACTOR: f64 = 1e-2;

/// Four inward-looking towers on a ring around the release point, which is
/// the origin at 30 m altitude.
pub fn towers_json() -> String {
    let r = RING_RADIUS;
    let a = POWER_FACTOR;
    format!(
        r#"[
  {{"id": "N", "x": 0, "y": {r}, "z": 10, "boresight_azimuth_deg": 180, "pattern": {{"A": {a}, "p": 2}}}},
  {{"id": "E", "x": {r}, "y": 0, "z": 10, "boresight_azimuth_deg": 270, "pattern": {{"A": {a}, "p": 2}}}},
  {{"id": "S", "x": 0, "y": -{r}, "z": 10, "boresight_azimuth_deg": 0, "pattern": {{"A": {a}, "p": 2}}}},
  {{"id": "W", "x": -{r}, "y": 0, "z": 10, "boresight_azimuth_deg": 90, "pattern": {{"A": {a}, "p": 2}}}}
]"#
    )
}

pub fn scenario_json(count: usize, seed: u64) -> String {
    let [bx, by, bz] = BETA;
    let [sx, sy, sz] = SIGMA;
    format!(
        r#"{{
  "params": {{"beta_x": {bx}, "beta_y": {by}, "beta_z": {bz}, "sigma_x": {sx}, "sigma_y": {sy}, "sigma_z": {sz}}},
  "init_state": [0, 0, 0, 0, 30],
  "grid": {{"dt": {DT}, "count": {count}}},
  "towers": {},
  "seed": {seed},
  "selection": "round-robin"
}}"#,
        towers_json()
    )
}

/// Belief centred on the release point.
pub const INIT_JSON: &str = r#"{"mean": [0, 0, 0, 0, 30], "variances": [400, 25, 400, 25, 25]}"#;

pub fn sigma_flag() -> String {
    SIGMA.map(|s| s.to_string()).join(",")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn avitrack<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_avitrack"))
        .args(args)
        .output()
        .unwrap()
}

/// Runs the binary and panics with its stderr unless it succeeds.
pub fn ok<I, S>(args: I) -> serde_json::Value
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = avitrack(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates the reference scenario into `dir/sim` and writes the init file.
pub fn simulate(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let scen = write(dir, "scenario.json", &scenario_json(count, seed));
    write(dir, "init.json", INIT_JSON);
    let sim = dir.join("sim");
    ok(["simulate", "--config", s(&scen), "--out-dir", s(&sim)]);
    sim
}

/// Every file in `dir`, sorted by name, with its bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
