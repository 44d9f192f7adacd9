#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case-study")
}

pub fn scenario() -> PathBuf {
    fixture_dir().join("scenario.toml")
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap()
}

pub fn ontodss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ontodss")).args(args).env_remove("ONTODSS_OUT").output().unwrap()
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rule text whose first phone is bound to a brand class it cannot hold.
pub fn class_mismatch_rules() -> String {
    read_fixture("rules.brl").replacen(
        "is Phone brand (Domain specific characteristic)\n    }\n  } AND\n  second",
        "is Phone (Domain specific element)\n    }\n  } AND\n  second",
        1,
    )
}

/// Sorted `(file name, bytes)` of every file in an outbox directory.
pub fn outbox_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Writes the case-study scenario, edited by `edit`, into `dir` with every
/// path made absolute.
pub fn write_scenario(dir: &Path, edit: impl FnOnce(&mut ontodss::runtime::ScenarioConfig)) -> PathBuf {
    let mut c = ontodss::runtime::ScenarioConfig::load(&scenario()).unwrap();
    edit(&mut c);
    let p = dir.join("scenario.toml");
    std::fs::write(&p, toml::to_string(&c).unwrap()).unwrap();
    p
}
