#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dspn::io::write_fixture;
use dspn_core::model::Dataset;
use dspn_core::synth::{generate_dataset, SynthSpec};

pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec { subjects_per_class: [3; 4], trials_per_class: [12; 4], ..SynthSpec::with_seed(seed) }
}

pub fn small_dataset(seed: u64) -> Dataset {
    generate_dataset(&small_spec(seed)).unwrap()
}

/// Writes a small fixture and returns its manifest path.
pub fn small_fixture(dir: &Path, seed: u64) -> PathBuf {
    write_fixture(&small_dataset(seed), &dir.join("data")).unwrap()
}

/// A quick EMG configuration over the small fixture.
pub fn write_config(dir: &Path, name: &str, channels: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        "seed = 5\ndataset = \"data/manifest.json\"\nscheme = \"synthetic-truth\"\n\
         channels = [{channels}]\noutput = \"out/{name}\"\nmax_k = 2\n{extra}\n\
         [learner]\nmethod = \"adaboost_m2\"\ncycles = 15\nlearn_rate = 0.96\nmax_splits = 7\n\n\
         [cv]\nfolds = 3\n"
    );
    fs::write(&path, text).unwrap();
    path
}

pub fn dspn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dspn")).args(args).env("RUST_LOG", "error").output().unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
