#![allow(dead_code)]

use std::path::PathBuf;

use red_seis::denoiser::{load_bank, DenoiserHandle};

/// Networks trained by `scripts/train_bank.sh`.
pub fn bank_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/bank")
}

pub fn shipped_bank() -> Vec<DenoiserHandle> {
    load_bank(bank_dir()).expect("shipped bank loads")
}
