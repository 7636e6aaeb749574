//! Shared fixture for the CLI tests: a small deterministic dataset with
//! planted rank-2 structure, per-item documents, image features, frames,
//! and captions, plus a run configuration sized for fast tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const N_USERS: usize = 25;
pub const N_ITEMS: usize = 10;

pub fn write_fixture(dir: &Path) -> PathBuf {
    fs::create_dir_all(dir).unwrap();

    // planted rank-2 ratings in [1, 5], ~60% dense
    let mut ratings = String::new();
    for u in 0..N_USERS {
        for i in 0..N_ITEMS {
            if (u * 7 + i * 3) % 5 < 3 {
                let a = ((u % 5) as f64 - 2.0) / 2.0;
                let b = (u % 3) as f64 - 1.0;
                let c = ((i % 4) as f64 - 1.5) / 1.5;
                let d = ((i % 2) as f64 - 0.5) * 2.0;
                let r = 3.0 + a * c + 0.8 * b * d;
                ratings.push_str(&format!("u{}::m{}::{:.3}\n", u, i, r));
            }
        }
    }
    fs::write(dir.join("ratings.dat"), ratings).unwrap();

    let words = ["action", "space", "romance", "noir", "chase", "quiet", "storm", "city"];
    let mut docs = String::new();
    for i in 0..N_ITEMS {
        let a = words[i % words.len()];
        let b = words[(i * 3 + 1) % words.len()];
        let c = words[(i * 5 + 2) % words.len()];
        docs.push_str(&format!("m{}\tA {} {} film with {}.\n", i, a, b, c));
    }
    fs::write(dir.join("docs.tsv"), docs).unwrap();

    // 5-dim image features, 3 frames per item
    let mut features = String::from("F=5\n");
    let mut frames = String::new();
    let mut captions = String::new();
    for i in 0..N_ITEMS {
        for k in 0..3 {
            let id = format!("img{}_{}", i, k);
            let vals: Vec<String> = (0..5)
                .map(|d| format!("{:.3}", ((i * 5 + k * 2 + d * 3) % 11) as f64 / 5.0 - 1.0))
                .collect();
            features.push_str(&format!("{}\t{}\n", id, vals.join(",")));
            frames.push_str(&format!("m{}\t{}\n", i, id));
            let w1 = words[(i + k) % words.len()];
            let w2 = words[(i * 2 + k) % words.len()];
            captions.push_str(&format!("{}\ta {} {} scene\n", id, w1, w2));
        }
    }
    fs::write(dir.join("features.tsv"), features).unwrap();
    fs::write(dir.join("frames.tsv"), frames).unwrap();
    fs::write(dir.join("captions.tsv"), captions).unwrap();

    let config = serde_json::json!({
        "data": {
            "ratings": "ratings.dat",
            "ratings_format": "double-colon",
            "documents": "docs.tsv",
            "image_features": "features.tsv",
            "frame_manifest": "frames.tsv",
            "nic_captions": "captions.tsv",
            "min_count": 1,
            "max_vocab": 100
        },
        "split": { "seed": 1, "fractions": [0.8, 0.1, 0.1] },
        "pmf": { "latent_dim": 4, "lambda_u": 0.1, "lambda_v": 0.5, "n_sweeps": 6 },
        "tipmf": {
            "lambda_w": 0.01,
            "w_optimizer": {
                "learning_rate": 0.045, "decay": 0.9, "epsilon": 1.0,
                "batch_size": 8, "inner_epochs": 2
            },
            "outer_iterations": 3,
            "encoder": {
                "embed_dim": 6, "context_dim": 3, "feature_maps": 3,
                "window_sizes": [2, 3], "dropout_rate": 0.2
            }
        },
        "nic": {
            "hidden_dim": 8,
            "embed_dim": 6,
            "settings": {
                "optimizer": { "learning_rate": 0.02, "decay": 0.9, "epsilon": 0.0001 },
                "dropout_rate": 0.1, "batch_size": 4, "epochs": 3
            },
            "decode": "greedy",
            "min_count": 1,
            "max_vocab": 100
        },
        "eval": { "clamp": false, "clamp_min": 1.0, "clamp_max": 5.0 },
        "repeats": 2,
        "seed": 5
    });
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    config_path
}

pub fn tipmf(config: &Path, out: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tipmf"));
    cmd.arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("TIPMF_LOG", "error");
    cmd
}

pub fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawn tipmf");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}
