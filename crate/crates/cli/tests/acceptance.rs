//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The dataset criteria read the
//! IDX files from `$DWMTJ_DATA_DIR`, falling back to `data/fashion-mnist` in
//! the workspace root; `scripts/fetch_fashion_mnist.py` downloads them.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use dwmtj_cli::config::RunConfig;
use dwmtj_cli::{Cli, Command};
use dwmtj_core::dataset::{parse_idx_images, parse_idx_labels, IdxImageSet, IdxLabelSet};
use dwmtj_core::device::{dw_velocity, stt_coefficient};
use dwmtj_core::fit::{calibrate_kappa, fit_sigma, simulate_switch_counts};
use dwmtj_core::protocol::{make_amplitude_ramp, run_cycles, state_probabilities, Transition};
use dwmtj_core::snn::{
    dwmtj_neuron_step, lif_neuron_step, DwMtjConfig, LifConfig, NeuronModel, SpikeMode,
    SpikeRaster, SpikingNetwork,
};
use dwmtj_core::{DeviceConfig, DriveConditions, Lifecycle, MaterialParams, PhysicalConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> PathBuf {
    std::env::var_os("DWMTJ_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/fashion-mnist"))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Criterion outcome: pass/fail plus a one-line detail.
struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn velocity_oracle() -> Result<Outcome> {
    let mat = MaterialParams::default();
    let consts = PhysicalConstants::default();
    // g·μ_B·P / (2·e·M_sat) with g = 2, μ_B = 9.274e-24, P = 0.7,
    // e = 1.602e-19, M_sat = 8e5, evaluated exactly.
    let coeff = 5.065_387_016_229_712_6e-11;
    let cases = [
        (
            DriveConditions {
                j: 1e12,
                h_eff: 0.0,
            },
            50.653_870_162_297_13,
        ),
        (
            DriveConditions {
                j: 0.0,
                h_eff: 1000.0,
            },
            42.8934,
        ),
        (
            DriveConditions {
                j: 1e12,
                h_eff: 1000.0,
            },
            50.653_870_162_297_13 + 42.8934,
        ),
        (
            DriveConditions {
                j: -3e11,
                h_eff: 0.0,
            },
            -15.196_161_048_689_138,
        ),
    ];
    let mut worst = rel(stt_coefficient(&mat, &consts), coeff);
    for (drive, expected) in cases {
        worst = worst.max(rel(dw_velocity(drive, &mat, &consts), expected));
    }
    outcome(
        worst <= 1e-12,
        format!("worst relative error {worst:.3e} (tol 1e-12)"),
    )
}

fn collapse(labels: impl Iterator<Item = Lifecycle>) -> Vec<Lifecycle> {
    let mut out: Vec<Lifecycle> = Vec::new();
    for l in labels {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

fn ramp_config() -> Result<(DeviceConfig, dwmtj_core::PulseTrain, usize)> {
    let cfg = RunConfig::default();
    let r = &cfg.protocol.ramp;
    let train = make_amplitude_ramp(r.v_start, r.v_end, r.v_step, cfg.protocol.pulse)?
        .repeat_each(r.pulses_per_amplitude)?;
    Ok((cfg.device, train, cfg.protocol.n_cycles))
}

fn deterministic_ramp() -> Result<Outcome> {
    let (device, train, n) = ramp_config()?;
    let device = device.with_sigma(0.0);
    let start = Instant::now();
    let traces = run_cycles(&device, &train, n, 11)?;
    let elapsed = start.elapsed();
    let expected = [
        Lifecycle::Write,
        Lifecycle::Integrate,
        Lifecycle::Fire,
        Lifecycle::Reset,
    ];
    let mut bad = 0;
    for t in &traces {
        let seq =
            collapse(std::iter::once(Lifecycle::Write).chain(t.records.iter().map(|r| r.label)));
        if seq != expected || t.records != traces[0].records {
            bad += 1;
        }
    }
    let first = &traces[0];
    let at = |l| {
        first
            .first_label(l)
            .map(|k| format!("{}@{:.1}V", k, first.records[k - 1].amplitude))
            .unwrap_or_else(|| "never".into())
    };
    outcome(
        traces.len() == 100 && bad == 0 && elapsed < Duration::from_secs(5),
        format!(
            "{} cycles, {bad} off-sequence; integrate {}, fire {}, reset {}; {:.3}s (limit 5s)",
            traces.len(),
            at(Lifecycle::Integrate),
            at(Lifecycle::Fire),
            at(Lifecycle::Reset),
            elapsed.as_secs_f64()
        ),
    )
}

fn stochastic_ramp_ordering() -> Result<Outcome> {
    let (device, train, n) = ramp_config()?;
    let device = device.with_sigma(0.3);
    let traces = run_cycles(&device, &train, n, 12)?;
    let probs = state_probabilities(&traces)?;
    let cross = |t| probs.crossing(t, 0.5).map(|p| (p.pulse_index, p.amplitude));
    let (Some(i), Some(f), Some(r)) = (
        cross(Transition::Integrate),
        cross(Transition::Fire),
        cross(Transition::Reset),
    ) else {
        return outcome(false, "a transition never reaches p = 0.5");
    };
    outcome(
        i.1 < f.1 && f.1 < r.1,
        format!(
            "p=0.5 at integrate {:.1} V (pulse {}), fire {:.1} V (pulse {}), reset {:.1} V (pulse {})",
            i.1, i.0, f.1, f.0, r.1, r.0
        ),
    )
}

fn histogram_means() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (target, tol, seed) in [(12u32, 1.0, 21), (35, 2.0, 22)] {
        let mut cfg = DeviceConfig::pulse_number(target);
        cfg.kappa = calibrate_kappa(&cfg, 2.4, target)?;
        let h = simulate_switch_counts(&cfg, 2.4, 10 * target, 10_000, 0.3, seed)?;
        let mean = h.mean().unwrap_or(f64::NAN);
        pass &= (mean - target as f64).abs() <= tol && h.censored == 0;
        parts.push(format!(
            "mean {mean:.3} vs {target}±{tol} ({} censored)",
            h.censored
        ));
    }
    outcome(pass, parts.join("; "))
}

fn sigma_recovery() -> Result<Outcome> {
    let cfg = DeviceConfig::pulse_number(12);
    let start = Instant::now();
    let target = simulate_switch_counts(&cfg, 2.4, 200, 10_000, 0.3, 31)?;
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let fit = fit_sigma(&target, &cfg, 2.4, &grid, 10_000, 32)?;
    let elapsed = start.elapsed();
    let err = (fit.sigma_hat - 0.3).abs();
    outcome(
        err <= 0.05 + 1e-12 && elapsed < Duration::from_secs(300),
        format!(
            "sigma_hat {:.3} (|err| {err:.3}, tol 0.05); {:.1}s (limit 300s)",
            fit.sigma_hat,
            elapsed.as_secs_f64()
        ),
    )
}

fn gradient_check() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for neuron in [
        NeuronModel::Lif(LifConfig::default()),
        NeuronModel::DwMtj(DwMtjConfig::default()),
    ] {
        for seed in 0..3 {
            let enc = dwmtj_core::snn::EncoderConfig {
                steps_override: Some(50),
                ..Default::default()
            };
            let net = SpikingNetwork::new(&[2, 2, 2], neuron, enc, seed)?;
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|_| {
                    (0..2)
                        .map(|_| if rng.random::<f64>() < 0.6 { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            let input = SpikeRaster::from_rows(rows)?;
            let label = (seed % 2) as usize;
            let loss = |n: &SpikingNetwork| -> Result<(f64, Vec<f64>)> {
                let mut r = ChaCha8Rng::seed_from_u64(0);
                let (l, g) = n.loss_and_gradient(&input, label, SpikeMode::Smooth, 10.0, &mut r)?;
                Ok((l, g.flatten()))
            };
            let (_, analytic) = loss(&net)?;
            let theta = net.flatten();
            let h = 1e-6;
            for k in 0..theta.len() {
                let mut p = theta.clone();
                p[k] += h;
                let mut plus = net.clone();
                plus.set_flat(&p);
                p[k] -= 2.0 * h;
                let mut minus = net.clone();
                minus.set_flat(&p);
                let fd = (loss(&plus)?.0 - loss(&minus)?.0) / (2.0 * h);
                let scale = fd.abs().max(analytic[k].abs()).max(1e-3);
                worst = worst.max((fd - analytic[k]).abs() / scale);
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("worst relative error {worst:.3e} over 2-2-2 LIF and DW nets (tol 1e-4)"),
    )
}

fn dw_lif_equivalence() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut mismatches = 0;
    let mut spikes = 0u64;
    for _ in 0..1000 {
        let threshold = rng.random_range(0.2..2.0);
        let gain = rng.random_range(0.2..2.0);
        let dw = DwMtjConfig {
            threshold,
            gain,
            sigma: 0.0,
        };
        let lif = LifConfig {
            tau_mem: f64::INFINITY,
            threshold,
        };
        let len = rng.random_range(50..400);
        let (mut a, mut b) = (0.0, 0.0);
        let mut noise = ChaCha8Rng::seed_from_u64(0);
        let mut same = true;
        for _ in 0..len {
            let x = rng.random_range(0.0..0.6);
            let (na, sa) = dwmtj_neuron_step(a, x, &dw, &mut noise);
            let (nb, sb) = lif_neuron_step(b, gain * x, &lif, 0.1e-9);
            same &= sa == sb;
            spikes += sa as u64;
            a = na;
            b = nb;
        }
        mismatches += (!same) as usize;
    }
    outcome(
        mismatches == 0 && spikes > 0,
        format!("{mismatches} of 1000 sequences differ ({spikes} spikes compared)"),
    )
}

fn idx_parsing() -> Result<Outcome> {
    let dir = data_dir();
    let files = [
        ("train-images-idx3-ubyte", 60_000, true),
        ("train-labels-idx1-ubyte", 60_000, false),
        ("t10k-images-idx3-ubyte", 10_000, true),
        ("t10k-labels-idx1-ubyte", 10_000, false),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, count, images) in files {
        let path = dir.join(name);
        let bytes = dwmtj_cli::output::read_maybe_gz(&path).with_context(|| {
            format!(
                "run scripts/fetch_fashion_mnist.py or set DWMTJ_DATA_DIR ({})",
                dir.display()
            )
        })?;
        let (n, shape_ok, round_trip) = if images {
            let set = parse_idx_images(&bytes)?;
            (
                set.count,
                set.rows == 28 && set.cols == 28,
                set.to_idx_bytes() == bytes,
            )
        } else {
            let set = parse_idx_labels(&bytes)?;
            (set.count(), true, set.to_idx_bytes() == bytes)
        };
        pass &= n == count && shape_ok && round_trip;
        parts.push(format!(
            "{name}: {n}{}{}",
            if shape_ok { "" } else { " (not 28x28)" },
            if round_trip {
                ""
            } else {
                " (round-trip differs)"
            }
        ));
    }
    outcome(pass, parts.join(", "))
}

fn desk_training() -> Result<Outcome> {
    let dir = data_dir();
    if !dir.join("train-images-idx3-ubyte").exists()
        && !dir.join("train-images-idx3-ubyte.gz").exists()
    {
        bail!(
            "dataset not found in {}; run scripts/fetch_fashion_mnist.py",
            dir.display()
        );
    }
    let out = tempfile::tempdir()?;
    let cli = Cli {
        config: Some(workspace_root().join("configs/snn_desk.json")),
        out: Some(out.path().to_path_buf()),
        seed: None,
        overrides: vec![format!("io.data_dir={}", dir.display())],
        command: Command::SnnTrain,
    };
    let start = Instant::now();
    let summary = dwmtj_cli::run(&cli)?;
    let elapsed = start.elapsed();
    let acc = |label: &str| -> Result<f64> {
        summary["final_test_accuracy"][label]["mean"]
            .as_f64()
            .with_context(|| format!("no accuracy for {label} in {summary}"))
    };
    let lif = acc("lif")?;
    let dw3 = acc("dw_mtj_sigma0.3")?;
    let dw0 = acc("dw_mtj_sigma0")?;
    let ok = |a: f64| a >= 0.70 && (a - lif).abs() <= 0.05;
    outcome(
        ok(dw3) && ok(dw0) && elapsed <= Duration::from_secs(30 * 60),
        format!(
            "DW sigma=0.3 {dw3:.4}, DW sigma=0 {dw0:.4}, LIF {lif:.4} (DW >= 0.70, within 0.05 of LIF); {:.0}s (limit 1800s)",
            elapsed.as_secs_f64()
        ),
    )
}

/// Tiny 4x4 ten-class dataset for the reproducibility runs.
fn write_synthetic_idx(dir: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut make = |n: usize| -> Result<(IdxImageSet, IdxLabelSet)> {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let pixels: Vec<u8> = labels
            .iter()
            .flat_map(|&l| (0..16).map(move |p| (p, l)))
            .map(|(p, l)| {
                if p as u8 == l || p as u8 == l + 6 {
                    250
                } else {
                    rng.random_range(0..60)
                }
            })
            .collect();
        Ok((IdxImageSet::new(4, 4, pixels)?, IdxLabelSet { labels }))
    };
    let (ti, tl) = make(60)?;
    let (ei, el) = make(30)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("train-images-idx3-ubyte"), ti.to_idx_bytes())?;
    std::fs::write(dir.join("train-labels-idx1-ubyte"), tl.to_idx_bytes())?;
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), ei.to_idx_bytes())?;
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), el.to_idx_bytes())?;
    Ok(())
}

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        files.push((
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path())?,
        ));
    }
    files.sort();
    Ok(files)
}

fn reproducibility() -> Result<Outcome> {
    let work = tempfile::tempdir()?;
    let data = work.path().join("data");
    write_synthetic_idx(&data)?;
    let config = work.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::to_string_pretty(&serde_json::json!({
            "master_seed": 7,
            "protocol": { "n_cycles": 20, "constant": { "n_pulses": 30 } },
            "fit": { "grid": { "start": 0.0, "stop": 0.6, "step": 0.1 }, "n_runs": 300, "synthetic_runs": 300 },
            "snn": {
                "encoder": { "steps_override": 50 },
                "sizes": [16, 12, 10],
                "train": { "learning_rate": 0.01, "batch_size": 16, "epochs": 2 },
                "seeds": [1, 2],
                "checkpoint": work.path().join("out/checkpoint_lif_seed1.json"),
            },
            "io": { "data_dir": data, "out_dir": work.path().join("out"), "gzip": true },
        }))?,
    )?;
    let bin = env!("CARGO_BIN_EXE_dwmtj");
    let commands = [
        "device-sweep",
        "pulse-train",
        "fit",
        "calibrate",
        "snn-train",
        "snn-eval",
    ];
    let mut runs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        let out = work.path().join("out");
        if out.exists() {
            std::fs::remove_dir_all(&out)?;
        }
        let mut files = Vec::new();
        for cmd in commands {
            let status = Process::new(bin)
                .args(["--config", config.to_str().context("utf-8 path")?, cmd])
                .env("RAYON_NUM_THREADS", threads)
                .stdout(std::process::Stdio::null())
                .stderr(std::process::Stdio::null())
                .status()?;
            ensure!(
                status.success(),
                "run {i}: `dwmtj {cmd}` failed with {status}"
            );
            // Commands share the directory and overwrite summary.json and
            // manifest.json, so snapshot it after each one.
            files.extend(
                read_tree(&out)?
                    .into_iter()
                    .map(|(n, b)| (format!("{cmd}/{n}"), b)),
            );
        }
        runs.push(files);
    }
    let names = |r: &[(String, Vec<u8>)]| r.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    let differing: Vec<String> = runs[0]
        .iter()
        .zip(&runs[1])
        .chain(runs[0].iter().zip(&runs[2]))
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.clone())
        .collect();
    let same_names = names(&runs[0]) == names(&runs[1]) && names(&runs[0]) == names(&runs[2]);
    outcome(
        same_names && differing.is_empty(),
        format!(
            "{} file snapshots from 6 commands compared across reruns and 1 vs 4 threads; differing: {:?}",
            runs[0].len(),
            differing
        ),
    )
}

type Check = fn() -> Result<Outcome>;

fn main() {
    // Numeric arguments pick criteria (`cargo test --test acceptance -- 2 5`).
    // Any other filter skips this target unless it names it.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let picked: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let names: Vec<&String> = args
        .iter()
        .filter(|a| a.parse::<usize>().is_err())
        .collect();
    if !names.is_empty() && !names.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }

    // Wall-clock limits per criterion, in seconds.
    let criteria: [(&str, Check, f64); 10] = [
        ("velocity oracle", velocity_oracle, 1.0),
        ("deterministic ramp lifecycle", deterministic_ramp, 5.0),
        (
            "stochastic ramp crossing order",
            stochastic_ramp_ordering,
            30.0,
        ),
        ("pulses-to-fire histogram means", histogram_means, 60.0),
        ("sigma recovery by grid fit", sigma_recovery, 300.0),
        ("BPTT gradient check", gradient_check, 10.0),
        ("DW and leak-free LIF equivalence", dw_lif_equivalence, 5.0),
        ("IDX parsing and round trip", idx_parsing, 5.0),
        ("desk-scale Fashion-MNIST accuracy", desk_training, 1800.0),
        ("byte-identical reruns", reproducibility, 120.0),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        if !picked.is_empty() && !picked.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (mut pass, mut detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let secs = start.elapsed().as_secs_f64();
        if secs > *limit {
            pass = false;
            detail.push_str(&format!("; over the {limit}s limit"));
        }
        failed += (!pass) as usize;
        println!(
            "{} [{}] {name}: {detail} ({secs:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
