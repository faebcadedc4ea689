use std::collections::BTreeMap;

use anyhow::{bail, ensure, Context, Result};
use dwmtj_core::dataset::{
    make_split, parse_idx_images, parse_idx_labels, IdxImageSet, IdxLabelSet,
};
use dwmtj_core::fit::{calibrate_kappa, fit_sigma, pulses_to_fire, simulate_switch_counts};
use dwmtj_core::protocol::{
    make_amplitude_ramp, make_constant_train, run_cycles, state_probabilities, Transition,
};
use dwmtj_core::snn::{evaluate, train_with, EpochMetrics, SpikingNetwork, TrainConfig};
use dwmtj_core::{CycleTrace, Lifecycle, PulseSpec, PulseTrain, SwitchHistogram};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{read_maybe_gz, OutDir};

#[derive(Serialize)]
struct TraceRow {
    cycle: usize,
    pulse_index: usize,
    #[serde(rename = "amplitude_V")]
    amplitude: f64,
    r_a_ohm: f64,
    r_b_ohm: f64,
    label: &'static str,
}

#[derive(Serialize)]
struct ProbabilityRow {
    pulse_index: usize,
    #[serde(rename = "amplitude_V")]
    amplitude: f64,
    p_integrate: f64,
    p_fire: f64,
    p_reset: f64,
}

#[derive(Serialize, Deserialize)]
struct HistogramRow {
    /// Pulse count, or `censored`.
    pulses_to_fire: String,
    frequency: u64,
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    epoch: usize,
    train_loss: Option<f64>,
    test_accuracy: f64,
    seed: u64,
    neuron_type: &'a str,
}

#[derive(Serialize)]
struct SeedSummaryRow<'a> {
    neuron_type: &'a str,
    epoch: usize,
    n_seeds: usize,
    mean_accuracy: f64,
    std_accuracy: f64,
}

fn trace_rows(traces: &[CycleTrace]) -> impl Iterator<Item = TraceRow> + '_ {
    traces.iter().enumerate().flat_map(|(c, t)| {
        t.records.iter().map(move |r| TraceRow {
            cycle: c,
            pulse_index: r.pulse_index,
            amplitude: r.amplitude,
            r_a_ohm: r.r_a,
            r_b_ohm: r.r_b,
            label: r.label.as_str(),
        })
    })
}

fn histogram_rows(h: &SwitchHistogram) -> Vec<HistogramRow> {
    let mut rows: Vec<HistogramRow> = h
        .counts
        .iter()
        .map(|(&k, &f)| HistogramRow {
            pulses_to_fire: k.to_string(),
            frequency: f,
        })
        .collect();
    rows.push(HistogramRow {
        pulses_to_fire: "censored".into(),
        frequency: h.censored,
    });
    rows
}

fn histogram_summary(h: &SwitchHistogram) -> Value {
    json!({
        "n_runs": h.n_runs,
        "fired": h.fired(),
        "censored": h.censored,
        "mean": h.mean(),
        "mode": h.mode(),
        "median": h.quantile(0.5),
        "iqr": h.iqr(),
    })
}

/// Labels must never move backwards; a run that breaks this is a bug, not a
/// result.
fn check_traces(traces: &[CycleTrace]) -> Result<()> {
    for (c, t) in traces.iter().enumerate() {
        let mut prev = Lifecycle::Write;
        for r in &t.records {
            ensure!(
                r.label >= prev,
                "cycle {c}: label {} after {}",
                r.label,
                prev
            );
            prev = r.label;
        }
    }
    Ok(())
}

fn template(cfg: &RunConfig) -> PulseSpec {
    cfg.protocol.pulse
}

fn ramp_train(cfg: &RunConfig) -> Result<PulseTrain> {
    let r = &cfg.protocol.ramp;
    Ok(
        make_amplitude_ramp(r.v_start, r.v_end, r.v_step, template(cfg))?
            .repeat_each(r.pulses_per_amplitude)?,
    )
}

fn run_traces(cfg: &RunConfig, train: &PulseTrain) -> Result<Vec<CycleTrace>> {
    let mut device = cfg.device.clone();
    if let Some(v) = cfg.protocol.v_write {
        device.write.v_write = v;
    }
    let traces = run_cycles(&device, train, cfg.protocol.n_cycles, cfg.master_seed)?;
    check_traces(&traces)?;
    Ok(traces)
}

pub fn device_sweep(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let train = ramp_train(cfg)?;
    let traces = run_traces(cfg, &train)?;
    let probs = state_probabilities(&traces)?;
    out.csv("trace.csv", trace_rows(&traces))?;
    out.csv(
        "probabilities.csv",
        probs.points.iter().map(|p| ProbabilityRow {
            pulse_index: p.pulse_index,
            amplitude: p.amplitude,
            p_integrate: p.p_integrate,
            p_fire: p.p_fire,
            p_reset: p.p_reset,
        }),
    )?;
    let crossing = |t| {
        probs
            .crossing(t, 0.5)
            .map(|p| json!({"pulse_index": p.pulse_index, "amplitude_V": p.amplitude}))
    };
    let complete = traces
        .iter()
        .filter(|t| t.terminal == Lifecycle::Reset)
        .count();
    let summary = json!({
        "n_cycles": traces.len(),
        "cycles_reaching_reset": complete,
        "p50_crossings": {
            "integrate": crossing(Transition::Integrate),
            "fire": crossing(Transition::Fire),
            "reset": crossing(Transition::Reset),
        },
    });
    out.json("summary.json", &summary)?;
    Ok(summary)
}

pub fn pulse_train(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let c = &cfg.protocol.constant;
    let train = make_constant_train(c.amplitude, c.n_pulses, template(cfg))?;
    let traces = run_traces(cfg, &train)?;
    let hist = SwitchHistogram::from_outcomes(
        traces
            .iter()
            .map(|t| t.first_reaching(Lifecycle::Fire).map(|k| k as u32)),
    );
    out.csv("trace.csv", trace_rows(&traces))?;
    out.csv("histogram.csv", histogram_rows(&hist))?;
    let summary = json!({
        "amplitude_V": c.amplitude,
        "n_pulses": c.n_pulses,
        "pulses_to_fire": histogram_summary(&hist),
    });
    out.json("summary.json", &summary)?;
    Ok(summary)
}

fn read_histogram(path: &std::path::Path) -> Result<SwitchHistogram> {
    let bytes = read_maybe_gz(path)?;
    let mut h = SwitchHistogram::default();
    for (i, row) in csv::Reader::from_reader(&bytes[..])
        .deserialize::<HistogramRow>()
        .enumerate()
    {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if row.pulses_to_fire == "censored" {
            h.censored += row.frequency;
        } else {
            let k: u32 = row.pulses_to_fire.trim().parse().with_context(|| {
                format!(
                    "{}: bad pulse count {:?}",
                    path.display(),
                    row.pulses_to_fire
                )
            })?;
            ensure!(k >= 1, "{}: pulse counts start at 1", path.display());
            *h.counts.entry(k).or_default() += row.frequency;
        }
        h.n_runs += row.frequency;
    }
    Ok(h)
}

pub fn fit(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let f = &cfg.fit;
    let (target, source) = match (&f.target_path, f.synthetic_sigma) {
        (Some(p), _) => (read_histogram(p)?, json!({"path": p})),
        (None, Some(sigma)) => {
            let max_pulses = 200;
            let h = simulate_switch_counts(
                &cfg.device,
                f.amplitude,
                max_pulses,
                f.synthetic_runs,
                sigma,
                cfg.master_seed,
            )?;
            (
                h,
                json!({"synthetic_sigma": sigma, "n_runs": f.synthetic_runs}),
            )
        }
        (None, None) => bail!("fit needs fit.target_path or fit.synthetic_sigma"),
    };
    let grid = f.grid.values()?;
    let result = fit_sigma(
        &target,
        &cfg.device,
        f.amplitude,
        &grid,
        f.n_runs,
        cfg.master_seed,
    )?;
    out.csv("target_histogram.csv", histogram_rows(&target))?;
    let doc = json!({
        "sigma_hat": result.sigma_hat,
        "loss": result.loss,
        "n_runs": result.n_runs,
        "amplitude_V": f.amplitude,
        "target": source,
        "target_stats": histogram_summary(&target),
        "grid": result.grid.iter().map(|(s, l)| json!({"sigma": s, "loss": l})).collect::<Vec<_>>(),
    });
    out.json("fit.json", &doc)?;
    Ok(json!({"sigma_hat": result.sigma_hat, "loss": result.loss}))
}

pub fn calibrate(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let f = &cfg.fit;
    let kappa = calibrate_kappa(&cfg.device, f.amplitude, f.calibrate_target)?;
    let mut check = cfg.device.clone().with_sigma(0.0);
    check.kappa = kappa;
    let pulse = PulseSpec {
        amplitude: f.amplitude,
        ..template(cfg)
    };
    let mut rng = dwmtj_core::seed::stream(cfg.master_seed, &[]);
    let count = pulses_to_fire(&check, &pulse, 10 * f.calibrate_target + 10, &mut rng)?;
    let doc = json!({
        "kappa": kappa,
        "target_pulses": f.calibrate_target,
        "amplitude_V": f.amplitude,
        "verified_pulses_to_fire": count,
    });
    out.json("kappa.json", &doc)?;
    Ok(doc)
}

struct Dataset {
    train_images: IdxImageSet,
    train_labels: IdxLabelSet,
    test_images: IdxImageSet,
    test_labels: IdxLabelSet,
}

fn load_images(cfg: &RunConfig, name: &str) -> Result<IdxImageSet> {
    let path = cfg.io.data_dir.join(name);
    parse_idx_images(&read_maybe_gz(&path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_labels(cfg: &RunConfig, name: &str) -> Result<IdxLabelSet> {
    let path = cfg.io.data_dir.join(name);
    parse_idx_labels(&read_maybe_gz(&path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_dataset(cfg: &RunConfig, with_train: bool) -> Result<Dataset> {
    let io = &cfg.io;
    let (train_images, train_labels) = if with_train {
        (
            load_images(cfg, &io.train_images)?,
            load_labels(cfg, &io.train_labels)?,
        )
    } else {
        (
            IdxImageSet::new(1, 1, Vec::new())?,
            IdxLabelSet { labels: Vec::new() },
        )
    };
    Ok(Dataset {
        train_images,
        train_labels,
        test_images: load_images(cfg, &io.test_images)?,
        test_labels: load_labels(cfg, &io.test_labels)?,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn snn_train(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let data = load_dataset(cfg, true)?;
    let s = &cfg.snn;
    let train_split = make_split(
        &data.train_images,
        &data.train_labels,
        s.train_subset,
        cfg.master_seed,
    )?;
    let test_split = make_split(
        &data.test_images,
        &data.test_labels,
        s.test_subset,
        cfg.master_seed,
    )?;
    ensure!(
        train_split.pixels_per_image() == s.sizes[0],
        "images have {} pixels but snn.sizes[0] is {}",
        train_split.pixels_per_image(),
        s.sizes[0]
    );

    let mut all: Vec<EpochMetrics> = Vec::new();
    for neuron in &s.neurons {
        for seed in cfg.seeds() {
            let label = neuron.label();
            log::info!("training {label}, seed {seed}");
            let mut net = SpikingNetwork::new(&s.sizes, *neuron, s.encoder, seed)?;
            let train_cfg = TrainConfig { seed, ..s.train };
            let metrics = train_with(&mut net, &train_split, &test_split, &train_cfg, |m, _| {
                eprintln!(
                    "{label} seed {seed} epoch {}: loss {} acc {:.4}",
                    m.epoch,
                    m.train_loss.map_or("-".to_string(), |l| format!("{l:.4}")),
                    m.test_accuracy
                );
            })?;
            out.json(&format!("checkpoint_{label}_seed{seed}.json"), &net)?;
            all.extend(metrics);
        }
    }
    out.csv(
        "metrics.csv",
        all.iter().map(|m| MetricsRow {
            epoch: m.epoch,
            train_loss: m.train_loss,
            test_accuracy: m.test_accuracy,
            seed: m.seed,
            neuron_type: &m.neuron_type,
        }),
    )?;

    // Per-model accuracy across seeds, keyed in first-seen order.
    let mut order: Vec<&str> = Vec::new();
    let mut by_model: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for m in &all {
        let i = match order.iter().position(|&n| n == m.neuron_type) {
            Some(i) => i,
            None => {
                order.push(&m.neuron_type);
                order.len() - 1
            }
        };
        by_model
            .entry((i, m.epoch))
            .or_default()
            .push(m.test_accuracy);
    }
    let rows: Vec<SeedSummaryRow> = by_model
        .iter()
        .map(|(&(i, epoch), accs)| {
            let (mean, std) = mean_std(accs);
            SeedSummaryRow {
                neuron_type: order[i],
                epoch,
                n_seeds: accs.len(),
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect();
    out.csv("seed_summary.csv", &rows)?;

    let last = s.train.epochs;
    let final_acc: BTreeMap<&str, Value> = rows
        .iter()
        .filter(|r| r.epoch == last)
        .map(|r| {
            (
                r.neuron_type,
                json!({"mean": r.mean_accuracy, "std": r.std_accuracy, "n_seeds": r.n_seeds}),
            )
        })
        .collect();
    let summary = json!({
        "train_size": train_split.len(),
        "test_size": test_split.len(),
        "epochs": last,
        "final_test_accuracy": final_acc,
    });
    out.json("summary.json", &summary)?;
    Ok(summary)
}

pub fn snn_eval(cfg: &RunConfig, out: &mut OutDir) -> Result<Value> {
    let Some(path) = &cfg.snn.checkpoint else {
        bail!("snn-eval needs snn.checkpoint");
    };
    let bytes = read_maybe_gz(path)?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let net: SpikingNetwork = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        anyhow::anyhow!("{}: error at `{}`: {}", path.display(), e.path(), e.inner())
    })?;
    let data = load_dataset(cfg, false)?;
    let split = make_split(
        &data.test_images,
        &data.test_labels,
        cfg.snn.test_subset,
        cfg.master_seed,
    )?;
    ensure!(
        split.pixels_per_image() == net.n_inputs(),
        "images have {} pixels but the checkpoint expects {}",
        split.pixels_per_image(),
        net.n_inputs()
    );
    let acc = evaluate(&net, &split, cfg.master_seed)?;
    #[derive(Serialize)]
    struct EvalRow<'a> {
        neuron_type: &'a str,
        n_test: usize,
        test_accuracy: f64,
        seed: u64,
    }
    let label = net.neuron.label();
    out.csv(
        "eval.csv",
        [EvalRow {
            neuron_type: &label,
            n_test: split.len(),
            test_accuracy: acc,
            seed: cfg.master_seed,
        }],
    )?;
    Ok(json!({"neuron_type": label, "n_test": split.len(), "test_accuracy": acc}))
}
