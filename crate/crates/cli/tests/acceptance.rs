//! Acceptance suite: one PASS/FAIL line per criterion, each checked at its
//! fixed tolerance and time limit. Failures are reported, not hidden; set
//! `MOIRA_ACCEPTANCE_STRICT=1` to also exit non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use moira::attribution::{attribution_campaign, integrated_gradients, AttributionConfig};
use moira::data::{anova_f, synthesize, MaskedDataset, SynthConfig, SynthModality};
use moira::metrics::{auroc, ScoredLabels};
use moira::model::{dataset_inputs, forward_batch, GateKind, Model, ModelConfig, Params};
use moira::numerics::gradcheck::{max_rel_err, numeric_grad, FD_STEP};
use moira::numerics::{Tape, Tensor2};
use moira::objective::{objective_var, ObjectiveConfig};
use moira::training::{ablation_suite, fit, prepare, AblationRow, PrepareConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let o = f();
        self.record(id, name, limit, t.elapsed(), o);
    }

    fn record(&mut self, id: usize, name: &str, limit: Duration, took: Duration, o: Outcome) {
        let in_time = took <= limit;
        let pass = o.pass && in_time;
        if !pass {
            self.failures += 1;
        }
        println!(
            "[{}] {id:>2}. {name}: {} ({:.1} s, limit {} s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn modality(name: &str, dim: usize, noise: f64, missing: f64) -> SynthModality {
    SynthModality {
        name: name.into(),
        feature_dim: dim,
        noise_std: noise,
        missing_rate: missing,
        signal_features: None,
    }
}

fn small_config(names: &[&str], dims: &[usize], dropout: f64) -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        hidden_dim: Some(5),
        predictor_hidden_dim: Some(5),
        dropout,
        ..ModelConfig::default()
    }
    .with_modalities(names, dims, 2)
}

fn objective_value(params: &Params<Tensor2>, cfg: &ModelConfig, ds: &MaskedDataset, obj: &ObjectiveConfig) -> f64 {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let rows: Vec<usize> = (0..ds.n_samples()).collect();
    let inputs = dataset_inputs(&mut tape, ds, &rows);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = forward_batch(&mut tape, &p, cfg, &inputs, rows.len(), false, &mut rng).unwrap();
    let l = objective_var(&mut tape, &fwd, &ds.labels, obj).unwrap();
    tape.value(l.total).values()[0]
}

fn gradient_correctness() -> Outcome {
    let ds = synthesize(&SynthConfig {
        n_samples: 12,
        n_classes: 2,
        latent_dim: 3,
        modalities: vec![modality("a", 6, 0.5, 0.25), modality("b", 4, 0.5, 0.25)],
        class_separation: 1.5,
        seed: 1,
    })
    .unwrap();
    let cfg = small_config(&["a", "b"], &[6, 4], 0.0);
    let model = Model::new(cfg.clone(), 3).unwrap();
    let obj = ObjectiveConfig::default();
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let rows: Vec<usize> = (0..ds.n_samples()).collect();
    let inputs = dataset_inputs(&mut tape, &ds, &rows);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = forward_batch(&mut tape, &p, &cfg, &inputs, rows.len(), false, &mut rng).unwrap();
    let l = objective_var(&mut tape, &fwd, &ds.labels, &obj).unwrap();
    let c = l.components(&tape);
    if !(c.aux > 0.0 && c.clip > 0.0) {
        return outcome(false, format!("a loss term is inactive: {c:?}"));
    }
    let grads = tape.backward(l.total).unwrap();
    let vars = p.iter();
    let n_tensors = model.params.iter().len();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (k, var) in vars.iter().enumerate().take(n_tensors) {
        let analytic = grads.get_or_zeros(**var, tape.value(**var));
        let x = model.params.iter()[k].clone();
        let numeric = numeric_grad(&x, FD_STEP, &mut |v: &Tensor2| {
            let mut q = model.params.clone();
            *q.iter_mut()[k] = v.clone();
            objective_value(&q, &cfg, &ds, &obj)
        });
        worst = worst.max(max_rel_err(&analytic, &numeric));
        count += analytic.len();
    }
    outcome(worst < 1e-5, format!("max rel err {worst:.2e} over {count} entries (< 1e-5)"))
}

fn masking_invariance() -> Outcome {
    let ds = synthesize(&SynthConfig {
        n_samples: 16,
        n_classes: 2,
        latent_dim: 3,
        modalities: vec![modality("a", 6, 0.5, 0.4), modality("b", 4, 0.5, 0.4), modality("c", 3, 0.5, 0.4)],
        class_separation: 1.5,
        seed: 2,
    })
    .unwrap();
    let cfg = small_config(&["a", "b", "c"], &[6, 4, 3], 0.3);
    let model = Model::new(cfg.clone(), 5).unwrap();
    let obj = ObjectiveConfig::default();
    let run = |ds: &MaskedDataset, training: bool| {
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape);
        let rows: Vec<usize> = (0..ds.n_samples()).collect();
        let inputs = dataset_inputs(&mut tape, ds, &rows);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fwd = forward_batch(&mut tape, &p, &cfg, &inputs, rows.len(), training, &mut rng).unwrap();
        let l = objective_var(&mut tape, &fwd, &ds.labels, &obj).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
        (
            bits(tape.value(fwd.probs).values()),
            bits(tape.value(fwd.alpha).values()),
            tape.value(l.total).values()[0].to_bits(),
        )
    };
    let absent: usize = ds.presence.iter().flatten().filter(|&&p| !p).count();
    let base = [run(&ds, false), run(&ds, true)];
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let mut d = ds.clone();
        for i in 0..d.n_samples() {
            for m in 0..d.n_modalities() {
                if !d.presence[i][m] {
                    for v in d.modalities[m].matrix.row_mut(i) {
                        *v = match r.random_range(0..4) {
                            0 => f64::NAN,
                            1 => f64::INFINITY,
                            _ => r.random_range(-1e6..1e6),
                        };
                    }
                }
            }
        }
        if run(&d, false) != base[0] || run(&d, true) != base[1] {
            return outcome(false, format!("trial {trial} changed the output"));
        }
    }
    outcome(absent > 0, format!("200 trials over {absent} absent entries, bitwise identical"))
}

fn gate_contract() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    let mut singles = 0;
    for trial in 0..500 {
        let gate = if trial % 2 == 0 { GateKind::LinearHead } else { GateKind::Scalar };
        let cfg = ModelConfig {
            gate,
            ..small_config(&["a", "b", "c", "d"], &[3, 3, 3, 3], 0.0)
        };
        let model = Model::new(cfg, trial).unwrap();
        let presence: Vec<bool> = loop {
            let p: Vec<bool> = (0..4).map(|_| r.random_bool(0.5)).collect();
            if p.iter().any(|&x| x) {
                break p;
            }
        };
        let emb: Vec<Option<Tensor2>> = presence
            .iter()
            .map(|&p| p.then(|| Tensor2::from_fn(1, 4, |_, _| r.random_range(-3.0..3.0))))
            .collect();
        let alpha = model.gate(&emb).unwrap();
        let sum: f64 = alpha.iter().zip(&presence).filter(|(_, &p)| p).map(|(a, _)| a).sum();
        worst = worst.max((sum - 1.0).abs());
        if alpha.iter().zip(&presence).any(|(&a, &p)| !p && a != 0.0) {
            return outcome(false, format!("trial {trial}: nonzero weight on an absent modality"));
        }
        if presence.iter().filter(|&&p| p).count() == 1 {
            singles += 1;
            if alpha.iter().zip(&presence).any(|(&a, &p)| p && a != 1.0) {
                return outcome(false, format!("trial {trial}: single modality weight {alpha:?}"));
            }
        }
    }
    outcome(
        worst <= 1e-12 && singles > 0,
        format!("500 patterns, max |sum - 1| = {worst:.1e}, {singles} single-modality cases with weight 1"),
    )
}

// Textbook one-way ANOVA with two-pass group means.
fn brute_anova(x: &[f64], y: &[usize], g: usize) -> f64 {
    let n = x.len();
    let grand = x.iter().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for c in 0..g {
        let members: Vec<f64> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(v, _)| *v).collect();
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        ss_between += members.len() as f64 * (mean - grand).powi(2);
        ss_within += members.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    (ss_between / (g - 1) as f64) / (ss_within / (n - g) as f64)
}

fn anova_oracle() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = r.random_range(2..=3);
        let n = r.random_range(g + 2..=50);
        let p = r.random_range(1..=4);
        let y: Vec<usize> = (0..n).map(|i| if i < g { i } else { r.random_range(0..g) }).collect();
        let x = Tensor2::from_fn(n, p, |i, _| y[i] as f64 * 0.3 + r.random_range(-2.0..2.0));
        let f = anova_f(&x, &y).unwrap();
        for (j, fj) in f.iter().enumerate() {
            let col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
            let want = brute_anova(&col, &y, g);
            worst = worst.max((fj - want).abs() / want.abs().max(1e-300));
        }
    }
    outcome(worst < 1e-10, format!("1000 instances, max rel err {worst:.2e} (< 1e-10)"))
}

fn brute_auroc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut twice = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            pos += 1;
            for (j, &lj) in labels.iter().enumerate() {
                if lj == 0 {
                    twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        } else {
            neg += 1;
        }
    }
    twice as f64 / (2 * pos * neg) as f64
}

fn auroc_oracle() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(41);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = r.random_range(2..=200);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let levels = r.random_range(2..=50) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0.0..1.0) * levels).floor() / levels).collect();
        let got = auroc(&ScoredLabels::new(scores.clone(), &labels).unwrap()).unwrap();
        if got.to_bits() != brute_auroc(&scores, &labels).to_bits() {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("1000 instances with ties, {mismatches} not bitwise equal"))
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a.len())
        .map(|i| (0..b[0].len()).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn ig_axioms() -> Outcome {
    // Completeness on a freshly initialized random model.
    let cfg = small_config(&["a", "b"], &[6, 4], 0.5);
    let model = Model::new(cfg, 0).unwrap();
    let mut r = moira::rng::stream(0, "acceptance/ig");
    let sample: Vec<Tensor2> = [6, 4]
        .iter()
        .map(|&d| Tensor2::from_fn(1, d, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    let mut notes = Vec::new();
    let mut pass = true;
    for m in 0..2 {
        let base = vec![0.0; sample[m].cols()];
        let res = integrated_gradients(&model, &sample, &[true, true], m, 1, 512, &base, "s0").unwrap();
        let bound = 1e-3 * (res.output - res.baseline_output).abs() + 1e-6;
        pass &= res.completeness_gap <= bound;
        notes.push(format!("gap[{m}] {:.2e} vs bound {bound:.2e}", res.completeness_gap));
        let zero = integrated_gradients(&model, &sample, &[true, true], m, 1, 512, sample[m].row(0), "s0").unwrap();
        if zero.attributions.iter().any(|&a| a != 0.0) {
            pass = false;
            notes.push("nonzero attribution at the baseline".into());
        }
    }
    // Exactness where every activation stays positive, so the logit is linear.
    let lin_cfg = ModelConfig {
        embed_dim: 3,
        hidden_dim: Some(4),
        predictor_hidden_dim: Some(3),
        ..ModelConfig::default()
    }
    .with_modalities(&["a"], &[5], 2);
    let mut lin = Model::new(lin_cfg, 0).unwrap();
    for t in lin.params.iter_mut() {
        t.values_mut().iter_mut().for_each(|v| *v = r.random_range(0.1..1.0));
    }
    let x: Vec<f64> = (0..5).map(|_| r.random_range(0.1..2.0)).collect();
    let enc = &lin.params.modalities[0].encoder;
    let pred = &lin.params.predictor;
    let jac = [&enc.w1, &enc.w2, &pred.w1, &pred.w2]
        .iter()
        .map(|t| t.to_rows())
        .reduce(|a, b| matmul(&a, &b))
        .unwrap();
    let mut lin_err: f64 = 0.0;
    for steps in [1, 3, 128, 512] {
        let res = integrated_gradients(&lin, &[Tensor2::row_vector(x.clone())], &[true], 0, 1, steps, &[0.0; 5], "s")
            .unwrap();
        for j in 0..5 {
            lin_err = lin_err.max((res.attributions[j] - x[j] * jac[j][1]).abs());
        }
    }
    pass &= lin_err <= 1e-10;
    notes.push(format!("linear max err {lin_err:.1e}"));
    outcome(pass, notes.join("; "))
}

fn overfit_sanity() -> Outcome {
    let ds = synthesize(&SynthConfig {
        n_samples: 64,
        n_classes: 2,
        latent_dim: 3,
        modalities: vec![
            modality("a", 20, 0.5, 0.2),
            modality("b", 15, 0.5, 0.2),
            modality("c", 10, 0.5, 0.2),
        ],
        class_separation: 4.0,
        seed: 7,
    })
    .unwrap();
    let p = prepare(&ds, &PrepareConfig::default(), 0).unwrap();
    let mc = ModelConfig {
        embed_dim: 32,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 2000,
        ..TrainConfig::default()
    };
    let fitted = fit(&p.train, &mc, &tc).unwrap();
    let probs = fitted.model.predict_dataset(&p.train).unwrap();
    let hits = (0..p.train.n_samples())
        .filter(|&i| moira::metrics::argmax(probs.row(i)) == p.train.labels[i])
        .count();
    let acc = hits as f64 / p.train.n_samples() as f64;
    outcome(acc >= 0.99, format!("train accuracy {acc:.4} on {} samples (>= 0.99)", p.train.n_samples()))
}

fn benchmark() -> MaskedDataset {
    synthesize(&SynthConfig {
        n_samples: 500,
        n_classes: 2,
        latent_dim: 4,
        modalities: ["mrna", "meth", "mirna"]
            .iter()
            .map(|n| modality(n, 50, 1.0, 0.4))
            .collect(),
        class_separation: 1.0,
        seed: 0,
    })
    .unwrap()
}

fn bench_model() -> ModelConfig {
    ModelConfig {
        embed_dim: 32,
        ..ModelConfig::default()
    }
}

fn bench_train() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        ..TrainConfig::default()
    }
}

fn row<'a>(rows: &'a [AblationRow], label: &str) -> Option<&'a AblationRow> {
    rows.iter().find(|r| r.condition == label)
}

fn mean_acc(rows: &[AblationRow], label: &str) -> Option<f64> {
    row(rows, label).and_then(|r| r.result.as_ref()).map(|r| r.mean.accuracy)
}

fn planted_recovery() -> Outcome {
    let planted = [7usize, 23, 41, 66, 88];
    let mut mods = vec![modality("mrna", 100, 1.0, 0.2), modality("meth", 30, 1.0, 0.2)];
    mods[0].signal_features = Some(planted.to_vec());
    let ds = synthesize(&SynthConfig {
        n_samples: 300,
        n_classes: 2,
        latent_dim: 3,
        modalities: mods,
        class_separation: 1.5,
        seed: 3,
    })
    .unwrap();
    let p = prepare(&ds, &PrepareConfig::default(), 0).unwrap();
    let acfg = AttributionConfig {
        n_runs: 20,
        ..AttributionConfig::default()
    };
    let res = attribution_campaign(&p.train, &p.test, &bench_model(), &bench_train(), &acfg, 0, 1).unwrap();
    let Some(rep) = res.reports.iter().find(|r| r.modality_name == "mrna") else {
        return outcome(false, "no report for the planted modality");
    };
    let top: Vec<&str> = rep.top.iter().map(|r| r.feature_id.as_str()).collect();
    let found = planted
        .iter()
        .filter(|&&j| top.contains(&format!("mrna_f{j:03}").as_str()))
        .count();
    outcome(found >= 4, format!("{found} of 5 planted features in the top {} (>= 4)", top.len()))
}

fn moira(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_moira"))
        .args(args)
        .env("MOIRA_LOG", "error")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(&p, base, out);
        } else {
            let mut bytes = std::fs::read(&p).unwrap();
            if p.file_name().is_some_and(|n| n == "run_manifest.json") {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("created_unix");
                bytes = v.to_string().into_bytes();
            }
            out.insert(p.strip_prefix(base).unwrap().to_path_buf(), bytes);
        }
    }
}

fn pipeline(root: &Path) -> Option<BTreeMap<PathBuf, Vec<u8>>> {
    let synth = serde_json::json!({
        "n_samples": 120, "latent_dim": 3, "class_separation": 2.0,
        "modalities": [
            { "name": "mrna", "feature_dim": 30, "noise_std": 0.8, "missing_rate": 0.2 },
            { "name": "meth", "feature_dim": 20, "noise_std": 0.8, "missing_rate": 0.3 },
            { "name": "mirna", "feature_dim": 10, "noise_std": 0.8, "missing_rate": 0.3 }
        ]
    });
    let config = serde_json::json!({
        "model": { "embed_dim": 8 },
        "train": { "lr": 0.005, "epochs": 40 },
        "prepare": { "top_k": 15 },
        "attribution": { "steps": 32 }
    });
    std::fs::create_dir_all(root).unwrap();
    std::fs::write(root.join("synth.json"), synth.to_string()).unwrap();
    std::fs::write(root.join("config.json"), config.to_string()).unwrap();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let cfg = p("config.json");
    let steps: [Vec<String>; 5] = [
        vec!["synth".into(), "--config".into(), p("synth.json"), "--seed".into(), "7".into(), "--out".into(), p("out/data")],
        ["select", "--dataset", &p("out/data/dataset.json"), "--config", &cfg, "--seed", "7", "--out", &p("out/select")]
            .map(String::from)
            .to_vec(),
        ["pretrain", "--dataset", &p("out/select/dataset.json"), "--config", &cfg, "--seed", "7", "--out", &p("out/pretrain")]
            .map(String::from)
            .to_vec(),
        ["train", "--dataset", &p("out/select/dataset.json"), "--config", &cfg, "--seed", "7", "--runs", "2", "--out", &p("out/train")]
            .map(String::from)
            .to_vec(),
        ["attribute", "--dataset", &p("out/select/dataset.json"), "--config", &cfg, "--seed", "7", "--runs", "3", "--out", &p("out/attribute")]
            .map(String::from)
            .to_vec(),
    ];
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        if !moira(&args) {
            return None;
        }
    }
    let mut files = BTreeMap::new();
    collect_files(&root.join("out"), &root.join("out"), &mut files);
    Some(files)
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (Some(a), Some(b)) = (pipeline(&dir.path().join("first")), pipeline(&dir.path().join("second"))) else {
        return outcome(false, "a pipeline stage failed");
    };
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_set = a.keys().eq(b.keys());
    let n_csv_json = a
        .keys()
        .filter(|k| k.extension().is_some_and(|e| e == "csv" || e == "json"))
        .count();
    outcome(
        same_set && differing.is_empty(),
        if differing.is_empty() {
            format!("{n_csv_json} CSV/JSON files byte-identical across two runs")
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    let mut report = Report { failures: 0 };
    println!("acceptance criteria");
    report.check(1, "gradient correctness", secs(30), gradient_correctness);
    report.check(2, "masking invariance", secs(60), masking_invariance);
    report.check(3, "gate contract", secs(60), gate_contract);
    report.check(4, "ANOVA oracle", secs(10), anova_oracle);
    report.check(5, "AUROC oracle", secs(30), auroc_oracle);
    report.check(6, "IG axioms", secs(60), ig_axioms);
    report.check(7, "overfit sanity", secs(120), overfit_sanity);

    // One ablation suite (every table row, 10 seeds) serves criteria 8 and 9.
    let t = Instant::now();
    let p = prepare(&benchmark(), &PrepareConfig::default(), 0).unwrap();
    let rows = ablation_suite(&p.train, &p.test, &bench_model(), &bench_train(), None, 10, 0, 1).unwrap();
    let took = t.elapsed();
    let labels: Vec<&str> = rows.iter().map(|r| r.condition.as_str()).collect();
    let o8 = match (mean_acc(&rows, "Trimodal (union)"), mean_acc(&rows, "Trimodal (intersection)")) {
        (Some(u), Some(i)) => outcome(u - i >= 0.02, format!("union {u:.4} vs intersection {i:.4}, diff {:.4} (>= 0.02)", u - i)),
        _ => outcome(false, "trimodal rows missing"),
    };
    report.record(8, "union beats intersection", secs(900), took, o8);
    let o9 = match (mean_acc(&rows, "Full model"), mean_acc(&rows, "--(aux+CLIP)")) {
        (Some(f), Some(b)) => outcome(
            f >= b - 0.005 && rows.len() == 9,
            format!("full {f:.4} vs prediction-only {b:.4} (>= -0.005); {} conditions run", labels.len()),
        ),
        _ => outcome(false, "loss ablation rows missing"),
    };
    report.record(9, "alignment losses do not hurt", secs(900), took, o9);

    report.check(10, "planted feature recovery", secs(600), planted_recovery);
    report.check(11, "end-to-end determinism", secs(600), end_to_end_determinism);
    println!("{} of 11 criteria passed", 11 - report.failures);
    if report.failures > 0 && std::env::var_os("MOIRA_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
