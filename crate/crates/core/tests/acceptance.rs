//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.
//!
//! `VOLMETRIC_ACCEPTANCE=1,2,5` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use volmetric::datagen::sim::{advect, SimState, Simulation};
use volmetric::datagen::{generate_dataset, DatasetSpec, GeneratedDataset, Generator, ProceduralParams, SimParams, SolverTag};
use volmetric::eval::{case_study, dataset_srcc, difficulty_histogram, model_curve_frames, rotation_invariance, sample_pairs, scale_invariance};
use volmetric::field::circular_shift;
use volmetric::io::checkpoint::{decode_checkpoint, encode_checkpoint};
use volmetric::metrics::{DistanceMetric, Mse, PearsonDistance};
use volmetric::nn::gradcheck;
use volmetric::nn::{LearnedMetric, MetricModel, ModelConfig};
use volmetric::similarity::{entropy_distance, fit_c, GroundTruthModel};
use volmetric::training::{correlation_loss, normalization_samples, sliced_correlation_loss, train, SliceOptions, TrainConfig, TrainSequence};
use volmetric::VolumeField;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    for c in [0.1, 1.0, 10.0, 100.0] {
        ensure(entropy_distance(0.0, c).abs() <= 1e-9, format!("D(0) at c={c}"))?;
        ensure((entropy_distance(1.0, c) - 1.0).abs() <= 1e-9, format!("D(1) at c={c}"))?;
    }
    let limit = (0..=1000).map(|i| i as f64 / 1000.0).map(|w| (entropy_distance(w, 1e-6) - w).abs()).fold(0.0, f64::max);
    ensure(limit < 1e-4, format!("max |D(w) - w| = {limit:e} at c = 1e-6"))?;
    let mut worst = 0.0f64;
    for c in [1.0, 10.0, 100.0] {
        let q: Vec<f64> = (1..=10).map(|i| entropy_distance(i as f64 / 10.0, c)).collect();
        let got = fit_c(&q).map_err(err)?.curvature();
        worst = worst.max((got - c).abs() / c);
    }
    ensure(worst < 0.01, format!("fit round trip relative error {worst:e}"))?;
    let t = started.elapsed();
    ensure(t < Duration::from_secs(1), format!("took {t:?}"))?;
    Ok(format!("limit dev {limit:.1e}, fit rel err {worst:.1e}, {t:.2?}"))
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut value_err, mut grad_err) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let d = random_vec(55, &mut rng);
        let g = random_vec(55, &mut rng);
        let full = correlation_loss(&d, &g, 1.0, 0.7).map_err(err)?;
        let opts = SliceOptions { slice: 55, running_mean: false, aggregate: false };
        let sliced = sliced_correlation_loss(&d, &g, opts, 1.0, 0.7).map_err(err)?;
        value_err = value_err.max((sliced.loss() - full.loss).abs());
        let h = 1e-6;
        for i in 0..55 {
            let (mut up, mut down) = (d.clone(), d.clone());
            up[i] += h;
            down[i] -= h;
            let lu = sliced_correlation_loss(&up, &g, opts, 1.0, 0.7).map_err(err)?.loss();
            let ld = sliced_correlation_loss(&down, &g, opts, 1.0, 0.7).map_err(err)?.loss();
            grad_err = grad_err.max(((lu - ld) / (2.0 * h) - sliced.grad[i]).abs());
        }
    }
    ensure(value_err <= 1e-6, format!("value error {value_err:e}"))?;
    ensure(grad_err <= 1e-4, format!("gradient error {grad_err:e}"))?;

    let d = random_vec(55, &mut rng);
    let g = random_vec(55, &mut rng);
    let ag = sliced_correlation_loss(&d, &g, SliceOptions { slice: 5, running_mean: true, aggregate: true }, 1.0, 0.7).map_err(err)?;
    for k in 0..ag.partial_r.len() {
        let mean = ag.partial_r[..=k].iter().sum::<f64>() / (k + 1) as f64;
        ensure(ag.used_r[k] == mean, format!("aggregated r at slice {k}"))?;
    }
    let md = d.iter().sum::<f64>() / 55.0;
    let mg = g.iter().sum::<f64>() / 55.0;
    let rm_err = (ag.final_means.0 - md).abs().max((ag.final_means.1 - mg).abs());
    ensure(rm_err <= 1e-9, format!("running mean error {rm_err:e}"))?;
    let t = started.elapsed();
    ensure(t < Duration::from_secs(1), format!("took {t:?}"))?;
    Ok(format!("value err {value_err:.1e}, grad err {grad_err:.1e}, running mean err {rm_err:.1e}, {t:.2?}"))
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let checks = gradcheck::run_all(3).map_err(err)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed()).map(|c| format!("{} ({:.2e})", c.name, c.max_rel_error)).collect();
    ensure(failed.is_empty(), format!("failed: {}", failed.join(", ")))?;
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let t = started.elapsed();
    ensure(t < Duration::from_secs(30), format!("took {t:?}"))?;
    let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    Ok(format!("{} checks [{}], max rel err {worst:.1e}, {t:.1?}", checks.len(), names.join(" ")))
}

fn axioms(metric: &dyn DistanceMetric, pairs: &[(VolumeField, VolumeField)]) -> Result<(f64, f64, f64), String> {
    let (mut self_d, mut asym, mut min) = (0.0f64, 0.0f64, f64::INFINITY);
    for (a, b) in pairs {
        let p = metric.prepare(&[a.clone(), b.clone()]).map_err(err)?;
        let ab = metric.distance(&p[0], &p[1]).map_err(err)?;
        let ba = metric.distance(&p[1], &p[0]).map_err(err)?;
        let aa = metric.distance(&p[0], &p[0]).map_err(err)?;
        self_d = self_d.max(aa);
        asym = asym.max((ab - ba).abs());
        min = min.min(ab.min(ba));
    }
    Ok((self_d, asym, min))
}

fn criterion_4() -> Outcome {
    let fx = fixture()?;
    let mut seqs = fx.val_states.clone();
    seqs.extend(fx.train_states.iter().take(10).cloned());
    let pairs = sample_pairs(&seqs, 50, 4).map_err(err)?;
    ensure(pairs.len() == 50 && pairs[0].0.dims() == [32; 3], "expected 50 pairs at 32^3")?;
    let mut parts = Vec::new();
    for (name, model) in [("untrained", &fx.untrained), ("trained", &fx.trained)] {
        let metric = LearnedMetric::new(model.clone(), name);
        let (aa, asym, min) = axioms(&metric, &pairs)?;
        ensure(aa <= 1e-5, format!("{name}: m(a,a) = {aa:e}"))?;
        ensure(asym <= 1e-6, format!("{name}: |m(a,b) - m(b,a)| = {asym:e}"))?;
        ensure(min >= 0.0, format!("{name}: negative distance {min}"))?;
        parts.push(format!("{name}: m(a,a) {aa:.1e}, asym {asym:.1e}, min {min:.3}"));
    }
    Ok(parts.join("; "))
}

fn criterion_5() -> Outcome {
    let n = 32;
    let mut p = SimParams::sample(3, SolverTag::Advdiff, 0.0);
    for c in p.components.iter_mut() {
        c.f = [[0.0; 3]; 7];
    }
    p.nu = 0.05;
    let mut state = SimState::zeros(n);
    for (i, v) in state.density.iter_mut().enumerate() {
        *v = (2.0 * PI * (i % n) as f64 / n as f64).sin();
    }
    let amp0 = state.density[n / 4];
    let mut sim = Simulation::from_state(p.clone(), state).map_err(err)?;
    for _ in 0..10 {
        sim.step(1.0);
    }
    let k = 2.0 * PI / n as f64;
    let expected = amp0 * (-p.nu * k * k * 10.0).exp();
    let decay_err = (sim.state.density[n / 4] - expected).abs() / expected;
    ensure(decay_err < 1e-3, format!("decay relative error {decay_err:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = SimState::zeros(n);
    state.density.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    for (axis, u) in [1.0, -2.0, 3.0].into_iter().enumerate() {
        state.velocity[axis].iter_mut().for_each(|v| *v = u);
    }
    let before = state.density_field();
    p.nu = 0.0;
    let mut sim = Simulation::from_state(p, state).map_err(err)?;
    sim.step(1.0);
    let shifted = circular_shift(&before, [3, -2, 1]);
    let shift_err = shifted.data().iter().zip(sim.state.density_field().data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    ensure(shift_err < 1e-4, format!("shift error {shift_err:e}"))?;

    let q: Vec<f64> = (0..n * n * n).map(|_| rng.gen_range(-3.0..5.0)).collect();
    let vel = [0, 1, 2].map(|_| (0..n * n * n).map(|_| rng.gen_range(-7.3..7.3)).collect::<Vec<f64>>());
    let out = advect(&q, &vel, n, 0.9);
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    ensure(out.iter().all(|&v| v >= lo && v <= hi), "advection left the input range")?;
    Ok(format!("decay rel err {decay_err:.1e}, shift err {shift_err:.1e}, extrema kept"))
}

fn criterion_6() -> Outcome {
    let spec = DatasetSpec { id: "waves_cal".into(), seed: 6, ..Default::default() };
    let cal = spec.source(None).map_err(err)?.calibrate().map_err(err)?;
    let band = spec.calibration.band;
    ensure(band.contains(cal.mean_difficulty), format!("calibrated difficulty {}", cal.mean_difficulty))?;
    ensure(cal.iterations <= 10, format!("{} iterations", cal.iterations))?;
    let data = generate_dataset(&DatasetSpec { delta: Some(cal.delta), ..spec }, None).map_err(err)?;
    ensure(data.sequences.len() == 40, "expected 40 sequences")?;
    let values: Vec<f64> = data.sequences.iter().map(|s| s.difficulty).collect();
    let h = difficulty_histogram(&values, 0.05).map_err(err)?;
    ensure(band.contains(h.mean), format!("histogram mean {}", h.mean))?;
    Ok(format!("delta {:.4} after {} iterations, sample mean {:.3}, dataset mean {:.3}", cal.delta, cal.iterations, cal.mean_difficulty, h.mean))
}

struct Fixture {
    untrained: MetricModel,
    trained: MetricModel,
    train_states: Vec<Vec<VolumeField>>,
    val_states: Vec<Vec<VolumeField>>,
    untrained_srcc: f64,
    trained_srcc: f64,
    best_epoch: usize,
    epochs_run: usize,
    elapsed: Duration,
}

const E2E_LEARNING_RATE: f64 = 1e-4;
const E2E_EPOCHS: usize = 10;

fn dataset(id: &str, generator: Generator, count: usize, seed: u64) -> Result<GeneratedDataset, String> {
    generate_dataset(&DatasetSpec { id: id.into(), generator, count, seed, ..Default::default() }, None).map_err(err)
}

fn mean_srcc(model: &MetricModel, sets: &[(&str, Vec<Vec<VolumeField>>)]) -> Result<f64, String> {
    let metric = LearnedMetric::new(model.clone(), "model");
    let mut scores = Vec::new();
    for (id, seqs) in sets {
        scores.extend(dataset_srcc(&metric, id, seqs).map_err(err)?.sequences.into_iter().map(|s| s.srcc));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn build_fixture() -> Result<Fixture, String> {
    let started = Instant::now();
    let waves = || Generator::Waves(ProceduralParams::default());
    let shapes = || Generator::Shapes(ProceduralParams::default());
    let train_sets = [dataset("waves", waves(), 40, 1)?, dataset("shapes", shapes(), 40, 2)?];
    let val_sets = [("waves_val", dataset("waves_val", waves(), 10, 101)?), ("shapes_val", dataset("shapes_val", shapes(), 10, 102)?)];
    let train_seqs: Vec<TrainSequence> = train_sets.iter().flat_map(|d| d.sequences.iter().map(TrainSequence::from)).collect();
    let val_seqs: Vec<TrainSequence> = val_sets.iter().flat_map(|(_, d)| d.sequences.iter().map(TrainSequence::from)).collect();
    let val_by_set: Vec<(&str, Vec<Vec<VolumeField>>)> =
        val_sets.iter().map(|(id, d)| (*id, d.sequences.iter().map(|s| s.states.clone()).collect())).collect();

    let mut untrained = MetricModel::new(ModelConfig::default(), 0).map_err(err)?;
    untrained.init_feature_normalization(normalization_samples(&train_seqs, untrained.config.input_channels)).map_err(err)?;
    let cfg = TrainConfig { epochs: E2E_EPOCHS, learning_rate: E2E_LEARNING_RATE, ..Default::default() };
    let outcome = train(untrained.clone(), &train_seqs, &val_seqs, &cfg).map_err(err)?;
    Ok(Fixture {
        untrained_srcc: mean_srcc(&untrained, &val_by_set)?,
        trained_srcc: mean_srcc(&outcome.model, &val_by_set)?,
        untrained,
        trained: outcome.model,
        train_states: train_seqs.into_iter().map(|s| s.states).collect(),
        val_states: val_by_set.into_iter().flat_map(|(_, s)| s).collect(),
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        elapsed: started.elapsed(),
    })
}

fn fixture() -> Result<&'static Fixture, String> {
    static CELL: OnceLock<Result<Fixture, String>> = OnceLock::new();
    CELL.get_or_init(build_fixture).as_ref().map_err(|e| format!("fixture: {e}"))
}

fn criterion_7() -> Outcome {
    let fx = fixture()?;
    let summary = format!(
        "trained {:.4}, untrained {:.4}, gap {:+.4}, best epoch {}/{}, {:.1} min",
        fx.trained_srcc,
        fx.untrained_srcc,
        fx.trained_srcc - fx.untrained_srcc,
        fx.best_epoch,
        fx.epochs_run,
        fx.elapsed.as_secs_f64() / 60.0
    );
    ensure(fx.trained_srcc >= 0.80, format!("{summary}: trained SRCC below 0.80"))?;
    ensure(fx.trained_srcc - fx.untrained_srcc >= 0.03, format!("{summary}: gap below 0.03"))?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
    let budget = Duration::from_secs(30 * 60 * 4 / cores as u64);
    let summary = format!("{summary} on {cores} core(s), budget {} min", budget.as_secs() / 60);
    ensure(fx.elapsed <= budget, format!("{summary}: over budget"))?;
    Ok(summary)
}

fn tiny_sequences(count: usize, dims: [usize; 3]) -> Result<Vec<TrainSequence>, String> {
    let spec = DatasetSpec { count, n: 4, resolution: dims[0], seed: 8, delta: Some(0.5), ..Default::default() };
    Ok(generate_dataset(&spec, None).map_err(err)?.sequences.iter().map(TrainSequence::from).collect())
}

fn criterion_8() -> Outcome {
    let params = ModelConfig::default().param_count();
    ensure((300_000..=400_000).contains(&params), format!("default model has {params} parameters"))?;
    let small = tiny_sequences(1, [32; 3])?;
    let large = tiny_sequences(1, [48; 3])?;
    let mut cases: Vec<(String, ModelConfig, GroundTruthModel)> =
        ModelConfig::VARIANTS.iter().map(|v| (v.to_string(), ModelConfig::variant(v).unwrap(), GroundTruthModel::Entropy)).collect();
    cases.push(("identity_similarity".into(), ModelConfig::default(), GroundTruthModel::Identity));
    let mut done = Vec::new();
    for (name, config, ground_truth) in cases {
        let data = if config.backbone == volmetric::nn::Backbone::PlainCnn { &large } else { &small };
        let mut model = MetricModel::new(config, 8).map_err(|e| format!("{name}: {e}"))?;
        model.init_feature_normalization(normalization_samples(data, model.config.input_channels)).map_err(|e| format!("{name}: {e}"))?;
        let cfg = TrainConfig { epochs: 1, max_iterations: Some(1), slice_size: 10, ground_truth, ..Default::default() };
        let out = train(model.clone(), data, &[], &cfg).map_err(|e| format!("{name}: {e}"))?;
        ensure(out.log.rows.len() == 1, format!("{name}: expected one iteration"))?;
        ensure(out.model.weights != model.weights || out.model.convs[0].weight != model.convs[0].weight, format!("{name}: no update"))?;
        let bytes = encode_checkpoint(&out.model, Some(&cfg)).map_err(|e| format!("{name}: {e}"))?;
        let back = decode_checkpoint(&bytes).map_err(|e| format!("{name}: {e}"))?;
        ensure(back.model == out.model && back.train.as_ref() == Some(&cfg), format!("{name}: checkpoint round trip"))?;
        done.push(format!("{name} ({})", out.model.param_count()));
    }
    Ok(format!("default {params} params; {}", done.join(", ")))
}

fn criterion_9() -> Outcome {
    let fx = fixture()?;
    let started = Instant::now();
    let pairs = sample_pairs(&fx.val_states, 4, 9).map_err(err)?;
    let quarter = [18, 36, 54];
    for metric in [&Mse as &dyn DistanceMetric, &PearsonDistance] {
        let r = rotation_invariance(metric, &pairs, 5.0, 9).map_err(err)?;
        for c in &r.curves {
            for &k in &quarter {
                ensure(c.distances[k] == c.distances[0], format!("{} not invariant at {} degrees", r.metric, r.values[k]))?;
            }
        }
    }
    let factors = [0.25, 0.5, 1.0, 2.0, 4.0];
    let trained = LearnedMetric::new(fx.trained.clone(), "trained");
    let mut lines = Vec::new();
    for metric in [&Mse as &dyn DistanceMetric, &trained] {
        let rot = rotation_invariance(metric, &pairs, 5.0, 9).map_err(err)?;
        let scale = scale_invariance(metric, &pairs, &factors).map_err(err)?;
        ensure(rot.values.len() == 72, format!("{} rotation values", rot.values.len()))?;
        ensure(scale.values == factors, "scale factors")?;
        for (report, width) in [(&rot, 72), (&scale, 5)] {
            let csv = report.to_csv();
            let rows = csv.lines().count() - 1;
            ensure(rows == width * (pairs.len() + 2), format!("{} {} CSV has {rows} rows", report.metric, report.parameter))?;
            ensure(
                report.curves.iter().all(|c| c.distances.len() == width && c.distances.iter().all(|d| d.is_finite())),
                format!("{} {} curve incomplete", report.metric, report.parameter),
            )?;
        }
        lines.push(format!("{}: rot max dev {:.3}, scale max dev {:.3}", metric.id(), rot.max_abs_deviation(), scale.max_abs_deviation()));
    }
    let t = started.elapsed();
    ensure(t < Duration::from_secs(300), format!("took {t:?}"))?;
    Ok(format!("{}; {t:.1?}", lines.join("; ")))
}

fn criterion_10() -> Outcome {
    let started = Instant::now();
    let frames = model_curve_frames([64; 3], 20, 10.0, 10).map_err(err)?;
    let pearson = case_study(&PearsonDistance, &frames).map_err(err)?;
    ensure(pearson.srcc_a == 1.0, format!("SRCC_a = {}", pearson.srcc_a))?;
    ensure(pearson.srcc_b == pearson.srcc_a, format!("SRCC_b = {} with the Pearson metric", pearson.srcc_b))?;
    let mse = case_study(&Mse, &frames).map_err(err)?;
    let t = started.elapsed();
    ensure(t < Duration::from_secs(120), format!("took {t:?}"))?;
    Ok(format!("SRCC_a {}, SRCC_b {} (pearson), {:.4} (mse), {t:.1?}", pearson.srcc_a, pearson.srcc_b, mse.srcc_b))
}

fn volmetric(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_volmetric")).arg("--threads").arg("1").args(args).current_dir(cwd).output().map_err(err)?;
    ensure(out.status.success(), format!("volmetric {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in walk(dir)? {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        if !rel.ends_with("timing.csv") {
            out.push((rel, std::fs::read(&entry).map_err(err)?));
        }
    }
    out.sort();
    Ok(out)
}

fn walk(dir: &Path) -> Result<Vec<std::path::PathBuf>, String> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        if path.is_dir() {
            out.extend(walk(&path)?);
        } else {
            out.push(path);
        }
    }
    Ok(out)
}

fn criterion_11() -> Outcome {
    let root = tempfile::tempdir().map_err(err)?;
    let config = root.path().join("waves.toml");
    std::fs::write(&config, "id = \"waves\"\ncount = 3\nresolution = 16\n[generator]\nmethod = \"waves\"\n").map_err(err)?;
    let train = root.path().join("train.toml");
    std::fs::write(
        &train,
        "variant = \"scales3\"\ntrain = [\"data/waves.toml\"]\nvalidation = [\"data/waves.toml\"]\n[training]\nepochs = 2\nmax_iterations = 4\n",
    )
    .map_err(err)?;
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        std::fs::create_dir_all(&dir).map_err(err)?;
        volmetric(&["generate", "--config", config.to_str().unwrap(), "--seed", "11", "--out", "data"], &dir)?;
        volmetric(&["train", "--config", train.to_str().unwrap(), "--seed", "12", "--out", "model.vsck"], &dir)?;
        snapshots.push(files(&dir)?);
    }
    let names: Vec<&str> = snapshots[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure(names.iter().any(|n| n.ends_with(".vsck")), "no checkpoint written")?;
    ensure(names.iter().any(|n| n.ends_with("log.csv")), "no training log written")?;
    ensure(names.iter().any(|n| n.ends_with("waves.toml")), "no manifest written")?;
    ensure(snapshots[0].len() == snapshots[1].len(), "different file sets")?;
    for ((na, a), (nb, b)) in snapshots[0].iter().zip(&snapshots[1]) {
        ensure(na == nb && a == b, format!("{na} differs"))?;
    }
    Ok(format!("{} files identical", names.len()))
}

fn main() {
    let selected: Option<Vec<usize>> =
        std::env::var("VOLMETRIC_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "similarity model", criterion_1),
        (2, "loss equivalence", criterion_2),
        (3, "gradient checks", criterion_3),
        (4, "metric axioms", criterion_4),
        (5, "solver oracles", criterion_5),
        (6, "calibration", criterion_6),
        (7, "end-to-end training", criterion_7),
        (8, "architecture contracts", criterion_8),
        (9, "invariance harness", criterion_9),
        (10, "case study", criterion_10),
        (11, "reproducibility", criterion_11),
    ];
    let mut failures = 0;
    for (id, name, check) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {id:>2} {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
