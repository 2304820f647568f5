//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! followed by a summary; the measured values are printed alongside.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use respctx::biomarker::{self, BiomarkerMap, BIOMARKERS};
use respctx::classifier::{self, totalboost, BoostConfig, TreeConfig};
use respctx::data_io::Session;
use respctx::dsp::{self, WindowSpec};
use respctx::ecg::{self, EcgConfig};
use respctx::imu::ImuConfig;
use respctx::optim;
use respctx::pipeline::{self, EvalConfig, Instance, SplitMode, SweepReport, Target, SWEEP_RATIOS};
use respctx::regression::{glm, gpr, nca, svr, ModelKind, RegressorConfig, StandardizationParams};
use respctx::synth::{self, SynthConfig, SynthSession};

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

fn session_of(cfg: &SynthConfig, s: &SynthSession) -> Session {
    Session {
        subject_id: cfg.subject_id.clone(),
        ecg: s.ecg.clone(),
        imu: s.imu.clone(),
        resp: s.resp.clone(),
        intervals: s.intervals.clone(),
        contexts: cfg.activities.iter().map(|a| a.name.clone()).collect(),
    }
}

fn instances_for(cfg: &SynthConfig) -> (Vec<Instance>, Vec<String>) {
    let s = synth::gen_session(cfg).expect("synth session");
    let session = session_of(cfg, &s);
    let (inst, _) = pipeline::extract_instances(&session, &EcgConfig::default(), &ImuConfig::default()).expect("instances");
    (inst, session.contexts)
}

// ---------------------------------------------------------------- 1

fn fiducial_recovery() -> Outcome {
    let mut cfg = SynthConfig {
        seed: 11,
        segment_s: 180.0,
        cycles: 1,
        baseline_wander_mv: 0.0,
        ecg_noise_mv: 0.002,
        t_amp_jitter: 0.0,
        ..SynthConfig::default()
    };
    for (a, hr) in cfg.activities.iter_mut().zip([60.0, 90.0, 120.0, 150.0, 180.0]) {
        a.hr_bpm = hr;
        a.hr_jitter = 0.0;
        a.modulation.clear();
    }
    let s = synth::gen_session(&cfg).expect("synth");
    let rate = cfg.ecg_rate_hz;
    let ms = 1000.0 / rate;

    let t0 = Instant::now();
    let windows = dsp::sliding_windows(&s.ecg, WindowSpec::default()).expect("windows");
    let analysed: Vec<_> = windows
        .iter()
        .map(|w| ecg::analyze_lead(&w.samples[0], rate, &EcgConfig::default()).ok())
        .collect();
    let elapsed = t0.elapsed().as_secs_f64();

    let beats = &s.truth.beats;
    let mut detected = vec![false; beats.len()];
    let mut errs: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut measured = vec![false; beats.len()];
    for (w, a) in windows.iter().zip(&analysed) {
        let Some(a) = a else { continue };
        let start_ms = (w.t_start_ms - cfg.t0_ms) as f64;
        let end_ms = start_ms + 15_000.0;
        for (bi, b) in beats.iter().enumerate() {
            if b.r_ms < start_ms || b.r_ms >= end_ms {
                continue;
            }
            if a.r_peaks.iter().any(|&r| (start_ms + r as f64 * ms - b.r_ms).abs() <= 20.0) {
                detected[bi] = true;
            }
            // fiducials from the first window holding the beat well inside
            if measured[bi] || b.r_ms < start_ms + 1000.0 || b.r_ms > end_ms - 1000.0 {
                continue;
            }
            let Some(f) = a
                .fiducials
                .iter()
                .find(|f| (start_ms + f.r_idx as f64 * ms - b.r_ms).abs() <= 20.0)
            else {
                continue;
            };
            measured[bi] = true;
            let at = |i: usize| start_ms + i as f64 * ms - b.r_ms;
            errs[0].push((at(f.q_idx) - b.q_offset_ms).abs());
            errs[1].push((at(f.s_idx) - b.s_offset_ms).abs());
            errs[2].push((at(f.t_idx) - b.t_offset_ms).abs());
        }
    }
    let rate_r = detected.iter().filter(|&&d| d).count() as f64 / beats.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let within = errs.iter().all(|e| e.iter().all(|&x| x <= 8.0));
    let pass = rate_r >= 0.99 && within && !errs[0].is_empty() && elapsed < 5.0;
    outcome(
        pass,
        format!(
            "R detected {:.2}% of {} beats; max |err| Q {:.1} ms, S {:.1} ms, T {:.1} ms over {} beats; 15 min in {:.2} s",
            100.0 * rate_r,
            beats.len(),
            max(&errs[0]),
            max(&errs[1]),
            max(&errs[2]),
            errs[0].len(),
            elapsed
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Proximal gradient on the elastic-net objective over standardized inputs.
fn ista(z: &[Vec<f64>], y: &[f64], lambda: f64, alpha: f64) -> f64 {
    let n = y.len() as f64;
    let d = z[0].len();
    let trace: f64 = z.iter().flatten().map(|v| v * v).sum::<f64>() / n;
    let step = 1.0 / (2.0 * (trace + 1.0) + lambda * (1.0 - alpha));
    let (mut b0, mut beta) = (0.0, vec![0.0; d]);
    for _ in 0..200_000 {
        let resid: Vec<f64> = z
            .iter()
            .zip(y)
            .map(|(r, yi)| b0 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() - yi)
            .collect();
        let g0 = 2.0 * resid.iter().sum::<f64>() / n;
        b0 -= step * g0;
        for j in 0..d {
            let g = 2.0 * z.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>() / n + lambda * (1.0 - alpha) * beta[j];
            let v = beta[j] - step * g;
            let t = step * lambda * alpha;
            beta[j] = v.signum() * (v.abs() - t).max(0.0);
        }
    }
    glm::glm_objective(z, y, b0, &beta, lambda, alpha)
}

fn svr_grid(k: &[Vec<f64>], y: &[f64], eps: f64, c: f64) -> f64 {
    let steps = 1000;
    let mut best = f64::INFINITY;
    for a in -steps..=steps {
        for b in -steps..=steps {
            let t1 = c * a as f64 / steps as f64;
            let t2 = c * b as f64 / steps as f64;
            let t3 = -t1 - t2;
            if t3.abs() > c {
                continue;
            }
            best = best.min(svr::dual_objective(k, y, eps, &[t1, t2, t3]));
        }
    }
    best
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn optimizer_oracles() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let mut notes = Vec::new();
    let mut pass = true;

    let mut glm_gap = 0.0f64;
    let mut glm_perturb_ok = true;
    for _ in 0..5 {
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0] - 0.5 * v[1] + r.random_range(-0.5..0.5)).collect();
        let m = glm::fit_glm(&x, &y, &glm::GlmConfig::default()).unwrap();
        let z = m.standardization.transform(&x);
        let f = glm::glm_objective(&z, &y, m.intercept, &m.beta, m.lambda, m.alpha);
        glm_gap = glm_gap.max((f - ista(&z, &y, m.lambda, m.alpha)).abs());
        for _ in 0..10_000 {
            let scale = 10f64.powf(r.random_range(-4.0..0.0));
            let b0 = m.intercept + scale * r.random_range(-1.0..1.0);
            let beta: Vec<f64> = m.beta.iter().map(|b| b + scale * r.random_range(-1.0..1.0)).collect();
            if glm::glm_objective(&z, &y, b0, &beta, m.lambda, m.alpha) < f - 1e-12 {
                glm_perturb_ok = false;
            }
        }
    }
    pass &= glm_gap <= 1e-5 && glm_perturb_ok;
    notes.push(format!("GLM |obj - oracle| {glm_gap:.1e}, perturbations {}", if glm_perturb_ok { "ok" } else { "beat it" }));

    let mut svr_gap = 0.0f64;
    for _ in 0..3 {
        let x: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
        let z = StandardizationParams::fit(&x).transform(&x);
        let k: Vec<Vec<f64>> = z.iter().map(|a| z.iter().map(|b| svr::gaussian_kernel(a, b)).collect()).collect();
        let eps = svr::epsilon_for(&y);
        let c = 10.0 * eps;
        let (theta, _, _, _) = svr::smo(&k, &y, eps, c, 1e-6, 1_000_000);
        let got = svr::dual_objective(&k, &y, eps, &theta);
        svr_gap = svr_gap.max((got - svr_grid(&k, &y, eps, c)).abs());
    }
    pass &= svr_gap <= 1e-3;
    notes.push(format!("SVR |dual - grid| {svr_gap:.1e}"));

    let mut gpr_err = 0.0f64;
    let mut nca_err = 0.0f64;
    for _ in 0..5 {
        let z: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
        let y: Vec<f64> = z.iter().map(|v| v[0].sin() + 0.5 * v[2] + 0.1 * r.random_range(-1.0..1.0)).collect();
        let theta: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = gpr::log_marginal_likelihood(&z, &y, &theta, 1e-6).unwrap();
        let fd = optim::numeric_gradient(|t| gpr::log_marginal_likelihood(&z, &y, t, 1e-6).unwrap().0, &theta, 1e-5);
        gpr_err = gpr_err.max(rel_err(&g, &fd));
        let w: Vec<f64> = (0..3).map(|_| r.random_range(0.3..1.5)).collect();
        let (_, g) = nca::loss_and_grad(&z, &y, &w, 0.125);
        let fd = optim::numeric_gradient(|t| nca::loss_and_grad(&z, &y, t, 0.125).0, &w, 1e-5);
        nca_err = nca_err.max(rel_err(&g, &fd));
    }
    pass &= gpr_err < 1e-4 && nca_err < 1e-4;
    notes.push(format!("GPR grad rel err {gpr_err:.1e}, NCA grad rel err {nca_err:.1e}"));
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------- 3

#[derive(Default)]
struct TraceCheck {
    runs: usize,
    iters: usize,
    with_d: usize,
    worst_simplex: f64,
    worst_edge: f64,
    monotone: bool,
}

impl TraceCheck {
    fn add(&mut self, x: &[Vec<f64>], labels: &[bool], cfg: &BoostConfig) {
        let (_, trace) = totalboost::train_binary(x, labels, cfg).expect("boost");
        self.runs += 1;
        let mut last = f64::NEG_INFINITY;
        for it in &trace.iterations {
            self.iters += 1;
            if it.lp_margin < last - 1e-9 {
                self.monotone = false;
            }
            last = it.lp_margin;
            let Some(d) = &it.d else { continue };
            self.with_d += 1;
            let sum: f64 = d.iter().sum();
            let neg = d.iter().copied().fold(0.0, f64::min);
            self.worst_simplex = self.worst_simplex.max((sum - 1.0).abs()).max(-neg);
            let bound = it.gamma_hat - cfg.nu;
            for e in &it.stored_edges {
                self.worst_edge = self.worst_edge.max(e - bound);
            }
        }
    }
}

fn boosting_invariants() -> Outcome {
    let mut chk = TraceCheck {
        worst_edge: f64::NEG_INFINITY,
        monotone: true,
        ..TraceCheck::default()
    };
    let cfg = SynthConfig {
        seed: 5,
        segment_s: 60.0,
        cycles: 1,
        ..SynthConfig::default()
    };
    let (inst, contexts) = instances_for(&cfg);
    let x: Vec<Vec<f64>> = inst.iter().map(|i| i.imu.clone()).collect();
    for c in 0..contexts.len() {
        let labels: Vec<bool> = inst.iter().map(|i| i.context == c).collect();
        chk.add(&x, &labels, &BoostConfig::default());
    }
    // overlapping classes and stumps force long runs
    let stumps = BoostConfig {
        tree: TreeConfig {
            max_splits: 1,
            ..TreeConfig::default()
        },
        ..BoostConfig::default()
    };
    for seed in 0..5u64 {
        let mut r = ChaCha8Rng::seed_from_u64(300 + seed);
        let x: Vec<Vec<f64>> = (0..150).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<bool> = x.iter().map(|v| v[0] + v[1] - 0.5 * v[2] + 0.4 * r.random_range(-1.0..1.0) > 0.0).collect();
        chk.add(&x, &labels, &stumps);
    }
    let pass = chk.worst_simplex <= 1e-6 && chk.worst_edge <= 1e-6 && chk.monotone && chk.with_d > 0;
    outcome(
        pass,
        format!(
            "{} iterations ({} with a projected distribution) over {} runs; simplex violation {:.1e}, max edge excess {:.1e}, margin monotone {}",
            chk.iters, chk.with_d, chk.runs, chk.worst_simplex, chk.worst_edge, chk.monotone
        ),
    )
}

// ---------------------------------------------------------------- 4

fn context_classification() -> Outcome {
    let mut inst = Vec::new();
    let mut contexts = Vec::new();
    for (k, seed) in [101u64, 102, 103].into_iter().enumerate() {
        let cfg = SynthConfig {
            seed,
            subject_id: format!("synth{k:02}"),
            segment_s: 240.0,
            cycles: 3,
            ..SynthConfig::default()
        };
        let (i, c) = instances_for(&cfg);
        inst.extend(i);
        contexts = c;
    }
    let t0 = Instant::now();
    let mut worst_acc = 1.0f64;
    let mut worst_tpr = 1.0f64;
    let mut accs = Vec::new();
    for ratio in SWEEP_RATIOS {
        let (tr, te) = pipeline::split_indices(&inst, contexts.len(), ratio, SplitMode::Instance, 42).unwrap();
        let x: Vec<Vec<f64>> = tr.iter().map(|&i| inst[i].imu.clone()).collect();
        let y: Vec<usize> = tr.iter().map(|&i| inst[i].context).collect();
        let (ens, _) = classifier::train_ensemble(&x, &y, &contexts, &BoostConfig::default()).unwrap();
        let truth: Vec<usize> = te.iter().map(|&i| inst[i].context).collect();
        let pred: Vec<usize> = te.iter().map(|&i| ens.predict_class(&inst[i].imu).unwrap()).collect();
        let m = pipeline::classifier_metrics(&truth, &pred, contexts.len()).unwrap();
        worst_acc = worst_acc.min(m.accuracy);
        worst_tpr = m.tpr.iter().copied().fold(worst_tpr, f64::min);
        accs.push(format!("{:.0}/{:.0}: {:.2}%", ratio * 100.0, (1.0 - ratio) * 100.0, 100.0 * m.accuracy));
    }
    let pass = inst.len() >= 3000 && worst_acc >= 0.99 && worst_tpr >= 0.98;
    outcome(
        pass,
        format!(
            "{} instances; min accuracy {:.2}%, min TPR {:.2}% [{}] in {:.0} s",
            inst.len(),
            100.0 * worst_acc,
            100.0 * worst_tpr,
            accs.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 5 and 6

fn contextual_beats_agnostic(report: &SweepReport) -> Outcome {
    let mut worse = Vec::new();
    let mut margins = Vec::new();
    for r in &report.ratios {
        for (target, kinds) in &r.models {
            for (kind, m) in kinds {
                margins.push(m.agnostic_mae - m.overall_mae);
                if m.overall_mae > m.agnostic_mae {
                    worse.push(format!(
                        "{target}/{kind}@{:.0}: {:.3} > {:.3}",
                        r.train_ratio * 100.0,
                        m.overall_mae,
                        m.agnostic_mae
                    ));
                }
            }
        }
    }
    let min_gain = margins.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        worse.is_empty() && !margins.is_empty(),
        if worse.is_empty() {
            format!("{} comparisons, smallest agnostic - contextual MAE gap {min_gain:.3}", margins.len())
        } else {
            format!("{} of {} comparisons worse: {}", worse.len(), margins.len(), worse.join(", "))
        },
    )
}

fn bayes_mae(sigma: f64) -> f64 {
    sigma / 15f64.sqrt() * (2.0 / std::f64::consts::PI).sqrt()
}

fn end_to_end_recovery(inst: &[Instance], contexts: &[String], report: &SweepReport, cfg: &SynthConfig, sweep_s: f64) -> Outcome {
    // overlapping windows share label noise, so the bound is checked on a
    // block split; the instance-split figure is shown for reference
    let eval = EvalConfig {
        kinds: vec![ModelKind::Nca, ModelKind::Gpr],
        split: SplitMode::Block,
        ..EvalConfig::default()
    };
    let (block, _) = pipeline::evaluate_ratio(inst, contexts, 0.7, &eval).expect("block split");
    let r = report
        .ratios
        .iter()
        .find(|r| (r.train_ratio - 0.7).abs() < 1e-9)
        .expect("70/30 ratio");
    let mut pass = sweep_s < 600.0;
    let mut notes = Vec::new();
    for (target, sigma) in [("br", cfg.br_noise), ("ve", cfg.ve_noise)] {
        let a = bayes_mae(sigma);
        for kind in ["nca", "gpr"] {
            let m = block.models[target][kind].overall_mae;
            pass &= m <= 1.5 * a;
            notes.push(format!(
                "{target}/{kind} {m:.3} = {:.2}A (instance split {:.2}A)",
                m / a,
                r.models[target][kind].overall_mae / a
            ));
        }
    }
    outcome(
        pass,
        format!(
            "{} instances, 70/30 block split: {}; full sweep {:.0} s",
            inst.len(),
            notes.join(", "),
            sweep_s
        ),
    )
}

// ---------------------------------------------------------------- 7

fn biomarker_recovery(inst: &[Instance], contexts: &[String]) -> Outcome {
    let refs: Vec<&Instance> = inst.iter().collect();
    let kinds = [ModelKind::Glm, ModelKind::Rf, ModelKind::Gpr, ModelKind::Nca];
    let map = BiomarkerMap::default();
    let mut all = Vec::new();
    for target in Target::ALL {
        let g = pipeline::train_pipeline(&refs, contexts, &kinds, target, 0.8, &RegressorConfig::default(), 42).unwrap();
        all.extend(biomarker::group_relevance(&g, &map).unwrap());
    }
    let max_dev = all.iter().map(|r| (r.rel.iter().sum::<f64>() - 100.0).abs()).fold(0.0, f64::max);
    let run = all
        .iter()
        .find(|r| r.target == Target::Ve && r.context == "run")
        .expect("run bank");
    let tw = BIOMARKERS.iter().position(|b| *b == "Tw").unwrap();
    let pass = run.argmax() == tw && run.rel[tw] > 40.0 && max_dev <= 1e-6;
    let shown: Vec<String> = BIOMARKERS.iter().zip(&run.rel).map(|(b, v)| format!("{b} {v:.1}%")).collect();
    outcome(
        pass,
        format!("VE/run relevance [{}]; max |sum - 100| {max_dev:.1e} over {} vectors", shown.join(", "), all.len()),
    )
}

// ---------------------------------------------------------------- 8

fn determinism() -> Outcome {
    let cfg = SynthConfig {
        seed: 77,
        segment_s: 150.0,
        cycles: 1,
        ..SynthConfig::default()
    };
    let run = || {
        let (inst, contexts) = instances_for(&cfg);
        let eval = EvalConfig {
            ratios: vec![0.7],
            ..EvalConfig::default()
        };
        let (report, _) = pipeline::sweep(&inst, &contexts, &eval).unwrap();
        let refs: Vec<&Instance> = inst.iter().collect();
        let kinds = [ModelKind::Glm, ModelKind::Rf, ModelKind::Gpr, ModelKind::Nca];
        let map = BiomarkerMap::default();
        let mut rows = Vec::new();
        for target in Target::ALL {
            let g = pipeline::train_pipeline(&refs, &contexts, &kinds, target, 0.8, &RegressorConfig::default(), 42).unwrap();
            rows.extend(biomarker::group_relevance(&g, &map).unwrap());
        }
        (pipeline::metrics_json(&report), biomarker::relevance_csv(&rows, &map))
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    outcome(
        m1 == m2 && r1 == r2,
        format!("metrics.json {} bytes, relevance.csv {} bytes, identical: {}", m1.len(), r1.len(), m1 == m2 && r1 == r2),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("[{}] criterion {n} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "fiducial recovery", fiducial_recovery());
    report(2, "optimizer oracles", optimizer_oracles());
    report(3, "TotalBoost invariants", boosting_invariants());
    report(4, "context classification", context_classification());

    // one resting heart rate for every activity, so the ECG alone does not
    // reveal which planted map applies; no per-beat T amplitude jitter, so
    // the ECG is an exact function of the response and A is the Bayes error
    let mut inst = Vec::new();
    let mut contexts = Vec::new();
    let mut cfg = SynthConfig::default();
    for (k, seed) in [101u64, 102, 103].into_iter().enumerate() {
        cfg = SynthConfig {
            seed,
            subject_id: format!("synth{k:02}"),
            t_amp_jitter: 0.0,
            ..SynthConfig::default()
        };
        cfg.activities.iter_mut().for_each(|a| a.hr_bpm = 90.0);
        let (i, c) = instances_for(&cfg);
        inst.extend(i);
        contexts = c;
    }
    let t0 = Instant::now();
    let (sweep, _) = pipeline::sweep(&inst, &contexts, &EvalConfig::default()).expect("sweep");
    let sweep_s = t0.elapsed().as_secs_f64();
    report(5, "contextual beats agnostic", contextual_beats_agnostic(&sweep));
    report(6, "end-to-end recovery", end_to_end_recovery(&inst, &contexts, &sweep, &cfg, sweep_s));

    // beat-to-beat T amplitude variability keeps t_power from being an exact
    // multiple of t_width
    let mut cfg = SynthConfig::default();
    cfg.activities.iter_mut().for_each(|a| a.hr_bpm = 90.0);
    let (inst, contexts) = instances_for(&cfg);
    report(7, "biomarker recovery", biomarker_recovery(&inst, &contexts));
    report(8, "determinism", determinism());

    let passed = results.iter().filter(|r| r.2.pass).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0} s",
        results.len(),
        started.elapsed().as_secs_f64()
    );
}
