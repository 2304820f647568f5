use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use respctx::biomarker::{self, BiomarkerMap};
use respctx::classifier::{BoostConfig, TotalBoostEnsemble};
use respctx::data_io::{self, SessionManifest};
use respctx::ecg::{self, EcgConfig};
use respctx::imu::{self, ImuConfig};
use respctx::pipeline::{self, BankGroup, EvalConfig, ExtractionStats, Instance, SplitMode, SweepReport, Target, SWEEP_RATIOS};
use respctx::regression::{ModelKind, RegressorConfig};
use respctx::synth::{self, SynthConfig};
use serde::Serialize;

use crate::output::{self, fingerprint_file, num, opt_num, Fingerprint, OutDir};
use crate::{CliError, ModelArg, ReportArgs, RunArgs, SplitArg, SynthArgs, TargetArg};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn core<T, E: Into<respctx::Error>>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Core(e.into()))
}

impl RunArgs {
    fn targets(&self) -> Vec<Target> {
        match self.target {
            Some(TargetArg::Br) => vec![Target::Br],
            Some(TargetArg::Ve) => vec![Target::Ve],
            None => Target::ALL.to_vec(),
        }
    }

    fn kinds(&self) -> Vec<ModelKind> {
        match self.model {
            ModelArg::Glm => vec![ModelKind::Glm],
            ModelArg::Rf => vec![ModelKind::Rf],
            ModelArg::Svm => vec![ModelKind::Svm],
            ModelArg::Gpr => vec![ModelKind::Gpr],
            ModelArg::Nca => vec![ModelKind::Nca],
            ModelArg::All => ModelKind::ALL.to_vec(),
        }
    }

    fn ratios(&self) -> Result<Vec<f64>, CliError> {
        if self.sweep {
            return Ok(SWEEP_RATIOS.to_vec());
        }
        let r = self.ratio.unwrap_or(0.7);
        if !(0.2 - 1e-9..=0.8 + 1e-9).contains(&r) {
            return Err(CliError::Usage(format!("--ratio {r} outside 0.2..0.8")));
        }
        Ok(vec![r])
    }

    fn check_tau(&self) -> Result<(), CliError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(CliError::Usage(format!("--tau {} outside (0, 1]", self.tau)));
        }
        Ok(())
    }

    fn split_mode(&self) -> SplitMode {
        match self.split {
            SplitArg::Instance => SplitMode::Instance,
            SplitArg::Block => SplitMode::Block,
        }
    }
}

struct Loaded {
    instances: Vec<Instance>,
    contexts: Vec<String>,
    stats: BTreeMap<String, ExtractionStats>,
    inputs: Vec<Fingerprint>,
}

fn load(manifests: &[std::path::PathBuf]) -> Result<Loaded, CliError> {
    let mut instances = Vec::new();
    let mut contexts: Option<Vec<String>> = None;
    let mut stats = BTreeMap::new();
    let mut inputs = Vec::new();
    for path in manifests {
        let m = core(SessionManifest::from_path(path))?;
        inputs.push(fingerprint_file(path)?);
        for p in [&m.ecg_path, &m.imu_path, &m.resp_path].into_iter().chain(m.labels_path.as_ref()) {
            inputs.push(fingerprint_file(p)?);
        }
        let session = core(data_io::load_session(&m))?;
        match &contexts {
            Some(c) if *c != session.contexts => {
                return Err(CliError::Config(format!(
                    "{}: contexts {:?} differ from {:?}",
                    path.display(),
                    session.contexts,
                    c
                )));
            }
            Some(_) => {}
            None => contexts = Some(session.contexts.clone()),
        }
        let (inst, st) = core(pipeline::extract_instances(&session, &EcgConfig::default(), &ImuConfig::default()))?;
        if stats.insert(session.subject_id.clone(), st).is_some() {
            return Err(CliError::Config(format!("subject {} appears twice", session.subject_id)));
        }
        instances.extend(inst);
    }
    Ok(Loaded {
        instances,
        contexts: contexts.unwrap_or_default(),
        stats,
        inputs,
    })
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = &a.subject {
        cfg.subject_id = s.clone();
    }
    let session = core(synth::gen_session(&cfg))?;
    let manifest = core(synth::write_session(&a.out, &cfg, &session))?;
    let mut out = OutDir::create(&a.out)?;
    for f in ["ecg.csv", "imu.csv", "resp.csv", "labels.csv", "truth.json", "manifest.toml"] {
        out.record(f)?;
    }
    let inputs: Vec<Fingerprint> = a.config.iter().map(|p| fingerprint_file(p)).collect::<Result<_, _>>()?;
    out.finish("synth", Some(cfg.seed), &cfg, &inputs)?;
    println!("{}", manifest.display());
    Ok(())
}

fn features_csv(instances: &[Instance], contexts: &[String]) -> String {
    let mut s = String::from("subject,t_center_ms,context");
    for n in imu::imu_feature_names().iter().chain(&ecg::ecg_feature_names()) {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",br,ve\n");
    for i in instances {
        let _ = write!(s, "{},{},{}", i.subject, i.t_center_ms, contexts[i.context]);
        for v in i.imu.iter().chain(&i.ecg) {
            s.push(',');
            s.push_str(&num(*v));
        }
        let _ = writeln!(s, ",{},{}", num(i.br), num(i.ve));
    }
    s
}

pub fn features(a: &RunArgs) -> Result<(), CliError> {
    let data = load(&a.manifest)?;
    let mut out = OutDir::create(&a.out)?;
    out.write("features.csv", &features_csv(&data.instances, &data.contexts))?;
    out.write(
        "extraction.json",
        &serde_json::to_string_pretty(&data.stats).expect("stats serialize"),
    )?;
    let kept: usize = data.stats.values().map(|s| s.kept).sum();
    out.finish("features", None, a, &data.inputs)?;
    println!("{kept} instances from {} session(s)", data.stats.len());
    Ok(())
}

#[derive(Serialize)]
struct ModelBundle<'a> {
    contexts: &'a [String],
    classifier: TotalBoostEnsemble,
    banks: Vec<BankGroup>,
}

pub fn train(a: &RunArgs) -> Result<(), CliError> {
    a.check_tau()?;
    let data = load(&a.manifest)?;
    let classifier = core(pipeline::train_classifier(&data.instances, &data.contexts, &BoostConfig::default()))?;
    let refs: Vec<&Instance> = data.instances.iter().collect();
    let banks = a
        .targets()
        .into_iter()
        .map(|t| {
            core(pipeline::train_pipeline(
                &refs,
                &data.contexts,
                &a.kinds(),
                t,
                a.tau,
                &RegressorConfig::default(),
                a.seed,
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = ModelBundle {
        contexts: &data.contexts,
        classifier,
        banks,
    };
    let mut out = OutDir::create(&a.out)?;
    out.write("models.json", &serde_json::to_string(&bundle).expect("models serialize"))?;
    out.finish("train", Some(a.seed), a, &data.inputs)?;
    println!("trained {} bank group(s) on {} instances", bundle.banks.len(), data.instances.len());
    Ok(())
}

fn predictions_csv(preds: &[pipeline::TaggedPrediction], contexts: &[String]) -> String {
    let mut s = String::from("train_ratio,target,model,t_center_ms,true_context,predicted_context");
    for c in contexts {
        let _ = write!(s, ",p_{c}");
    }
    for c in contexts {
        let _ = write!(s, ",bank_{c}");
    }
    s.push_str(",aggregated,agnostic,truth\n");
    for p in preds {
        let r = &p.record;
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            num(p.train_ratio),
            p.target,
            p.kind,
            r.t_center_ms,
            contexts[r.true_context],
            contexts[r.posterior.argmax()]
        );
        for v in r.posterior.p.iter().chain(&r.bank_preds) {
            s.push(',');
            s.push_str(&num(*v));
        }
        let _ = writeln!(s, ",{},{},{}", num(r.aggregated), opt_num(r.agnostic), opt_num(r.truth));
    }
    s
}

fn confusion_csv(report: &SweepReport) -> String {
    let mut s = String::from("train_ratio,true_context");
    for c in &report.contexts {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for r in &report.ratios {
        for (c, row) in report.contexts.iter().zip(&r.classifier.confusion) {
            let _ = write!(s, "{},{c}", num(r.train_ratio));
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn eval(a: &RunArgs) -> Result<(), CliError> {
    a.check_tau()?;
    let cfg = EvalConfig {
        kinds: a.kinds(),
        targets: a.targets(),
        ratios: a.ratios()?,
        tau: a.tau,
        split: a.split_mode(),
        seed: a.seed,
        ..EvalConfig::default()
    };
    let data = load(&a.manifest)?;
    let (report, preds) = core(pipeline::sweep(&data.instances, &data.contexts, &cfg))?;
    let mut out = OutDir::create(&a.out)?;
    out.write("metrics.json", &pipeline::metrics_json(&report))?;
    out.write("predictions.csv", &predictions_csv(&preds, &data.contexts))?;
    out.write("confusion.csv", &confusion_csv(&report))?;
    out.finish("eval", Some(a.seed), &(a, &cfg), &data.inputs)?;
    for r in &report.ratios {
        let maes: Vec<String> = r
            .models
            .iter()
            .flat_map(|(t, ks)| ks.iter().map(move |(k, m)| format!("{t}/{k} {:.3}", m.overall_mae)))
            .collect();
        println!(
            "{:.0}/{:.0}: accuracy {:.4}; MAE {}",
            r.train_ratio * 100.0,
            r.test_ratio * 100.0,
            r.classifier.accuracy,
            maes.join(", ")
        );
    }
    Ok(())
}

pub fn rank(a: &RunArgs) -> Result<(), CliError> {
    a.check_tau()?;
    let kinds: Vec<ModelKind> = a.kinds().into_iter().filter(|k| k.is_rankable()).collect();
    if kinds.is_empty() {
        return Err(CliError::Usage("svm models carry no feature weights; pick another --model".into()));
    }
    let data = load(&a.manifest)?;
    let refs: Vec<&Instance> = data.instances.iter().collect();
    let map = BiomarkerMap::default();
    let mut rows = Vec::new();
    for t in a.targets() {
        let g = core(pipeline::train_pipeline(
            &refs,
            &data.contexts,
            &kinds,
            t,
            a.tau,
            &RegressorConfig::default(),
            a.seed,
        ))?;
        rows.extend(core(biomarker::group_relevance(&g, &map))?);
    }
    let mut out = OutDir::create(&a.out)?;
    out.write("relevance.csv", &biomarker::relevance_csv(&rows, &map))?;
    out.finish("rank", Some(a.seed), &(a, &kinds), &data.inputs)?;
    for r in &rows {
        println!("{}/{}: {}", r.target, r.context, map.clusters[r.argmax()].0);
    }
    Ok(())
}

fn metrics_tables(report: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Context classification");
    let _ = write!(s, "{:<8}{:>10}", "split", "accuracy");
    for c in &report.contexts {
        let _ = write!(s, "{:>10}", format!("tpr {c}"));
    }
    s.push('\n');
    for r in &report.ratios {
        let _ = write!(
            s,
            "{:<8}{:>10.4}",
            format!("{:.0}/{:.0}", r.train_ratio * 100.0, r.test_ratio * 100.0),
            r.classifier.accuracy
        );
        for c in &report.contexts {
            let _ = write!(s, "{:>10.4}", r.classifier.tpr.get(c).copied().unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    let targets: Vec<&String> = report.ratios.first().map(|r| r.models.keys().collect()).unwrap_or_default();
    for t in targets {
        let _ = writeln!(s, "\nMAE for {t}: contextual (agnostic)");
        let kinds: Vec<&String> = report.ratios[0].models[t].keys().collect();
        let _ = write!(s, "{:<8}", "split");
        for k in &kinds {
            let _ = write!(s, "{:>18}", k);
        }
        s.push('\n');
        for r in &report.ratios {
            let _ = write!(s, "{:<8}", format!("{:.0}/{:.0}", r.train_ratio * 100.0, r.test_ratio * 100.0));
            for k in &kinds {
                let m = &r.models[t][*k];
                let _ = write!(s, "{:>18}", format!("{:.3} ({:.3})", m.overall_mae, m.agnostic_mae));
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\nMAE for {t} per context");
        let _ = write!(s, "{:<14}", "split/model");
        for c in &report.contexts {
            let _ = write!(s, "{c:>10}");
        }
        s.push('\n');
        for r in &report.ratios {
            for k in &kinds {
                let m = &r.models[t][*k];
                let _ = write!(s, "{:<14}", format!("{:.0}/{:.0} {k}", r.train_ratio * 100.0, r.test_ratio * 100.0));
                for c in &report.contexts {
                    match m.per_context_mae.get(c).copied().flatten() {
                        Some(v) => {
                            let _ = write!(s, "{v:>10.3}");
                        }
                        None => {
                            let _ = write!(s, "{:>10}", "-");
                        }
                    }
                }
                s.push('\n');
            }
        }
    }
    s
}

fn relevance_table(csv: &str) -> String {
    let mut s = String::from("Biomarker relevance (%)\n");
    for (i, line) in csv.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let _ = write!(s, "{:<8}{:<10}", cells.first().unwrap_or(&""), cells.get(1).unwrap_or(&""));
        for c in cells.iter().skip(2) {
            if i == 0 {
                let _ = write!(s, "{c:>8}");
            } else {
                let v: f64 = c.parse().unwrap_or(f64::NAN);
                let _ = write!(s, "{v:>8.1}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let metrics = a.input.join("metrics.json");
    let relevance = a.input.join("relevance.csv");
    let mut text = String::new();
    let mut inputs = Vec::new();
    if metrics.exists() {
        let raw = std::fs::read_to_string(&metrics).map_err(io_err(&metrics))?;
        let report: SweepReport =
            serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", metrics.display())))?;
        text.push_str(&metrics_tables(&report));
        inputs.push(output::fingerprint_file(&metrics)?);
    }
    if relevance.exists() {
        let raw = std::fs::read_to_string(&relevance).map_err(io_err(&relevance))?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&relevance_table(&raw));
        inputs.push(output::fingerprint_file(&relevance)?);
    }
    if inputs.is_empty() {
        return Err(CliError::Usage(format!(
            "{} holds neither metrics.json nor relevance.csv",
            a.input.display()
        )));
    }
    let mut out = OutDir::create(a.out.as_deref().unwrap_or(&a.input))?;
    out.write("report.txt", &text)?;
    out.finish("report", None, a, &inputs)?;
    print!("{text}");
    Ok(())
}
