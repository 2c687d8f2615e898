//! Command bodies. Each returns the files it wrote; the caller records them
//! in the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use acia_core::causal_space::FiniteScm;
use acia_core::dataset::generate;
use acia_core::trainer::{evaluate, export_representations, train};
use acia_core::{AciaModel, Arch, DataIntervention, EnvironmentDataset, MetricsReport};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::manifest::{digest, now, sha256_file, ExperimentManifest, TOOL_VERSION};
use crate::verify::verify_suite;
use crate::CliError;

/// Scale-down notes carried by every checkpoint and report.
pub const NOTES: [&str; 2] = [
    "encoders are dense ReLU networks in place of convolutional layers",
    "image families use synthetic class prototypes instead of real images",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    /// Row name in `report` output.
    pub label: String,
    pub method: String,
    pub family: String,
    pub seed: u64,
    pub model_sha256: String,
    pub data_sha256: Vec<String>,
    pub intervention: DataIntervention,
    pub arch: Arch,
    pub notes: Vec<String>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub seed_source: String,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub options: serde_json::Value,
    /// Digest the primary output must reproduce (set by `rerun`).
    pub expect_primary: Option<String>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_dataset(path: &Path) -> Result<EnvironmentDataset, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(EnvironmentDataset::from_bytes(&bytes)?)
}

fn read_datasets(paths: &[PathBuf]) -> Result<EnvironmentDataset, CliError> {
    let parts = paths.iter().map(|p| read_dataset(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(EnvironmentDataset::concat(&parts)?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn method_of(cfg: &acia_core::TrainConfig) -> &'static str {
    if cfg.lambdas() == (0.0, 0.0) {
        "erm"
    } else {
        "acia"
    }
}

fn intervention_for(cfg: &ExperimentConfig, ds: &EnvironmentDataset) -> Result<DataIntervention, CliError> {
    let spec = cfg.intervention.clone().unwrap_or_else(|| DataIntervention::default_for(ds.family));
    if let Some(f) = spec.family() {
        if f != ds.family {
            return Err(CliError::Validation {
                path: "intervention.op".into(),
                message: format!("{f} operator does not apply to {} data", ds.family),
            });
        }
    }
    Ok(spec)
}

fn matrix_csv(m: &Array2<f64>, ds: &EnvironmentDataset) -> String {
    let mut s = String::from("env");
    for k in 0..ds.label_dim {
        let _ = write!(s, ",y{k}");
    }
    for k in 0..m.ncols() {
        let _ = write!(s, ",z{k}");
    }
    s.push('\n');
    for (i, row) in m.rows().into_iter().enumerate() {
        let _ = write!(s, "{}", ds.env_of(i));
        for v in ds.label_of(i) {
            let _ = write!(s, ",{v}");
        }
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

impl Invocation {
    pub fn new(
        command: &str,
        config: ExperimentConfig,
        seed: u64,
        seed_source: &str,
        inputs: Vec<PathBuf>,
        out: PathBuf,
    ) -> Self {
        Invocation {
            command: command.into(),
            config,
            seed,
            seed_source: seed_source.into(),
            inputs,
            out,
            options: serde_json::Value::Null,
            expect_primary: None,
        }
    }

    pub fn from_manifest(m: &ExperimentManifest) -> Result<Self, CliError> {
        m.config.validate()?;
        let out = m
            .outputs
            .first()
            .map(|d| PathBuf::from(&d.path))
            .ok_or_else(|| CliError::Usage("manifest records no outputs".into()))?;
        let mut inv = Invocation::new(
            &m.command,
            m.config.clone(),
            m.seed,
            &m.seed_source,
            m.inputs.iter().map(|d| PathBuf::from(&d.path)).collect(),
            out,
        );
        inv.options = m.options.clone();
        Ok(inv)
    }

    /// Run the command, write its manifest and check any expected digest.
    pub fn execute(&self) -> Result<(), CliError> {
        let started_at = now();
        let input_digests = self.inputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>, _>>()?;
        let (outputs, deferred) = match self.command.as_str() {
            "gen" => (self.gen()?, None),
            "train" => (self.train()?, None),
            "eval" => (self.eval()?, None),
            "verify" => self.verify()?,
            "report" => (self.report()?, None),
            other => return Err(CliError::Usage(format!("unknown command `{other}`"))),
        };
        let manifest = ExperimentManifest {
            tool_version: TOOL_VERSION.into(),
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            seed_source: self.seed_source.clone(),
            inputs: input_digests,
            outputs: outputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>, _>>()?,
            options: self.options.clone(),
            started_at,
            finished_at: now(),
        };
        manifest.write(&self.out)?;
        if let Some(err) = deferred {
            return Err(err);
        }
        if let Some(want) = &self.expect_primary {
            let got = sha256_file(&self.out)?;
            if &got != want {
                return Err(CliError::VerificationFailed(format!(
                    "{} has digest {got}, manifest recorded {want}",
                    self.out.display()
                )));
            }
        }
        Ok(())
    }

    fn gen(&self) -> Result<Vec<PathBuf>, CliError> {
        let cfg = self
            .config
            .gen
            .as_ref()
            .ok_or_else(|| CliError::Validation { path: "gen".into(), message: "section is required".into() })?;
        let ds = generate(cfg, self.seed)?;
        write_file(&self.out, &ds.to_binary()?)?;
        Ok(vec![self.out.clone()])
    }

    fn train(&self) -> Result<Vec<PathBuf>, CliError> {
        let ds = read_datasets(&self.inputs)?;
        let mut cfg = self.config.train.clone();
        cfg.seed = self.seed;
        let spec = intervention_for(&self.config, &ds)?;
        let (model, history) = train(&cfg, &ds, &spec)?;
        let meta = serde_json::json!({
            "tool_version": TOOL_VERSION,
            "method": method_of(&cfg),
            "family": ds.family,
            "train": cfg,
            "intervention": spec,
            "data_sha256": self.inputs.iter().map(|p| sha256_file(p)).collect::<Result<Vec<_>, _>>()?,
            "stopped_early": history.stopped_early,
            "notes": NOTES,
        });
        let mut bytes = Vec::new();
        model.write_checkpoint(&mut bytes, history.returned_step, meta)?;
        write_file(&self.out, &bytes)?;
        let hist = sibling(&self.out, ".history.jsonl");
        let file = fs::File::create(&hist).map_err(|e| CliError::io(&hist, e))?;
        history.write_jsonl(BufWriter::new(file))?;
        Ok(vec![self.out.clone(), hist])
    }

    fn eval(&self) -> Result<Vec<PathBuf>, CliError> {
        let (model_path, data) = self.inputs.split_first().ok_or_else(|| CliError::Usage("eval needs a model".into()))?;
        let bytes = fs::read(model_path).map_err(|e| CliError::io(model_path, e))?;
        let (model, header) = AciaModel::read_checkpoint(bytes.as_slice())?;
        let ds = read_datasets(data)?;
        let spec = intervention_for(&self.config, &ds)?;
        let metrics = evaluate(&model, &ds, &spec, self.seed)?;
        let method = header.meta.get("method").and_then(|v| v.as_str()).unwrap_or("acia").to_string();
        let label = self.options.get("label").and_then(|v| v.as_str()).map_or_else(|| method.clone(), str::to_string);
        let report = EvalReport {
            tool_version: TOOL_VERSION.into(),
            label,
            method,
            family: ds.family.to_string(),
            seed: self.seed,
            model_sha256: sha256_file(model_path)?,
            data_sha256: data.iter().map(|p| sha256_file(p)).collect::<Result<_, _>>()?,
            intervention: spec,
            arch: model.arch.clone(),
            notes: NOTES.iter().map(|s| s.to_string()).collect(),
            metrics,
        };
        write_file(&self.out, (serde_json::to_string_pretty(&report).expect("reports serialize") + "\n").as_bytes())?;
        let mut outputs = vec![self.out.clone()];
        if let Some(dir) = self.options.get("export").and_then(|v| v.as_str()) {
            let dir = Path::new(dir);
            let (z_l, z_h) = export_representations(&model, &ds)?;
            for (name, m) in [("z_l.csv", &z_l), ("z_h.csv", &z_h)] {
                let path = dir.join(name);
                write_file(&path, matrix_csv(m, &ds).as_bytes())?;
                outputs.push(path);
            }
        }
        Ok(outputs)
    }

    fn verify(&self) -> Result<(Vec<PathBuf>, Option<CliError>), CliError> {
        let supplied = match self.inputs.first() {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                let scm: FiniteScm = serde_path_to_error::deserialize(de)
                    .map_err(|e| CliError::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
                Some((p.display().to_string(), scm))
            }
            None => None,
        };
        let report = verify_suite(supplied.as_ref().map(|(n, s)| (n.as_str(), s)));
        write_file(&self.out, (serde_json::to_string_pretty(&report).expect("reports serialize") + "\n").as_bytes())?;
        let deferred = (!report.pass).then(|| {
            let names: Vec<String> =
                report.checks.iter().filter(|c| !c.pass).map(|c| format!("{} on {}", c.name, c.scm)).collect();
            CliError::VerificationFailed(names.join("; "))
        });
        Ok((vec![self.out.clone()], deferred))
    }

    fn report(&self) -> Result<Vec<PathBuf>, CliError> {
        let force = self.options.get("force").and_then(|v| v.as_bool()).unwrap_or(false);
        let mut reports = Vec::new();
        for p in &self.inputs {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let r: EvalReport = serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
                path: format!("{}: {}", p.display(), e.path()),
                message: e.inner().to_string(),
            })?;
            reports.push(r);
        }
        let mut versions: Vec<&str> = reports.iter().map(|r| r.tool_version.as_str()).collect();
        versions.sort_unstable();
        versions.dedup();
        if versions.len() > 1 && !force {
            return Err(CliError::Usage(format!("reports come from tool versions {}; pass --force to mix them", versions.join(", "))));
        }
        let mut groups: BTreeMap<(String, String), Vec<&MetricsReport>> = BTreeMap::new();
        for r in &reports {
            groups.entry((r.family.clone(), r.label.clone())).or_default().push(&r.metrics);
        }
        let mut csv = String::from("dataset,method,runs,Acc,EI,LLI,IR\n");
        for ((family, label), ms) in &groups {
            let mean = |f: fn(&MetricsReport) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / ms.len() as f64;
            let _ = writeln!(
                csv,
                "{family},{label},{},{:.4},{:.4},{:.4},{:.4}",
                ms.len(),
                mean(|m| m.accuracy),
                mean(|m| m.ei),
                mean(|m| m.lli),
                mean(|m| m.ir)
            );
        }
        write_file(&self.out, csv.as_bytes())?;
        Ok(vec![self.out.clone()])
    }
}
