//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file overrides a subset. Unknown or
//! repeated keys are rejected. The resolved configuration (all keys, in a
//! fixed order) is written next to every run's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ouu_core::model::WellConfig;
use ouu_core::optctrl::Method;

use crate::error::{CliError, CliResult};

/// `(key, default, description)` in output order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model", "elliptic", "elliptic | toy"),
    ("mesh.nx", "64", "cells in x"),
    ("mesh.ny", "32", "cells in y"),
    ("mesh.lx", "2", "domain length in x"),
    ("mesh.ly", "1", "domain length in y"),
    ("prior.alpha1", "0.1", "diffusion weight"),
    ("prior.alpha2", "20", "reaction weight"),
    ("prior.theta11", "1", "anisotropy tensor entry"),
    ("prior.theta12", "0", "anisotropy tensor entry"),
    ("prior.theta22", "1", "anisotropy tensor entry"),
    ("prior.mean", "const:3.25", "const:VALUE | file:PATH (one value per node)"),
    ("wells.injection", "reference", "reference | x:y;x:y;..."),
    ("wells.production", "reference", "reference | x:y;x:y;..."),
    ("wells.sigma", "0.05", "mollifier width"),
    ("solver", "direct", "direct | cg"),
    ("cost.beta", "1", "variance weight"),
    ("cost.beta_p", "1e-5", "control penalty weight"),
    ("cost.lower", "0", "lower control bound"),
    ("cost.upper", "32", "upper control bound"),
    ("cost.z0", "16", "uniform initial control"),
    ("control", "z0", "z0 | file:PATH (control CSV with columns well,z)"),
    ("method.name", "quad-mc", "saa | lin | quad | lin-mc | quad-mc"),
    ("method.chain", "true", "warm-start through the cheaper methods"),
    ("method.N", "100", "eigenpairs"),
    ("method.p", "10", "oversampling"),
    ("method.M", "100", "samples"),
    ("method.k_ref", "140", "eigenpairs of the reference trace"),
    ("method.sample_at_mean", "false", "replace every sample by the mean"),
    ("opt.tol", "1e-3", "projected-gradient sup-norm tolerance"),
    ("opt.max_iter", "200", "iterations per stage"),
    ("opt.memory", "10", "L-BFGS memory"),
    ("estimate.M", "10,100", "sample counts for moment estimates"),
    ("rng.seed", "1", "run seed"),
    ("output.directory", "out", "output directory"),
    ("output.timings", "true", "write wall-clock seconds (false writes 0)"),
    ("toy.n", "40", "toy parameter dimension"),
    ("toy.rank", "40", "toy Hessian rank"),
    ("toy.controls", "4", "toy control dimension"),
    ("toy.seed", "7", "toy construction seed"),
    ("toy.variance", "0.5", "toy prior variance"),
    ("check.corrupt_gradient", "0", "test hook: relative error injected into analytic gradients"),
    ("field.count", "4", "prior samples written by sample-field"),
    ("field.export_operators", "false", "also write prior operators as triplets"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Elliptic,
    Toy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanSpec {
    Const(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSpec {
    Uniform,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub n: usize,
    pub rank: usize,
    pub controls: usize,
    pub seed: u64,
    pub variance: f64,
}

/// Typed view of the resolved key set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub theta: [f64; 3],
    pub mean: MeanSpec,
    pub injection: Vec<[f64; 2]>,
    pub production: Vec<[f64; 2]>,
    pub sigma: f64,
    pub cg: bool,
    pub beta: f64,
    pub beta_p: f64,
    pub lower: f64,
    pub upper: f64,
    pub z0: f64,
    pub control: ControlSpec,
    pub method: Method,
    pub chain: bool,
    pub n_eig: usize,
    pub oversampling: usize,
    pub samples: usize,
    pub k_ref: usize,
    pub sample_at_mean: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub estimate_samples: Vec<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub timings: bool,
    pub toy: ToyConfig,
    pub corrupt_gradient: f64,
    pub field_count: usize,
    pub export_operators: bool,
    raw: BTreeMap<String, String>,
}

fn err(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("{key} = {value}: {what}"))
}

fn parse_num<T: std::str::FromStr>(raw: &BTreeMap<String, String>, key: &str) -> CliResult<T> {
    let v = &raw[key];
    v.parse().map_err(|_| err(key, v, "not a valid number"))
}

fn parse_bool(raw: &BTreeMap<String, String>, key: &str) -> CliResult<bool> {
    match raw[key].as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        v => Err(err(key, v, "expected true or false")),
    }
}

fn parse_points(key: &str, value: &str, reference: Vec<[f64; 2]>) -> CliResult<Vec<[f64; 2]>> {
    if value == "reference" {
        return Ok(reference);
    }
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (x, y) = p.split_once(':').ok_or_else(|| err(key, value, "points are written x:y"))?;
            let x: f64 = x.trim().parse().map_err(|_| err(key, value, "bad coordinate"))?;
            let y: f64 = y.trim().parse().map_err(|_| err(key, value, "bad coordinate"))?;
            Ok([x, y])
        })
        .collect()
}

impl RunConfig {
    /// All defaults.
    pub fn defaults() -> Self {
        Self::from_raw(Self::default_raw()).expect("defaults are valid")
    }

    fn default_raw() -> BTreeMap<String, String> {
        KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect()
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut raw = Self::default_raw();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !raw.contains_key(k) {
                return Err(CliError::Config(format!("line {}: unknown key {k}", lineno + 1)));
            }
            if !seen.insert(k.to_string()) {
                return Err(CliError::Config(format!("line {}: key {k} given twice", lineno + 1)));
            }
            raw.insert(k.to_string(), v.to_string());
        }
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Replaces one key and re-validates.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !self.raw.contains_key(key) {
            return Err(CliError::Config(format!("unknown key {key}")));
        }
        let mut raw = self.raw.clone();
        raw.insert(key.to_string(), value.to_string());
        *self = Self::from_raw(raw)?;
        Ok(())
    }

    fn from_raw(raw: BTreeMap<String, String>) -> CliResult<Self> {
        let model = match raw["model"].as_str() {
            "elliptic" => ModelKind::Elliptic,
            "toy" => ModelKind::Toy,
            v => return Err(err("model", v, "expected elliptic or toy")),
        };
        let mean = match raw["prior.mean"].split_once(':') {
            Some(("const", x)) => MeanSpec::Const(
                x.trim()
                    .parse()
                    .map_err(|_| err("prior.mean", &raw["prior.mean"], "bad constant"))?,
            ),
            Some(("file", p)) => MeanSpec::File(PathBuf::from(p.trim())),
            _ => return Err(err("prior.mean", &raw["prior.mean"], "expected const:VALUE or file:PATH")),
        };
        let control = match raw["control"].as_str() {
            "z0" => ControlSpec::Uniform,
            v => match v.split_once(':') {
                Some(("file", p)) => ControlSpec::File(PathBuf::from(p.trim())),
                _ => return Err(err("control", v, "expected z0 or file:PATH")),
            },
        };
        let reference = WellConfig::reference();
        let method = Method::parse(&raw["method.name"])
            .ok_or_else(|| err("method.name", &raw["method.name"], "expected saa, lin, quad, lin-mc, or quad-mc"))?;
        let estimate_samples = raw["estimate.M"]
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err("estimate.M", &raw["estimate.M"], "expected a comma-separated list of counts"))?;
        let cfg = RunConfig {
            model,
            nx: parse_num(&raw, "mesh.nx")?,
            ny: parse_num(&raw, "mesh.ny")?,
            lx: parse_num(&raw, "mesh.lx")?,
            ly: parse_num(&raw, "mesh.ly")?,
            alpha1: parse_num(&raw, "prior.alpha1")?,
            alpha2: parse_num(&raw, "prior.alpha2")?,
            theta: [
                parse_num(&raw, "prior.theta11")?,
                parse_num(&raw, "prior.theta12")?,
                parse_num(&raw, "prior.theta22")?,
            ],
            mean,
            injection: parse_points("wells.injection", &raw["wells.injection"], reference.injection.clone())?,
            production: parse_points("wells.production", &raw["wells.production"], reference.production.clone())?,
            sigma: parse_num(&raw, "wells.sigma")?,
            cg: match raw["solver"].as_str() {
                "direct" => false,
                "cg" => true,
                v => return Err(err("solver", v, "expected direct or cg")),
            },
            beta: parse_num(&raw, "cost.beta")?,
            beta_p: parse_num(&raw, "cost.beta_p")?,
            lower: parse_num(&raw, "cost.lower")?,
            upper: parse_num(&raw, "cost.upper")?,
            z0: parse_num(&raw, "cost.z0")?,
            control,
            method,
            chain: parse_bool(&raw, "method.chain")?,
            n_eig: parse_num(&raw, "method.N")?,
            oversampling: parse_num(&raw, "method.p")?,
            samples: parse_num(&raw, "method.M")?,
            k_ref: parse_num(&raw, "method.k_ref")?,
            sample_at_mean: parse_bool(&raw, "method.sample_at_mean")?,
            tol: parse_num(&raw, "opt.tol")?,
            max_iter: parse_num(&raw, "opt.max_iter")?,
            memory: parse_num(&raw, "opt.memory")?,
            estimate_samples,
            seed: parse_num(&raw, "rng.seed")?,
            out_dir: PathBuf::from(&raw["output.directory"]),
            timings: parse_bool(&raw, "output.timings")?,
            toy: ToyConfig {
                n: parse_num(&raw, "toy.n")?,
                rank: parse_num(&raw, "toy.rank")?,
                controls: parse_num(&raw, "toy.controls")?,
                seed: parse_num(&raw, "toy.seed")?,
                variance: parse_num(&raw, "toy.variance")?,
            },
            corrupt_gradient: parse_num(&raw, "check.corrupt_gradient")?,
            field_count: parse_num(&raw, "field.count")?,
            export_operators: parse_bool(&raw, "field.export_operators")?,
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.nx < 2 || self.ny < 2 {
            return bad("mesh.nx and mesh.ny must be at least 2");
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return bad("mesh lengths must be positive");
        }
        if !(self.beta >= 0.0 && self.beta_p >= 0.0) {
            return bad("cost.beta and cost.beta_p must be nonnegative");
        }
        if !(self.lower <= self.upper) {
            return bad("cost.lower exceeds cost.upper");
        }
        if !(self.z0 >= self.lower && self.z0 <= self.upper) {
            return bad("cost.z0 lies outside the bounds");
        }
        if self.n_eig == 0 || self.k_ref == 0 {
            return bad("method.N and method.k_ref must be positive");
        }
        if self.samples == 0 || self.estimate_samples.iter().any(|&m| m < 2) {
            return bad("method.M must be positive and every estimate.M at least 2");
        }
        if !(self.tol > 0.0) || self.memory == 0 {
            return bad("opt.tol and opt.memory must be positive");
        }
        if self.toy.rank > self.toy.n || self.toy.n == 0 || !(self.toy.variance > 0.0) {
            return bad("toy.rank must not exceed toy.n, and toy.n and toy.variance must be positive");
        }
        Ok(())
    }

    /// All keys in canonical order.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (k, _, _) in KEYS {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&self.raw[*k]);
            s.push('\n');
        }
        s
    }

    /// The resolved text without the output location, which does not
    /// affect any result.
    pub fn identity_text(&self) -> String {
        self.resolved_text()
            .lines()
            .filter(|l| !l.starts_with("output.directory "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.raw.get(key).map(String::as_str)
    }

    pub fn bounds_pair(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = RunConfig::defaults();
        let again = RunConfig::parse(&d.resolved_text()).unwrap();
        assert_eq!(d, again);
        assert_eq!(d.injection.len(), 20);
        assert_eq!(d.production.len(), 12);
        assert_eq!(d.method, Method::QuadMc);
    }

    #[test]
    fn overrides_and_comments() {
        let c = RunConfig::parse("# comment\nmesh.nx = 16 # trailing\nmethod.name=lin\nestimate.M = 2\n").unwrap();
        assert_eq!(c.nx, 16);
        assert_eq!(c.method, Method::Lin);
        assert_eq!(c.estimate_samples, vec![2]);
        assert!(c.resolved_text().contains("mesh.nx = 16\n"));
    }

    #[test]
    fn rejects_unknown_repeated_and_invalid() {
        assert!(matches!(RunConfig::parse("mesh.nz = 3"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("mesh.nx = 3\nmesh.nx = 4"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("mesh.nx = three"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("method.name = newton"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("cost.lower = 40"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("no equals sign"), Err(CliError::Config(_))));
    }

    #[test]
    fn explicit_wells() {
        let c = RunConfig::parse("wells.injection = 0.5:0.5; 1.5:0.5\nwells.production = 1:0.5").unwrap();
        assert_eq!(c.injection, vec![[0.5, 0.5], [1.5, 0.5]]);
        assert_eq!(c.production, vec![[1.0, 0.5]]);
        assert!(RunConfig::parse("wells.injection = 0.5,0.5").is_err());
    }
}
