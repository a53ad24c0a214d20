use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use gpardsel::inference::{FitConfig, OptimizerKind};
use gpardsel::model::Family;
use gpardsel::selection::{NuisanceKind, DEFAULT_Q_LIST};
use gpardsel::simlab::{SimTag, StudyProfile};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Merges a flat `key = value` TOML file with command-line flags (flags win)
/// and deserializes the result. Keys unknown to `T` are rejected.
pub fn resolve<T>(file: Option<&Path>, flags: &impl Serialize) -> Result<T, CliError>
where
    T: DeserializeOwned + Serialize + Default,
{
    let mut merged = Map::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        for (k, v) in table {
            if v.is_table() {
                return Err(CliError::input(format!(
                    "{}: nested table '{k}' is not allowed; use flat key = value pairs",
                    path.display()
                )));
            }
            merged.insert(k, serde_json::to_value(v).map_err(CliError::internal)?);
        }
    }
    if let Value::Object(f) = serde_json::to_value(flags).map_err(CliError::internal)? {
        merged.extend(f.into_iter().filter(|(_, v)| !v.is_null()));
    }
    let known: BTreeSet<String> = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.into_iter().map(|(k, _)| k).collect(),
        _ => BTreeSet::new(),
    };
    if let Some(bad) = merged.keys().find(|k| !known.contains(*k)) {
        return Err(CliError::input(format!("unknown configuration key '{bad}'")));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::input(format!("configuration: {e}")))
}

fn check_q_list(q: &[f64]) -> Result<(), CliError> {
    if q.is_empty() {
        return Err(CliError::input("q_list is empty"));
    }
    if let Some(bad) = q.iter().find(|&&q| !(q > 0.0 && q < 100.0)) {
        return Err(CliError::input(format!("q must lie in (0, 100), got {bad}")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<(), CliError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(CliError::input(format!("tau must be >= 0, got {tau}")));
    }
    Ok(())
}

fn required<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::input(format!("missing required setting '{key}'")))
}

/// Optimizer settings shared by the fitting subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitKnobs {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub restarts: usize,
}

impl Default for FitKnobs {
    fn default() -> Self {
        let d = FitConfig::default();
        Self {
            max_iters: d.max_iters,
            learning_rate: d.learning_rate,
            optimizer: d.optimizer,
            restarts: d.restarts,
        }
    }
}

impl FitKnobs {
    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            max_iters: self.max_iters,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            restarts: self.restarts,
            seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub data: Option<PathBuf>,
    pub response: String,
    pub family: Option<Family>,
    pub tau: f64,
    pub m: usize,
    pub q_list: Vec<f64>,
    pub algorithm: NuisanceKind,
    pub seed: u64,
    pub out: PathBuf,
    pub boxplot: PathBuf,
    #[serde(flatten)]
    pub fit: FitKnobs,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            data: None,
            response: "y".into(),
            family: None,
            tau: 2.0,
            m: 20,
            q_list: DEFAULT_Q_LIST.to_vec(),
            algorithm: NuisanceKind::RandomStandardNormal,
            seed: 0,
            out: "selection_report.json".into(),
            boxplot: "boxplot.json".into(),
            fit: FitKnobs::default(),
        }
    }
}

impl SelectConfig {
    pub fn check(&self) -> Result<(&Path, Family), CliError> {
        let data = required(&self.data, "data")?;
        let family = *required(&self.family, "family")?;
        check_tau(self.tau)?;
        check_q_list(&self.q_list)?;
        if self.m < 2 {
            return Err(CliError::input(format!("M must be at least 2, got {}", self.m)));
        }
        Ok((data, family))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitCmdConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub response: String,
    pub family: Option<Family>,
    pub tau: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub predictions: PathBuf,
    #[serde(flatten)]
    pub fit: FitKnobs,
}

impl Default for FitCmdConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            response: "y".into(),
            family: None,
            tau: 2.0,
            seed: 0,
            out: "fit.json".into(),
            predictions: "predictions.csv".into(),
            fit: FitKnobs::default(),
        }
    }
}

impl FitCmdConfig {
    pub fn check(&self) -> Result<(&Path, Family), CliError> {
        let train = required(&self.train, "train")?;
        let family = *required(&self.family, "family")?;
        check_tau(self.tau)?;
        Ok((train, family))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub design: Option<SimTag>,
    pub profile: StudyProfile,
    /// Overrides the profile's repetition count.
    pub reps: Option<usize>,
    /// Overrides the profile's sample size.
    pub n: Option<usize>,
    pub algorithms: Vec<NuisanceKind>,
    pub taus: Vec<f64>,
    pub q_list: Vec<f64>,
    pub m: usize,
    pub seed: u64,
    pub out_csv: PathBuf,
    pub out_json: PathBuf,
    #[serde(flatten)]
    pub fit: FitKnobs,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            design: None,
            profile: StudyProfile::Ci,
            reps: None,
            n: None,
            algorithms: vec![NuisanceKind::RandomStandardNormal, NuisanceKind::PcaTail],
            taus: vec![2.0],
            q_list: DEFAULT_Q_LIST.to_vec(),
            m: 20,
            seed: 0,
            out_csv: "study.csv".into(),
            out_json: "study.json".into(),
            fit: FitKnobs::default(),
        }
    }
}

impl SimulateConfig {
    pub fn check(&self) -> Result<SimTag, CliError> {
        let tag = *required(&self.design, "design")?;
        check_q_list(&self.q_list)?;
        for &t in &self.taus {
            check_tau(t)?;
        }
        if self.taus.is_empty() || self.algorithms.is_empty() {
            return Err(CliError::input("taus and algorithms must be non-empty"));
        }
        if self.reps == Some(0) {
            return Err(CliError::input("reps must be at least 1"));
        }
        if self.m < 2 {
            return Err(CliError::input(format!("M must be at least 2, got {}", self.m)));
        }
        Ok(tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[derive(Serialize, Default)]
    struct Flags {
        tau: Option<f64>,
        seed: Option<u64>,
    }

    #[test]
    fn flags_override_file_values() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "data = \"a.csv\"\nfamily = \"bernoulli\"\ntau = 4\nseed = 3\nalgorithm = \"pca\""
        )
        .unwrap();
        let flags = Flags {
            tau: Some(1.5),
            seed: None,
        };
        let cfg: SelectConfig = resolve(Some(f.path()), &flags).unwrap();
        assert_eq!(cfg.tau, 1.5);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.algorithm, NuisanceKind::PcaTail);
        assert_eq!(cfg.family, Some(Family::Bernoulli));
        assert_eq!(cfg.m, 20);
    }

    #[test]
    fn unknown_and_nested_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "taux = 4").unwrap();
        let err = resolve::<SelectConfig>(Some(f.path()), &Flags::default()).unwrap_err();
        assert!(err.message.contains("taux"));
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "[fit]\nmax_iters = 3").unwrap();
        assert!(resolve::<SelectConfig>(Some(g.path()), &Flags::default()).is_err());
    }

    #[test]
    fn missing_required_settings() {
        let cfg: SelectConfig = resolve(None, &Flags::default()).unwrap();
        assert!(cfg.check().unwrap_err().message.contains("data"));
    }
}
