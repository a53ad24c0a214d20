use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelmath::DesignMatrix;
use crate::model::{logistic, Family};

/// Equicorrelation of the correlated designs.
pub const EQUICORRELATION: f64 = 0.3;
/// Inactive columns drawn as fair coin flips in the binary variant of example 2
/// (1-based, the first ten inactive columns).
pub const EX2_BINARY_INACTIVE: std::ops::RangeInclusive<usize> = 7..=16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimTag {
    Ex1,
    Ex2,
    Ex2Binary,
    Ex2Correlated,
    Ex3,
    Ex3Correlated,
    NullBernoulli,
    GaussEx2,
    GaussEx2AllBinary,
    GaussEx3,
}

impl SimTag {
    pub const ALL: [SimTag; 10] = [
        SimTag::Ex1,
        SimTag::Ex2,
        SimTag::Ex2Binary,
        SimTag::Ex2Correlated,
        SimTag::Ex3,
        SimTag::Ex3Correlated,
        SimTag::NullBernoulli,
        SimTag::GaussEx2,
        SimTag::GaussEx2AllBinary,
        SimTag::GaussEx3,
    ];

    /// `(n, K)` of the published design.
    pub fn shape(self) -> (usize, usize) {
        match self {
            SimTag::Ex1 => (100, 71),
            SimTag::Ex2 | SimTag::Ex2Binary | SimTag::Ex2Correlated | SimTag::GaussEx2 | SimTag::GaussEx2AllBinary => {
                (500, 56)
            }
            SimTag::Ex3 | SimTag::Ex3Correlated | SimTag::GaussEx3 => (500, 54),
            SimTag::NullBernoulli => (500, 50),
        }
    }

    pub fn family(self) -> Family {
        match self {
            SimTag::GaussEx2 | SimTag::GaussEx2AllBinary | SimTag::GaussEx3 => Family::Gaussian,
            _ => Family::Bernoulli,
        }
    }

    /// 1-based indices of the features that enter the latent function.
    pub fn truth(self) -> Vec<usize> {
        match self {
            SimTag::Ex1 => vec![1],
            SimTag::Ex2 | SimTag::Ex2Binary | SimTag::Ex2Correlated | SimTag::GaussEx2 | SimTag::GaussEx2AllBinary => {
                (1..=6).collect()
            }
            SimTag::Ex3 | SimTag::Ex3Correlated | SimTag::GaussEx3 => (1..=4).collect(),
            SimTag::NullBernoulli => vec![],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SimTag::Ex1 => "ex1",
            SimTag::Ex2 => "ex2",
            SimTag::Ex2Binary => "ex2-binary",
            SimTag::Ex2Correlated => "ex2-correlated",
            SimTag::Ex3 => "ex3",
            SimTag::Ex3Correlated => "ex3-correlated",
            SimTag::NullBernoulli => "null-bernoulli",
            SimTag::GaussEx2 => "gauss-ex2",
            SimTag::GaussEx2AllBinary => "gauss-ex2-all-binary",
            SimTag::GaussEx3 => "gauss-ex3",
        }
    }

    /// Latent mean on the link scale for one row (1-based features at index `k - 1`).
    pub fn latent(self, row: &[f64]) -> f64 {
        let x = |k: usize| row[k - 1];
        match self {
            SimTag::Ex1 => 3.0 * x(1).sin(),
            SimTag::Ex2 | SimTag::Ex2Binary | SimTag::Ex2Correlated | SimTag::GaussEx2 | SimTag::GaussEx2AllBinary => {
                x(1) - x(2) - 0.5 * x(3) + 0.25 * x(4) + 0.125 * x(5) + 0.0625 * x(6)
            }
            SimTag::Ex3 | SimTag::Ex3Correlated | SimTag::GaussEx3 => {
                x(1).sin() + 1.5 * x(2).cos() + 2.0 * x(3).sin() + 2.5 * x(4).cos()
            }
            SimTag::NullBernoulli => 0.0,
        }
    }
}

impl std::fmt::Display for SimTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SimTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        SimTag::ALL
            .into_iter()
            .find(|t| t.name() == norm || t.name().replace('-', "") == norm.replace('-', ""))
            .ok_or_else(|| format!("unknown design '{s}'"))
    }
}

/// One simulated data set specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimDesign {
    pub tag: SimTag,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

impl SimDesign {
    /// The published sample size.
    pub fn paper(tag: SimTag, seed: u64) -> Self {
        let (n, k) = tag.shape();
        Self { tag, n, k, seed }
    }

    /// Same design with `n` rows instead of the published count.
    pub fn with_n(tag: SimTag, n: usize, seed: u64) -> Self {
        Self {
            n,
            ..Self::paper(tag, seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    /// 1-based active feature indices.
    pub truth: Vec<usize>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn coin(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    f64::from(u8::from(Bernoulli::new(p).expect("p in [0, 1]").sample(rng)))
}

/// Draws `(X, y)` for `design`. Columns are drawn first, then the response.
pub fn generate(design: &SimDesign) -> Result<SimData> {
    let SimDesign { tag, n, k, seed } = *design;
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need n >= 2, got {n}")));
    }
    if k != tag.shape().1 {
        return Err(Error::InvalidConfig(format!(
            "{tag} has {} features, got {k}",
            tag.shape().1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = vec![vec![0.0; n]; k];
    match tag {
        SimTag::Ex2Correlated | SimTag::Ex3Correlated => {
            let (a, b) = (EQUICORRELATION.sqrt(), (1.0 - EQUICORRELATION).sqrt());
            for i in 0..n {
                let common = normal(&mut rng);
                for col in cols.iter_mut() {
                    col[i] = a * common + b * normal(&mut rng);
                }
            }
        }
        SimTag::GaussEx2AllBinary => {
            for col in cols.iter_mut() {
                let p = rng.random_range(0.1..0.9);
                for v in col.iter_mut() {
                    *v = coin(&mut rng, p);
                }
            }
        }
        _ => {
            for (j, col) in cols.iter_mut().enumerate() {
                let binary = tag == SimTag::Ex2Binary && (j < 2 || EX2_BINARY_INACTIVE.contains(&(j + 1)));
                for v in col.iter_mut() {
                    *v = if binary { coin(&mut rng, 0.5) } else { normal(&mut rng) };
                }
            }
        }
    }
    let y = (0..n)
        .map(|i| {
            let row: Vec<f64> = cols.iter().map(|c| c[i]).collect();
            let eta = tag.latent(&row);
            match tag.family() {
                Family::Gaussian => eta + normal(&mut rng),
                _ => coin(&mut rng, logistic(eta)),
            }
        })
        .collect();
    Ok(SimData {
        x: DesignMatrix::from_columns(&cols)?,
        y,
        truth: tag.truth(),
    })
}
