use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelmath::{standardize_column, PcaBasis, StandardizedDesign};

/// How the nuisance column of each augmentation iteration is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceKind {
    /// i.i.d. standard normal draws.
    #[serde(alias = "random", alias = "normal")]
    RandomStandardNormal,
    /// A uniformly chosen design column with its entries shuffled.
    #[serde(alias = "permuted")]
    RandomPermutedColumn,
    /// The `m`-th principal-component score counted from the last.
    #[serde(alias = "pca")]
    PcaTail,
}

impl NuisanceKind {
    /// `"random"` for the random-column algorithm, `"pca"` for the PCA one.
    pub fn algorithm(self) -> &'static str {
        match self {
            NuisanceKind::RandomStandardNormal | NuisanceKind::RandomPermutedColumn => "random",
            NuisanceKind::PcaTail => "pca",
        }
    }
}

impl std::fmt::Display for NuisanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NuisanceKind::RandomStandardNormal => "random-standard-normal",
            NuisanceKind::RandomPermutedColumn => "random-permuted-column",
            NuisanceKind::PcaTail => "pca-tail",
        })
    }
}

impl std::str::FromStr for NuisanceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "random" | "random-standard-normal" | "normal" => Ok(Self::RandomStandardNormal),
            "permuted" | "random-permuted-column" | "permute" => Ok(Self::RandomPermutedColumn),
            "pca" | "pca-tail" => Ok(Self::PcaTail),
            other => Err(format!("unknown nuisance source '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuisanceSource {
    pub kind: NuisanceKind,
    pub seed: u64,
}

impl NuisanceSource {
    pub fn new(kind: NuisanceKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// Seed for stream `stream` derived from `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standardized nuisance column for iteration `m` (1-based).
///
/// `pca` must be the basis of `sd` when the source is [`NuisanceKind::PcaTail`];
/// only components with non-negligible variance are eligible.
pub fn make_nuisance(
    source: &NuisanceSource,
    sd: &StandardizedDesign,
    pca: Option<&PcaBasis>,
    m: usize,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidConfig("iteration index starts at 1".into()));
    }
    let n = sd.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(source.seed, m as u64));
    let raw: Vec<f64> = match source.kind {
        NuisanceKind::RandomStandardNormal => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        NuisanceKind::RandomPermutedColumn => {
            let k = rng.random_range(0..sd.ncols());
            let mut col = sd.column(k).to_vec();
            col.shuffle(&mut rng);
            col
        }
        NuisanceKind::PcaTail => {
            let basis = pca.ok_or_else(|| Error::InvalidConfig("PCA nuisance source needs the PCA basis".into()))?;
            let available = basis.usable();
            if m > available {
                return Err(Error::PcaIndexOutOfRange { m, available });
            }
            basis.score(available - m).to_vec()
        }
    };
    standardize_column(&raw, 0).map(|(z, _, _)| z)
}
