use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{
    heteroscedastic_sine, iris, letters_subset, mnist_subset, read_csv, two_moons, Dataset, Splits, TargetKind,
};
use crate::error::Result;
use crate::numerics::SeededRng;

/// Where an experiment gets its data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Bundled Iris table.
    Iris,
    /// Bundled digit images, first `limit` records.
    Mnist { limit: Option<usize> },
    /// Bundled letter images, first `limit` records.
    Letters { limit: Option<usize> },
    TwoMoons { n: usize, noise: f64 },
    /// `y = sin(x) + ε(x)` with input-dependent noise.
    HeteroscedasticSine { n: usize },
    Csv { path: PathBuf, target_column: String, kind: TargetKind },
}

impl DataSource {
    /// Short label for report rows.
    pub fn name(&self) -> String {
        match self {
            DataSource::Iris => "iris".into(),
            DataSource::Mnist { .. } => "mnist".into(),
            DataSource::Letters { .. } => "letters".into(),
            DataSource::TwoMoons { .. } => "two_moons".into(),
            DataSource::HeteroscedasticSine { .. } => "heteroscedastic_sine".into(),
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }

    /// Loads the full dataset; generated sources draw from `seed`.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        let mut rng = SeededRng::new(seed);
        match self {
            DataSource::Iris => iris(),
            DataSource::Mnist { limit } => mnist_subset(*limit),
            DataSource::Letters { limit } => letters_subset(*limit),
            DataSource::TwoMoons { n, noise } => two_moons(*n, *noise, &mut rng),
            DataSource::HeteroscedasticSine { n } => heteroscedastic_sine(*n, &mut rng),
            DataSource::Csv { path, target_column, kind } => read_csv(path, target_column, *kind),
        }
    }

    fn is_images(&self) -> bool {
        matches!(self, DataSource::Mnist { .. } | DataSource::Letters { .. })
    }

    /// Loads and splits. Image sources keep raw pixel values; everything
    /// else is standardized on the training part.
    pub fn splits(&self, fractions: [f64; 3], seed: u64) -> Result<Splits> {
        let data = self.load(seed)?;
        if self.is_images() {
            data.split(fractions, seed)
        } else {
            data.split_normalized(fractions, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_load_and_parse_from_toml() {
        let s: DataSource = toml::from_str("source = \"two_moons\"\nn = 20\nnoise = 0.1\n").unwrap();
        assert_eq!(s.load(1).unwrap().len(), 20);
        assert_eq!(s.name(), "two_moons");
        let iris = DataSource::Iris.splits([0.6, 0.2, 0.2], 3).unwrap();
        assert_eq!(iris.train.len() + iris.val.len() + iris.test.len(), 150);
        let digits = DataSource::Mnist { limit: Some(20) }.splits([0.5, 0.0, 0.5], 3).unwrap();
        assert!(digits.train.x.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
