//! Synthetic long-tailed dataset construction and the weak/strong
//! augmentation pair.
//!
//! Real corpora are replaced by Gaussian mixtures with controllable class
//! imbalance: the training algorithm only ever consumes confidences and
//! projected features, and a mixture gives a computable Bayes reference.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::HiddenLabels;
use crate::numerics::{Matrix, RandomStream};

/// Rounding rule applied to the per-class count formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    Round,
    Floor,
}

impl fmt::Display for Rounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rounding::Round => write!(f, "round"),
            Rounding::Floor => write!(f, "floor"),
        }
    }
}

/// Imbalance ratio of the unlabeled pool. `Unknown` models the setting
/// where the pool's skew is hidden from the experimenter; generation then
/// reuses the labeled ratio, and nothing downstream may depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Imbalance {
    Ratio(f64),
    Unknown,
}

impl fmt::Display for Imbalance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Imbalance::Ratio(g) => write!(f, "{g}"),
            Imbalance::Unknown => write!(f, "unknown"),
        }
    }
}

/// Shape of the long-tailed labeled/unlabeled splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    /// Number of classes C.
    pub num_classes: usize,
    /// Labeled head-class count N1.
    pub head_labeled: usize,
    /// Unlabeled head-class count M1.
    pub head_unlabeled: usize,
    /// Labeled imbalance ratio γ_l ≥ 1.
    pub gamma_labeled: f64,
    /// Unlabeled imbalance ratio γ_u ≥ 1, or unknown.
    pub gamma_unlabeled: Imbalance,
    pub rounding: Rounding,
    /// Size of each class in the balanced test split.
    pub test_per_class: usize,
}

impl LongTailSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidValue {
                key: "classes".into(),
                message: "need at least 2 classes".into(),
            });
        }
        if self.head_labeled < 1 || self.head_unlabeled < 1 {
            return Err(Error::InvalidValue {
                key: "head count".into(),
                message: "head-class counts must be at least 1".into(),
            });
        }
        if self.gamma_labeled < 1.0 {
            return Err(Error::InvalidValue {
                key: "gamma_labeled".into(),
                message: "imbalance ratio must be >= 1".into(),
            });
        }
        if let Imbalance::Ratio(g) = self.gamma_unlabeled {
            if g < 1.0 {
                return Err(Error::InvalidValue {
                    key: "gamma_unlabeled".into(),
                    message: "imbalance ratio must be >= 1".into(),
                });
            }
        }
        Ok(())
    }

    pub fn labeled_counts(&self) -> Vec<usize> {
        longtail_counts(self.head_labeled, self.gamma_labeled, self.num_classes, self.rounding)
    }

    pub fn unlabeled_counts(&self) -> Vec<usize> {
        let gamma = match self.gamma_unlabeled {
            Imbalance::Ratio(g) => g,
            Imbalance::Unknown => self.gamma_labeled,
        };
        longtail_counts(self.head_unlabeled, gamma, self.num_classes, self.rounding)
    }
}

/// Per-class counts `count_k = rounding(head · gamma^{−(k−1)/(C−1)})`,
/// clamped to at least 1 so every class exists. Counts are non-increasing
/// in k for any gamma ≥ 1.
pub fn longtail_counts(head: usize, gamma: f64, num_classes: usize, rounding: Rounding) -> Vec<usize> {
    assert!(head >= 1 && gamma >= 1.0 && num_classes >= 2);
    (0..num_classes)
        .map(|k| {
            let exponent = -(k as f64) / (num_classes as f64 - 1.0);
            let raw = head as f64 * gamma.powf(exponent);
            let rounded = match rounding {
                Rounding::Round => raw.round(),
                Rounding::Floor => raw.floor(),
            };
            if rounded < 1.0 {
                log::warn!("longtail_counts: class {k} count {rounded} clamped to 1");
                1
            } else {
                rounded as usize
            }
        })
        .collect()
}

/// Weak/strong perturbation parameters. Weak is isotropic Gaussian noise
/// (σ_w = 0 means none); strong is `swap_count` random coordinate swaps
/// followed by Gaussian noise σ_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub weak_noise_sigma: f64,
    pub strong_swap_count: usize,
    pub strong_noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            weak_noise_sigma: 0.0,
            strong_swap_count: 2,
            strong_noise_sigma: 0.1,
        }
    }
}

/// A batch-ready collection of samples. `hidden` carries the ground truth
/// of unlabeled samples for telemetry; its values are only readable inside
/// the metrics module.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    hidden: Option<HiddenLabels>,
    pub num_classes: usize,
}

impl SampleSet {
    pub fn new(
        features: Matrix,
        labels: Option<Vec<usize>>,
        hidden: Option<HiddenLabels>,
        num_classes: usize,
    ) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::DimMismatch {
                    context: "SampleSet labels",
                    expected: features.rows(),
                    actual: labels.len(),
                });
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
                return Err(Error::LabelOutOfRange {
                    label: bad,
                    classes: num_classes,
                });
            }
        }
        if let Some(hidden) = &hidden {
            if hidden.len() != features.rows() {
                return Err(Error::DimMismatch {
                    context: "SampleSet hidden labels",
                    expected: features.rows(),
                    actual: hidden.len(),
                });
            }
        }
        Ok(SampleSet {
            features,
            labels,
            hidden,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Telemetry-only ground truth; the values inside are unreadable
    /// outside the metrics module.
    pub fn hidden_labels(&self) -> Option<&HiddenLabels> {
        self.hidden.as_ref()
    }

    /// Per-class counts of the visible labels.
    pub fn class_counts(&self) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|labels| {
            let mut counts = vec![0usize; self.num_classes];
            for &l in labels {
                counts[l] += 1;
            }
            counts
        })
    }

    /// Copies the given rows into a fresh feature matrix.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.dim());
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.features.row(i));
        }
        out
    }
}

/// Isotropic Gaussian mixture with unit within-class spread; the means
/// sit on coordinate axes (± separation), falling back to random unit
/// directions once the axes run out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: Matrix,
    pub separation: f64,
}

impl GaussianMixture {
    pub fn num_classes(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn sample(&self, class: usize, rng: &mut RandomStream) -> Vec<f64> {
        self.means
            .row(class)
            .iter()
            .map(|&m| m + rng.next_normal())
            .collect()
    }
}

pub fn generate_mixture(
    num_classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut RandomStream,
) -> GaussianMixture {
    assert!(num_classes >= 2 && dim >= 2);
    let mut means = Matrix::zeros(num_classes, dim);
    for k in 0..num_classes {
        let row = means.row_mut(k);
        if k < dim {
            row[k] = separation;
        } else if k < 2 * dim {
            row[k - dim] = -separation;
        } else {
            // More classes than axis slots: random direction on the sphere.
            let mut v: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in &mut v {
                *x *= separation / norm;
            }
            row.copy_from_slice(&v);
        }
    }
    GaussianMixture { means, separation }
}

/// Draws the labeled, unlabeled, and balanced test splits. All three are
/// fresh draws from the mixture, so they are disjoint by construction.
pub fn build_splits(
    spec: &LongTailSpec,
    mixture: &GaussianMixture,
    rng: &mut RandomStream,
) -> Result<(SampleSet, SampleSet, SampleSet)> {
    spec.validate()?;
    if mixture.num_classes() != spec.num_classes {
        return Err(Error::DimMismatch {
            context: "build_splits mixture",
            expected: spec.num_classes,
            actual: mixture.num_classes(),
        });
    }

    let draw = |counts: &[usize], rng: &mut RandomStream| -> (Matrix, Vec<usize>) {
        let total: usize = counts.iter().sum();
        let mut features = Matrix::zeros(total, mixture.dim());
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let x = mixture.sample(class, rng);
                features.row_mut(row).copy_from_slice(&x);
                labels.push(class);
                row += 1;
            }
        }
        (features, labels)
    };

    let (lf, ll) = draw(&spec.labeled_counts(), rng);
    let labeled = SampleSet::new(lf, Some(ll), None, spec.num_classes)?;

    let (uf, ul) = draw(&spec.unlabeled_counts(), rng);
    let hidden = HiddenLabels::new(ul, spec.num_classes)?;
    let unlabeled = SampleSet::new(uf, None, Some(hidden), spec.num_classes)?;

    let test_counts = vec![spec.test_per_class; spec.num_classes];
    let (tf, tl) = draw(&test_counts, rng);
    let test = SampleSet::new(tf, Some(tl), None, spec.num_classes)?;

    Ok((labeled, unlabeled, test))
}

/// Adds isotropic Gaussian noise σ_w; σ_w = 0 is the identity.
pub fn weak_augment(x: &[f64], cfg: &AugmentConfig, rng: &mut RandomStream) -> Vec<f64> {
    if cfg.weak_noise_sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| v + cfg.weak_noise_sigma * rng.next_normal())
        .collect()
}

/// Performs `strong_swap_count` random coordinate-pair swaps, then adds
/// Gaussian noise σ_s.
pub fn strong_augment(x: &[f64], cfg: &AugmentConfig, rng: &mut RandomStream) -> Vec<f64> {
    let mut out = x.to_vec();
    let d = out.len();
    if d >= 2 {
        for _ in 0..cfg.strong_swap_count {
            let i = rng.next_index(d);
            let j = (i + 1 + rng.next_index(d - 1)) % d;
            out.swap(i, j);
        }
    }
    if cfg.strong_noise_sigma > 0.0 {
        for v in &mut out {
            *v += cfg.strong_noise_sigma * rng.next_normal();
        }
    }
    out
}

/// One step's worth of batch indices, sampled uniformly with replacement.
#[derive(Debug, Clone)]
pub struct BatchIndices {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Samples `batch_size` labeled and `⌊mu·batch_size⌋` unlabeled indices.
pub fn sample_batches(
    labeled_len: usize,
    unlabeled_len: usize,
    batch_size: usize,
    mu: f64,
    labeled_rng: &mut RandomStream,
    unlabeled_rng: &mut RandomStream,
) -> BatchIndices {
    assert!(batch_size >= 1 && mu > 0.0);
    let unlabeled_size = (mu * batch_size as f64).floor() as usize;
    BatchIndices {
        labeled: (0..batch_size).map(|_| labeled_rng.next_index(labeled_len)).collect(),
        unlabeled: (0..unlabeled_size)
            .map(|_| unlabeled_rng.next_index(unlabeled_len))
            .collect(),
    }
}

/// Bundle metadata echoed next to the TSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub version: u32,
    pub spec: LongTailSpec,
    pub feature_dim: usize,
    pub separation: f64,
    pub data_seed: u64,
    pub labeled_counts: Vec<usize>,
    pub unlabeled_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
}

pub const BUNDLE_VERSION: u32 = 1;

/// Generates a full dataset bundle from scratch.
pub fn generate_bundle(
    spec: &LongTailSpec,
    dim: usize,
    separation: f64,
    data_seed: u64,
) -> Result<(BundleMeta, SampleSet, SampleSet, SampleSet)> {
    let mut mix_rng = RandomStream::new(data_seed, "data/mixture");
    let mixture = generate_mixture(spec.num_classes, dim, separation, &mut mix_rng);
    let mut split_rng = RandomStream::new(data_seed, "data/splits");
    let (labeled, unlabeled, test) = build_splits(spec, &mixture, &mut split_rng)?;
    let meta = BundleMeta {
        version: BUNDLE_VERSION,
        spec: spec.clone(),
        feature_dim: dim,
        separation,
        data_seed,
        labeled_counts: labeled.class_counts().unwrap(),
        unlabeled_counts: spec.unlabeled_counts(),
        test_counts: vec![spec.test_per_class; spec.num_classes],
    };
    Ok((meta, labeled, unlabeled, test))
}

fn write_tsv(path: &Path, set: &SampleSet) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in 0..set.len() {
        for v in set.features.row(r) {
            write!(w, "{v}\t")?;
        }
        match &set.labels {
            Some(labels) => writeln!(w, "{}", labels[r])?,
            None => writeln!(w, "-1")?,
        }
    }
    w.flush()?;
    Ok(())
}

fn read_tsv(path: &Path, dim: usize, num_classes: usize) -> Result<(Matrix, Option<Vec<usize>>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Bundle(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                lineno + 1,
                fields.len(),
                dim + 1
            )));
        }
        let mut row = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            row.push(f.parse::<f64>().map_err(|e| {
                Error::Bundle(format!("{}: line {}: {e}", path.display(), lineno + 1))
            })?);
        }
        rows.push(row);
        labels.push(fields[dim].parse::<i64>().map_err(|e| {
            Error::Bundle(format!("{}: line {}: {e}", path.display(), lineno + 1))
        })?);
    }
    let features = Matrix::from_rows(&rows)?;
    if labels.iter().all(|&l| l == -1) {
        Ok((features, None))
    } else {
        let parsed: Result<Vec<usize>> = labels
            .iter()
            .map(|&l| {
                if l >= 0 && (l as usize) < num_classes {
                    Ok(l as usize)
                } else {
                    Err(Error::LabelOutOfRange {
                        label: l.max(0) as usize,
                        classes: num_classes,
                    })
                }
            })
            .collect();
        Ok((features, Some(parsed?)))
    }
}

/// Writes `dataset.meta.json`, `labeled.tsv`, `unlabeled.tsv`,
/// `unlabeled.hidden.tsv`, and `test.tsv` under `dir`.
pub fn save_bundle(
    dir: &Path,
    meta: &BundleMeta,
    labeled: &SampleSet,
    unlabeled: &SampleSet,
    test: &SampleSet,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta_json = serde_json::to_string_pretty(meta)?;
    fs::write(dir.join("dataset.meta.json"), meta_json + "\n")?;
    write_tsv(&dir.join("labeled.tsv"), labeled)?;
    write_tsv(&dir.join("unlabeled.tsv"), unlabeled)?;
    write_tsv(&dir.join("test.tsv"), test)?;
    let hidden = unlabeled
        .hidden_labels()
        .ok_or_else(|| Error::Bundle("unlabeled set is missing hidden labels".into()))?;
    let mut w = BufWriter::new(fs::File::create(dir.join("unlabeled.hidden.tsv"))?);
    hidden.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<(BundleMeta, SampleSet, SampleSet, SampleSet)> {
    let meta_text = fs::read_to_string(dir.join("dataset.meta.json"))?;
    let meta: BundleMeta = serde_json::from_str(&meta_text)?;
    if meta.version != BUNDLE_VERSION {
        return Err(Error::Bundle(format!(
            "unsupported bundle version {} (expected {BUNDLE_VERSION})",
            meta.version
        )));
    }
    let c = meta.spec.num_classes;
    let dim = meta.feature_dim;

    let (lf, ll) = read_tsv(&dir.join("labeled.tsv"), dim, c)?;
    let labeled = SampleSet::new(lf, ll, None, c)?;

    let (uf, _) = read_tsv(&dir.join("unlabeled.tsv"), dim, c)?;
    let hidden_text = fs::read_to_string(dir.join("unlabeled.hidden.tsv"))?;
    let mut hidden_values = Vec::new();
    for (lineno, line) in hidden_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        hidden_values.push(line.trim().parse::<usize>().map_err(|e| {
            Error::Bundle(format!("unlabeled.hidden.tsv line {}: {e}", lineno + 1))
        })?);
    }
    let unlabeled = SampleSet::new(uf, None, Some(HiddenLabels::new(hidden_values, c)?), c)?;

    let (tf, tl) = read_tsv(&dir.join("test.tsv"), dim, c)?;
    let test = SampleSet::new(tf, tl, None, c)?;

    Ok((meta, labeled, unlabeled, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(c: usize, n1: usize, gamma: f64) -> LongTailSpec {
        LongTailSpec {
            num_classes: c,
            head_labeled: n1,
            head_unlabeled: n1 * 10,
            gamma_labeled: gamma,
            gamma_unlabeled: Imbalance::Ratio(gamma),
            rounding: Rounding::Round,
            test_per_class: 20,
        }
    }

    #[test]
    fn longtail_endpoints_exact() {
        // head=500, γ=100, C=10: k=1 exponent is 0, k=10 exponent is −1.
        let counts = longtail_counts(500, 100.0, 10, Rounding::Round);
        assert_eq!(counts[0], 500);
        assert_eq!(counts[9], 5);
    }

    #[test]
    fn longtail_second_class_rounds() {
        // 500·100^{−1/9} ≈ 299.74, recomputed here as the oracle.
        let oracle = (500.0 * 100.0_f64.powf(-1.0 / 9.0)).round() as usize;
        let counts = longtail_counts(500, 100.0, 10, Rounding::Round);
        assert_eq!(counts[1], oracle);
        assert_eq!(counts[1], 300);
    }

    #[test]
    fn longtail_known_profile() {
        let counts = longtail_counts(100, 10.0, 6, Rounding::Round);
        let oracle: Vec<usize> = (0..6)
            .map(|k| (100.0 * 10.0_f64.powf(-(k as f64) / 5.0)).round() as usize)
            .collect();
        assert_eq!(counts, oracle);
        assert_eq!(counts, vec![100, 63, 40, 25, 16, 10]);
    }

    #[test]
    fn longtail_balanced_limit() {
        assert_eq!(longtail_counts(50, 1.0, 4, Rounding::Round), vec![50; 4]);
    }

    #[test]
    fn longtail_clamps_to_one() {
        let counts = longtail_counts(2, 1000.0, 8, Rounding::Floor);
        assert!(counts.iter().all(|&c| c >= 1));
        assert_eq!(counts[0], 2);
    }

    #[test]
    fn mixture_deterministic_and_separated() {
        let mut rng_a = RandomStream::new(1, "mix");
        let mut rng_b = RandomStream::new(1, "mix");
        let a = generate_mixture(2, 2, 4.0, &mut rng_a);
        let b = generate_mixture(2, 2, 4.0, &mut rng_b);
        assert_eq!(a.means, b.means);
        let d: f64 = a
            .means
            .row(0)
            .iter()
            .zip(a.means.row(1))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!((d - 4.0 * 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mixture_overlap_below_one_percent() {
        // Monte-Carlo oracle: draws from class 0 landing closer to the
        // class-1 mean estimate the Bayes error of the 2-class mixture.
        let mut rng = RandomStream::new(5, "mix");
        let mixture = generate_mixture(2, 2, 4.0, &mut rng);
        let mut draw_rng = RandomStream::new(6, "overlap");
        let trials = 20_000;
        let mut wrong = 0;
        for _ in 0..trials {
            let x = mixture.sample(0, &mut draw_rng);
            let d0: f64 = x.iter().zip(mixture.means.row(0)).map(|(a, b)| (a - b).powi(2)).sum();
            let d1: f64 = x.iter().zip(mixture.means.row(1)).map(|(a, b)| (a - b).powi(2)).sum();
            if d1 < d0 {
                wrong += 1;
            }
        }
        assert!((wrong as f64) / (trials as f64) < 0.01);
    }

    #[test]
    fn mixture_many_classes_distinct() {
        let mut rng = RandomStream::new(2, "mix");
        let m = generate_mixture(9, 3, 2.0, &mut rng);
        for a in 0..9 {
            for b in (a + 1)..9 {
                let d: f64 = m
                    .means
                    .row(a)
                    .iter()
                    .zip(m.means.row(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                assert!(d > 1e-6, "means {a} and {b} coincide");
            }
        }
    }

    #[test]
    fn splits_have_expected_counts() {
        let spec = spec(6, 100, 10.0);
        let mut rng = RandomStream::new(3, "mix");
        let mixture = generate_mixture(6, 4, 3.0, &mut rng);
        let mut split_rng = RandomStream::new(3, "split");
        let (labeled, unlabeled, test) = build_splits(&spec, &mixture, &mut split_rng).unwrap();
        assert_eq!(labeled.class_counts().unwrap(), vec![100, 63, 40, 25, 16, 10]);
        assert_eq!(unlabeled.len(), spec.unlabeled_counts().iter().sum::<usize>());
        assert!(unlabeled.labels.is_none());
        assert!(unlabeled.hidden_labels().is_some());
        assert_eq!(test.class_counts().unwrap(), vec![20; 6]);
    }

    #[test]
    fn balanced_gamma_gives_equal_counts() {
        let spec = spec(4, 30, 1.0);
        assert_eq!(spec.labeled_counts(), vec![30; 4]);
        assert_eq!(spec.unlabeled_counts(), vec![300; 4]);
    }

    #[test]
    fn weak_augment_zero_sigma_is_identity() {
        let cfg = AugmentConfig {
            weak_noise_sigma: 0.0,
            ..Default::default()
        };
        let mut rng = RandomStream::new(1, "w");
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(weak_augment(&x, &cfg, &mut rng), x);
    }

    #[test]
    fn weak_augment_noise_scale() {
        // E‖out − in‖² = σ²·d, Monte-Carlo check.
        let cfg = AugmentConfig {
            weak_noise_sigma: 0.1,
            ..Default::default()
        };
        let mut rng = RandomStream::new(2, "w");
        let d = 16;
        let x = vec![0.0; d];
        let trials = 4000;
        let mut total = 0.0;
        for _ in 0..trials {
            let y = weak_augment(&x, &cfg, &mut rng);
            total += y.iter().map(|v| v * v).sum::<f64>();
        }
        let mean = total / trials as f64;
        let expected = 0.01 * d as f64;
        assert!((mean - expected).abs() < 0.1 * expected, "mean {mean} vs {expected}");
    }

    #[test]
    fn strong_augment_identity_when_disabled() {
        let cfg = AugmentConfig {
            weak_noise_sigma: 0.0,
            strong_swap_count: 0,
            strong_noise_sigma: 0.0,
        };
        let mut rng = RandomStream::new(1, "s");
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(strong_augment(&x, &cfg, &mut rng), x);
    }

    #[test]
    fn strong_augment_preserves_multiset() {
        let cfg = AugmentConfig {
            weak_noise_sigma: 0.0,
            strong_swap_count: 5,
            strong_noise_sigma: 0.0,
        };
        let mut rng = RandomStream::new(9, "s");
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let mut y = strong_augment(&x, &cfg, &mut rng);
        y.sort_by(f64::total_cmp);
        assert_eq!(y, x);
    }

    #[test]
    fn sample_batches_sizes_and_determinism() {
        let mut l1 = RandomStream::new(4, "l");
        let mut u1 = RandomStream::new(4, "u");
        let batch = sample_batches(100, 300, 4, 1.0, &mut l1, &mut u1);
        assert_eq!(batch.labeled.len(), 4);
        assert_eq!(batch.unlabeled.len(), 4);

        let mut l2 = RandomStream::new(4, "l");
        let mut u2 = RandomStream::new(4, "u");
        let batch2 = sample_batches(100, 300, 4, 1.0, &mut l2, &mut u2);
        assert_eq!(batch.labeled, batch2.labeled);
        assert_eq!(batch.unlabeled, batch2.unlabeled);

        let mut l3 = RandomStream::new(4, "l");
        let mut u3 = RandomStream::new(4, "u");
        let batch3 = sample_batches(100, 300, 1, 7.0, &mut l3, &mut u3);
        assert_eq!(batch3.labeled.len(), 1);
        assert_eq!(batch3.unlabeled.len(), 7);
    }

    #[test]
    fn bundle_roundtrip() {
        let spec = spec(3, 20, 5.0);
        let (meta, labeled, unlabeled, test) = generate_bundle(&spec, 4, 2.0, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &meta, &labeled, &unlabeled, &test).unwrap();
        let (meta2, l2, u2, t2) = load_bundle(dir.path()).unwrap();
        assert_eq!(meta2.spec, spec);
        assert_eq!(l2.features, labeled.features);
        assert_eq!(l2.labels, labeled.labels);
        assert_eq!(u2.features, unlabeled.features);
        assert_eq!(t2.features, test.features);
    }

    proptest! {
        #[test]
        fn longtail_counts_non_increasing(
            head in 1usize..2000,
            gamma in 1.0..500.0f64,
            c in 2usize..20,
            round_flag in proptest::bool::ANY,
        ) {
            let rounding = if round_flag { Rounding::Round } else { Rounding::Floor };
            let counts = longtail_counts(head, gamma, c, rounding);
            prop_assert_eq!(counts[0], head.max(1));
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(counts.iter().all(|&n| n >= 1));
        }
    }
}
