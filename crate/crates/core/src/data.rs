//! Exactly-samplable data-generating distributions and dataset plumbing.
//!
//! Every estimator in this crate takes expectations over a data-generating
//! distribution; these synthetic families make those expectations honest:
//! fresh i.i.d. samples are always available, and the Gaussian-mixture
//! variant additionally has a computable Bayes risk to calibrate against.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

/// A synthetic data-generating distribution over `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratingDistribution {
    /// Two interleaved half-moons in the plane. `inter_class_distance`
    /// shifts the second moon down: 0 is the classic interlocking layout,
    /// larger values open a gap, negative values overlap the classes.
    TwoMoons {
        inter_class_distance: f64,
        jitter_sigma: f64,
    },
    /// Spherical Gaussian mixture with one component per class.
    GaussianMixture {
        means: Vec<Vec<f64>>,
        shared_sigma: f64,
        class_priors: Vec<f64>,
    },
    /// Concentric circles, one radius per class, equal priors.
    Circles { radii: Vec<f64>, jitter_sigma: f64 },
}

impl GeneratingDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratingDistribution::TwoMoons { jitter_sigma, .. } => {
                if *jitter_sigma < 0.0 {
                    return Err(Error::invalid("jitter_sigma must be >= 0"));
                }
            }
            GeneratingDistribution::GaussianMixture {
                means,
                shared_sigma,
                class_priors,
            } => {
                if means.len() < 2 {
                    return Err(Error::invalid("mixture needs k >= 2 components"));
                }
                if means.len() != class_priors.len() {
                    return Err(Error::invalid("one prior per component required"));
                }
                let dim = means[0].len();
                if dim == 0 || means.iter().any(|m| m.len() != dim) {
                    return Err(Error::invalid("component means must share a nonzero dim"));
                }
                if !(*shared_sigma > 0.0) {
                    return Err(Error::invalid("shared_sigma must be > 0"));
                }
                if class_priors.iter().any(|&p| p < 0.0) {
                    return Err(Error::invalid("priors must be nonnegative"));
                }
                let total: f64 = class_priors.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "priors must sum to 1 (got {total})"
                    )));
                }
            }
            GeneratingDistribution::Circles {
                radii,
                jitter_sigma,
            } => {
                if radii.len() < 2 {
                    return Err(Error::invalid("circles needs k >= 2 radii"));
                }
                if *jitter_sigma < 0.0 {
                    return Err(Error::invalid("jitter_sigma must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self {
            GeneratingDistribution::TwoMoons { .. } | GeneratingDistribution::Circles { .. } => 2,
            GeneratingDistribution::GaussianMixture { means, .. } => means[0].len(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            GeneratingDistribution::TwoMoons { .. } => 2,
            GeneratingDistribution::GaussianMixture { means, .. } => means.len(),
            GeneratingDistribution::Circles { radii, .. } => radii.len(),
        }
    }

    /// Compact description used in provenance records.
    pub fn describe(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }

    fn draw_example<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        match self {
            GeneratingDistribution::TwoMoons {
                inter_class_distance,
                jitter_sigma,
            } => {
                let class = usize::from(rng.random_bool(0.5));
                let t = rng.random_range(0.0..PI);
                let base = if class == 0 {
                    [t.cos(), t.sin()]
                } else {
                    [1.0 - t.cos(), 0.5 - t.sin() - inter_class_distance]
                };
                let x = base
                    .iter()
                    .map(|&b| {
                        let noise: f64 = StandardNormal.sample(rng);
                        b + jitter_sigma * noise
                    })
                    .collect();
                (x, class)
            }
            GeneratingDistribution::GaussianMixture {
                means,
                shared_sigma,
                class_priors,
            } => {
                let u: f64 = rng.random();
                let mut class = class_priors.len() - 1;
                let mut acc = 0.0;
                for (c, &p) in class_priors.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        class = c;
                        break;
                    }
                }
                let x = means[class]
                    .iter()
                    .map(|&m| {
                        let noise: f64 = StandardNormal.sample(rng);
                        m + shared_sigma * noise
                    })
                    .collect();
                (x, class)
            }
            GeneratingDistribution::Circles {
                radii,
                jitter_sigma,
            } => {
                let class = rng.random_range(0..radii.len());
                let t = rng.random_range(0.0..2.0 * PI);
                let r = radii[class];
                let x = [r * t.cos(), r * t.sin()]
                    .iter()
                    .map(|&b| {
                        let noise: f64 = StandardNormal.sample(rng);
                        b + jitter_sigma * noise
                    })
                    .collect();
                (x, class)
            }
        }
    }
}

/// Fraction of labels to corrupt, and the seed fixing *which* labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::invalid("noise ratio must be in [0,1]"));
        }
        Ok(())
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Description of the generating distribution (or of the parent set).
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset_indices: Option<Vec<usize>>,
    /// Subset fraction |subset|/|parent|, when this set is a subset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

/// A labelled sample: parallel `(x, y)` arrays plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<usize>,
    /// Number of classes (kept even if a subset is missing some).
    pub k: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.xs.first().map_or(0, Vec::len)
    }

    pub fn examples(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.xs.iter().map(Vec::as_slice).zip(self.ys.iter().copied())
    }

    /// Content fingerprint over dims, points (bit-exact) and labels.
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("dataset");
        fp.push_u64(self.len() as u64);
        fp.push_u64(self.input_dim() as u64);
        fp.push_u64(self.k as u64);
        for (x, y) in self.examples() {
            fp.push_f64s(x);
            fp.push_u64(y as u64);
        }
        fp.finish()
    }
}

/// Draws `n_points` i.i.d. examples. Bit-reproducible per `(dist, n, seed)`.
pub fn sample(dist: &GeneratingDistribution, n_points: usize, seed: u64) -> Result<Dataset> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n_points);
    let mut ys = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let (x, y) = dist.draw_example(&mut rng);
        xs.push(x);
        ys.push(y);
    }
    Ok(Dataset {
        xs,
        ys,
        k: dist.n_classes(),
        provenance: Provenance {
            source: dist.describe(),
            seed: Some(seed),
            noise: None,
            parent_fingerprint: None,
            subset_indices: None,
            eta: None,
        },
    })
}

/// Minimal achievable expected 0-1 risk of a Gaussian mixture.
///
/// Closed form for two components (the likelihood-ratio test reduces to a
/// one-dimensional Gaussian threshold problem). For `k >= 3` the maximum
/// posterior integral is evaluated by Simpson quadrature in 1-D and by a
/// seeded deterministic Monte Carlo estimate (400k draws) otherwise.
pub fn bayes_risk(dist: &GeneratingDistribution) -> Result<f64> {
    let GeneratingDistribution::GaussianMixture {
        means,
        shared_sigma,
        class_priors,
    } = dist
    else {
        return Err(Error::NotAvailable(
            "bayes risk is only defined for gaussian_mixture".into(),
        ));
    };
    dist.validate()?;
    let sigma = *shared_sigma;
    if means.len() == 2 {
        let d2: f64 = means[0]
            .iter()
            .zip(means[1].iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let d = d2.sqrt();
        let (p0, p1) = (class_priors[0], class_priors[1]);
        if d < 1e-12 {
            // indistinguishable components: always answer the larger prior
            return Ok(1.0 - p0.max(p1));
        }
        if p0 == 0.0 || p1 == 0.0 {
            return Ok(0.0);
        }
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let shift = (sigma / d) * (p0 / p1).ln();
        let half = d / (2.0 * sigma);
        return Ok(p0 * std_normal.cdf(-half - shift) + p1 * std_normal.cdf(-half + shift));
    }
    if means[0].len() == 1 {
        // risk = 1 − ∫ max_c π_c N(x | μ_c, σ²) dx, Simpson on a wide window
        let lo = means.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min) - 10.0 * sigma;
        let hi = means.iter().map(|m| m[0]).fold(f64::NEG_INFINITY, f64::max) + 10.0 * sigma;
        let n = 20_000; // even
        let h = (hi - lo) / n as f64;
        let integrand = |x: f64| -> f64 {
            means
                .iter()
                .zip(class_priors.iter())
                .map(|(m, &p)| {
                    let z = (x - m[0]) / sigma;
                    p * (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
                })
                .fold(0.0_f64, f64::max)
        };
        let mut acc = integrand(lo) + integrand(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(lo + i as f64 * h);
        }
        let integral = acc * h / 3.0;
        return Ok((1.0 - integral).clamp(0.0, 1.0));
    }
    // multi-dimensional, k >= 3: deterministic Monte Carlo under a fixed seed
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_BA1E);
    let n_draws = 400_000;
    let mut errors = 0usize;
    for _ in 0..n_draws {
        let (x, y) = dist.draw_example(&mut rng);
        let best = (0..means.len())
            .max_by(|&a, &b| {
                let score = |c: usize| {
                    let sq: f64 = x
                        .iter()
                        .zip(means[c].iter())
                        .map(|(xi, mi)| (xi - mi) * (xi - mi))
                        .sum();
                    class_priors[c].ln() - sq / (2.0 * sigma * sigma)
                };
                score(a).partial_cmp(&score(b)).unwrap()
            })
            .unwrap();
        if best != y {
            errors += 1;
        }
    }
    Ok(errors as f64 / n_draws as f64)
}

fn pick_flip_indices<R: Rng>(m: usize, n_flips: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    // partial Fisher-Yates: the first n_flips entries are the selection
    for i in 0..n_flips.min(m.saturating_sub(1)) {
        let j = rng.random_range(i..m);
        order.swap(i, j);
    }
    order.truncate(n_flips);
    order
}

/// The indices [`add_label_noise`] would flip for a dataset of size `m`.
pub fn noise_indices(m: usize, noise: &NoiseSpec) -> Vec<usize> {
    let n_flips = (noise.ratio * m as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    pick_flip_indices(m, n_flips, &mut rng)
}

/// Flips exactly `⌊ratio·m⌋` labels, each to a uniformly random *other*
/// class. Pure in `(dataset, noise)`, so repeat trainings see identical
/// corrupted labels.
pub fn add_label_noise(dataset: &Dataset, noise: &NoiseSpec) -> Result<Dataset> {
    noise.validate()?;
    let m = dataset.len();
    let n_flips = (noise.ratio * m as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let flips = pick_flip_indices(m, n_flips, &mut rng);
    let mut out = dataset.clone();
    for idx in flips {
        let old = out.ys[idx];
        let draw = rng.random_range(0..dataset.k - 1);
        out.ys[idx] = if draw >= old { draw + 1 } else { draw };
    }
    out.provenance.noise = Some(*noise);
    Ok(out)
}

/// Extracts `indices` (kept in the given order) as a new dataset whose
/// provenance records the parent fingerprint, the indices, and η.
pub fn subset(dataset: &Dataset, indices: &[usize]) -> Result<Dataset> {
    let m = dataset.len();
    let mut seen = vec![false; m];
    for &i in indices {
        if i >= m {
            return Err(Error::contract(format!("index {i} out of range (m={m})")));
        }
        if seen[i] {
            return Err(Error::contract(format!("duplicate index {i}")));
        }
        seen[i] = true;
    }
    let xs = indices.iter().map(|&i| dataset.xs[i].clone()).collect();
    let ys = indices.iter().map(|&i| dataset.ys[i]).collect();
    Ok(Dataset {
        xs,
        ys,
        k: dataset.k,
        provenance: Provenance {
            source: dataset.provenance.source.clone(),
            seed: dataset.provenance.seed,
            noise: dataset.provenance.noise,
            parent_fingerprint: Some(dataset.fingerprint()),
            subset_indices: Some(indices.to_vec()),
            eta: Some(if m == 0 {
                0.0
            } else {
                indices.len() as f64 / m as f64
            }),
        },
    })
}

/// Adds isotropic Gaussian noise of scale `sigma` to a point.
pub fn augment_jitter<R: Rng>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| {
            let noise: f64 = StandardNormal.sample(rng);
            v + sigma * noise
        })
        .collect()
}

/// Writes `dataset` as CSV (`x0,…,x{n−1},y`) with a `.json` provenance
/// sidecar next to it. Floats are written in shortest round-trip form, so a
/// reload is bit-exact.
pub fn save_dataset(csv_path: &Path, dataset: &Dataset) -> Result<()> {
    let n = dataset.input_dim();
    let mut body = String::new();
    for i in 0..n {
        body.push_str(&format!("x{i},"));
    }
    body.push_str("y\n");
    for (x, y) in dataset.examples() {
        for v in x {
            body.push_str(&format!("{v},"));
        }
        body.push_str(&format!("{y}\n"));
    }
    fs::write(csv_path, body)?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        provenance: &'a Provenance,
        k: usize,
        input_dim: usize,
        n_examples: usize,
        fingerprint: String,
    }
    let sidecar = Sidecar {
        provenance: &dataset.provenance,
        k: dataset.k,
        input_dim: n,
        n_examples: dataset.len(),
        fingerprint: dataset.fingerprint(),
    };
    fs::write(
        csv_path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(csv_path: &Path) -> Result<Dataset> {
    let malformed = |detail: &str| Error::Malformed {
        path: csv_path.display().to_string(),
        detail: detail.into(),
    };
    let body = fs::read_to_string(csv_path)?;
    let mut lines = body.lines();
    let header = lines.next().ok_or_else(|| malformed("empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"y") || cols.len() < 2 {
        return Err(malformed("expected header x0,…,y"));
    }
    let n = cols.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(malformed("row width does not match header"));
        }
        let x: Vec<f64> = fields[..n]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed("bad float"))?;
        let y: usize = fields[n].parse().map_err(|_| malformed("bad label"))?;
        xs.push(x);
        ys.push(y);
    }

    #[derive(Deserialize)]
    struct Sidecar {
        provenance: Provenance,
        k: usize,
    }
    let sidecar_path = csv_path.with_extension("json");
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    if let Some(&bad) = ys.iter().find(|&&y| y >= sidecar.k) {
        return Err(malformed(&format!("label {bad} out of range")));
    }
    Ok(Dataset {
        xs,
        ys,
        k: sidecar.k,
        provenance: sidecar.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moons() -> GeneratingDistribution {
        GeneratingDistribution::TwoMoons {
            inter_class_distance: 0.2,
            jitter_sigma: 0.1,
        }
    }

    #[test]
    fn empty_sample() {
        let d = sample(&moons(), 0, 7).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample(&moons(), 50, 123).unwrap();
        let b = sample(&moons(), 50, 123).unwrap();
        assert_eq!(a, b);
        let c = sample(&moons(), 50, 124).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn bayes_risk_two_gaussians() {
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-1.0], vec![1.0]],
            shared_sigma: 1.0,
            class_priors: vec![0.5, 0.5],
        };
        let risk = bayes_risk(&dist).unwrap();
        assert!((risk - 0.15865525393145707).abs() < 1e-9, "risk = {risk}");
    }

    #[test]
    fn bayes_risk_identical_means() {
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![2.0, 2.0], vec![2.0, 2.0]],
            shared_sigma: 0.7,
            class_priors: vec![0.5, 0.5],
        };
        assert!((bayes_risk(&dist).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bayes_risk_separated_means() {
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-1e6], vec![1e6]],
            shared_sigma: 1.0,
            class_priors: vec![0.5, 0.5],
        };
        assert!(bayes_risk(&dist).unwrap() < 1e-12);
    }

    #[test]
    fn bayes_risk_three_component_1d_quadrature() {
        // components far apart: risk ≈ 0; overlapping: compare to 2-class form
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-30.0], vec![0.0], vec![30.0]],
            shared_sigma: 1.0,
            class_priors: vec![1.0 / 3.0; 3],
        };
        assert!(bayes_risk(&dist).unwrap() < 1e-9);
    }

    #[test]
    fn bayes_risk_unavailable_for_moons() {
        assert!(matches!(
            bayes_risk(&moons()),
            Err(Error::NotAvailable(_))
        ));
    }

    #[test]
    fn label_noise_flips_exact_count() {
        let d = sample(&moons(), 100, 5).unwrap();
        for ratio in [0.0, 0.13, 0.5, 1.0] {
            let noisy = add_label_noise(&d, &NoiseSpec { ratio, seed: 2 }).unwrap();
            let flipped = d
                .ys
                .iter()
                .zip(noisy.ys.iter())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(flipped, (ratio * 100.0).floor() as usize);
            assert_eq!(d.xs, noisy.xs);
        }
    }

    #[test]
    fn label_noise_full_flip_binary() {
        let d = sample(&moons(), 40, 5).unwrap();
        let noisy = add_label_noise(&d, &NoiseSpec { ratio: 1.0, seed: 9 }).unwrap();
        for (a, b) in d.ys.iter().zip(noisy.ys.iter()) {
            assert_eq!(*b, 1 - *a);
        }
    }

    #[test]
    fn noise_indices_match_flips() {
        let d = sample(&moons(), 64, 11).unwrap();
        let spec = NoiseSpec {
            ratio: 0.25,
            seed: 3,
        };
        let noisy = add_label_noise(&d, &spec).unwrap();
        let mut flipped: Vec<usize> = d
            .ys
            .iter()
            .zip(noisy.ys.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        flipped.sort_unstable();
        let mut planned = noise_indices(64, &spec);
        planned.sort_unstable();
        assert_eq!(flipped, planned);
    }

    #[test]
    fn subset_semantics() {
        let d = sample(&moons(), 3, 1).unwrap();
        let all = subset(&d, &[0, 1, 2]).unwrap();
        assert_eq!(all.xs, d.xs);
        assert_eq!(all.provenance.eta, Some(1.0));

        let empty = subset(&d, &[]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.provenance.eta, Some(0.0));
        assert_eq!(empty.k, d.k);

        let pair = subset(&d, &[2, 0]).unwrap();
        assert_eq!(pair.xs, vec![d.xs[2].clone(), d.xs[0].clone()]);
        assert!((pair.provenance.eta.unwrap() - 2.0 / 3.0).abs() < 1e-15);

        assert!(subset(&d, &[0, 0]).is_err());
        assert!(subset(&d, &[3]).is_err());
    }

    #[test]
    fn jitter_sigma_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![1.0, -2.0];
        assert_eq!(augment_jitter(&x, 0.0, &mut rng), x);
    }

    #[test]
    fn jitter_std_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sigma = 0.35;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let v = augment_jitter(&[0.0], sigma, &mut rng)[0];
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).sqrt();
        assert!((std - sigma).abs() / sigma < 0.02, "std = {std}");
    }

    #[test]
    fn dataset_roundtrip() {
        let d = sample(&moons(), 25, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        save_dataset(&path, &d).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, d);
    }
}
