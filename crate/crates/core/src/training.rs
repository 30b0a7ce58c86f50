//! Clustering training features into class prototypes and per-class
//! normalization statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfile::Unicharset;
use crate::features::{FeatureConstants, GlyphFeatures, TrainingFile, CN_DIM, MICRO_DIM};

/// Variance floor applied to every CN dimension.
pub const VARIANCE_FLOOR: f64 = 1e-4;
/// Samples per prototype used to size k for a class.
pub const SAMPLES_PER_PROTOTYPE: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainingError {
    #[error("no training samples")]
    NoSamples,
    #[error("label {0:?} is not in the unicharset")]
    UnknownLabel(char),
    #[error("k_max must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub k_max: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            k_max: 8,
            seed: 0,
            max_iterations: 100,
        }
    }
}

/// Result of a clustering pass plus the unicharset classes that had no
/// samples and were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustered<T> {
    pub result: T,
    pub skipped: Vec<char>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub centroid: [f32; MICRO_DIM],
    /// Number of training samples the prototype represents.
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    pub glyph: char,
    pub prototypes: Vec<Prototype>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub constants: FeatureConstants,
    pub classes: Vec<ClassPrototypes>,
}

impl PrototypeSet {
    pub fn class(&self, glyph: char) -> Option<&ClassPrototypes> {
        self.classes.iter().find(|c| c.glyph == glyph)
    }

    pub fn prototype_count(&self) -> usize {
        self.classes.iter().map(|c| c.prototypes.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNorm {
    pub glyph: char,
    pub mean: [f64; CN_DIM],
    pub variance: [f64; CN_DIM],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormProtos {
    pub classes: Vec<ClassNorm>,
}

impl NormProtos {
    pub fn class(&self, glyph: char) -> Option<&ClassNorm> {
        self.classes.iter().find(|c| c.glyph == glyph)
    }
}

/// Training sample count per class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassFrequencies {
    pub entries: Vec<(char, u32)>,
}

impl ClassFrequencies {
    pub fn from_files(files: &[TrainingFile]) -> Self {
        let mut entries: Vec<(char, u32)> = Vec::new();
        for e in files.iter().flat_map(|f| &f.entries) {
            match entries.iter_mut().find(|(g, _)| *g == e.label) {
                Some((_, n)) => *n += 1,
                None => entries.push((e.label, 1)),
            }
        }
        Self { entries }
    }

    pub fn get(&self, glyph: char) -> u32 {
        self.entries
            .iter()
            .find(|(g, _)| *g == glyph)
            .map_or(0, |&(_, n)| n)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, n)| n as u64).sum()
    }
}

type ClassGroups<'a> = Vec<(char, Vec<&'a GlyphFeatures>)>;

/// Samples grouped by class, in unicharset order when one is given and in
/// first-occurrence order otherwise.
fn group_by_class<'a>(
    files: &'a [TrainingFile],
    unicharset: Option<&Unicharset>,
) -> Result<Clustered<ClassGroups<'a>>, TrainingError> {
    let mut groups: ClassGroups<'a> = match unicharset {
        Some(set) => set.glyphs().map(|g| (g, Vec::new())).collect(),
        None => Vec::new(),
    };
    for e in files.iter().flat_map(|f| &f.entries) {
        match groups.iter_mut().find(|(g, _)| *g == e.label) {
            Some((_, v)) => v.push(&e.features),
            None if unicharset.is_some() => return Err(TrainingError::UnknownLabel(e.label)),
            None => groups.push((e.label, vec![&e.features])),
        }
    }
    if groups.iter().all(|(_, v)| v.is_empty()) {
        return Err(TrainingError::NoSamples);
    }
    let skipped = groups.iter().filter(|(_, v)| v.is_empty()).map(|(g, _)| *g).collect();
    groups.retain(|(_, v)| !v.is_empty());
    Ok(Clustered {
        result: groups,
        skipped,
    })
}

/// Number of prototypes for a class of `n` samples.
pub fn prototypes_for(n: usize, k_max: usize) -> usize {
    k_max.min(n.div_ceil(SAMPLES_PER_PROTOTYPE)).min(n)
}

fn class_seed(seed: u64, glyph: char) -> u64 {
    seed ^ (glyph as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Clusters micro features per class into weighted prototypes.
pub fn cluster_micro(
    files: &[TrainingFile],
    unicharset: Option<&Unicharset>,
    params: &ClusterParams,
) -> Result<Clustered<PrototypeSet>, TrainingError> {
    if params.k_max == 0 {
        return Err(TrainingError::ZeroK);
    }
    let groups = group_by_class(files, unicharset)?;
    let classes = groups
        .result
        .iter()
        .map(|(glyph, samples)| {
            let points: Vec<Vec<f64>> = samples
                .iter()
                .map(|f| f.micro.iter().map(|&v| v as f64).collect())
                .collect();
            let k = prototypes_for(points.len(), params.k_max);
            let km = kmeans(&points, k, class_seed(params.seed, *glyph), params.max_iterations);
            let prototypes = km
                .centroids
                .iter()
                .zip(km.weights())
                .filter(|(_, w)| *w > 0)
                .map(|(c, w)| {
                    let mut centroid = [0f32; MICRO_DIM];
                    for (d, &v) in centroid.iter_mut().zip(c) {
                        *d = v as f32;
                    }
                    Prototype {
                        centroid,
                        weight: w as u32,
                    }
                })
                .collect();
            ClassPrototypes {
                glyph: *glyph,
                prototypes,
            }
        })
        .collect();
    Ok(Clustered {
        result: PrototypeSet {
            constants: FeatureConstants::CURRENT,
            classes,
        },
        skipped: groups.skipped,
    })
}

/// Per-class mean and population variance of the CN features, each
/// variance floored at [`VARIANCE_FLOOR`].
pub fn cluster_cn(
    files: &[TrainingFile],
    unicharset: Option<&Unicharset>,
) -> Result<Clustered<NormProtos>, TrainingError> {
    let groups = group_by_class(files, unicharset)?;
    let classes = groups
        .result
        .iter()
        .map(|(glyph, samples)| {
            let n = samples.len() as f64;
            let mut mean = [0f64; CN_DIM];
            for f in samples {
                for (m, &v) in mean.iter_mut().zip(&f.cn) {
                    *m += v as f64;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut variance = [0f64; CN_DIM];
            for f in samples {
                for ((s, &v), m) in variance.iter_mut().zip(&f.cn).zip(&mean) {
                    *s += (v as f64 - m).powi(2);
                }
            }
            variance.iter_mut().for_each(|s| *s = (*s / n).max(VARIANCE_FLOOR));
            ClassNorm {
                glyph: *glyph,
                mean,
                variance,
            }
        })
        .collect();
    Ok(Clustered {
        result: NormProtos { classes },
        skipped: groups.skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl KMeans {
    pub fn weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            w[a] += 1;
        }
        w
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Seeded Lloyd k-means with k-means++ initialization. Clusters that empty
/// out are reseeded to the point farthest from its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iterations: usize) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "need 1 <= k <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = points[0].len();

    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignment = vec![usize::MAX; points.len()];
    let mut objective = Vec::new();
    let mut converged = false;
    for _ in 0..max_iterations {
        let mut changed = false;
        let mut wcss = 0.0;
        let mut dist = Vec::with_capacity(points.len());
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            changed |= *a != c;
            *a = c;
            wcss += d;
            dist.push(d);
        }
        objective.push(wcss);
        if !changed {
            converged = true;
            break;
        }

        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    taken.push(i);
                    centroids[c] = points[i].clone();
                }
            }
        }
    }
    KMeans {
        centroids,
        assignment,
        objective,
        converged,
    }
}
