//! Fuzzy C-means clustering.
//!
//! Each sample carries a graded membership in every cluster. The partition is
//! refined by alternating the closed-form membership and center updates that
//! minimize the weighted within-cluster objective
//! `J = Σ_i Σ_k u_ik^m ‖x_k − v_i‖²` subject to every column of `U` summing to one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{squared_distance, Scalar};

/// Distances below this are treated as a point sitting exactly on a center.
pub const COINCIDENCE_DISTANCE: f64 = 1e-12;

/// Tolerance on column sums of a valid membership matrix.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcmError {
    #[error("dataset is empty")]
    EmptyData,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("data point has zero dimensions")]
    ZeroDimension,
    #[error("data point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("fuzzifier must be greater than 1, got {0}")]
    InvalidFuzzifier(f64),
    #[error("cluster count {requested} is invalid for {points} points")]
    InvalidClusterCount { requested: usize, points: usize },
    #[error("cluster {cluster} has zero membership mass")]
    DegenerateCluster { cluster: usize },
    #[error("membership matrix is invalid: {0}")]
    InvalidMembership(String),
}

/// One sample in normalized indicator space.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint<T>(Vec<T>);

impl<T: Scalar> DataPoint<T> {
    pub fn new(coordinates: Vec<T>) -> Result<Self, FcmError> {
        if coordinates.is_empty() {
            return Err(FcmError::ZeroDimension);
        }
        if coordinates.iter().any(|c| !c.is_finite()) {
            return Err(FcmError::NonFinite { index: 0 });
        }
        Ok(Self(coordinates))
    }

    pub fn coordinates(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl<T> AsRef<[T]> for DataPoint<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Builds a dataset from raw rows, checking finiteness and a common dimension.
pub fn dataset_from_rows<T: Scalar>(rows: &[Vec<T>]) -> Result<Vec<DataPoint<T>>, FcmError> {
    let points = rows
        .iter()
        .enumerate()
        .map(|(index, row)| {
            DataPoint::new(row.clone()).map_err(|e| match e {
                FcmError::NonFinite { .. } => FcmError::NonFinite { index },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_dataset(&points)?;
    Ok(points)
}

/// Returns the common dimension of a non-empty dataset.
fn check_dataset<T: Scalar>(data: &[DataPoint<T>]) -> Result<usize, FcmError> {
    let first = data.first().ok_or(FcmError::EmptyData)?;
    let dim = first.dim();
    for p in data {
        if p.dim() != dim {
            return Err(FcmError::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    Ok(dim)
}

fn check_fuzzifier<T: Scalar>(m: T) -> Result<(), FcmError> {
    if !(m > T::one()) || !m.is_finite() {
        return Err(FcmError::InvalidFuzzifier(m.as_f64()));
    }
    Ok(())
}

/// `c × n` fuzzy partition stored row-major (row = cluster, column = sample).
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix<T> {
    clusters: usize,
    samples: usize,
    entries: Vec<T>,
}

impl<T: Scalar> MembershipMatrix<T> {
    /// Wraps row-major entries, validating range and column sums.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, FcmError> {
        let clusters = rows.len();
        if clusters == 0 {
            return Err(FcmError::InvalidMembership("no clusters".into()));
        }
        let samples = rows[0].len();
        if rows.iter().any(|r| r.len() != samples) {
            return Err(FcmError::InvalidMembership("ragged rows".into()));
        }
        let matrix = Self {
            clusters,
            samples,
            entries: rows.into_iter().flatten().collect(),
        };
        matrix.validate()?;
        Ok(matrix)
    }

    pub(crate) fn zeros(clusters: usize, samples: usize) -> Self {
        Self {
            clusters,
            samples,
            entries: vec![T::zero(); clusters * samples],
        }
    }

    /// Column-normalized random partition drawn from a seeded generator.
    pub fn random(clusters: usize, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(clusters, samples);
        for k in 0..samples {
            let draws: Vec<f64> = (0..clusters).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = draws.iter().sum();
            for (i, d) in draws.into_iter().enumerate() {
                m.set(i, k, T::lit(d / total));
            }
        }
        m
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    #[inline]
    pub fn get(&self, cluster: usize, sample: usize) -> T {
        self.entries[cluster * self.samples + sample]
    }

    #[inline]
    pub(crate) fn set(&mut self, cluster: usize, sample: usize, value: T) {
        self.entries[cluster * self.samples + sample] = value;
    }

    pub fn row(&self, cluster: usize) -> &[T] {
        &self.entries[cluster * self.samples..(cluster + 1) * self.samples]
    }

    pub fn column(&self, sample: usize) -> Vec<T> {
        (0..self.clusters).map(|i| self.get(i, sample)).collect()
    }

    /// Checks every entry lies in `[0, 1]` and every column sums to one.
    pub fn validate(&self) -> Result<(), FcmError> {
        let tol = T::lit(COLUMN_SUM_TOLERANCE);
        for k in 0..self.samples {
            let mut sum = T::zero();
            for i in 0..self.clusters {
                let u = self.get(i, k);
                if !(u >= T::zero() && u <= T::one()) {
                    return Err(FcmError::InvalidMembership(format!(
                        "entry ({i}, {k}) = {u} outside [0, 1]"
                    )));
                }
                sum += u;
            }
            if (sum - T::one()).abs() > tol {
                return Err(FcmError::InvalidMembership(format!(
                    "column {k} sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Index of the cluster with the largest membership for each sample.
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.samples)
            .map(|k| {
                (0..self.clusters)
                    .fold((0, T::neg_infinity()), |best, i| {
                        let u = self.get(i, k);
                        if u > best.1 {
                            (i, u)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Cluster prototypes with the fuzzifier they were computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet<T> {
    pub centers: Vec<Vec<T>>,
    pub fuzzifier: T,
    pub objective_value: T,
}

impl<T: Scalar> ClusterSet<T> {
    pub fn new(centers: Vec<Vec<T>>, fuzzifier: T) -> Result<Self, FcmError> {
        check_fuzzifier(fuzzifier)?;
        if centers.is_empty() {
            return Err(FcmError::InvalidClusterCount {
                requested: 0,
                points: 0,
            });
        }
        let dim = centers[0].len();
        if let Some(bad) = centers.iter().find(|c| c.len() != dim) {
            return Err(FcmError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self {
            centers,
            fuzzifier,
            objective_value: T::zero(),
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmConfig<T> {
    pub fuzzifier: T,
    /// Stop once the objective changes by less than this between iterations.
    pub tolerance: T,
    pub max_iterations: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for FcmConfig<T> {
    fn default() -> Self {
        Self {
            fuzzifier: T::lit(2.0),
            tolerance: T::lit(1e-6),
            max_iterations: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FcmResult<T> {
    pub clusters: ClusterSet<T>,
    pub memberships: MembershipMatrix<T>,
    /// Objective after each full membership/center alternation.
    pub trace: Vec<T>,
    pub converged: bool,
}

/// Weighted within-cluster objective `Σ_i Σ_k u_ik^m ‖x_k − v_i‖²`.
pub fn compute_objective<T: Scalar>(
    data: &[DataPoint<T>],
    memberships: &MembershipMatrix<T>,
    clusters: &ClusterSet<T>,
) -> Result<T, FcmError> {
    let dim = check_dataset(data)?;
    check_fuzzifier(clusters.fuzzifier)?;
    if clusters.dim() != dim {
        return Err(FcmError::DimensionMismatch {
            expected: dim,
            found: clusters.dim(),
        });
    }
    if memberships.samples() != data.len() {
        return Err(FcmError::DimensionMismatch {
            expected: data.len(),
            found: memberships.samples(),
        });
    }
    if memberships.clusters() != clusters.len() {
        return Err(FcmError::DimensionMismatch {
            expected: clusters.len(),
            found: memberships.clusters(),
        });
    }
    let m = clusters.fuzzifier;
    let mut j = T::zero();
    for (i, center) in clusters.centers.iter().enumerate() {
        for (k, x) in data.iter().enumerate() {
            let u = memberships.get(i, k);
            if u > T::zero() {
                j += u.powf(m) * squared_distance(x.coordinates(), center);
            }
        }
    }
    Ok(j)
}

/// Closed-form membership update for fixed centers.
///
/// A sample lying on one or more centers (distance below
/// [`COINCIDENCE_DISTANCE`]) splits its membership evenly across those centers.
pub fn update_memberships<T: Scalar>(
    data: &[DataPoint<T>],
    clusters: &ClusterSet<T>,
) -> Result<MembershipMatrix<T>, FcmError> {
    let dim = check_dataset(data)?;
    check_fuzzifier(clusters.fuzzifier)?;
    if clusters.dim() != dim {
        return Err(FcmError::DimensionMismatch {
            expected: dim,
            found: clusters.dim(),
        });
    }
    let c = clusters.len();
    // (d_i / d_j)^(2/(m-1)) == (d_i² / d_j²)^(1/(m-1))
    let exponent = T::one() / (clusters.fuzzifier - T::one());
    let eps_sq = T::lit(COINCIDENCE_DISTANCE * COINCIDENCE_DISTANCE);
    let mut u = MembershipMatrix::zeros(c, data.len());
    let mut dist = vec![T::zero(); c];
    for (k, x) in data.iter().enumerate() {
        for (i, center) in clusters.centers.iter().enumerate() {
            dist[i] = squared_distance(x.coordinates(), center);
        }
        let coincident = dist.iter().filter(|&&d| d < eps_sq).count();
        if coincident > 0 {
            let share = T::one() / T::from_usize_lossy(coincident);
            for (i, &d) in dist.iter().enumerate() {
                u.set(i, k, if d < eps_sq { share } else { T::zero() });
            }
            continue;
        }
        for i in 0..c {
            let denom: T = dist.iter().map(|&dj| (dist[i] / dj).powf(exponent)).sum();
            u.set(i, k, T::one() / denom);
        }
    }
    Ok(u)
}

/// Membership-weighted center update `v_i = Σ_k u_ik^m x_k / Σ_k u_ik^m`.
pub fn update_centers<T: Scalar>(
    data: &[DataPoint<T>],
    memberships: &MembershipMatrix<T>,
    fuzzifier: T,
) -> Result<ClusterSet<T>, FcmError> {
    let dim = check_dataset(data)?;
    check_fuzzifier(fuzzifier)?;
    if memberships.samples() != data.len() {
        return Err(FcmError::DimensionMismatch {
            expected: data.len(),
            found: memberships.samples(),
        });
    }
    let mut centers = Vec::with_capacity(memberships.clusters());
    for i in 0..memberships.clusters() {
        let mut mass = T::zero();
        let mut acc = vec![T::zero(); dim];
        for (k, x) in data.iter().enumerate() {
            let u = memberships.get(i, k);
            if u <= T::zero() {
                continue;
            }
            let w = u.powf(fuzzifier);
            mass += w;
            for (a, &xd) in acc.iter_mut().zip(x.coordinates()) {
                *a += w * xd;
            }
        }
        if !(mass > T::zero()) {
            return Err(FcmError::DegenerateCluster { cluster: i });
        }
        centers.push(acc.into_iter().map(|a| a / mass).collect());
    }
    ClusterSet::new(centers, fuzzifier)
}

/// Alternates center and membership updates from a seeded random partition
/// until the objective settles or the iteration budget runs out.
pub fn run_fcm<T: Scalar>(
    data: &[DataPoint<T>],
    cluster_count: usize,
    config: &FcmConfig<T>,
) -> Result<FcmResult<T>, FcmError> {
    check_dataset(data)?;
    check_fuzzifier(config.fuzzifier)?;
    if cluster_count == 0 || cluster_count > data.len() {
        return Err(FcmError::InvalidClusterCount {
            requested: cluster_count,
            points: data.len(),
        });
    }
    let mut memberships = MembershipMatrix::random(cluster_count, data.len(), config.seed);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut clusters = update_centers(data, &memberships, config.fuzzifier)?;
    for _ in 0..config.max_iterations.max(1) {
        if !trace.is_empty() {
            clusters = update_centers(data, &memberships, config.fuzzifier)?;
        }
        memberships = update_memberships(data, &clusters)?;
        let j = compute_objective(data, &memberships, &clusters)?;
        let settled = trace
            .last()
            .is_some_and(|&prev: &T| (prev - j).abs() < config.tolerance);
        trace.push(j);
        if settled {
            converged = true;
            break;
        }
    }
    clusters.objective_value = *trace.last().expect("at least one iteration");
    Ok(FcmResult {
        clusters,
        memberships,
        trace,
        converged,
    })
}
