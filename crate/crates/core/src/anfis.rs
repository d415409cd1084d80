//! First-order Takagi–Sugeno neuro-fuzzy inference (ANFIS).
//!
//! Layer semantics follow the canonical five-layer network: membership
//! evaluation, product t-norm firing strengths, normalization, affine rule
//! consequents, and the weighted sum. Rules are seeded from fuzzy C-means
//! clusters and trained with the hybrid scheme: least squares on the
//! consequents with premises frozen, then a gradient step on the Gaussian
//! premise parameters.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fcm::{self, ClusterSet, DataPoint, FcmConfig, FcmError, MembershipMatrix};
use crate::linalg::{least_squares, Matrix};
use crate::scalar::Scalar;

/// Largest supported input arity.
pub const MAX_INPUT_DIM: usize = 9;
/// Lower bound on Gaussian spreads.
pub const MIN_SPREAD: f64 = 1e-3;
/// Below this total firing strength the model falls back to the unweighted mean of rule outputs.
pub const MIN_TOTAL_FIRING: f64 = 1e-12;
/// Absolute slack when comparing held-out errors across cluster counts.
pub const CLUSTER_TIE_TOLERANCE: f64 = 1e-9;

const FORMAT_NAME: &str = "chainfis-anfis";
const FORMAT_VERSION: u32 = 1;
const MAX_BACKTRACKS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnfisError {
    #[error("input arity mismatch: model expects {expected}, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("model must have at least one rule")]
    NoRules,
    #[error("input dimension {0} outside 1..={MAX_INPUT_DIM}")]
    InputDimension(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid membership function: {0}")]
    InvalidMembership(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cluster count {requested} exceeds available samples {available}")]
    ClusterCountTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Clustering(#[from] FcmError),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction<T> {
    Gaussian { center: T, spread: T },
    Triangular { left: T, peak: T, right: T },
}

impl<T: Scalar> MembershipFunction<T> {
    pub fn gaussian(center: T, spread: T) -> Result<Self, AnfisError> {
        if !(spread > T::zero()) || !center.is_finite() || !spread.is_finite() {
            return Err(AnfisError::InvalidMembership(format!(
                "gaussian spread must be positive, got {spread}"
            )));
        }
        Ok(Self::Gaussian { center, spread })
    }

    pub fn triangular(left: T, peak: T, right: T) -> Result<Self, AnfisError> {
        if !(left <= peak && peak <= right) || left == right {
            return Err(AnfisError::InvalidMembership(format!(
                "triangular needs left <= peak <= right with left < right, got ({left}, {peak}, {right})"
            )));
        }
        Ok(Self::Triangular { left, peak, right })
    }

    pub fn eval(&self, x: T) -> T {
        match *self {
            Self::Gaussian { center, spread } => {
                let z = (x - center) / spread;
                (-(z * z) / T::lit(2.0)).exp()
            }
            Self::Triangular { left, peak, right } => {
                if x < left || x > right {
                    T::zero()
                } else if x <= peak {
                    if peak == left {
                        T::one()
                    } else {
                        (x - left) / (peak - left)
                    }
                } else if right == peak {
                    T::one()
                } else {
                    (right - x) / (right - peak)
                }
            }
        }
    }

    /// `(∂ ln μ/∂center, ∂ ln μ/∂spread)` for Gaussians; `None` for fixed shapes.
    fn log_gradient(&self, x: T) -> Option<(T, T)> {
        match *self {
            Self::Gaussian { center, spread } => {
                let d = x - center;
                let s2 = spread * spread;
                Some((d / s2, d * d / (s2 * spread)))
            }
            Self::Triangular { .. } => None,
        }
    }

    /// Samples `count` evenly spaced points of the curve over `[lo, hi]`.
    pub fn curve(&self, lo: T, hi: T, count: usize) -> Vec<(T, T)> {
        let steps = count.max(2) - 1;
        (0..=steps)
            .map(|i| {
                let x = lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(steps);
                (x, self.eval(x))
            })
            .collect()
    }
}

/// One TSK rule: antecedent memberships per input and one affine consequent
/// per output (input coefficients followed by the bias).
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRule<T> {
    pub antecedent: Vec<MembershipFunction<T>>,
    pub consequents: Vec<Vec<T>>,
}

impl<T: Scalar> FuzzyRule<T> {
    fn firing_strength(&self, input: &[T]) -> T {
        self.antecedent
            .iter()
            .zip(input)
            .fold(T::one(), |acc, (mf, &x)| acc * mf.eval(x))
    }

    fn consequent_output(&self, output: usize, input: &[T]) -> T {
        let coeffs = &self.consequents[output];
        let (bias, weights) = coeffs.split_last().expect("consequent has a bias term");
        weights.iter().zip(input).map(|(&a, &x)| a * x).sum::<T>() + *bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyInferenceModel<T> {
    input_dim: usize,
    output_dim: usize,
    rules: Vec<FuzzyRule<T>>,
}

impl<T: Scalar> FuzzyInferenceModel<T> {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        rules: Vec<FuzzyRule<T>>,
    ) -> Result<Self, AnfisError> {
        if input_dim == 0 || input_dim > MAX_INPUT_DIM {
            return Err(AnfisError::InputDimension(input_dim));
        }
        if output_dim == 0 {
            return Err(AnfisError::InvalidParameter(
                "output_dim must be >= 1".into(),
            ));
        }
        if rules.is_empty() {
            return Err(AnfisError::NoRules);
        }
        for rule in &rules {
            if rule.antecedent.len() != input_dim {
                return Err(AnfisError::ArityMismatch {
                    expected: input_dim,
                    found: rule.antecedent.len(),
                });
            }
            if rule.consequents.len() != output_dim
                || rule.consequents.iter().any(|c| c.len() != input_dim + 1)
            {
                return Err(AnfisError::InvalidParameter(
                    "consequent shape must be output_dim x (input_dim + 1)".into(),
                ));
            }
        }
        Ok(Self {
            input_dim,
            output_dim,
            rules,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn rules(&self) -> &[FuzzyRule<T>] {
        &self.rules
    }

    fn check_input(&self, input: &[T]) -> Result<(), AnfisError> {
        if input.len() != self.input_dim {
            return Err(AnfisError::ArityMismatch {
                expected: self.input_dim,
                found: input.len(),
            });
        }
        Ok(())
    }

    /// Normalized firing strengths. When the total is below
    /// [`MIN_TOTAL_FIRING`] every rule gets weight `1/R` and the flag is false.
    pub fn normalized_strengths(&self, input: &[T]) -> Result<(Vec<T>, bool), AnfisError> {
        self.check_input(input)?;
        Ok(self.normalized_unchecked(input))
    }

    fn normalized_unchecked(&self, input: &[T]) -> (Vec<T>, bool) {
        let raw: Vec<T> = self
            .rules
            .iter()
            .map(|r| r.firing_strength(input))
            .collect();
        let total: T = raw.iter().copied().sum();
        if total < T::lit(MIN_TOTAL_FIRING) {
            let share = T::one() / T::from_usize_lossy(self.rules.len());
            (vec![share; self.rules.len()], false)
        } else {
            (raw.into_iter().map(|w| w / total).collect(), true)
        }
    }

    pub fn evaluate(&self, input: &[T]) -> Result<Vec<T>, AnfisError> {
        self.check_input(input)?;
        Ok(self.evaluate_unchecked(input))
    }

    fn evaluate_unchecked(&self, input: &[T]) -> Vec<T> {
        let (weights, _) = self.normalized_unchecked(input);
        (0..self.output_dim)
            .map(|o| {
                self.rules
                    .iter()
                    .zip(&weights)
                    .map(|(rule, &w)| w * rule.consequent_output(o, input))
                    .sum()
            })
            .collect()
    }

    /// Gaussian premise parameters flattened as `(center, spread)` pairs in
    /// rule-major, input-minor order. Triangular antecedents are skipped.
    pub fn premise_parameters(&self) -> Vec<T> {
        let mut out = Vec::new();
        for rule in &self.rules {
            for mf in &rule.antecedent {
                if let MembershipFunction::Gaussian { center, spread } = *mf {
                    out.push(center);
                    out.push(spread);
                }
            }
        }
        out
    }

    /// Replaces Gaussian premise parameters (same layout as
    /// [`premise_parameters`](Self::premise_parameters)); spreads are floored at [`MIN_SPREAD`].
    pub fn set_premise_parameters(&mut self, params: &[T]) -> Result<(), AnfisError> {
        let expected = self.premise_parameters().len();
        if params.len() != expected {
            return Err(AnfisError::InvalidParameter(format!(
                "expected {expected} premise parameters, got {}",
                params.len()
            )));
        }
        let floor = T::lit(MIN_SPREAD);
        let mut it = params.chunks_exact(2);
        for rule in &mut self.rules {
            for mf in &mut rule.antecedent {
                if let MembershipFunction::Gaussian { center, spread } = mf {
                    let pair = it.next().expect("length checked");
                    *center = pair[0];
                    *spread = pair[1].max(floor);
                }
            }
        }
        Ok(())
    }

    /// Writes the versioned text form; every real is printed with 17
    /// significant digits so `f64` values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format {FORMAT_NAME}");
        let _ = writeln!(s, "version {FORMAT_VERSION}");
        let _ = writeln!(s, "input_dim {}", self.input_dim);
        let _ = writeln!(s, "output_dim {}", self.output_dim);
        let _ = writeln!(s, "rules {}", self.rules.len());
        for (r, rule) in self.rules.iter().enumerate() {
            let _ = writeln!(s, "rule {r}");
            for (d, mf) in rule.antecedent.iter().enumerate() {
                match *mf {
                    MembershipFunction::Gaussian { center, spread } => {
                        let _ = writeln!(s, "mf {d} gaussian {} {}", fmt17(center), fmt17(spread));
                    }
                    MembershipFunction::Triangular { left, peak, right } => {
                        let _ = writeln!(
                            s,
                            "mf {d} triangular {} {} {}",
                            fmt17(left),
                            fmt17(peak),
                            fmt17(right)
                        );
                    }
                }
            }
            for (o, coeffs) in rule.consequents.iter().enumerate() {
                let values: Vec<String> = coeffs.iter().map(|&c| fmt17(c)).collect();
                let _ = writeln!(s, "consequent {o} {}", values.join(" "));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self, AnfisError> {
        ModelParser::new(text).parse()
    }
}

fn fmt17<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

struct ModelParser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line_no: usize,
}

impl<'a> ModelParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
            line_no: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> AnfisError {
        AnfisError::Parse {
            line: self.line_no,
            message: message.into(),
        }
    }

    fn next_fields(&mut self) -> Result<Vec<&'a str>, AnfisError> {
        loop {
            let Some((i, line)) = self.lines.next() else {
                self.line_no += 1;
                return Err(self.err("unexpected end of file"));
            };
            self.line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(trimmed.split_whitespace().collect());
        }
    }

    fn keyed(&mut self, key: &str, arity: usize) -> Result<Vec<&'a str>, AnfisError> {
        let fields = self.next_fields()?;
        if fields[0] != key {
            return Err(self.err(format!("expected `{key}`, found `{}`", fields[0])));
        }
        if fields.len() != arity + 1 {
            return Err(self.err(format!("`{key}` expects {arity} value(s)")));
        }
        Ok(fields[1..].to_vec())
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize, AnfisError> {
        let value = self.keyed(key, 1)?[0];
        self.usize_field(value)
    }

    fn usize_field(&self, s: &str) -> Result<usize, AnfisError> {
        s.parse()
            .map_err(|_| self.err(format!("invalid integer `{s}`")))
    }

    fn real<T: Scalar>(&self, s: &str) -> Result<T, AnfisError> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .and_then(T::from_f64)
            .ok_or_else(|| self.err(format!("invalid number `{s}`")))
    }

    fn parse<T: Scalar>(mut self) -> Result<FuzzyInferenceModel<T>, AnfisError> {
        let fmt = self.keyed("format", 1)?;
        if fmt[0] != FORMAT_NAME {
            return Err(self.err(format!("unknown format `{}`", fmt[0])));
        }
        let version = self.keyed("version", 1)?;
        if self.usize_field(version[0])? != FORMAT_VERSION as usize {
            return Err(self.err(format!("unsupported version {}", version[0])));
        }
        let input_dim = self.keyed_usize("input_dim")?;
        let output_dim = self.keyed_usize("output_dim")?;
        let rule_count = self.keyed_usize("rules")?;
        let mut rules = Vec::with_capacity(rule_count);
        for r in 0..rule_count {
            let idx = self.keyed_usize("rule")?;
            if idx != r {
                return Err(self.err(format!("expected rule {r}, found {idx}")));
            }
            let mut antecedent = Vec::with_capacity(input_dim);
            for d in 0..input_dim {
                let fields = self.next_fields()?;
                if fields.len() < 3 || fields[0] != "mf" || self.usize_field(fields[1])? != d {
                    return Err(self.err(format!("expected `mf {d} <kind> ...`")));
                }
                let mf = match (fields[2], fields.len()) {
                    ("gaussian", 5) => {
                        MembershipFunction::gaussian(self.real(fields[3])?, self.real(fields[4])?)
                    }
                    ("triangular", 6) => MembershipFunction::triangular(
                        self.real(fields[3])?,
                        self.real(fields[4])?,
                        self.real(fields[5])?,
                    ),
                    (kind, _) => return Err(self.err(format!("bad membership function `{kind}`"))),
                }
                .map_err(|e| self.err(e.to_string()))?;
                antecedent.push(mf);
            }
            let mut consequents = Vec::with_capacity(output_dim);
            for o in 0..output_dim {
                let fields = self.next_fields()?;
                if fields.len() != input_dim + 3
                    || fields[0] != "consequent"
                    || self.usize_field(fields[1])? != o
                {
                    return Err(self.err(format!(
                        "expected `consequent {o}` with {} coefficients",
                        input_dim + 1
                    )));
                }
                consequents.push(
                    fields[2..]
                        .iter()
                        .map(|s| self.real(s))
                        .collect::<Result<Vec<T>, _>>()?,
                );
            }
            rules.push(FuzzyRule {
                antecedent,
                consequents,
            });
        }
        let end = self.next_fields()?;
        if end != ["end"] {
            return Err(self.err("expected `end`"));
        }
        FuzzyInferenceModel::new(input_dim, output_dim, rules).map_err(|e| self.err(e.to_string()))
    }
}

/// Paired input/target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<Vec<T>>) -> Result<Self, AnfisError> {
        if inputs.is_empty() {
            return Err(AnfisError::EmptyDataset);
        }
        if inputs.len() != targets.len() {
            return Err(AnfisError::InvalidParameter(format!(
                "{} input rows but {} target rows",
                inputs.len(),
                targets.len()
            )));
        }
        let (d, o) = (inputs[0].len(), targets[0].len());
        if let Some(bad) = inputs.iter().find(|r| r.len() != d) {
            return Err(AnfisError::ArityMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if targets.iter().any(|r| r.len() != o) || o == 0 {
            return Err(AnfisError::InvalidParameter(
                "ragged or empty targets".into(),
            ));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    fn check_against(&self, model: &FuzzyInferenceModel<T>) -> Result<(), AnfisError> {
        if self.is_empty() {
            return Err(AnfisError::EmptyDataset);
        }
        if self.input_dim() != model.input_dim {
            return Err(AnfisError::ArityMismatch {
                expected: model.input_dim,
                found: self.input_dim(),
            });
        }
        if self.output_dim() != model.output_dim {
            return Err(AnfisError::ArityMismatch {
                expected: model.output_dim,
                found: self.output_dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig<T> {
    /// Length of each premise gradient step.
    pub learning_rate: T,
    /// Stop once train RMSE reaches this.
    pub error_goal: T,
    /// Overfit guard: stop when test RMSE > this × train RMSE.
    pub train_test_threshold: T,
    /// Fraction of `max_epochs` that must elapse before the overfit guard may fire.
    pub epoch_threshold: T,
    pub max_epochs: usize,
    pub seed: u64,
    /// Points per membership curve when sampling for plots.
    pub linguistic_sampling_count: usize,
}

impl<T: Scalar> Default for TrainingConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(0.1),
            error_goal: T::lit(0.001),
            train_test_threshold: T::lit(1.3),
            epoch_threshold: T::lit(0.6),
            max_epochs: 100,
            seed: 0,
            linguistic_sampling_count: 20,
        }
    }
}

impl<T: Scalar> TrainingConfig<T> {
    fn validate(&self) -> Result<(), AnfisError> {
        if !(self.learning_rate >= T::zero()) {
            return Err(AnfisError::InvalidParameter(
                "learning_rate must be >= 0".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(AnfisError::InvalidParameter(
                "max_epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub train_rmse: T,
    pub test_rmse: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ErrorGoal,
    Overfit,
    MaxEpochs,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<T> {
    pub model: FuzzyInferenceModel<T>,
    pub history: Vec<EpochRecord<T>>,
    pub stop_reason: StopReason,
    pub warnings: Vec<String>,
}

/// Root-mean-square error over every output of every sample.
pub fn rmse<T: Scalar>(
    model: &FuzzyInferenceModel<T>,
    data: &LabeledDataset<T>,
) -> Result<T, AnfisError> {
    data.check_against(model)?;
    Ok(rmse_unchecked(model, data))
}

fn rmse_unchecked<T: Scalar>(model: &FuzzyInferenceModel<T>, data: &LabeledDataset<T>) -> T {
    let mut sse = T::zero();
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        for (y, &target) in model.evaluate_unchecked(x).into_iter().zip(t) {
            let e = y - target;
            sse += e * e;
        }
    }
    (sse / T::from_usize_lossy(data.len() * model.output_dim)).sqrt()
}

/// Re-solves all consequents by linear least squares with the premises fixed.
/// Returns true when the ridge fallback was needed.
pub fn fit_consequents<T: Scalar>(
    model: &mut FuzzyInferenceModel<T>,
    data: &LabeledDataset<T>,
) -> Result<bool, AnfisError> {
    data.check_against(model)?;
    let width = model.input_dim + 1;
    let mut design = Matrix::zeros(data.len(), model.rules.len() * width);
    for (k, x) in data.inputs.iter().enumerate() {
        let (weights, _) = model.normalized_unchecked(x);
        let row = design.row_mut(k);
        for (r, &w) in weights.iter().enumerate() {
            let block = &mut row[r * width..(r + 1) * width];
            for (slot, &xd) in block.iter_mut().zip(x) {
                *slot = w * xd;
            }
            block[width - 1] = w;
        }
    }
    let rhs: Vec<Vec<T>> = (0..model.output_dim)
        .map(|o| data.targets.iter().map(|t| t[o]).collect())
        .collect();
    let solution = least_squares(&design, &rhs);
    for (o, coeffs) in solution.coefficients.iter().enumerate() {
        for (r, rule) in model.rules.iter_mut().enumerate() {
            rule.consequents[o].copy_from_slice(&coeffs[r * width..(r + 1) * width]);
        }
    }
    Ok(solution.regularized)
}

/// Analytic gradient of train RMSE with respect to the Gaussian premise
/// parameters, consequents held fixed. Layout matches
/// [`FuzzyInferenceModel::premise_parameters`].
pub fn premise_gradient<T: Scalar>(
    model: &FuzzyInferenceModel<T>,
    data: &LabeledDataset<T>,
) -> Result<Vec<T>, AnfisError> {
    data.check_against(model)?;
    let mut slots: Vec<Vec<Option<usize>>> = Vec::with_capacity(model.rules.len());
    let mut count = 0;
    for rule in &model.rules {
        slots.push(
            rule.antecedent
                .iter()
                .map(|mf| match mf {
                    MembershipFunction::Gaussian { .. } => {
                        count += 2;
                        Some(count - 2)
                    }
                    MembershipFunction::Triangular { .. } => None,
                })
                .collect(),
        );
    }
    let mut grad = vec![T::zero(); count];
    let loss = rmse_unchecked(model, data);
    if loss == T::zero() {
        return Ok(grad);
    }
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        let (weights, firing) = model.normalized_unchecked(x);
        if !firing {
            continue;
        }
        let y = model.evaluate_unchecked(x);
        for (r, rule) in model.rules.iter().enumerate() {
            // Σ_o e_o (f_ro − y_o) w̄_r
            let mut coupling = T::zero();
            for o in 0..model.output_dim {
                coupling += (y[o] - t[o]) * (rule.consequent_output(o, x) - y[o]);
            }
            coupling *= weights[r];
            if coupling == T::zero() {
                continue;
            }
            for (d, mf) in rule.antecedent.iter().enumerate() {
                if let (Some(slot), Some((dc, ds))) = (slots[r][d], mf.log_gradient(x[d])) {
                    grad[slot] += coupling * dc;
                    grad[slot + 1] += coupling * ds;
                }
            }
        }
    }
    let scale = T::one() / (T::from_usize_lossy(data.len() * model.output_dim) * loss);
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}

/// Seeds one Gaussian rule per cluster: centers from the cluster prototypes,
/// spreads from membership-weighted standard deviations (floored at
/// [`MIN_SPREAD`]), consequents from global least squares.
pub fn build_from_clusters<T: Scalar>(
    clusters: &ClusterSet<T>,
    memberships: &MembershipMatrix<T>,
    data: &LabeledDataset<T>,
) -> Result<(FuzzyInferenceModel<T>, Vec<String>), AnfisError> {
    if data.is_empty() {
        return Err(AnfisError::EmptyDataset);
    }
    let d = data.input_dim();
    if clusters.dim() != d {
        return Err(AnfisError::ArityMismatch {
            expected: d,
            found: clusters.dim(),
        });
    }
    if memberships.samples() != data.len() || memberships.clusters() != clusters.len() {
        return Err(AnfisError::InvalidParameter(
            "membership matrix does not match clusters and data".into(),
        ));
    }
    let m = clusters.fuzzifier;
    let floor = T::lit(MIN_SPREAD);
    let mut rules = Vec::with_capacity(clusters.len());
    for (i, center) in clusters.centers.iter().enumerate() {
        let weights: Vec<T> = memberships.row(i).iter().map(|&u| u.powf(m)).collect();
        let mass: T = weights.iter().copied().sum();
        if !(mass > T::zero()) {
            return Err(FcmError::DegenerateCluster { cluster: i }.into());
        }
        let antecedent = (0..d)
            .map(|dim| {
                let var: T = data
                    .inputs
                    .iter()
                    .zip(&weights)
                    .map(|(x, &w)| {
                        let diff = x[dim] - center[dim];
                        w * diff * diff
                    })
                    .sum::<T>()
                    / mass;
                MembershipFunction::gaussian(center[dim], var.sqrt().max(floor))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rules.push(FuzzyRule {
            antecedent,
            consequents: vec![vec![T::zero(); d + 1]; data.output_dim()],
        });
    }
    let mut model = FuzzyInferenceModel::new(d, data.output_dim(), rules)?;
    let mut warnings = Vec::new();
    if fit_consequents(&mut model, data)? {
        warnings.push("rank-deficient consequent system; ridge regularization applied".into());
    }
    Ok((model, warnings))
}

/// Clusters the inputs with FCM and builds the seeded model in one call.
pub fn build_with_fcm<T: Scalar>(
    data: &LabeledDataset<T>,
    cluster_count: usize,
    fcm_config: &FcmConfig<T>,
) -> Result<(FuzzyInferenceModel<T>, Vec<String>), AnfisError> {
    let points: Vec<DataPoint<T>> = fcm::dataset_from_rows(&data.inputs)?;
    let result = fcm::run_fcm(&points, cluster_count, fcm_config)?;
    build_from_clusters(&result.clusters, &result.memberships, data)
}

/// Hybrid training. Each epoch solves the consequents by least squares,
/// records train/test RMSE, checks the stopping rules, then takes a
/// normalized gradient step on the premises. A step that would raise train
/// RMSE is halved until it does not (or rejected), and accepted steps grow
/// the step length by 10%, so the recorded train RMSE never increases.
pub fn train_hybrid<T: Scalar>(
    model: &FuzzyInferenceModel<T>,
    train: &LabeledDataset<T>,
    test: &LabeledDataset<T>,
    config: &TrainingConfig<T>,
) -> Result<TrainingOutcome<T>, AnfisError> {
    config.validate()?;
    train.check_against(model)?;
    test.check_against(model)?;
    let mut model = model.clone();
    let mut warnings = Vec::new();
    let note_ridge = |regularized: bool, epoch: usize, warnings: &mut Vec<String>| {
        if regularized {
            warnings.push(format!(
                "epoch {epoch}: rank-deficient consequent system; ridge regularization applied"
            ));
        }
    };
    let reg = fit_consequents(&mut model, train)?;
    note_ridge(reg, 1, &mut warnings);
    let mut train_err = rmse_unchecked(&model, train);
    let mut step = config.learning_rate;
    let guard_epoch = (config.epoch_threshold * T::from_usize_lossy(config.max_epochs))
        .ceil()
        .to_usize()
        .unwrap_or(0);
    let mut history = Vec::new();
    let stop_reason = loop {
        let epoch = history.len() + 1;
        let test_err = rmse_unchecked(&model, test);
        history.push(EpochRecord {
            epoch,
            train_rmse: train_err,
            test_rmse: test_err,
        });
        if train_err <= config.error_goal {
            break StopReason::ErrorGoal;
        }
        if epoch >= guard_epoch && test_err > config.train_test_threshold * train_err {
            break StopReason::Overfit;
        }
        if epoch >= config.max_epochs {
            break StopReason::MaxEpochs;
        }
        if step <= T::zero() {
            continue;
        }
        let grad = premise_gradient(&model, train)?;
        let norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            continue;
        }
        let base = model.premise_parameters();
        let mut trial_step = step;
        let mut accepted = false;
        for _ in 0..=MAX_BACKTRACKS {
            let params: Vec<T> = base
                .iter()
                .zip(&grad)
                .map(|(&p, &g)| p - trial_step * g / norm)
                .collect();
            let mut candidate = model.clone();
            candidate.set_premise_parameters(&params)?;
            let reg = fit_consequents(&mut candidate, train)?;
            let err = rmse_unchecked(&candidate, train);
            if err <= train_err {
                note_ridge(reg, epoch + 1, &mut warnings);
                model = candidate;
                train_err = err;
                accepted = true;
                break;
            }
            trial_step /= T::lit(2.0);
        }
        step = if accepted {
            trial_step * T::lit(1.1)
        } else {
            trial_step
        };
    };
    Ok(TrainingOutcome {
        model,
        history,
        stop_reason,
        warnings,
    })
}

/// Held-out RMSE for each candidate cluster count and the selected count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSearch<T> {
    pub best: usize,
    pub held_out_rmse: Vec<(usize, T)>,
}

/// Seeded 75/25 split into (train, held-out); the held-out part has at
/// least one sample.
pub fn holdout_split<T: Scalar>(
    data: &LabeledDataset<T>,
    seed: u64,
) -> (LabeledDataset<T>, LabeledDataset<T>) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = (data.len() / 4).max(1);
    let (held_idx, train_idx) = order.split_at(held);
    (data.subset(train_idx), data.subset(held_idx))
}

/// Sweeps `c = 2..=c_max`, building and training a model per count on a
/// seeded 75/25 split, and returns the count with the lowest held-out RMSE.
/// Counts within [`CLUSTER_TIE_TOLERANCE`] (plus 1e-6 relative) of the best
/// tie, and the smallest tied count wins.
pub fn select_cluster_count<T: Scalar>(
    data: &LabeledDataset<T>,
    c_max: usize,
    config: &TrainingConfig<T>,
) -> Result<ClusterSearch<T>, AnfisError> {
    if c_max < 2 {
        return Err(AnfisError::InvalidParameter("c_max must be >= 2".into()));
    }
    if c_max > data.len() {
        return Err(AnfisError::ClusterCountTooLarge {
            requested: c_max,
            available: data.len(),
        });
    }
    let (train, held_out) = holdout_split(data, config.seed);
    if train.len() < c_max {
        return Err(AnfisError::ClusterCountTooLarge {
            requested: c_max,
            available: train.len(),
        });
    }
    let fcm_config = FcmConfig {
        seed: config.seed,
        ..FcmConfig::default()
    };
    let mut scores = Vec::with_capacity(c_max - 1);
    for c in 2..=c_max {
        let (model, _) = build_with_fcm(&train, c, &fcm_config)?;
        let outcome = train_hybrid(&model, &train, &held_out, config)?;
        scores.push((c, rmse_unchecked(&outcome.model, &held_out)));
    }
    let best_err = scores.iter().map(|&(_, e)| e).fold(T::infinity(), T::min);
    let slack = T::lit(CLUSTER_TIE_TOLERANCE) + T::lit(1e-6) * best_err;
    let best = scores
        .iter()
        .find(|&&(_, e)| e <= best_err + slack)
        .map(|&(c, _)| c)
        .expect("at least one candidate");
    Ok(ClusterSearch {
        best,
        held_out_rmse: scores,
    })
}

/// Supply-management assessment classes in one-hot slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EfficiencyClass {
    Perfect,
    Good,
    Medium,
    Poor,
}

impl EfficiencyClass {
    pub const ALL: [EfficiencyClass; 4] = [Self::Perfect, Self::Good, Self::Medium, Self::Poor];

    pub fn label(self) -> &'static str {
        match self {
            Self::Perfect => "Perfect",
            Self::Good => "Good",
            Self::Medium => "Medium",
            Self::Poor => "Poor",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [u8; 4] {
        let mut bits = [0; 4];
        bits[self.index()] = 1;
        bits
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }
}

impl std::fmt::Display for EfficiencyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Argmax of four class scores; ties go to the lowest index.
pub fn classify_efficiency<T: Scalar>(scores: &[T; 4]) -> ([u8; 4], EfficiencyClass) {
    let mut best = 0;
    for i in 1..4 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let class = EfficiencyClass::ALL[best];
    (class.one_hot(), class)
}
