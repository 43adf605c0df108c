use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::features::{FeatureMatrix, FeatureVector, SchemaId};
use crate::labels::Rel3;

const CLASSES: usize = 3;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            l2_lambda: 1e-2,
            max_iters: 300,
            tol: 1e-4,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.l2_lambda > 0.0 && self.l2_lambda.is_finite()) {
            return Err(ClassifierError::InvalidHyperparams(format!(
                "l2_lambda must be positive, got {}",
                self.l2_lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(ClassifierError::InvalidHyperparams("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    /// Gradient infinity-norm fell below `tol`.
    Converged,
    MaxIters,
    /// Line search could not decrease the loss further.
    Stalled,
    Untrained,
}

/// Weights (3 × D, row-major by class) and biases of a linear softmax model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub weights: Vec<f64>,
    pub bias: [f64; CLASSES],
}

impl Params {
    pub fn zeros(dim: usize) -> Self {
        Params {
            weights: vec![0.0; CLASSES * dim],
            bias: [0.0; CLASSES],
        }
    }

    fn axpy(&self, step: f64, dir: &Params) -> Params {
        Params {
            weights: self.weights.iter().zip(&dir.weights).map(|(w, d)| w + step * d).collect(),
            bias: std::array::from_fn(|c| self.bias[c] + step * dir.bias[c]),
        }
    }

    fn dot(&self, other: &Params) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum::<f64>()
            + self.bias.iter().zip(&other.bias).map(|(a, b)| a * b).sum::<f64>()
    }

    fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub schema: SchemaId,
    pub dim: usize,
    pub params: Params,
    pub hyperparams: Hyperparams,
    pub status: TrainStatus,
    pub iterations: usize,
    pub final_loss: f64,
}

fn softmax(z: [f64; CLASSES]) -> [f64; CLASSES] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

impl LogRegModel {
    /// Model with all-zero parameters; predicts the uniform distribution.
    pub fn untrained(dim: usize, schema: SchemaId, hyperparams: Hyperparams) -> Self {
        LogRegModel {
            schema,
            dim,
            params: Params::zeros(dim),
            hyperparams,
            status: TrainStatus::Untrained,
            iterations: 0,
            final_loss: f64::NAN,
        }
    }

    fn logits(&self, row: &[f64]) -> [f64; CLASSES] {
        let mut z = self.params.bias;
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &self.params.weights[c * self.dim..(c + 1) * self.dim];
            *zc += row
                .iter()
                .zip(w)
                .filter(|(x, _)| **x != 0.0)
                .map(|(x, w)| x * w)
                .sum::<f64>();
        }
        z
    }

    /// Class probabilities for a raw row; the caller guarantees the schema.
    pub fn proba_row(&self, row: &[f64]) -> [f64; CLASSES] {
        softmax(self.logits(row))
    }

    pub fn check(&self, schema: SchemaId, dim: usize) -> Result<(), ClassifierError> {
        if schema != self.schema {
            return Err(ClassifierError::SchemaMismatch {
                expected: self.schema,
                found: schema,
            });
        }
        if dim != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(())
    }

    pub fn weight_norm(&self) -> f64 {
        self.params.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Softmax of `weights · fv + bias`.
pub fn predict_proba(model: &LogRegModel, fv: &FeatureVector) -> Result<[f64; CLASSES], ClassifierError> {
    model.check(fv.schema, fv.values.len())?;
    Ok(model.proba_row(&fv.values))
}

/// CSR copy of the training rows.
struct SparseRows {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRows {
    fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut s = SparseRows {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        };
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    s.indices.push(j as u32);
                    s.values.push(v);
                }
            }
            s.indptr.push(s.indices.len());
        }
        s
    }

    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    fn len(&self) -> usize {
        self.indptr.len() - 1
    }
}

/// Mean cross-entropy plus `lambda * ||W||^2` (bias unpenalized).
pub struct Objective {
    rows: SparseRows,
    labels: Vec<usize>,
    lambda: f64,
    dim: usize,
}

impl Objective {
    /// Rows are taken in the given order.
    pub fn new(features: &FeatureMatrix, labels: &[Rel3], lambda: f64) -> Self {
        Objective {
            rows: SparseRows::from_rows(features.iter_rows()),
            labels: labels.iter().map(|l| l.index()).collect(),
            lambda,
            dim: features.dim(),
        }
    }

    fn logits(&self, p: &Params, i: usize) -> [f64; CLASSES] {
        let (idx, val) = self.rows.row(i);
        let mut z = p.bias;
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &p.weights[c * self.dim..(c + 1) * self.dim];
            *zc += idx.iter().zip(val).map(|(&j, &x)| w[j as usize] * x).sum::<f64>();
        }
        z
    }

    fn penalty(&self, p: &Params) -> f64 {
        self.lambda * p.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn data_loss_row(z: [f64; CLASSES], y: usize) -> f64 {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lse - z[y]
    }

    pub fn value(&self, p: &Params) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = (0..self.rows.len())
            .map(|i| Self::data_loss_row(self.logits(p, i), self.labels[i]))
            .sum();
        data / n + self.penalty(p)
    }

    pub fn value_and_gradient(&self, p: &Params) -> (f64, Params) {
        let n = self.rows.len() as f64;
        let mut grad = Params::zeros(self.dim);
        let mut data = 0.0;
        for i in 0..self.rows.len() {
            let z = self.logits(p, i);
            let y = self.labels[i];
            data += Self::data_loss_row(z, y);
            let prob = softmax(z);
            let (idx, val) = self.rows.row(i);
            for c in 0..CLASSES {
                let r = (prob[c] - f64::from(u8::from(c == y))) / n;
                grad.bias[c] += r;
                let g = &mut grad.weights[c * self.dim..(c + 1) * self.dim];
                for (&j, &x) in idx.iter().zip(val) {
                    g[j as usize] += r * x;
                }
            }
        }
        for (g, w) in grad.weights.iter_mut().zip(&p.weights) {
            *g += 2.0 * self.lambda * w;
        }
        (data / n + self.penalty(p), grad)
    }
}

/// Row order that depends only on row contents, so permuting the input
/// cannot change the summation order inside the optimizer.
fn canonical_order(features: &FeatureMatrix, labels: &[Rel3]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = features.row(a).iter().map(|v| v.to_bits());
        let rb = features.row(b).iter().map(|v| v.to_bits());
        ra.cmp(rb).then(labels[a].cmp(&labels[b]))
    });
    order
}

fn validate(features: &FeatureMatrix, labels: &[Rel3], hp: &Hyperparams) -> Result<(), ClassifierError> {
    hp.validate()?;
    if labels.len() != features.rows() {
        return Err(ClassifierError::LabelCount {
            rows: features.rows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

/// Full-batch gradient descent with Armijo backtracking from zero weights.
/// Each search starts from a Barzilai-Borwein step estimate.
/// Returns the model and the loss after every accepted step (index 0 is the
/// initial loss).
pub fn train_logreg_traced(
    features: &FeatureMatrix,
    labels: &[Rel3],
    hp: &Hyperparams,
) -> Result<(LogRegModel, Vec<f64>), ClassifierError> {
    validate(features, labels, hp)?;
    let order = canonical_order(features, labels);
    let sorted = features.select(&order);
    let sorted_labels: Vec<Rel3> = order.iter().map(|&i| labels[i]).collect();
    let obj = Objective::new(&sorted, &sorted_labels, hp.l2_lambda);

    let mut params = Params::zeros(features.dim());
    let (mut loss, mut grad) = obj.value_and_gradient(&params);
    let mut trace = vec![loss];
    let mut step = 1.0;
    let mut status = TrainStatus::MaxIters;
    let mut iterations = 0;

    for _ in 0..hp.max_iters {
        if grad.max_abs() < hp.tol {
            status = TrainStatus::Converged;
            break;
        }
        let g2 = grad.dot(&grad);
        let mut accepted = None;
        while step >= MIN_STEP {
            let cand = params.axpy(-step, &grad);
            let cand_loss = obj.value(&cand);
            if cand_loss <= loss - ARMIJO * step * g2 {
                accepted = Some((cand, cand_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((next, _)) = accepted else {
            status = TrainStatus::Stalled;
            break;
        };
        let (next_loss, next_grad) = obj.value_and_gradient(&next);
        // Barzilai-Borwein trial step for the next search: s.y / y.y.
        let s_vec = next.axpy(-1.0, &params);
        let y_vec = next_grad.axpy(-1.0, &grad);
        let (sy, yy) = (s_vec.dot(&y_vec), y_vec.dot(&y_vec));
        step = if sy > 0.0 && yy > 0.0 { (sy / yy).clamp(MIN_STEP, MAX_STEP) } else { step * 2.0 };
        params = next;
        loss = next_loss;
        grad = next_grad;
        trace.push(loss);
        iterations += 1;
    }
    if status == TrainStatus::MaxIters && grad.max_abs() < hp.tol {
        status = TrainStatus::Converged;
    }

    Ok((
        LogRegModel {
            schema: features.schema(),
            dim: features.dim(),
            params,
            hyperparams: *hp,
            status,
            iterations,
            final_loss: loss,
        },
        trace,
    ))
}

pub fn train_logreg(features: &FeatureMatrix, labels: &[Rel3], hp: &Hyperparams) -> Result<LogRegModel, ClassifierError> {
    train_logreg_traced(features, labels, hp).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::*;
    use crate::seed::rng_from;

    const S: SchemaId = SchemaId(1);

    fn random_problem(seed: u64, n: usize, d: usize) -> (FeatureMatrix, Vec<Rel3>) {
        let mut rng = rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut labels: Vec<Rel3> = (0..n).map(|i| Rel3::ALL[i % 3]).collect();
        labels.shuffle(&mut rng);
        (FeatureMatrix::from_rows(d, S, &rows), labels)
    }

    #[test]
    fn untrained_is_uniform() {
        let m = LogRegModel::untrained(4, S, Hyperparams::default());
        let p = predict_proba(&m, &FeatureVector { values: vec![3.0, -1.0, 0.5, 2.0], schema: S }).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn schema_and_dimension_checked() {
        let m = LogRegModel::untrained(2, S, Hyperparams::default());
        let wrong_schema = FeatureVector { values: vec![0.0, 0.0], schema: SchemaId(2) };
        assert!(matches!(predict_proba(&m, &wrong_schema), Err(ClassifierError::SchemaMismatch { .. })));
        let wrong_dim = FeatureVector { values: vec![0.0; 3], schema: S };
        assert!(matches!(predict_proba(&m, &wrong_dim), Err(ClassifierError::DimensionMismatch { .. })));
    }

    #[test]
    fn dominant_class_direction() {
        let mut m = LogRegModel::untrained(2, S, Hyperparams::default());
        m.params.weights[2] = 1e3; // class 1, feature 0
        let p = predict_proba(&m, &FeatureVector { values: vec![1.0, 0.0], schema: S }).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = random_problem(1, 6, 2);
        let y = vec![Rel3::Substitute; 6];
        assert_eq!(train_logreg(&x, &y, &Hyperparams::default()), Err(ClassifierError::SingleClass));
        assert_eq!(
            train_logreg(&x, &y[..3], &Hyperparams::default()),
            Err(ClassifierError::LabelCount { rows: 6, labels: 3 })
        );
    }

    #[test]
    fn loss_never_increases() {
        let (x, y) = random_problem(3, 40, 6);
        let (_, trace) = train_logreg_traced(&x, &y, &Hyperparams { l2_lambda: 1e-3, ..Default::default() }).unwrap();
        assert!(trace.len() > 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn row_permutation_does_not_change_model() {
        let (x, y) = random_problem(5, 30, 4);
        let hp = Hyperparams::default();
        let a = train_logreg(&x, &y, &hp).unwrap();
        let mut order: Vec<usize> = (0..30).collect();
        order.shuffle(&mut rng_from(9));
        let xp = x.select(&order);
        let yp: Vec<Rel3> = order.iter().map(|&i| y[i]).collect();
        assert_eq!(train_logreg(&xp, &yp, &hp).unwrap(), a);
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let (x, y) = random_problem(8, 60, 5);
        let mut prev = f64::INFINITY;
        for lambda in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let hp = Hyperparams { l2_lambda: lambda, max_iters: 5000, tol: 1e-9 };
            let norm = train_logreg(&x, &y, &hp).unwrap().weight_norm();
            assert!(norm <= prev + 1e-9, "lambda {lambda}: {norm} > {prev}");
            prev = norm;
        }
    }
}
