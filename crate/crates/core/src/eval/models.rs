use super::EvalError;
use crate::linalg::{solve_spd, Matrix};

/// Diagonal jitter added to the normal equations.
pub const RIDGE: f64 = 1e-8;

/// Affine model `x · weights + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|r| x.row(r).iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.intercept)
            .collect()
    }
}

fn check_targets(x: &Matrix, y: &[f64]) -> Result<(), EvalError> {
    if y.len() != x.rows() {
        return Err(EvalError::Shape(format!("{} targets for {} rows", y.len(), x.rows())));
    }
    Ok(())
}

/// Least squares with intercept through the normal equations.
pub fn train_linreg(x: &Matrix, y: &[f64]) -> Result<LinearModel, EvalError> {
    check_targets(x, y)?;
    let d = x.cols();
    if x.rows() < d + 1 {
        return Err(EvalError::Shape(format!("{} rows cannot fit {} coefficients", x.rows(), d + 1)));
    }
    let p = d + 1;
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    let mut row = vec![1.0; p];
    for (r, &target) in y.iter().enumerate() {
        row[..d].copy_from_slice(x.row(r));
        for i in 0..p {
            b[i] += row[i] * target;
            for j in 0..=i {
                a[i * p + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        a[i * p + i] += RIDGE;
        for j in 0..i {
            a[j * p + i] = a[i * p + j];
        }
    }
    let w = solve_spd(&Matrix::new(p, p, a)?, &b)?;
    Ok(LinearModel { weights: w[..d].to_vec(), intercept: w[d] })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogregParams {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self { epochs: 500, learning_rate: 0.1 }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on the mean log loss from zero weights.
pub fn train_logreg(x: &Matrix, y: &[f64], params: &LogregParams) -> Result<LinearModel, EvalError> {
    check_targets(x, y)?;
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(EvalError::Labels(format!("logistic regression needs 0/1 labels, found {v}")));
    }
    let n = x.rows() as f64;
    let mut model = LinearModel { weights: vec![0.0; x.cols()], intercept: 0.0 };
    let mut grad = vec![0.0; x.cols()];
    for _ in 0..params.epochs {
        grad.fill(0.0);
        let mut grad_b = 0.0;
        for (r, p) in model.predict(x).into_iter().enumerate() {
            let err = sigmoid(p) - y[r];
            for (g, v) in grad.iter_mut().zip(x.row(r)) {
                *g += err * v;
            }
            grad_b += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= params.learning_rate * g / n;
        }
        model.intercept -= params.learning_rate * grad_b / n;
    }
    Ok(model)
}

pub fn predict_proba(model: &LinearModel, x: &Matrix) -> Vec<f64> {
    model.predict(x).into_iter().map(sigmoid).collect()
}

/// Area under the ROC curve as the normalized Mann-Whitney statistic;
/// tied scores count one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(v) = labels.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(EvalError::Labels(format!("AUC needs 0/1 labels, found {v}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Labels("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&v| v == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid_rank * order[i..=j].iter().filter(|&&o| labels[o] == 1.0).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(EvalError::Shape(format!("{} predictions for {} targets", predictions.len(), targets.len())));
    }
    let sq: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / targets.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::from_fn(5, 1, |r, _| r as f64 - 1.0).unwrap();
        let y: Vec<f64> = (0..5).map(|r| 2.0 * (r as f64 - 1.0) + 1.0).collect();
        let m = train_linreg(&x, &y).unwrap();
        assert!((m.weights[0] - 2.0).abs() <= 1e-8);
        assert!((m.intercept - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn auc_conventions() {
        let y = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &y).unwrap(), 1.0);
        assert_eq!(auc(&[0.4, 0.3, 0.2, 0.1], &y).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &y).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn rmse_of_constant_offset() {
        assert!((rmse(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logreg_rejects_real_targets() {
        let x = Matrix::identity(2).unwrap();
        assert!(matches!(train_logreg(&x, &[0.0, 2.0], &LogregParams::default()), Err(EvalError::Labels(_))));
    }
}
