//! Training objectives, evaluated directly on values. The autodiff graph
//! wraps these with their analytic gradients.

use super::tensor::Tensor;
use super::NeuralError;

fn batch_rows(t: &Tensor, what: &str) -> Result<(usize, usize), NeuralError> {
    match t.shape() {
        [n, k] if *n >= 1 => Ok((*n, *k)),
        [n] if *n >= 1 => Ok((*n, 1)),
        s => Err(NeuralError::ShapeMismatch(format!(
            "{what}: expected a non-empty batch, got shape {s:?}"
        ))),
    }
}

/// Modality discriminator objective
/// `-(1/n) Σ [ln d_e,i + ln(1 - d_r,i)]`.
pub fn loss_discriminator(d_e: &[f64], d_r: &[f64]) -> Result<f64, NeuralError> {
    if d_e.is_empty() || d_e.len() != d_r.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "discriminator batches of size {} and {}",
            d_e.len(),
            d_r.len()
        )));
    }
    if let Some(v) = d_e.iter().chain(d_r).find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(NeuralError::Domain(format!(
            "discriminator output {v} outside (0, 1)"
        )));
    }
    let n = d_e.len() as f64;
    let sum: f64 = d_e
        .iter()
        .zip(d_r)
        .map(|(e, r)| e.ln() + (1.0 - r).ln())
        .sum();
    Ok(-sum / n)
}

pub(crate) fn loss_discriminator_grad(d_e: &[f64], d_r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = d_e.len() as f64;
    (
        d_e.iter().map(|e| -1.0 / (n * e)).collect(),
        d_r.iter().map(|r| 1.0 / (n * (1.0 - r))).collect(),
    )
}

/// Cross-entropy of both modalities against one-hot instance labels,
/// `-(1/n) Σ [ln p_e,i[a_i] + ln p_r,i[b_i]]` where `a` and `b` are the
/// event-side and color-side labels (equal for same-instance pairs).
pub fn loss_identity(
    p_e: &Tensor,
    p_r: &Tensor,
    labels_e: &[usize],
    labels_r: &[usize],
) -> Result<f64, NeuralError> {
    let (n, k) = batch_rows(p_e, "identity loss")?;
    if p_r.shape() != p_e.shape() || labels_e.len() != n || labels_r.len() != n {
        return Err(NeuralError::ShapeMismatch(format!(
            "identity loss: {:?} vs {:?} with {}/{} labels",
            p_e.shape(),
            p_r.shape(),
            labels_e.len(),
            labels_r.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (&a, &b)) in labels_e.iter().zip(labels_r).enumerate() {
        if a >= k || b >= k {
            return Err(NeuralError::Domain(format!(
                "label {} outside [0, {k})",
                a.max(b)
            )));
        }
        let (pe, pr) = (p_e.row(i)[a], p_r.row(i)[b]);
        if !(pe > 0.0 && pr > 0.0) {
            return Err(NeuralError::Domain(format!(
                "zero probability at the target class of sample {i}"
            )));
        }
        sum += pe.ln() + pr.ln();
    }
    Ok(-sum / n as f64)
}

pub(crate) fn loss_identity_grad(p: &Tensor, labels: &[usize]) -> Tensor {
    let (n, k) = (p.shape()[0], p.shape()[1]);
    let mut g = Tensor::zeros(vec![n, k]);
    for (i, &c) in labels.iter().enumerate() {
        g.data_mut()[i * k + c] = -1.0 / (n as f64 * p.row(i)[c]);
    }
    g
}

fn pair_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Contrastive loss
/// `(1/2n) Σ [s_i l_i² + (1 - s_i) max(m - l_i, 0)²]` with `l_i = ‖f_e,i - f_r,i‖₂`.
pub fn loss_contrastive(
    f_e: &Tensor,
    f_r: &Tensor,
    same: &[f64],
    margin: f64,
) -> Result<f64, NeuralError> {
    let (n, _) = batch_rows(f_e, "contrastive loss")?;
    if f_r.shape() != f_e.shape() || same.len() != n {
        return Err(NeuralError::ShapeMismatch(format!(
            "contrastive loss: {:?} vs {:?} with {} flags",
            f_e.shape(),
            f_r.shape(),
            same.len()
        )));
    }
    if !(margin > 0.0) {
        return Err(NeuralError::Domain(format!("margin {margin} must be positive")));
    }
    let sum: f64 = (0..n)
        .map(|i| {
            let l = pair_distance(f_e.row(i), f_r.row(i));
            let s = same[i];
            s * l * l + (1.0 - s) * (margin - l).max(0.0).powi(2)
        })
        .sum();
    Ok(sum / (2.0 * n as f64))
}

/// Gradient with respect to `f_e`; the gradient for `f_r` is its negation.
pub(crate) fn loss_contrastive_grad(f_e: &Tensor, f_r: &Tensor, same: &[f64], margin: f64) -> Tensor {
    let (n, d) = (f_e.shape()[0], f_e.shape()[1]);
    let mut g = Tensor::zeros(vec![n, d]);
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let (a, b) = (f_e.row(i), f_r.row(i));
        let l = pair_distance(a, b);
        let s = same[i];
        let hinge = (margin - l).max(0.0);
        // d/da of s l² / 2 is s (a - b); of (1-s) hinge² / 2 is -(1-s) hinge (a - b) / l
        let coef = s - if l > 0.0 { (1.0 - s) * hinge / l } else { 0.0 };
        for j in 0..d {
            g.data_mut()[i * d + j] = scale * coef * (a[j] - b[j]);
        }
    }
    g
}

/// `α L_id + β L_ct - γ L_dis`.
pub fn loss_total(l_id: f64, l_ct: f64, l_dis: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    alpha * l_id + beta * l_ct - gamma * l_dis
}
