//! The four training criteria: LCE for teachers; marginMSE, KL divergence
//! and RankNet for distillation. Each returns the loss and its gradient with
//! respect to the student scores. Softmax and log-sum-exp are max-shifted.

use crate::error::{Error, Result};

fn check_group(scores: &[f64]) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::Usage(format!(
            "group size {} below minimum of 2",
            scores.len()
        )));
    }
    Ok(())
}

fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    scores.iter().map(|s| s - lse).collect()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    log_softmax(scores).iter().map(|l| l.exp()).collect()
}

/// Softmax cross-entropy of the positive (index 0) against its group.
pub fn lce_loss(student: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_group(student)?;
    let logp = log_softmax(student);
    let loss = -logp[0];
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[0] -= 1.0;
    Ok((loss, grad))
}

/// Mean squared error between the student's and teacher's positive-negative
/// margins; index 0 is the positive.
pub fn margin_mse_loss(student: &[f64], teacher: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_group(student)?;
    if student.len() != teacher.len() {
        return Err(Error::Usage(format!(
            "student/teacher length mismatch: {} vs {}",
            student.len(),
            teacher.len()
        )));
    }
    let k = student.len() - 1;
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.len()];
    for j in 1..student.len() {
        let err = (student[0] - student[j]) - (teacher[0] - teacher[j]);
        loss += err * err;
        grad[0] += 2.0 * err;
        grad[j] -= 2.0 * err;
    }
    loss /= k as f64;
    for g in &mut grad {
        *g /= k as f64;
    }
    Ok((loss, grad))
}

/// KL(softmax(teacher / tau) || softmax(student / tau)).
pub fn kl_div_loss(student: &[f64], teacher: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    check_group(student)?;
    if student.len() != teacher.len() {
        return Err(Error::Usage(format!(
            "student/teacher length mismatch: {} vs {}",
            student.len(),
            teacher.len()
        )));
    }
    let ts: Vec<f64> = teacher.iter().map(|y| y / temperature).collect();
    let ss: Vec<f64> = student.iter().map(|s| s / temperature).collect();
    let logp = log_softmax(&ts);
    let logq = log_softmax(&ss);
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.len()];
    for i in 0..student.len() {
        let p = logp[i].exp();
        loss += p * (logp[i] - logq[i]);
        grad[i] = (logq[i].exp() - p) / temperature;
    }
    Ok((loss, grad))
}

/// Mean over all pairs i < j (teacher-preferred order) of -log sigma(s_i - s_j).
pub fn ranknet_loss(student: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_group(student)?;
    let n = student.len();
    let n_pairs = (n * (n - 1) / 2) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let margin = student[i] - student[j];
            // -log sigma(m) = softplus(-m), computed stably.
            loss += if margin > 0.0 {
                (-margin).exp().ln_1p()
            } else {
                -margin + margin.exp().ln_1p()
            };
            // d/dm of softplus(-m) is -sigma(-m).
            let s = 1.0 / (1.0 + margin.exp());
            grad[i] -= s;
            grad[j] += s;
        }
    }
    loss /= n_pairs;
    for g in &mut grad {
        *g /= n_pairs;
    }
    Ok((loss, grad))
}

/// Compare an analytic gradient against central finite differences. Returns
/// the max relative error with denominator max(|analytic|, |numeric|, 1e-8).
pub fn finite_diff_check<F>(loss_fn: F, point: &[f64], epsilon: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Usage(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (_, analytic) = loss_fn(point)?;
    let mut x = point.to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let (plus, _) = loss_fn(&x)?;
        x[i] = orig - epsilon;
        let (minus, _) = loss_fn(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite loss near component {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(max_rel)
}
