//! Differentiable relevance scorers over hashed bag-of-terms features, plus
//! the AdamW optimizer and the linear warmup/decay schedule.
//!
//! Two architectures share one parameter layout:
//!
//! * `joint`: one-hidden-layer network over `[f(q); f(d); f(q) .* f(d)]`,
//!   scalar output. The interaction block lets it model query-document
//!   interaction that the dual scorer structurally cannot.
//! * `dual`: a single shared tower `e(x) = tanh(W1' x + b1)`; relevance is
//!   the dot product of the two encodings, so document encodings can be
//!   precomputed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collection::tokenize;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 1 << 12;
pub const DEFAULT_HIDDEN: usize = 64;

/// Sparse L2-normalized signed-hash feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub dim: usize,
    /// (bucket, value), sorted by bucket, values from signed hashing.
    pub entries: Vec<(u32, f64)>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn featurize(text: &str, dim: usize) -> FeatureVector {
    let mut buckets: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let idx = (h % dim as u64) as u32;
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        *buckets.entry(idx).or_insert(0.0) += sign;
    }
    let mut entries: Vec<(u32, f64)> = buckets.into_iter().filter(|(_, v)| *v != 0.0).collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    FeatureVector { dim, entries }
}

/// Elementwise product of two sorted sparse vectors.
fn sparse_product(a: &FeatureVector, b: &FeatureVector) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.entries.len() && j < b.entries.len() {
        match a.entries[i].0.cmp(&b.entries[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((a.entries[i].0, a.entries[i].1 * b.entries[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Joint,
    Dual,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Joint => "joint",
            Architecture::Dual => "dual",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Architecture::Joint),
            "dual" => Ok(Architecture::Dual),
            other => Err(Error::Usage(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Parameters of a one-hidden-layer scorer, stored flat as
/// `[w1 | b1 | w2 | b2]` (w2/b2 only for the joint architecture).
/// `w1[i * hidden + j]` connects input `i` to hidden unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub arch: Architecture,
    pub dim: usize,
    pub hidden: usize,
    pub theta: Vec<f64>,
    pub init_seed: u64,
    pub step_count: u64,
}

impl ScorerParams {
    pub fn input_dim(&self) -> usize {
        match self.arch {
            Architecture::Joint => 3 * self.dim,
            Architecture::Dual => self.dim,
        }
    }

    pub fn param_count(&self) -> usize {
        let n1 = self.input_dim() * self.hidden + self.hidden;
        match self.arch {
            Architecture::Joint => n1 + self.hidden + 1,
            Architecture::Dual => n1,
        }
    }

    fn off_b1(&self) -> usize {
        self.input_dim() * self.hidden
    }

    fn off_w2(&self) -> usize {
        self.off_b1() + self.hidden
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[..self.off_b1()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.theta[self.off_b1()..self.off_b1() + self.hidden]
    }

    pub fn w2(&self) -> &[f64] {
        debug_assert_eq!(self.arch, Architecture::Joint);
        &self.theta[self.off_w2()..self.off_w2() + self.hidden]
    }

    pub fn b2(&self) -> f64 {
        debug_assert_eq!(self.arch, Architecture::Joint);
        self.theta[self.off_w2() + self.hidden]
    }

    /// Xavier-uniform initialization, a pure function of `init_seed`.
    pub fn init(arch: Architecture, dim: usize, hidden: usize, init_seed: u64) -> Self {
        let mut params = Self {
            arch,
            dim,
            hidden,
            theta: Vec::new(),
            init_seed,
            step_count: 0,
        };
        let n = params.param_count();
        params.theta = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let input_dim = params.input_dim();
        let r1 = (6.0 / (input_dim as f64 + hidden as f64)).sqrt();
        for i in 0..input_dim * hidden {
            params.theta[i] = rng.gen_range(-r1..r1);
        }
        if arch == Architecture::Joint {
            let r2 = (6.0 / (hidden as f64 + 1.0)).sqrt();
            let off = params.off_w2();
            for i in 0..hidden {
                params.theta[off + i] = rng.gen_range(-r2..r2);
            }
        }
        params
    }

    pub fn all_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// Parameter-shaped gradient buffer with the same flat layout.
#[derive(Debug, Clone)]
pub struct Grads {
    pub theta: Vec<f64>,
}

impl Grads {
    pub fn zeros(params: &ScorerParams) -> Self {
        Self {
            theta: vec![0.0; params.theta.len()],
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.theta {
            *g *= c;
        }
    }
}

fn joint_input(params: &ScorerParams, q: &FeatureVector, d: &FeatureVector) -> Vec<(u32, f64)> {
    let dim = params.dim as u32;
    let mut x = Vec::with_capacity(q.entries.len() + d.entries.len());
    x.extend(q.entries.iter().copied());
    x.extend(d.entries.iter().map(|&(i, v)| (i + dim, v)));
    x.extend(sparse_product(q, d).into_iter().map(|(i, v)| (i + 2 * dim, v)));
    x
}

fn hidden_layer(params: &ScorerParams, x: &[(u32, f64)]) -> Vec<f64> {
    let h = params.hidden;
    let mut z = params.b1().to_vec();
    let w1 = params.w1();
    for &(i, v) in x {
        let row = &w1[i as usize * h..(i as usize + 1) * h];
        for j in 0..h {
            z[j] += v * row[j];
        }
    }
    for zj in &mut z {
        *zj = zj.tanh();
    }
    z
}

fn check_arch(params: &ScorerParams, want: Architecture) -> Result<()> {
    if params.arch != want {
        return Err(Error::Usage(format!(
            "expected {} architecture, got {}",
            want.as_str(),
            params.arch.as_str()
        )));
    }
    Ok(())
}

pub fn joint_score(params: &ScorerParams, q_text: &str, d_text: &str) -> Result<f64> {
    check_arch(params, Architecture::Joint)?;
    let q = featurize(q_text, params.dim);
    let d = featurize(d_text, params.dim);
    let x = joint_input(params, &q, &d);
    let h = hidden_layer(params, &x);
    Ok(params.w2().iter().zip(&h).map(|(w, a)| w * a).sum::<f64>() + params.b2())
}

/// Score and full gradient of the score with respect to the parameters.
pub fn joint_score_with_grad(
    params: &ScorerParams,
    q_text: &str,
    d_text: &str,
) -> Result<(f64, Grads)> {
    check_arch(params, Architecture::Joint)?;
    let q = featurize(q_text, params.dim);
    let d = featurize(d_text, params.dim);
    let x = joint_input(params, &q, &d);
    let h = hidden_layer(params, &x);
    let score = params.w2().iter().zip(&h).map(|(w, a)| w * a).sum::<f64>() + params.b2();
    let mut grads = Grads::zeros(params);
    joint_backward(params, &x, &h, 1.0, &mut grads);
    Ok((score, grads))
}

/// Accumulate `coeff * dscore/dtheta` into `grads` given the cached forward
/// pass (`x`, hidden activations `h`).
pub(crate) fn joint_backward(
    params: &ScorerParams,
    x: &[(u32, f64)],
    h: &[f64],
    coeff: f64,
    grads: &mut Grads,
) {
    let hid = params.hidden;
    let off_b1 = params.off_b1();
    let off_w2 = params.off_w2();
    let w2 = &params.theta[off_w2..off_w2 + hid];
    // dscore/dz_j
    let gz: Vec<f64> = (0..hid).map(|j| coeff * w2[j] * (1.0 - h[j] * h[j])).collect();
    for j in 0..hid {
        grads.theta[off_b1 + j] += gz[j];
        grads.theta[off_w2 + j] += coeff * h[j];
    }
    grads.theta[off_w2 + hid] += coeff;
    for &(i, v) in x {
        let row = &mut grads.theta[i as usize * hid..(i as usize + 1) * hid];
        for j in 0..hid {
            row[j] += v * gz[j];
        }
    }
}

pub fn dual_encode(params: &ScorerParams, text: &str) -> Result<Vec<f64>> {
    check_arch(params, Architecture::Dual)?;
    let f = featurize(text, params.dim);
    Ok(hidden_layer(params, &f.entries))
}

pub fn dual_score(params: &ScorerParams, q_text: &str, d_text: &str) -> Result<f64> {
    let eq = dual_encode(params, q_text)?;
    let ed = dual_encode(params, d_text)?;
    Ok(dot(&eq, &ed))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dual_score_with_grad(
    params: &ScorerParams,
    q_text: &str,
    d_text: &str,
) -> Result<(f64, Grads)> {
    check_arch(params, Architecture::Dual)?;
    let fq = featurize(q_text, params.dim);
    let fd = featurize(d_text, params.dim);
    let eq = hidden_layer(params, &fq.entries);
    let ed = hidden_layer(params, &fd.entries);
    let score = dot(&eq, &ed);
    let mut grads = Grads::zeros(params);
    dual_backward(params, &fq.entries, &eq, &ed, 1.0, &mut grads);
    dual_backward(params, &fd.entries, &ed, &eq, 1.0, &mut grads);
    Ok((score, grads))
}

/// One tower's contribution: accumulate `coeff * d(dot(e_self, e_other))`
/// through `e_self = tanh(W1' x + b1)`.
pub(crate) fn dual_backward(
    params: &ScorerParams,
    x: &[(u32, f64)],
    e_self: &[f64],
    e_other: &[f64],
    coeff: f64,
    grads: &mut Grads,
) {
    let hid = params.hidden;
    let off_b1 = params.off_b1();
    let gz: Vec<f64> = (0..hid)
        .map(|j| coeff * e_other[j] * (1.0 - e_self[j] * e_self[j]))
        .collect();
    for j in 0..hid {
        grads.theta[off_b1 + j] += gz[j];
    }
    for &(i, v) in x {
        let row = &mut grads.theta[i as usize * hid..(i as usize + 1) * hid];
        for j in 0..hid {
            row[j] += v * gz[j];
        }
    }
}

pub(crate) mod internals {
    //! Cached forward passes for the training loop, so backward does not
    //! re-featurize.
    use super::*;

    pub enum Forward {
        Joint {
            x: Vec<(u32, f64)>,
            h: Vec<f64>,
            score: f64,
        },
        Dual {
            xq: Vec<(u32, f64)>,
            xd: Vec<(u32, f64)>,
            eq: Vec<f64>,
            ed: Vec<f64>,
            score: f64,
        },
    }

    impl Forward {
        pub fn score(&self) -> f64 {
            match self {
                Forward::Joint { score, .. } | Forward::Dual { score, .. } => *score,
            }
        }
    }

    pub fn forward(params: &ScorerParams, q: &FeatureVector, d_text: &str) -> Forward {
        match params.arch {
            Architecture::Joint => {
                let d = featurize(d_text, params.dim);
                let x = joint_input(params, q, &d);
                let h = hidden_layer(params, &x);
                let score =
                    params.w2().iter().zip(&h).map(|(w, a)| w * a).sum::<f64>() + params.b2();
                Forward::Joint { x, h, score }
            }
            Architecture::Dual => {
                let d = featurize(d_text, params.dim);
                let eq = hidden_layer(params, &q.entries);
                let ed = hidden_layer(params, &d.entries);
                let score = dot(&eq, &ed);
                Forward::Dual {
                    xq: q.entries.clone(),
                    xd: d.entries,
                    eq,
                    ed,
                    score,
                }
            }
        }
    }

    pub fn backward(params: &ScorerParams, fwd: &Forward, coeff: f64, grads: &mut Grads) {
        match fwd {
            Forward::Joint { x, h, .. } => joint_backward(params, x, h, coeff, grads),
            Forward::Dual { xq, xd, eq, ed, .. } => {
                dual_backward(params, xq, eq, ed, coeff, grads);
                dual_backward(params, xd, ed, eq, coeff, grads);
            }
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const ADAM_WEIGHT_DECAY: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
}

impl OptimizerState {
    pub fn new(params: &ScorerParams, base_lr: f64, weight_decay: f64) -> Self {
        Self {
            m: vec![0.0; params.theta.len()],
            v: vec![0.0; params.theta.len()],
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            weight_decay,
            base_lr,
        }
    }
}

/// Decoupled-weight-decay Adam update with bias correction over a flat
/// parameter slice.
pub fn adamw_apply(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut OptimizerState,
    lr_t: f64,
) -> Result<()> {
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            step: state.step_count,
            message: format!("non-finite gradient at parameter {i}"),
        });
    }
    let t = state.step_count + 1;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= lr_t * (m_hat / (v_hat.sqrt() + state.epsilon) + state.weight_decay * theta[i]);
    }
    state.step_count = t;
    Ok(())
}

pub fn adamw_step(
    params: &mut ScorerParams,
    grads: &Grads,
    state: &mut OptimizerState,
    lr_t: f64,
) -> Result<()> {
    adamw_apply(&mut params.theta, &grads.theta, state, lr_t)?;
    params.step_count += 1;
    Ok(())
}

/// Linear ramp from 0 to `base_lr` over the first `warmup_fraction` of
/// steps, then linear decay to 0 at `total_steps`.
pub fn lr_at_with_warmup(
    step: u64,
    total_steps: u64,
    base_lr: f64,
    warmup_fraction: f64,
) -> Result<f64> {
    if total_steps < 10 {
        return Err(Error::Usage(format!(
            "total_steps {total_steps} below minimum of 10"
        )));
    }
    if step > total_steps {
        return Err(Error::Usage(format!(
            "step {step} out of range 0..={total_steps}"
        )));
    }
    let warmup = warmup_fraction * total_steps as f64;
    let s = step as f64;
    Ok(if s <= warmup {
        base_lr * s / warmup
    } else {
        base_lr * (total_steps as f64 - s) / (total_steps as f64 - warmup)
    })
}

pub fn lr_at(step: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    lr_at_with_warmup(step, total_steps, base_lr, 0.10)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RDCKPT1\n";

/// Binary checkpoint: magic, architecture tag, shapes, seed lineage and a
/// little-endian f64 payload.
pub fn write_checkpoint(params: &ScorerParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.theta.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(match params.arch {
        Architecture::Joint => 0,
        Architecture::Dual => 1,
    });
    out.extend_from_slice(&(params.dim as u64).to_le_bytes());
    out.extend_from_slice(&(params.hidden as u64).to_le_bytes());
    out.extend_from_slice(&params.init_seed.to_le_bytes());
    out.extend_from_slice(&params.step_count.to_le_bytes());
    out.extend_from_slice(&(params.theta.len() as u64).to_le_bytes());
    for v in &params.theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<ScorerParams> {
    let bad = |m: &str| Error::Validation(format!("checkpoint: {m}"));
    if bytes.len() < 49 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad header"));
    }
    let arch = match bytes[8] {
        0 => Architecture::Joint,
        1 => Architecture::Dual,
        _ => return Err(bad("unknown architecture tag")),
    };
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let dim = u64_at(9) as usize;
    let hidden = u64_at(17) as usize;
    let init_seed = u64_at(25);
    let step_count = u64_at(33);
    let n = u64_at(41) as usize;
    if bytes.len() != 49 + n * 8 {
        return Err(bad("payload length mismatch"));
    }
    let mut params = ScorerParams {
        arch,
        dim,
        hidden,
        theta: Vec::with_capacity(n),
        init_seed,
        step_count,
    };
    if params.param_count() != n {
        return Err(bad("shape/payload mismatch"));
    }
    for i in 0..n {
        let off = 49 + i * 8;
        params
            .theta
            .push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn featurize_empty_is_zero_vector() {
        assert!(featurize("", 64).entries.is_empty());
        assert!(featurize(" .,; ", 64).entries.is_empty());
    }

    #[test]
    fn featurize_deterministic_and_bag() {
        let a = featurize("a b", 64);
        assert_eq!(a, featurize("a b", 64));
        assert_eq!(a, featurize("b a", 64));
    }

    #[test]
    fn featurize_unit_norm() {
        let f = featurize("one two three four five", 256);
        let norm: f64 = f.entries.iter().map(|(_, v)| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_output_layer_scores_zero() {
        let mut p = ScorerParams::init(Architecture::Joint, 64, 4, 1);
        let off = p.off_w2();
        for i in off..p.theta.len() {
            p.theta[i] = 0.0;
        }
        assert_eq!(joint_score(&p, "some query", "some document").unwrap(), 0.0);
    }

    #[test]
    fn joint_score_is_pure() {
        let p = ScorerParams::init(Architecture::Joint, 64, 4, 3);
        let a = joint_score(&p, "q terms here", "doc body words").unwrap();
        let b = joint_score(&p, "q terms here", "doc body words").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn architecture_mismatch_is_usage_error() {
        let p = ScorerParams::init(Architecture::Dual, 64, 4, 3);
        assert!(matches!(joint_score(&p, "a", "b"), Err(Error::Usage(_))));
        let p = ScorerParams::init(Architecture::Joint, 64, 4, 3);
        assert!(matches!(dual_score(&p, "a", "b"), Err(Error::Usage(_))));
    }

    #[test]
    fn dual_score_equals_dot_of_encodings() {
        let p = ScorerParams::init(Architecture::Dual, 64, 8, 5);
        let eq = dual_encode(&p, "alpha beta").unwrap();
        let ed = dual_encode(&p, "gamma delta alpha").unwrap();
        assert_eq!(dual_score(&p, "alpha beta", "gamma delta alpha").unwrap(), dot(&eq, &ed));
    }

    #[test]
    fn dual_score_symmetric() {
        let p = ScorerParams::init(Architecture::Dual, 64, 8, 5);
        let ab = dual_score(&p, "alpha beta", "gamma delta").unwrap();
        let ba = dual_score(&p, "gamma delta", "alpha beta").unwrap();
        assert_eq!(ab, ba);
    }

    /// Central finite differences over all parameters.
    fn fd_check(
        params: &ScorerParams,
        score_fn: impl Fn(&ScorerParams) -> f64,
        analytic: &Grads,
        eps: f64,
    ) -> f64 {
        let mut max_rel = 0.0f64;
        let mut p = params.clone();
        for i in 0..p.theta.len() {
            let orig = p.theta[i];
            p.theta[i] = orig + eps;
            let plus = score_fn(&p);
            p.theta[i] = orig - eps;
            let minus = score_fn(&p);
            p.theta[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.theta[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
        max_rel
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let p = ScorerParams::init(Architecture::Joint, 16, 3, seed);
            let q = "alpha beta gamma";
            let d = "beta delta epsilon zeta";
            let (_, grads) = joint_score_with_grad(&p, q, d).unwrap();
            let err = fd_check(&p, |p| joint_score(p, q, d).unwrap(), &grads, 1e-5);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let p = ScorerParams::init(Architecture::Dual, 16, 3, seed);
            let q = "alpha beta gamma";
            let d = "beta delta epsilon";
            let (_, grads) = dual_score_with_grad(&p, q, d).unwrap();
            let err = fd_check(&p, |p| dual_score(p, q, d).unwrap(), &grads, 1e-5);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn adamw_zero_grad_zero_decay_no_change() {
        let mut theta = vec![0.5, -0.25];
        let mut state = OptimizerState {
            m: vec![0.0; 2],
            v: vec![0.0; 2],
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            weight_decay: 0.0,
            base_lr: 0.1,
        };
        adamw_apply(&mut theta, &[0.0, 0.0], &mut state, 0.1).unwrap();
        assert_eq!(theta, vec![0.5, -0.25]);
    }

    #[test]
    fn adamw_zero_lr_no_change() {
        let mut theta = vec![0.5];
        let mut state = OptimizerState {
            m: vec![0.0],
            v: vec![0.0],
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            weight_decay: 0.01,
            base_lr: 0.1,
        };
        adamw_apply(&mut theta, &[1.0], &mut state, 0.0).unwrap();
        assert_eq!(theta, vec![0.5]);
    }

    #[test]
    fn adamw_scalar_matches_reference_trace() {
        // Independent step-by-step reference on one scalar parameter.
        let (b1, b2, eps, wd, lr) = (0.9, 0.999, 1e-8, 0.01, 0.05);
        let grads = [0.3, -0.7, 1.1];
        let mut ref_theta = 1.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as f64;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powf(t));
            let v_hat = v / (1.0 - b2.powf(t));
            ref_theta -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * ref_theta);
        }

        let mut theta = vec![1.5f64];
        let mut state = OptimizerState {
            m: vec![0.0],
            v: vec![0.0],
            step_count: 0,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            weight_decay: wd,
            base_lr: lr,
        };
        for g in grads {
            adamw_apply(&mut theta, &[g], &mut state, lr).unwrap();
        }
        assert!((theta[0] - ref_theta).abs() < 1e-10);
        assert_eq!(state.step_count, 3);
    }

    #[test]
    fn adamw_rejects_non_finite_gradient() {
        let mut theta = vec![0.0];
        let mut state = OptimizerState {
            m: vec![0.0],
            v: vec![0.0],
            step_count: 7,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            weight_decay: 0.0,
            base_lr: 0.1,
        };
        match adamw_apply(&mut theta, &[f64::NAN], &mut state, 0.1) {
            Err(Error::Training { step, .. }) => assert_eq!(step, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lr_schedule_endpoints() {
        let total = 1000;
        let base = 1e-5;
        assert_eq!(lr_at(0, total, base).unwrap(), 0.0);
        assert!((lr_at(100, total, base).unwrap() - base).abs() < 1e-18);
        assert_eq!(lr_at(total, total, base).unwrap(), 0.0);
        // 0.55 * total: halfway down the decay segment.
        assert!((lr_at(550, total, base).unwrap() - 5e-6).abs() < 1e-18);
        assert!(lr_at(1001, total, base).is_err());
        assert!(lr_at(1, 9, base).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = ScorerParams::init(Architecture::Joint, 32, 4, 99);
        let parsed = parse_checkpoint(&write_checkpoint(&p)).unwrap();
        assert_eq!(parsed, p);
        let d = ScorerParams::init(Architecture::Dual, 32, 4, 100);
        assert_eq!(parse_checkpoint(&write_checkpoint(&d)).unwrap(), d);
    }

    #[test]
    fn init_is_seed_pure() {
        let a = ScorerParams::init(Architecture::Joint, 64, 8, 12);
        let b = ScorerParams::init(Architecture::Joint, 64, 8, 12);
        assert_eq!(a, b);
        let c = ScorerParams::init(Architecture::Joint, 64, 8, 13);
        assert_ne!(a, c);
    }
}
