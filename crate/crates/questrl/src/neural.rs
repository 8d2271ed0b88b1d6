//! Minimal feed-forward network with one rectifier hidden layer, manual
//! backpropagation, and a masked softmax helper. Function approximator for
//! both the actor and the critic.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("config error: {0}")]
    Config(String),
    #[error("action mask has no legal option")]
    EmptyMask,
    #[error("weight format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Two-layer perceptron: out = W2 * relu(W1 * x + b1) + b2.
///
/// Weight rows are stored row-major: `w1[h * input_dim + i]`,
/// `w2[o * hidden_dim + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Intermediate activations captured by one forward pass; consumed by
/// `backward`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden_act: Vec<f64>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.w1.iter().all(|&g| g == 0.0)
            && self.b1.iter().all(|&g| g == 0.0)
            && self.w2.iter().all(|&g| g == 0.0)
            && self.b2.iter().all(|&g| g == 0.0)
    }
}

impl Mlp {
    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, zero
    /// biases, deterministic per seed.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Mlp, NeuralError> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(NeuralError::Config(format!(
                "dimensions must be positive, got {input_dim}x{hidden_dim}x{output_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        let bound2 = 1.0 / (hidden_dim as f64).sqrt();
        let w1 = (0..hidden_dim * input_dim)
            .map(|_| rng.random_range(-bound1..bound1))
            .collect();
        let w2 = (0..output_dim * hidden_dim)
            .map(|_| rng.random_range(-bound2..bound2))
            .collect();
        Ok(Mlp {
            input_dim,
            hidden_dim,
            output_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; output_dim],
        })
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, ForwardTrace) {
        assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        let mut hidden_pre = vec![0.0; self.hidden_dim];
        for h in 0..self.hidden_dim {
            let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            let mut acc = self.b1[h];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            hidden_pre[h] = acc;
        }
        let hidden_act: Vec<f64> = hidden_pre.iter().map(|&z| z.max(0.0)).collect();
        let mut out = vec![0.0; self.output_dim];
        for o in 0..self.output_dim {
            let row = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            let mut acc = self.b2[o];
            for (w, a) in row.iter().zip(&hidden_act) {
                acc += w * a;
            }
            out[o] = acc;
        }
        let trace = ForwardTrace {
            input: x.to_vec(),
            hidden_pre,
            hidden_act,
        };
        (out, trace)
    }

    /// Exact reverse-mode gradients of the affine-relu-affine map composed
    /// with the caller's output gradient. The trace is consumed.
    pub fn backward(&self, trace: ForwardTrace, output_gradient: &[f64]) -> Gradients {
        assert_eq!(output_gradient.len(), self.output_dim);
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let mut hidden_grad = vec![0.0; self.hidden_dim];
        for o in 0..self.output_dim {
            let go = output_gradient[o];
            g.b2[o] = go;
            let w2_row = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            let g2_row = &mut g.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            for h in 0..self.hidden_dim {
                g2_row[h] = go * trace.hidden_act[h];
                hidden_grad[h] += go * w2_row[h];
            }
        }
        for h in 0..self.hidden_dim {
            if trace.hidden_pre[h] <= 0.0 {
                continue;
            }
            let gh = hidden_grad[h];
            g.b1[h] = gh;
            let g1_row = &mut g.w1[h * self.input_dim..(h + 1) * self.input_dim];
            for (gi, xi) in g1_row.iter_mut().zip(&trace.input) {
                *gi = gh * xi;
            }
        }
        g
    }

    /// Gradient-ascent update: parameters += step_size * grads. Callers
    /// encode the sign in the scale.
    pub fn apply_gradients(&mut self, grads: &Gradients, step_size: f64) {
        for (p, g) in self.w1.iter_mut().zip(&grads.w1) {
            *p += step_size * g;
        }
        for (p, g) in self.b1.iter_mut().zip(&grads.b1) {
            *p += step_size * g;
        }
        for (p, g) in self.w2.iter_mut().zip(&grads.w2) {
            *p += step_size * g;
        }
        for (p, g) in self.b2.iter_mut().zip(&grads.b2) {
            *p += step_size * g;
        }
    }

    pub fn params_finite(&self) -> bool {
        self.w1.iter().all(|p| p.is_finite())
            && self.b1.iter().all(|p| p.is_finite())
            && self.w2.iter().all(|p| p.is_finite())
            && self.b2.iter().all(|p| p.is_finite())
    }

    /// Flat parameter view in fixed layer order: w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// Text weight format: `dims in hid out` on the first line, then the
    /// parameters in fixed layer order at 17 significant digits. Round-trips
    /// exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "dims {} {} {}\n",
            self.input_dim, self.hidden_dim, self.output_dim
        );
        for chunk in [&self.w1, &self.b1, &self.w2, &self.b2] {
            let line: Vec<String> = chunk.iter().map(|p| format!("{p:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Mlp, NeuralError> {
        let mut tokens = text.split_whitespace();
        if tokens.next() != Some("dims") {
            return Err(NeuralError::Format("expected leading `dims`".into()));
        }
        let mut dim = || -> Result<usize, NeuralError> {
            tokens
                .next()
                .ok_or_else(|| NeuralError::Format("missing dimension".into()))?
                .parse()
                .map_err(|_| NeuralError::Format("bad dimension".into()))
        };
        let input_dim = dim()?;
        let hidden_dim = dim()?;
        let output_dim = dim()?;
        let mut net = Mlp::init(input_dim, hidden_dim, output_dim, 0)?;
        let expected = net.param_count();
        let mut params = Vec::with_capacity(expected);
        for tok in tokens {
            let v = f64::from_str(tok)
                .map_err(|_| NeuralError::Format(format!("bad float `{tok}`")))?;
            params.push(v);
        }
        if params.len() != expected {
            return Err(NeuralError::Format(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        net.set_params(&params);
        Ok(net)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax restricted to unmasked entries. Masked entries come out exactly
/// zero; the rest are normalized after shifting by the max unmasked logit.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NeuralError> {
    assert_eq!(logits.len(), mask.len());
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NeuralError::EmptyMask);
    }
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for i in 0..logits.len() {
        if mask[i] {
            let e = (logits[i] - max).exp();
            probs[i] = e;
            total += e;
        }
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Central finite differences of f(params) = dot(fixed_grad, outputs)
    /// over every parameter. Independent of the backward pass.
    fn numeric_gradients(net: &Mlp, x: &[f64], out_grad: &[f64], eps: f64) -> Vec<f64> {
        let scalar = |net: &Mlp| -> f64 {
            let (out, _) = net.forward(x);
            out.iter().zip(out_grad).map(|(o, g)| o * g).sum()
        };
        let base = net.params();
        let mut grads = Vec::with_capacity(base.len());
        let mut work = net.clone();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            work.set_params(&plus);
            let f_plus = scalar(&work);
            let mut minus = base.clone();
            minus[i] -= eps;
            work.set_params(&minus);
            let f_minus = scalar(&work);
            grads.push((f_plus - f_minus) / (2.0 * eps));
        }
        grads
    }

    /// A random net and input whose hidden pre-activations stay clear of the
    /// rectifier kink, so finite differences are valid.
    fn random_case(
        rng: &mut ChaCha8Rng,
        dims: (usize, usize, usize),
    ) -> (Mlp, Vec<f64>, Vec<f64>) {
        loop {
            let net = Mlp::init(dims.0, dims.1, dims.2, rng.random()).unwrap();
            let x: Vec<f64> = (0..dims.0).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, trace) = net.forward(&x);
            if trace.hidden_pre.iter().all(|z| z.abs() > 1e-3) {
                let out_grad: Vec<f64> =
                    (0..dims.2).map(|_| rng.random_range(-1.0..1.0)).collect();
                return (net, x, out_grad);
            }
        }
    }

    fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| {
                let scale = a.abs().max(n.abs()).max(1e-8);
                (a - n).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn init_is_deterministic_and_counts_parameters() {
        let a = Mlp::init(34, 70, 34, 5).unwrap();
        let b = Mlp::init(34, 70, 34, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), 34 * 70 + 70 + 70 * 34 + 34);
        assert_eq!(a.param_count(), 4_864);
        let c = Mlp::init(34, 70, 34, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_hidden_dim_is_a_config_error() {
        assert!(matches!(
            Mlp::init(10, 0, 3, 1),
            Err(NeuralError::Config(_))
        ));
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut net = Mlp::init(4, 3, 2, 1).unwrap();
        net.set_params(&vec![0.0; net.param_count()]);
        let (out, _) = net.forward(&[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn unit_weight_identity_net_passes_positive_input_through() {
        let mut net = Mlp::init(1, 1, 1, 1).unwrap();
        net.set_params(&[1.0, 0.0, 1.0, 0.0]);
        let (out, _) = net.forward(&[2.0]);
        assert_eq!(out, vec![2.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let dims = (
                rng.random_range(1..=10),
                rng.random_range(1..=10),
                rng.random_range(1..=10),
            );
            let (net, x, out_grad) = random_case(&mut rng, dims);
            let (_, trace) = net.forward(&x);
            let analytic = net.backward(trace, &out_grad);
            let mut flat = Vec::new();
            flat.extend_from_slice(&analytic.w1);
            flat.extend_from_slice(&analytic.b1);
            flat.extend_from_slice(&analytic.w2);
            flat.extend_from_slice(&analytic.b2);
            let numeric = numeric_gradients(&net, &x, &out_grad, 1e-4);
            worst = worst.max(max_rel_error(&flat, &numeric));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_output_gradient_yields_zero_gradients() {
        let net = Mlp::init(5, 4, 3, 2).unwrap();
        let (_, trace) = net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let g = net.backward(trace, &[0.0, 0.0, 0.0]);
        assert!(g.is_zero());
    }

    #[test]
    fn linear_net_w2_gradient_is_the_hidden_activation() {
        let mut net = Mlp::init(1, 1, 1, 1).unwrap();
        net.set_params(&[2.0, 0.0, 3.0, 0.0]);
        let (_, trace) = net.forward(&[4.0]); // hidden activation 8
        let g = net.backward(trace, &[1.0]);
        assert_eq!(g.w2, vec![8.0]);
        assert_eq!(g.b2, vec![1.0]);
    }

    #[test]
    fn apply_gradients_step_zero_and_inverse_restore() {
        let net = Mlp::init(6, 5, 4, 9).unwrap();
        let (_, trace) = net.forward(&[1.0; 6]);
        let g = net.backward(trace, &[0.3, -0.2, 0.1, 0.5]);
        let mut stepped = net.clone();
        stepped.apply_gradients(&g, 0.0);
        assert_eq!(stepped, net);
        // Exact restore, exercised on exactly representable arithmetic:
        // integer parameters, integer inputs, power-of-two step.
        let mut exact = Mlp::init(3, 2, 2, 1).unwrap();
        let params: Vec<f64> = (0..exact.param_count()).map(|i| (i % 7) as f64).collect();
        exact.set_params(&params);
        let (_, trace) = exact.forward(&[1.0, 2.0, 3.0]);
        let g = exact.backward(trace, &[1.0, -2.0]);
        let before = exact.clone();
        exact.apply_gradients(&g, 0.5);
        assert_ne!(exact, before);
        exact.apply_gradients(&g, -0.5);
        assert_eq!(exact, before);
    }

    #[test]
    fn long_update_run_stays_finite_at_the_tuned_step_size() {
        // 1e5 updates at step 6e-4 on random unit-scale data.
        let mut net = Mlp::init(34, 70, 18, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..100_000 {
            let x: Vec<f64> = (0..34).map(|_| rng.random_range(0.0..1.0)).collect();
            let (_, trace) = net.forward(&x);
            let out_grad: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = net.backward(trace, &out_grad);
            net.apply_gradients(&g, 6e-4);
        }
        assert!(net.params_finite());
    }

    #[test]
    fn masked_softmax_uniform_and_degenerate_cases() {
        let p = masked_softmax(&[0.0, 0.0, 0.0], &[true, true, true]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = masked_softmax(&[5.0, -1.0, 2.0], &[true, false, false]).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            masked_softmax(&[1.0], &[false]),
            Err(NeuralError::EmptyMask)
        ));
    }

    #[test]
    fn masked_softmax_survives_large_logits() {
        // softmax([1000, 999]) = softmax([1, 0]) = [e/(1+e), 1/(1+e)].
        let p = masked_softmax(&[1000.0, 999.0], &[true, true]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((p[1] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn masked_softmax_normalizes_and_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
            let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.6).collect();
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let p = masked_softmax(&logits, &mask).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            for (pi, &mi) in p.iter().zip(&mask) {
                assert!(mi || *pi == 0.0);
            }
            let shifted: Vec<f64> = logits.iter().map(|l| l + 3.7).collect();
            let q = masked_softmax(&shifted, &mask).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_text_round_trips_bit_exactly() {
        let net = Mlp::init(7, 5, 3, 123).unwrap();
        let text = net.to_text();
        let back = Mlp::from_text(&text).unwrap();
        assert_eq!(net, back);
        assert!(text.starts_with("dims 7 5 3\n"));
    }

    #[test]
    fn weight_text_rejects_malformed_input() {
        assert!(matches!(
            Mlp::from_text("dims 2 2"),
            Err(NeuralError::Format(_))
        ));
        assert!(matches!(
            Mlp::from_text("dims 1 1 1\n1.0 2.0"),
            Err(NeuralError::Format(_))
        ));
        assert!(matches!(
            Mlp::from_text("dims 1 1 1\n1.0 2.0 3.0 oops"),
            Err(NeuralError::Format(_))
        ));
    }
}
