use rand::Rng;

use super::params::{Block, Init, Layout};
use crate::error::{Error, Result};
use crate::qsim::{self, VqcParams};

/// Affine map `W x + b` with `W` stored row-major as `[n_out x n_in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseLayer {
    pub weight: Block,
    pub bias: Block,
    pub n_in: usize,
    pub n_out: usize,
}

impl DenseLayer {
    pub fn register(layout: &mut Layout, name: &str, n_in: usize, n_out: usize) -> Self {
        let weight = layout.add(format!("{name}.weight"), &[n_out, n_in], Init::FanIn(n_in));
        let bias = layout.add(format!("{name}.bias"), &[n_out], Init::FanIn(n_in));
        DenseLayer {
            weight,
            bias,
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::usage(format!(
                "dense layer expects input of length {}, got {}",
                self.n_in,
                x.len()
            )));
        }
        let w = self.weight.slice(params);
        let b = self.bias.slice(params);
        Ok((0..self.n_out)
            .map(|o| {
                let row = &w[o * self.n_in..(o + 1) * self.n_in];
                b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect())
    }
}

/// Variational circuit encoder whose angles live in a parameter block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqcLayer {
    pub angles: Block,
    pub n_qubits: usize,
    pub depth: usize,
}

impl VqcLayer {
    pub fn register(layout: &mut Layout, name: &str, n_qubits: usize, depth: usize) -> Self {
        let angles = layout.add(
            format!("{name}.angles"),
            &[depth, n_qubits, 2],
            Init::Uniform(0.1),
        );
        VqcLayer {
            angles,
            n_qubits,
            depth,
        }
    }

    pub fn vqc_params(&self, params: &[f64]) -> Result<VqcParams> {
        VqcParams::new(
            self.n_qubits,
            self.depth,
            self.angles.slice(params).to_vec(),
        )
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(qsim::run_vqc(x, &self.vqc_params(params)?)?.expectations)
    }
}

pub fn tanh_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Softmax with max subtraction.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draws an index from a discrete distribution by inverse CDF on a single
/// uniform draw.
pub fn categorical_sample<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::usage("empty distribution"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::usage(format!("invalid probabilities {probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!("probabilities sum to {total}, not 1")));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate().skip(1) {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Single-layer LSTM cell. Every gate reads the concatenation `[x; h]`, so
/// each gate weight block has shape `[hidden x (input + hidden)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub input_gate: DenseLayer,
    pub forget_gate: DenseLayer,
    pub output_gate: DenseLayer,
    pub candidate: DenseLayer,
    pub input_size: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register(layout: &mut Layout, name: &str, input_size: usize, hidden: usize) -> Self {
        let n_in = input_size + hidden;
        let input_gate = DenseLayer::register(layout, &format!("{name}.input"), n_in, hidden);
        let forget_weight = layout.add(
            format!("{name}.forget.weight"),
            &[hidden, n_in],
            Init::FanIn(n_in),
        );
        let forget_bias = layout.add(format!("{name}.forget.bias"), &[hidden], Init::Const(1.0));
        let forget_gate = DenseLayer {
            weight: forget_weight,
            bias: forget_bias,
            n_in,
            n_out: hidden,
        };
        let output_gate = DenseLayer::register(layout, &format!("{name}.output"), n_in, hidden);
        let candidate = DenseLayer::register(layout, &format!("{name}.candidate"), n_in, hidden);
        LstmCell {
            input_gate,
            forget_gate,
            output_gate,
            candidate,
            input_size,
            hidden,
        }
    }

    /// Advances `state` by one input and returns the new hidden vector.
    pub fn step(&self, params: &[f64], state: &mut LstmState, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size {
            return Err(Error::usage(format!(
                "LSTM expects input of length {}, got {}",
                self.input_size,
                x.len()
            )));
        }
        let mut xh = Vec::with_capacity(self.input_size + self.hidden);
        xh.extend_from_slice(x);
        xh.extend_from_slice(&state.h);
        let i = self.input_gate.forward(params, &xh)?;
        let f = self.forget_gate.forward(params, &xh)?;
        let o = self.output_gate.forward(params, &xh)?;
        let g = self.candidate.forward(params, &xh)?;
        for k in 0..self.hidden {
            state.c[k] = sigmoid(f[k]) * state.c[k] + sigmoid(i[k]) * g[k].tanh();
            state.h[k] = sigmoid(o[k]) * state.c[k].tanh();
        }
        Ok(state.h.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::ParamSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_examples() {
        let mut layout = Layout::new();
        let d = DenseLayer::register(&mut layout, "d", 2, 2);
        let p = ParamSet::from_values(layout, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.forward(p.values(), &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            d.forward(p.values(), &[1.0]),
            Err(Error::Usage(_))
        ));

        let mut layout = Layout::new();
        let d = DenseLayer::register(&mut layout, "d", 2, 1);
        let p = ParamSet::from_values(layout, vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.forward(p.values(), &[2.0, 3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn activation_examples() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(tanh_forward(&[0.0]), vec![0.0]);
        let s = softmax(&[1000.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1] < 1e-300);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-20.0..20.0)).collect();
            let c = rng.random_range(-50.0..50.0);
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let a = softmax(&x);
            let b = softmax(&shifted);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(argmax(&a), argmax(&b));
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn categorical_degenerate_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(categorical_sample(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| categorical_sample(&[0.2, 0.3, 0.5], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert!(categorical_sample(&[0.5, 0.6], &mut rng).is_err());
        assert!(categorical_sample(&[1.5, -0.5], &mut rng).is_err());
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| categorical_sample(&[0.5, 0.5, 0.0], &mut rng).unwrap() == 0)
            .count();
        let f = zeros as f64 / n as f64;
        assert!((0.49..=0.51).contains(&f), "frequency {f}");

        // KS-style: max CDF deviation over a 5-way distribution
        let probs = [0.1, 0.25, 0.05, 0.4, 0.2];
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[categorical_sample(&probs, &mut rng).unwrap()] += 1;
        }
        let (mut emp, mut th, mut worst) = (0.0, 0.0, 0.0f64);
        for k in 0..5 {
            emp += counts[k] as f64 / n as f64;
            th += probs[k];
            worst = worst.max((emp - th).abs());
        }
        assert!(worst < 0.01, "KS deviation {worst}");
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    fn lstm_fixture(input: usize, hidden: usize) -> (LstmCell, ParamSet) {
        let mut layout = Layout::new();
        let cell = LstmCell::register(&mut layout, "lstm", input, hidden);
        (cell, ParamSet::zeros(layout))
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let (cell, p) = lstm_fixture(3, 4);
        let mut st = LstmState::zeros(4);
        for x in [[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]] {
            let h = cell.step(p.values(), &mut st, &x).unwrap();
            assert!(h.iter().all(|v| *v == 0.0));
        }
        assert!(matches!(
            cell.step(p.values(), &mut st, &[1.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        let (cell, mut p) = lstm_fixture(2, 3);
        p.get_mut(cell.forget_gate.bias).fill(10.0);
        p.get_mut(cell.input_gate.bias).fill(-10.0);
        let mut st = LstmState {
            h: vec![0.0; 3],
            c: vec![0.7, -0.3, 1.2],
        };
        let c0 = st.c.clone();
        for _ in 0..5 {
            cell.step(p.values(), &mut st, &[0.4, -0.9]).unwrap();
        }
        for (a, b) in st.c.iter().zip(&c0) {
            assert!((a - b).abs() < 2e-3, "{a} vs {b}");
        }
    }
}
