use rand::Rng;

use crate::diffnet::{softmax, tanh_forward, DenseLayer, Layout, NodeId, ParamSet, Tape, VqcLayer};
use crate::error::{Error, Result};
use crate::qsim::MAX_QUBITS;
use crate::tradeenv::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Classical,
    Quantum,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Classical => "classical",
            HeadKind::Quantum => "quantum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub obs_dim: usize,
    pub head: HeadKind,
    /// Encoder width: qubit count in quantum mode, dense width otherwise.
    pub latent: usize,
    /// Variational layers of the quantum encoder.
    pub depth: usize,
}

impl NetConfig {
    pub fn classical(obs_dim: usize) -> Self {
        NetConfig {
            obs_dim,
            head: HeadKind::Classical,
            latent: 8,
            depth: 2,
        }
    }

    pub fn quantum(obs_dim: usize) -> Self {
        NetConfig {
            head: HeadKind::Quantum,
            ..NetConfig::classical(obs_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.latent == 0 {
            return Err(Error::config("obs_dim and latent width must be positive"));
        }
        if self.head == HeadKind::Quantum && (self.latent > MAX_QUBITS || self.depth == 0) {
            return Err(Error::config(format!(
                "quantum encoder needs 1..={MAX_QUBITS} qubits and depth >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Encoder {
    Dense(DenseLayer),
    Vqc(VqcLayer),
}

impl Encoder {
    fn register(layout: &mut Layout, name: &str, cfg: &NetConfig) -> Self {
        match cfg.head {
            HeadKind::Classical => {
                Encoder::Dense(DenseLayer::register(layout, name, cfg.latent, cfg.latent))
            }
            HeadKind::Quantum => {
                Encoder::Vqc(VqcLayer::register(layout, name, cfg.latent, cfg.depth))
            }
        }
    }

    fn record(&self, tape: &mut Tape, params: &[f64], x: NodeId) -> Result<NodeId> {
        match self {
            Encoder::Dense(l) => tape.dense(params, l, x),
            Encoder::Vqc(l) => tape.vqc(params, l, x),
        }
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Encoder::Dense(l) => l.forward(params, x),
            Encoder::Vqc(l) => l.forward(params, x),
        }
    }
}

/// Block handles of the two heads.
///
/// Policy: `softmax(W2 tanh(enc(tanh(W1 s + b1))) + b2)`.
/// Value: `W4 tanh(enc'(tanh(W3 s + b3))) + b4`.
/// Each head owns its encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arch {
    pub w1: DenseLayer,
    pub policy_encoder: Encoder,
    pub w2: DenseLayer,
    pub w3: DenseLayer,
    pub value_encoder: Encoder,
    pub w4: DenseLayer,
}

impl Arch {
    pub fn layout(cfg: &NetConfig) -> (Arch, Layout) {
        let mut layout = Layout::new();
        let w1 = DenseLayer::register(&mut layout, "policy.in", cfg.obs_dim, cfg.latent);
        let policy_encoder = Encoder::register(&mut layout, "policy.encoder", cfg);
        let w2 = DenseLayer::register(&mut layout, "policy.out", cfg.latent, Action::COUNT);
        let w3 = DenseLayer::register(&mut layout, "value.in", cfg.obs_dim, cfg.latent);
        let value_encoder = Encoder::register(&mut layout, "value.encoder", cfg);
        let w4 = DenseLayer::register(&mut layout, "value.out", cfg.latent, 1);
        (
            Arch {
                w1,
                policy_encoder,
                w2,
                w3,
                value_encoder,
                w4,
            },
            layout,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ActorCriticNet {
    pub config: NetConfig,
    pub arch: Arch,
    pub params: ParamSet,
}

/// Output nodes of one recorded forward pass.
#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub probs: NodeId,
    pub value: NodeId,
}

impl ActorCriticNet {
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (arch, layout) = Arch::layout(&config);
        Ok(ActorCriticNet {
            config,
            arch,
            params: ParamSet::init(layout, rng),
        })
    }

    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let (arch, layout) = Arch::layout(&config);
        Ok(ActorCriticNet {
            config,
            arch,
            params: ParamSet::zeros(layout),
        })
    }

    fn check_obs(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.config.obs_dim {
            return Err(Error::usage(format!(
                "observation has {} values, network expects {}",
                s.len(),
                self.config.obs_dim
            )));
        }
        Ok(())
    }

    /// Action distribution over `[hold, buy, sell]`.
    pub fn forward_policy(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(s)?;
        let p = self.params.values();
        let a = &self.arch;
        let z = tanh_forward(&a.w1.forward(p, s)?);
        let q = tanh_forward(&a.policy_encoder.forward(p, &z)?);
        Ok(softmax(&a.w2.forward(p, &q)?))
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        self.check_obs(s)?;
        let p = self.params.values();
        let a = &self.arch;
        let z = tanh_forward(&a.w3.forward(p, s)?);
        let q = tanh_forward(&a.value_encoder.forward(p, &z)?);
        Ok(a.w4.forward(p, &q)?[0])
    }

    /// Records both heads on `tape`.
    pub fn record(&self, tape: &mut Tape, s: &[f64]) -> Result<HeadNodes> {
        self.check_obs(s)?;
        let p = self.params.values();
        let a = &self.arch;
        let s = tape.leaf(s.to_vec());

        let z = tape.dense(p, &a.w1, s)?;
        let z = tape.tanh(z);
        let q = a.policy_encoder.record(tape, p, z)?;
        let q = tape.tanh(q);
        let logits = tape.dense(p, &a.w2, q)?;
        let probs = tape.softmax(logits);

        let zv = tape.dense(p, &a.w3, s)?;
        let zv = tape.tanh(zv);
        let qv = a.value_encoder.record(tape, p, zv)?;
        let qv = tape.tanh(qv);
        let value = tape.dense(p, &a.w4, qv)?;
        Ok(HeadNodes { probs, value })
    }
}
