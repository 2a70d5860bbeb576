//! Exact statevector simulation of the hardware-efficient variational circuit
//! used as the encoder of the quantum actor-critic heads.
//!
//! Qubit indexing is little-endian: qubit `q` is bit `q` of the basis index.
//! The circuit is an `RY(pi * x_i)` angle-encoding layer followed by `depth`
//! variational layers of per-qubit `RY`, `RZ` rotations and a CNOT ring
//! `CNOT(i, (i + 1) mod n)`. Outputs are per-qubit Pauli-Z expectations.
//!
//! Gradients use the parameter-shift rule. States before every gate are cached
//! during the forward pass so each shifted evaluation only replays the suffix
//! of the circuit after the shifted gate.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 16;

/// Complex amplitudes over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// Prepares `|0...0>` on `n_qubits` qubits.
pub fn init_zero_state(n_qubits: usize) -> Result<QuantumState> {
    if !(1..=MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::config(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
    amplitudes[0] = Complex64::new(1.0, 0.0);
    Ok(QuantumState {
        n_qubits,
        amplitudes,
    })
}

impl QuantumState {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Builds a state from raw amplitudes. The caller is responsible for
    /// normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len > (1 << MAX_QUBITS) {
            return Err(Error::usage(format!(
                "amplitude vector length {len} is not 2^n for 1 <= n <= {MAX_QUBITS}"
            )));
        }
        Ok(QuantumState {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::usage(format!(
                "qubit {qubit} out of range for {}-qubit state",
                self.n_qubits
            )));
        }
        Ok(())
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.ry_unchecked(qubit, theta);
        Ok(())
    }

    pub fn apply_rz(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.rz_unchecked(qubit, theta);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::usage(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        self.cnot_unchecked(control, target);
        Ok(())
    }

    fn ry_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let bit = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = a0 * c - a1 * s;
                self.amplitudes[i | bit] = a0 * s + a1 * c;
            }
        }
    }

    fn rz_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let phase0 = Complex64::new(c, -s);
        let phase1 = Complex64::new(c, s);
        let bit = 1usize << qubit;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            *a *= if i & bit == 0 { phase0 } else { phase1 };
        }
    }

    fn cnot_unchecked(&mut self, control: usize, target: usize) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
    }

    /// `<Z_q>` for a single qubit.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if i & bit == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum())
    }

    /// `<Z_q>` for every qubit in one pass over the amplitudes.
    pub fn expectations_z(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, e) in out.iter_mut().enumerate() {
                if i >> q & 1 == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        out
    }

    /// `<X_q>`, used in tests of the phase gates.
    pub fn expectation_x(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit == 0)
            .map(|(i, a)| 2.0 * (a.conj() * self.amplitudes[i | bit]).re)
            .sum())
    }

    fn apply_gate(&mut self, gate: &Gate, angle: f64) {
        match gate.kind {
            GateKind::Ry => self.ry_unchecked(gate.qubit, angle),
            GateKind::Rz => self.rz_unchecked(gate.qubit, angle),
            GateKind::Cnot { target } => self.cnot_unchecked(gate.qubit, target),
        }
    }
}

/// Trainable angles of the variational layers, stored flat in
/// `[layer][qubit][kind]` order with kind 0 = RY, kind 1 = RZ.
#[derive(Debug, Clone, PartialEq)]
pub struct VqcParams {
    n_qubits: usize,
    depth: usize,
    angles: Vec<f64>,
}

impl VqcParams {
    pub fn new(n_qubits: usize, depth: usize, angles: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::config(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let expected = Self::angle_count(n_qubits, depth);
        if angles.len() != expected {
            return Err(Error::usage(format!(
                "expected {expected} angles for {n_qubits} qubits at depth {depth}, got {}",
                angles.len()
            )));
        }
        if let Some(bad) = angles.iter().position(|a| !a.is_finite()) {
            return Err(Error::usage(format!("angle {bad} is not finite")));
        }
        Ok(VqcParams {
            n_qubits,
            depth,
            angles,
        })
    }

    pub fn zeros(n_qubits: usize, depth: usize) -> Result<Self> {
        Self::new(
            n_qubits,
            depth,
            vec![0.0; Self::angle_count(n_qubits, depth)],
        )
    }

    pub fn angle_count(n_qubits: usize, depth: usize) -> usize {
        depth * n_qubits * 2
    }

    pub fn index(&self, layer: usize, qubit: usize, kind: usize) -> usize {
        (layer * self.n_qubits + qubit) * 2 + kind
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqcOutput {
    pub expectations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqcGradients {
    /// Same flat layout as [`VqcParams::angles`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum GateKind {
    Ry,
    Rz,
    Cnot { target: usize },
}

#[derive(Debug, Clone, Copy)]
enum AngleSource {
    Fixed,
    Input(usize),
    Param(usize),
}

#[derive(Debug, Clone, Copy)]
struct Gate {
    kind: GateKind,
    qubit: usize,
    source: AngleSource,
}

fn build_circuit(n: usize, depth: usize) -> Vec<Gate> {
    let mut gates = Vec::with_capacity(n + depth * 3 * n);
    for q in 0..n {
        gates.push(Gate {
            kind: GateKind::Ry,
            qubit: q,
            source: AngleSource::Input(q),
        });
    }
    for layer in 0..depth {
        for q in 0..n {
            let base = (layer * n + q) * 2;
            gates.push(Gate {
                kind: GateKind::Ry,
                qubit: q,
                source: AngleSource::Param(base),
            });
            gates.push(Gate {
                kind: GateKind::Rz,
                qubit: q,
                source: AngleSource::Param(base + 1),
            });
        }
        if n > 1 {
            for q in 0..n {
                gates.push(Gate {
                    kind: GateKind::Cnot {
                        target: (q + 1) % n,
                    },
                    qubit: q,
                    source: AngleSource::Fixed,
                });
            }
        }
    }
    gates
}

fn gate_angle(gate: &Gate, input: &[f64], params: &VqcParams) -> f64 {
    match gate.source {
        AngleSource::Fixed => 0.0,
        AngleSource::Input(i) => PI * input[i],
        AngleSource::Param(p) => params.angles[p],
    }
}

fn check_input(input: &[f64], params: &VqcParams) -> Result<()> {
    if input.len() != params.n_qubits {
        return Err(Error::usage(format!(
            "VQC input has length {}, circuit has {} qubits",
            input.len(),
            params.n_qubits
        )));
    }
    Ok(())
}

/// Runs the encoding + variational circuit from `|0...0>` and returns the
/// per-qubit `<Z>` expectations.
pub fn run_vqc(input: &[f64], params: &VqcParams) -> Result<VqcOutput> {
    check_input(input, params)?;
    let mut state = init_zero_state(params.n_qubits)?;
    for gate in build_circuit(params.n_qubits, params.depth) {
        let angle = gate_angle(&gate, input, params);
        state.apply_gate(&gate, angle);
    }
    Ok(VqcOutput {
        expectations: state.expectations_z(),
    })
}

/// Parameter-shift gradients of `sum_i upstream[i] * <Z_i>` with respect to
/// every trainable angle and every input component.
pub fn vqc_gradients(input: &[f64], params: &VqcParams, upstream: &[f64]) -> Result<VqcGradients> {
    check_input(input, params)?;
    if upstream.len() != params.n_qubits {
        return Err(Error::usage(format!(
            "upstream gradient has length {}, circuit has {} qubits",
            upstream.len(),
            params.n_qubits
        )));
    }
    let mut grads = VqcGradients {
        params: vec![0.0; params.angles.len()],
        input: vec![0.0; params.n_qubits],
    };
    if upstream.iter().all(|g| *g == 0.0) {
        return Ok(grads);
    }

    let gates = build_circuit(params.n_qubits, params.depth);
    // prefix[k] is the state before gate k
    let mut prefix = Vec::with_capacity(gates.len());
    let mut state = init_zero_state(params.n_qubits)?;
    for gate in &gates {
        prefix.push(state.clone());
        state.apply_gate(gate, gate_angle(gate, input, params));
    }

    let contract = |state: &QuantumState| -> f64 {
        state
            .expectations_z()
            .iter()
            .zip(upstream)
            .map(|(e, u)| e * u)
            .sum()
    };
    let shifted = |k: usize, shift: f64| -> f64 {
        let mut s = prefix[k].clone();
        let gate = &gates[k];
        s.apply_gate(gate, gate_angle(gate, input, params) + shift);
        for g in &gates[k + 1..] {
            s.apply_gate(g, gate_angle(g, input, params));
        }
        contract(&s)
    };

    for (k, gate) in gates.iter().enumerate() {
        let d = match gate.source {
            AngleSource::Fixed => continue,
            _ => 0.5 * (shifted(k, FRAC_PI_2) - shifted(k, -FRAC_PI_2)),
        };
        match gate.source {
            AngleSource::Input(i) => grads.input[i] += PI * d,
            AngleSource::Param(p) => grads.params[p] += d,
            AngleSource::Fixed => {}
        }
    }
    Ok(grads)
}
