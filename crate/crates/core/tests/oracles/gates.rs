use num_complex::Complex64 as C;

#[derive(Debug, Clone)]
pub enum Gate {
    Ry(usize, f64),
    Rz(usize, f64),
    Cnot(usize, usize),
}

/// Full `2^n x 2^n` matrix of a gate, qubit `q` being bit `q` of the index.
pub fn dense(n: usize, g: &Gate) -> Vec<Vec<C>> {
    let dim = 1 << n;
    let mut u = vec![vec![C::new(0.0, 0.0); dim]; dim];
    match *g {
        Gate::Ry(q, a) | Gate::Rz(q, a) => {
            let (c, s) = ((a / 2.0).cos(), (a / 2.0).sin());
            let m = if matches!(g, Gate::Ry(..)) {
                [
                    [C::new(c, 0.0), C::new(-s, 0.0)],
                    [C::new(s, 0.0), C::new(c, 0.0)],
                ]
            } else {
                [
                    [C::new(c, -s), C::new(0.0, 0.0)],
                    [C::new(0.0, 0.0), C::new(c, s)],
                ]
            };
            for (i, row) in u.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    if i & !(1 << q) == j & !(1 << q) {
                        *cell = m[(i >> q) & 1][(j >> q) & 1];
                    }
                }
            }
        }
        Gate::Cnot(c, t) => {
            for j in 0..dim {
                let i = if (j >> c) & 1 == 1 { j ^ (1 << t) } else { j };
                u[i][j] = C::new(1.0, 0.0);
            }
        }
    }
    u
}

/// `|0..0>` pushed through the gates by dense matrix products.
pub fn dense_run(n: usize, gates: &[Gate]) -> Vec<C> {
    let mut v = vec![C::new(0.0, 0.0); 1 << n];
    v[0] = C::new(1.0, 0.0);
    for g in gates {
        let u = dense(n, g);
        v = u
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
    }
    v
}

pub fn apply(state: &mut qtrade_core::qsim::QuantumState, g: &Gate) {
    match *g {
        Gate::Ry(q, a) => state.apply_ry(q, a).unwrap(),
        Gate::Rz(q, a) => state.apply_rz(q, a).unwrap(),
        Gate::Cnot(c, t) => state.apply_cnot(c, t).unwrap(),
    }
}
