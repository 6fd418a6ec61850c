use crate::error::Result;
use crate::numerics::{Graph, Scalar, Var};

/// Weights of one LSTM layer with gates packed `[input, forget, candidate,
/// output]` along the columns.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `in × 4H`
    pub w_x: Var,
    /// `H × 4H`
    pub w_h: Var,
    /// `1 × 4H`
    pub bias: Var,
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmWeights,
) -> Result<(Var, Var)> {
    let xw = g.matmul(x, w.w_x)?;
    let pre = g.add_row(xw, w.bias)?;
    lstm_step(g, pre, h_prev, c_prev, w.w_h)
}

/// LSTM step from an already projected input `x·W_x + b` (`B × 4H`), so that
/// the input projection can be computed for a whole sequence at once.
pub fn lstm_step<T: Scalar>(
    g: &mut Graph<T>,
    input_proj: Var,
    h_prev: Var,
    c_prev: Var,
    w_h: Var,
) -> Result<(Var, Var)> {
    let hidden = g.value(h_prev).cols();
    let hw = g.matmul(h_prev, w_h)?;
    let gates = g.add(input_proj, hw)?;
    let i = g.slice_cols(gates, 0, hidden)?;
    let f = g.slice_cols(gates, hidden, hidden)?;
    let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
    let o = g.slice_cols(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h = g.mul(o, squashed)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::numerics::{grad_check, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Cell {
        w_x: Tensor<f64>,
        w_h: Tensor<f64>,
        bias: Tensor<f64>,
    }

    fn run(
        cell: &Cell,
        x: &Tensor<f64>,
        h: &Tensor<f64>,
        c: &Tensor<f64>,
    ) -> (Tensor<f64>, Tensor<f64>) {
        let mut g = Graph::new();
        let w = LstmWeights {
            w_x: g.constant(cell.w_x.clone()),
            w_h: g.constant(cell.w_h.clone()),
            bias: g.constant(cell.bias.clone()),
        };
        let (x, h, c) = (
            g.constant(x.clone()),
            g.constant(h.clone()),
            g.constant(c.clone()),
        );
        let (h, c) = lstm_cell(&mut g, x, h, c, &w).unwrap();
        (g.value(h).clone(), g.value(c).clone())
    }

    /// Scalar step-by-step oracle of the gate equations.
    fn oracle(cell: &Cell, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hidden = h.len();
        let gate = |k: usize, j: usize| {
            let col = k * hidden + j;
            let mut s = cell.bias.get(0, col);
            for (p, &xv) in x.iter().enumerate() {
                s += xv * cell.w_x.get(p, col);
            }
            for (p, &hv) in h.iter().enumerate() {
                s += hv * cell.w_h.get(p, col);
            }
            s
        };
        let mut h_out = Vec::new();
        let mut c_out = Vec::new();
        for (j, &cj) in c.iter().enumerate().take(hidden) {
            let i = 1.0 / (1.0 + (-gate(0, j)).exp());
            let f = 1.0 / (1.0 + (-gate(1, j)).exp());
            let cand = gate(2, j).tanh();
            let o = 1.0 / (1.0 + (-gate(3, j)).exp());
            let cn = f * cj + i * cand;
            c_out.push(cn);
            h_out.push(o * cn.tanh());
        }
        (h_out, c_out)
    }

    fn random_cell(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Cell {
        Cell {
            w_x: Tensor::uniform(&[input, 4 * hidden], -0.5, 0.5, rng),
            w_h: Tensor::uniform(&[hidden, 4 * hidden], -0.5, 0.5, rng),
            bias: Tensor::uniform(&[1, 4 * hidden], -0.5, 0.5, rng),
        }
    }

    #[test]
    fn zero_params_give_zero_h() {
        let cell = Cell {
            w_x: Tensor::zeros(&[3, 8]),
            w_h: Tensor::zeros(&[2, 8]),
            bias: Tensor::zeros(&[1, 8]),
        };
        let x = Tensor::from_rows(&[&[0.3, -2.0, 5.0]]);
        let (h, c) = run(&cell, &x, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2]));
        assert_eq!(h.data(), &[0.0, 0.0]);
        assert_eq!(c.data(), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_carries_memory() {
        let mut bias = Tensor::zeros(&[1, 8]);
        for j in 0..2 {
            bias.set(0, j, -50.0);
            bias.set(0, 2 + j, 50.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cell = Cell {
            w_x: Tensor::uniform(&[3, 8], -0.1, 0.1, &mut rng),
            w_h: Tensor::uniform(&[2, 8], -0.1, 0.1, &mut rng),
            bias,
        };
        let c_prev = Tensor::from_rows(&[&[0.7, -1.3]]);
        let x = Tensor::from_rows(&[&[1.0, 1.0, 1.0]]);
        let (_, c) = run(&cell, &x, &Tensor::zeros(&[1, 2]), &c_prev);
        assert!(c.max_abs_diff(&c_prev) < 1e-12);
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cell = random_cell(&mut rng, 3, 4);
        let x = Tensor::uniform(&[2, 3], -1.0, 1.0, &mut rng);
        let h = Tensor::uniform(&[2, 4], -1.0, 1.0, &mut rng);
        let c = Tensor::uniform(&[2, 4], -1.0, 1.0, &mut rng);
        let (hg, cg) = run(&cell, &x, &h, &c);
        for b in 0..2 {
            let (ho, co) = oracle(&cell, x.row(b), h.row(b), c.row(b));
            for j in 0..4 {
                assert!((hg.get(b, j) - ho[j]).abs() < 1e-6);
                assert!((cg.get(b, j) - co[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradient_wrt_every_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = random_cell(&mut rng, 3, 2);
        let x = Tensor::uniform(&[2, 3], -1.0, 1.0, &mut rng);
        let h = Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng);
        let c = Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng);
        // Probe each argument in turn, holding the others constant.
        for which in 0..6 {
            let args = [&x, &h, &c, &cell.w_x, &cell.w_h, &cell.bias];
            let err = grad_check(
                |g, probe| {
                    let mut vars = Vec::new();
                    for (k, a) in args.iter().enumerate() {
                        vars.push(if k == which {
                            probe
                        } else {
                            g.constant((*a).clone())
                        });
                    }
                    let w = LstmWeights {
                        w_x: vars[3],
                        w_h: vars[4],
                        bias: vars[5],
                    };
                    let (h, c) = lstm_cell(g, vars[0], vars[1], vars[2], &w)?;
                    let hc = g.mul(h, c)?;
                    let s = g.add(hc, h)?;
                    Ok(g.sum_all(s))
                },
                args[which],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "argument {which}: {err}");
        }
    }
}
