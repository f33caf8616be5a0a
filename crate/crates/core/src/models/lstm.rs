//! A single LSTM cell with input (i), forget (f), candidate (g) and output (o) gates:
//!
//! ```text
//! i = sigma(W_i x + U_i h + b_i)    f = sigma(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)     o = sigma(W_o x + U_o h + b_o)
//! c' = f * c + i * g                h' = o * tanh(c')
//! ```
//!
//! `W` is `4H x D`, `U` is `4H x H` and `b` has `4H` entries, all row-major with the gate
//! blocks stacked in the order i, f, g, o.
#![allow(clippy::needless_range_loop)]

use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct CellWeights<'a, T> {
    pub input: usize,
    pub hidden: usize,
    pub w: &'a [T],
    pub u: &'a [T],
    pub b: &'a [T],
}

pub struct CellGradients<'a, T> {
    pub w: &'a mut [T],
    pub u: &'a mut [T],
    pub b: &'a mut [T],
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStep<T> {
    /// Activated gates, `4H` entries in i, f, g, o order.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

impl<'a, T: Scalar> CellWeights<'a, T> {
    pub fn check(&self) {
        let (d, h) = (self.input, self.hidden);
        assert_eq!(self.w.len(), 4 * h * d);
        assert_eq!(self.u.len(), 4 * h * h);
        assert_eq!(self.b.len(), 4 * h);
    }

    pub fn forward(&self, x: &[T], h_prev: &[T], c_prev: &[T]) -> CellStep<T> {
        let (d, hd) = (self.input, self.hidden);
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(h_prev.len(), hd);
        let mut gates = self.b.to_vec();
        for (r, a) in gates.iter_mut().enumerate() {
            let wr = &self.w[r * d..(r + 1) * d];
            let ur = &self.u[r * hd..(r + 1) * hd];
            let mut acc = *a;
            for (&wv, &xv) in wr.iter().zip(x) {
                acc += wv * xv;
            }
            for (&uv, &hv) in ur.iter().zip(h_prev) {
                acc += uv * hv;
            }
            *a = acc;
        }
        for (r, a) in gates.iter_mut().enumerate() {
            *a = if r / hd == 2 { a.tanh() } else { sigmoid(*a) };
        }
        let mut c = vec![T::zero(); hd];
        let mut tanh_c = vec![T::zero(); hd];
        let mut h = vec![T::zero(); hd];
        for k in 0..hd {
            let (i, f, g, o) = (
                gates[k],
                gates[hd + k],
                gates[2 * hd + k],
                gates[3 * hd + k],
            );
            c[k] = f * c_prev[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
        CellStep {
            gates,
            c,
            tanh_c,
            h,
        }
    }

    /// Backpropagates `dh` and `dc` (gradients with respect to this step's outputs) through
    /// the cell. Weight gradients are accumulated into `grads`; the result holds the
    /// gradients with respect to `x`, `h_prev` and `c_prev`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[T],
        h_prev: &[T],
        c_prev: &[T],
        step: &CellStep<T>,
        dh: &[T],
        dc: &[T],
        grads: &mut CellGradients<'_, T>,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (d, hd) = (self.input, self.hidden);
        let one = T::one();
        let g = &step.gates;
        let mut da = vec![T::zero(); 4 * hd];
        let mut dc_prev = vec![T::zero(); hd];
        for k in 0..hd {
            let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
            let tc = step.tanh_c[k];
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (one - tc * tc);
            da[k] = dct * gg * i * (one - i);
            da[hd + k] = dct * c_prev[k] * f * (one - f);
            da[2 * hd + k] = dct * i * (one - gg * gg);
            da[3 * hd + k] = d_o * o * (one - o);
            dc_prev[k] = dct * f;
        }
        let mut dx = vec![T::zero(); d];
        let mut dh_prev = vec![T::zero(); hd];
        for (r, &a) in da.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            grads.b[r] += a;
            let wr = &self.w[r * d..(r + 1) * d];
            let gw = &mut grads.w[r * d..(r + 1) * d];
            for j in 0..d {
                gw[j] += a * x[j];
                dx[j] += a * wr[j];
            }
            let ur = &self.u[r * hd..(r + 1) * hd];
            let gu = &mut grads.u[r * hd..(r + 1) * hd];
            for j in 0..hd {
                gu[j] += a * h_prev[j];
                dh_prev[j] += a * ur[j];
            }
        }
        (dx, dh_prev, dc_prev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn logistic(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    // gate-by-gate evaluation with separate per-gate matrices
    fn reference(
        x: &[f64],
        h: &[f64],
        c: &[f64],
        w: &[f64],
        u: &[f64],
        b: &[f64],
        hd: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let d = x.len();
        let pre = |gate: usize, k: usize| {
            let row = gate * hd + k;
            let mut z = b[row];
            for j in 0..d {
                z += w[row * d + j] * x[j];
            }
            for j in 0..hd {
                z += u[row * hd + j] * h[j];
            }
            z
        };
        let mut h_new = Vec::new();
        let mut c_new = Vec::new();
        for k in 0..hd {
            let i = logistic(pre(0, k));
            let f = logistic(pre(1, k));
            let g = pre(2, k).tanh();
            let o = logistic(pre(3, k));
            let cn = f * c[k] + i * g;
            c_new.push(cn);
            h_new.push(o * cn.tanh());
        }
        (h_new, c_new)
    }

    #[test]
    fn forward_matches_gatewise_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (d, hd) = (rng.gen_range(1..6), rng.gen_range(1..5));
            let (w, u, b) = (
                random(&mut rng, 4 * hd * d),
                random(&mut rng, 4 * hd * hd),
                random(&mut rng, 4 * hd),
            );
            let (x, h, c) = (
                random(&mut rng, d),
                random(&mut rng, hd),
                random(&mut rng, hd),
            );
            let cell = CellWeights {
                input: d,
                hidden: hd,
                w: &w,
                u: &u,
                b: &b,
            };
            cell.check();
            let step = cell.forward(&x, &h, &c);
            let (h_ref, c_ref) = reference(&x, &h, &c, &w, &u, &b, hd);
            for k in 0..hd {
                assert!((step.h[k] - h_ref[k]).abs() < 1e-12);
                assert!((step.c[k] - c_ref[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, hd) = (3, 2);
        let (w, u, b) = (
            random(&mut rng, 4 * hd * d),
            random(&mut rng, 4 * hd * hd),
            random(&mut rng, 4 * hd),
        );
        let (x, h, c) = (
            random(&mut rng, d),
            random(&mut rng, hd),
            random(&mut rng, hd),
        );
        let (dh, dc) = (random(&mut rng, hd), random(&mut rng, hd));
        // scalar objective: dh . h' + dc . c'
        let objective = |x: &[f64], h: &[f64], c: &[f64]| {
            let (hn, cn) = reference(x, h, c, &w, &u, &b, hd);
            hn.iter().zip(&dh).map(|(a, b)| a * b).sum::<f64>()
                + cn.iter().zip(&dc).map(|(a, b)| a * b).sum::<f64>()
        };
        let cell = CellWeights {
            input: d,
            hidden: hd,
            w: &w,
            u: &u,
            b: &b,
        };
        let step = cell.forward(&x, &h, &c);
        let (mut gw, mut gu, mut gb) = (vec![0.0; w.len()], vec![0.0; u.len()], vec![0.0; b.len()]);
        let (dx, dhp, dcp) = cell.backward(
            &x,
            &h,
            &c,
            &step,
            &dh,
            &dc,
            &mut CellGradients {
                w: &mut gw,
                u: &mut gu,
                b: &mut gb,
            },
        );
        let eps = 1e-6;
        let numeric = |which: usize, j: usize| {
            let (mut xp, mut hp, mut cp) = (x.clone(), h.clone(), c.clone());
            let (mut xm, mut hm, mut cm) = (x.clone(), h.clone(), c.clone());
            match which {
                0 => {
                    xp[j] += eps;
                    xm[j] -= eps;
                }
                1 => {
                    hp[j] += eps;
                    hm[j] -= eps;
                }
                _ => {
                    cp[j] += eps;
                    cm[j] -= eps;
                }
            }
            (objective(&xp, &hp, &cp) - objective(&xm, &hm, &cm)) / (2.0 * eps)
        };
        for j in 0..d {
            assert!((dx[j] - numeric(0, j)).abs() < 1e-8);
        }
        for j in 0..hd {
            assert!((dhp[j] - numeric(1, j)).abs() < 1e-8);
            assert!((dcp[j] - numeric(2, j)).abs() < 1e-8);
        }
    }
}
