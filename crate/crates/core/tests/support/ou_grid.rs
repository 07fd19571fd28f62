//! Dense-grid transfer operator for the scalar chain
//! `x' = e^{−a}(x + b ξ)` with trapezoid Feynman-Kac weights
//! `exp(dt (V(x) + V(x'))/2)`, the one-mode linear reduction of the
//! integrator. Used as an independent oracle.

#![allow(dead_code)]

pub struct OuGrid {
    pub x: Vec<f64>,
    pub dx: f64,
    /// `M` of one step, row-major: `M[i][j] = e^{dtV_i/2} p(x_i → x_j) dx e^{dtV_j/2}`.
    pub step: Vec<f64>,
    pub dt: f64,
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let (row_b, row_c) = (&b[k * n..(k + 1) * n], &mut c[i * n..(i + 1) * n]);
            for (cj, bj) in row_c.iter_mut().zip(row_b) {
                *cj += aik * bj;
            }
        }
    }
    c
}

impl OuGrid {
    /// `decay = e^{−a}`, `b` the increment scale, `n` grid points over
    /// `±width` stationary standard deviations.
    pub fn new(decay: f64, b: f64, dt: f64, v: impl Fn(f64) -> f64, n: usize, width: f64) -> Self {
        let var_st = decay * decay * b * b / (1.0 - decay * decay);
        let half = width * var_st.sqrt();
        let dx = 2.0 * half / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| -half + i as f64 * dx).collect();
        let s2 = decay * decay * b * b;
        let norm = dx / (std::f64::consts::TAU * s2).sqrt();
        let half_w: Vec<f64> = x.iter().map(|&xi| (0.5 * dt * v(xi)).exp()).collect();
        let mut step = vec![0.0; n * n];
        for i in 0..n {
            let mean = decay * x[i];
            for j in 0..n {
                let d = x[j] - mean;
                step[i * n + j] = half_w[i] * norm * (-d * d / (2.0 * s2)).exp() * half_w[j];
            }
        }
        Self { x, dx, step, dt }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `M^k` together with a log scale: the true power is `e^{scale} · M^k`.
    pub fn power(&self, k: usize) -> (Vec<f64>, f64) {
        let n = self.n();
        let mut result: Option<(Vec<f64>, f64)> = None;
        let mut base = (self.step.clone(), 0.0);
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some((r, s)) => rescale(matmul(&r, &base.0, n), s + base.1),
                });
            }
            e >>= 1;
            if e > 0 {
                base = rescale(matmul(&base.0, &base.0, n), 2.0 * base.1);
            }
        }
        result.unwrap_or_else(|| {
            let mut id = vec![0.0; n * n];
            for i in 0..n {
                id[i * n + i] = 1.0;
            }
            (id, 0.0)
        })
    }

    /// `(M^k 1)(x_i)` on the grid.
    pub fn propagate_one(&self, k: usize) -> Vec<f64> {
        let n = self.n();
        let (p, s) = self.power(k);
        (0..n)
            .map(|i| p[i * n..(i + 1) * n].iter().sum::<f64>() * s.exp())
            .collect()
    }

    /// Principal eigen-triple of `M^k`: `(λ per unit time, left eigenvector as
    /// probability weights, right eigenvector normalized by ⟨left, right⟩ = 1)`.
    pub fn principal(&self, k: usize, iters: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let (p, s) = self.power(k);
        let mut r = vec![1.0; n];
        let mut l = vec![1.0 / n as f64; n];
        let mut rho = 0.0;
        for _ in 0..iters {
            let nr: Vec<f64> = (0..n).map(|i| p[i * n..(i + 1) * n].iter().zip(&r).map(|(a, b)| a * b).sum()).collect();
            let norm = nr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let old = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            rho = norm / old;
            r = nr.iter().map(|v| v / norm).collect();
            let mut nl = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    nl[j] += l[i] * p[i * n + j];
                }
            }
            let tot: f64 = nl.iter().sum();
            l = nl.iter().map(|v| v / tot).collect();
        }
        let pair: f64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
        let r: Vec<f64> = r.iter().map(|v| v / pair).collect();
        let lambda = (rho.ln() + s) / (k as f64 * self.dt);
        (lambda, l, r)
    }

    /// Linear interpolation of grid values at `x`.
    pub fn interp(&self, f: &[f64], x: f64) -> f64 {
        let pos = (x - self.x[0]) / self.dx;
        let i = (pos.floor().max(0.0) as usize).min(self.n() - 2);
        let t = pos - i as f64;
        f[i] * (1.0 - t) + f[i + 1] * t
    }
}

fn rescale(m: Vec<f64>, scale: f64) -> (Vec<f64>, f64) {
    let max = m.iter().copied().fold(0.0f64, f64::max);
    if max == 0.0 {
        return (m, scale);
    }
    (m.iter().map(|v| v / max).collect(), scale + max.ln())
}
