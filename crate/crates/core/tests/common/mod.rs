#![allow(dead_code)]

use kshape_core::socp::CsrMatrix;
use kshape_core::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SPHERE: usize = 64;

/// Noisy parabola on [-2, 2], Gaussian kernel, ridge without intercept and
/// monotonicity on [0, 2].
pub struct ParabolaProblem {
    pub data: Dataset,
    pub objective: ObjectiveSpec,
    pub system: ConstraintSystem,
    pub spec: KernelSpec,
}

pub fn parabola(n: usize, noise: f64, sigma: f64, lambda: f64, seed: u64) -> ParabolaProblem {
    let data = kshape_core::synthetic::noisy_parabola(n, noise, seed).unwrap();
    let c = monotone_increasing(0, CompactBox::interval(0.0, 2.0).unwrap()).unwrap();
    ParabolaProblem {
        data,
        objective: ObjectiveSpec::ridge(lambda),
        system: ConstraintSystem::new(vec![c], 1, 1, BiasSet::Zero).unwrap(),
        spec: KernelSpec::gaussian(sigma).unwrap(),
    }
}

impl ParabolaProblem {
    pub fn net(&self, m: usize) -> Covering {
        Covering::uniform_count(&self.system, &self.spec, m, Norm::L2, SPHERE).unwrap()
    }

    pub fn fit(&self, m: usize, mode: Mode) -> Result<FittedModel> {
        let covering = self.net(m);
        fit(&self.data, &self.objective, &self.system, &covering, &self.spec, mode, &FitOptions::default())
    }

    /// The same objective without any shape constraint.
    pub fn fit_unconstrained(&self) -> Result<FittedModel> {
        let free = ConstraintSystem::new(Vec::new(), 1, 1, BiasSet::Zero).unwrap();
        let empty = Covering { nets: Vec::new(), norm: Norm::L2 };
        fit(&self.data, &self.objective, &free, &empty, &self.spec, Mode::Discretized, &FitOptions::default())
    }
}

/// Dense tableau simplex with Bland's rule for `min c'x, Ax <= b, x >= 0` with `b >= 0`.
pub fn simplex(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), c.len());
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    t[m][..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..n + m).collect();
    while let Some(enter) = (0..n + m).find(|&j| t[m][j] < -1e-12) {
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > 1e-12 {
                let ratio = t[i][width - 1] / t[i][enter];
                let tie = (ratio - best).abs() <= 1e-12;
                if ratio < best - 1e-12 || (tie && leave.is_some_and(|l| basis[i] < basis[l])) {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let r = leave.expect("test programs are bounded");
        let p = t[r][enter];
        t[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[enter] != 0.0 {
                let f = row[enter];
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
        basis[r] = enter;
    }
    -t[m][width - 1]
}

pub fn random_lp(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(2..=30);
    let m = rng.random_range(1..=20);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..2.0)).collect();
    a.push(vec![1.0; n]);
    b.push(10.0);
    (c, a, b)
}

/// `Ax <= b, x >= 0` as `[A; -I] x + s = [b; 0]`, `s >= 0`.
pub fn lp_as_conic(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> ConicProgram {
    let n = c.len();
    let mut rows = a.to_vec();
    let mut rhs = b.to_vec();
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = -1.0;
        rows.push(r);
        rhs.push(0.0);
    }
    let m = rows.len();
    ConicProgram::new(c.to_vec(), CsrMatrix::from_dense(&rows), rhs, vec![Cone::NonNeg(m)]).unwrap()
}

/// Central-difference stencil in every coordinate of `z` with `orders[j] <= 2`,
/// refined by three Richardson steps.
pub fn finite_difference(f: &dyn Fn(&[f64]) -> f64, z: &[f64], orders: &[u32], h: f64) -> f64 {
    let stencil = |h: f64| {
        let mut acc = 0.0;
        let mut idx = vec![0usize; z.len()];
        let choices = |o: u32| -> Vec<(f64, f64)> {
            match o {
                0 => vec![(0.0, 1.0)],
                1 => vec![(-1.0, -0.5 / h), (1.0, 0.5 / h)],
                _ => vec![(-1.0, 1.0 / (h * h)), (0.0, -2.0 / (h * h)), (1.0, 1.0 / (h * h))],
            }
        };
        let opts: Vec<Vec<(f64, f64)>> = orders.iter().map(|&o| choices(o)).collect();
        loop {
            let mut point = z.to_vec();
            let mut w = 1.0;
            for j in 0..z.len() {
                let (off, wt) = opts[j][idx[j]];
                point[j] += off * h;
                w *= wt;
            }
            acc += w * f(&point);
            let mut j = 0;
            loop {
                if j == z.len() {
                    return acc;
                }
                idx[j] += 1;
                if idx[j] < opts[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    };
    // Richardson table over h, h/2, h/4, h/8: each column removes the next even power of h.
    let mut table: Vec<f64> = (0..4).map(|k| stencil(h / f64::powi(2.0, k))).collect();
    let mut factor = 4.0;
    while table.len() > 1 {
        table = table.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    table[0]
}

/// Closed-form buffer of a Gaussian kernel for the identity operator.
pub fn eta_identity(delta: f64, sigma: f64) -> f64 {
    (2.0 * (1.0 - (-delta * delta / (2.0 * sigma * sigma)).exp())).sqrt()
}

/// Closed-form buffer of a Gaussian kernel for the first derivative in one dimension.
pub fn eta_first_derivative(delta: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let e = (-delta * delta / (2.0 * s2)).exp();
    (2.0 / s2 - 2.0 * (1.0 / s2 - delta * delta / (s2 * s2)) * e).sqrt()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
