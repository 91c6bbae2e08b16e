//! Scaled KKT systems of the interior point method.
//!
//! The system
//!
//! ```text
//! [ 0   A'  G'   ] [x]   [r1]
//! [ A   0   0    ] [y] = [r2]
//! [ G   0  -W^2  ] [z]   [r3]
//! ```
//!
//! is reduced to normal equations in `x` with `H = G'W^{-2}G + A'A`, followed
//! by a Schur complement on the (few) equality rows. Variables that only
//! occur in nonnegative rows, and never share a row with one another, have a
//! diagonal block in `H` and are eliminated before the dense factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cones::{cone_margin, nonneg_step, soc_division, soc_product, soc_step, Cone, SocScaling};
use super::sparse::{inf_norm, CsrMatrix};

const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BlockKind {
    NonNeg,
    Soc,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub kind: BlockKind,
    pub start: usize,
    pub dim: usize,
}

impl Block {
    fn cone(&self) -> Cone {
        match self.kind {
            BlockKind::NonNeg => Cone::NonNeg(self.dim),
            BlockKind::Soc => Cone::Soc(self.dim),
        }
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.dim
    }
}

/// Cone structure of the inequality rows.
#[derive(Debug, Clone)]
pub(crate) struct ConeLayout {
    pub blocks: Vec<Block>,
    pub m: usize,
    soc_blocks: Vec<usize>,
}

/// NT scaling of all inequality rows.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    /// `sqrt(s_r / z_r)` on nonnegative rows (unused on cone rows).
    pub w: Vec<f64>,
    pub soc: Vec<SocScaling>,
}

impl ConeLayout {
    pub fn new(blocks: Vec<Block>) -> Self {
        let m = blocks.last().map_or(0, |b| b.start + b.dim);
        let soc_blocks = blocks.iter().enumerate().filter(|(_, b)| b.kind == BlockKind::Soc).map(|(k, _)| k).collect();
        Self { blocks, m, soc_blocks }
    }

    /// Barrier degree: one per nonnegative row plus one per cone block.
    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| if b.kind == BlockKind::NonNeg { b.dim } else { 1 }).sum()
    }

    pub fn identity_element(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.m];
        for b in &self.blocks {
            match b.kind {
                BlockKind::NonNeg => e[b.range()].iter_mut().for_each(|v| *v = 1.0),
                BlockKind::Soc => e[b.start] = 1.0,
            }
        }
        e
    }

    /// Smallest interiority margin over all blocks.
    pub fn margin(&self, v: &[f64]) -> f64 {
        self.blocks.iter().map(|b| cone_margin(b.cone(), &v[b.range()])).fold(f64::INFINITY, f64::min)
    }

    /// Largest step (capped at `cap`) keeping `x + alpha d` in the cone.
    pub fn step(&self, x: &[f64], d: &[f64], cap: f64) -> f64 {
        let mut alpha = cap;
        for b in &self.blocks {
            let r = b.range();
            alpha = match b.kind {
                BlockKind::NonNeg => nonneg_step(&x[r.clone()], &d[r], alpha),
                BlockKind::Soc => soc_step(&x[r.clone()], &d[r], alpha),
            };
        }
        alpha
    }

    pub fn identity_scaling(&self) -> Scaling {
        Scaling {
            w: vec![1.0; self.m],
            soc: self.soc_blocks.iter().map(|&k| SocScaling::identity(self.blocks[k].dim)).collect(),
        }
    }

    pub fn scaling(&self, s: &[f64], z: &[f64]) -> Option<Scaling> {
        let mut w = vec![1.0; self.m];
        let mut soc = Vec::with_capacity(self.soc_blocks.len());
        for b in &self.blocks {
            let r = b.range();
            match b.kind {
                BlockKind::NonNeg => {
                    for i in r {
                        if !(s[i] > 0.0 && z[i] > 0.0) {
                            return None;
                        }
                        w[i] = (s[i] / z[i]).sqrt();
                    }
                }
                BlockKind::Soc => soc.push(SocScaling::new(&s[r.clone()], &z[r])?),
            }
        }
        Some(Scaling { w, soc })
    }

    fn for_each_block(
        &self,
        sc: &Scaling,
        v: &[f64],
        mut nonneg: impl FnMut(usize, f64, f64) -> f64,
        mut soc: impl FnMut(&SocScaling, &[f64], &mut [f64]),
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        let mut k = 0;
        for b in &self.blocks {
            let r = b.range();
            match b.kind {
                BlockKind::NonNeg => {
                    for i in r {
                        out[i] = nonneg(i, sc.w[i], v[i]);
                    }
                }
                BlockKind::Soc => {
                    soc(&sc.soc[k], &v[r.clone()], &mut out[r]);
                    k += 1;
                }
            }
        }
        out
    }

    /// `W v`, or `W^{-1} v` when `inverse`.
    pub fn apply_w(&self, sc: &Scaling, v: &[f64], inverse: bool) -> Vec<f64> {
        self.for_each_block(sc, v, |_, w, x| if inverse { x / w } else { x * w }, |s, x, out| s.apply(x, inverse, out))
    }

    pub fn apply_w_sq(&self, sc: &Scaling, v: &[f64]) -> Vec<f64> {
        self.for_each_block(sc, v, |_, w, x| x * w * w, |s, x, out| s.apply_sq(x, out))
    }

    pub fn apply_w_inv_sq(&self, sc: &Scaling, v: &[f64]) -> Vec<f64> {
        self.for_each_block(sc, v, |_, w, x| x / (w * w), |s, x, out| s.apply_inv_sq(x, out))
    }

    /// Jordan product `u o v`.
    pub fn product(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for b in &self.blocks {
            let r = b.range();
            match b.kind {
                BlockKind::NonNeg => r.for_each(|i| out[i] = u[i] * v[i]),
                BlockKind::Soc => soc_product(&u[r.clone()], &v[r.clone()], &mut out[r]),
            }
        }
        out
    }

    /// Jordan division `lambda \ v`.
    pub fn division(&self, lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for b in &self.blocks {
            let r = b.range();
            match b.kind {
                BlockKind::NonNeg => r.for_each(|i| out[i] = v[i] / lambda[i]),
                BlockKind::Soc => soc_division(&lambda[r.clone()], &v[r.clone()], &mut out[r]),
            }
        }
        out
    }
}

struct SocCache {
    soc_index: usize,
    /// Dense positions of the variables occurring in the block.
    cols: Vec<usize>,
    /// The block rows restricted to `cols`.
    local: DMatrix<f64>,
    /// `local' local`.
    ata: DMatrix<f64>,
}

pub(crate) struct Kkt {
    n: usize,
    pub layout: ConeLayout,
    g: CsrMatrix,
    a_eq: CsrMatrix,
    dense_pos: Vec<usize>,
    n_dense: usize,
    /// Dense part of each nonnegative row, sorted by position.
    row_dense: Vec<Vec<(usize, f64)>>,
    /// Separable variable (index into `sep_rows`) and coefficient of each nonnegative row.
    row_sep: Vec<Option<(usize, f64)>>,
    sep_rows: Vec<Vec<(usize, f64)>>,
    sep_vars: Vec<usize>,
    eq_gram: DMatrix<f64>,
    eq_dense: DMatrix<f64>,
    soc_cache: Vec<SocCache>,
    // Factorization state.
    d: Vec<f64>,
    hs: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    hinv_at: DMatrix<f64>,
    s_chol: Option<Cholesky<f64, Dyn>>,
}

const NONE: usize = usize::MAX;

impl Kkt {
    pub fn new(n: usize, a_eq: CsrMatrix, g: CsrMatrix, layout: ConeLayout) -> Self {
        let m = layout.m;
        let mut nonneg_row = vec![false; m];
        for b in &layout.blocks {
            if b.kind == BlockKind::NonNeg {
                b.range().for_each(|i| nonneg_row[i] = true);
            }
        }

        // Separable candidates: occur only in nonnegative rows, never two in one row.
        let mut occurs = vec![0usize; n];
        let mut disqualified = vec![false; n];
        for r in 0..a_eq.nrows() {
            a_eq.row(r).0.iter().for_each(|&c| disqualified[c] = true);
        }
        for r in 0..m {
            for &c in g.row(r).0 {
                occurs[c] += 1;
                if !nonneg_row[r] {
                    disqualified[c] = true;
                }
            }
        }
        let mut candidate: Vec<bool> = (0..n).map(|j| occurs[j] > 0 && !disqualified[j]).collect();
        for r in 0..m {
            let cols: Vec<usize> = g.row(r).0.iter().copied().filter(|&c| candidate[c]).collect();
            if cols.len() > 1 {
                // Keep the first, demote the rest.
                cols[1..].iter().for_each(|&c| candidate[c] = false);
            }
        }
        // Demotion can leave a row with zero candidates but never with two, so one pass suffices.

        let mut dense_pos = vec![NONE; n];
        let mut sep_of = vec![NONE; n];
        let mut sep_vars = Vec::new();
        let mut n_dense = 0;
        for j in 0..n {
            if candidate[j] {
                sep_of[j] = sep_vars.len();
                sep_vars.push(j);
            } else {
                dense_pos[j] = n_dense;
                n_dense += 1;
            }
        }

        let mut row_dense = vec![Vec::new(); m];
        let mut row_sep = vec![None; m];
        let mut sep_rows = vec![Vec::new(); sep_vars.len()];
        for r in 0..m {
            if !nonneg_row[r] {
                continue;
            }
            let (cols, vals) = g.row(r);
            let mut entries = Vec::with_capacity(cols.len());
            for (&c, &v) in cols.iter().zip(vals) {
                if sep_of[c] != NONE {
                    row_sep[r] = Some((sep_of[c], v));
                    sep_rows[sep_of[c]].push((r, v));
                } else {
                    entries.push((dense_pos[c], v));
                }
            }
            entries.sort_by_key(|e| e.0);
            row_dense[r] = entries;
        }

        let m_eq = a_eq.nrows();
        let mut eq_dense = DMatrix::zeros(m_eq, n_dense);
        for r in 0..m_eq {
            let (cols, vals) = a_eq.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                eq_dense[(r, dense_pos[c])] = v;
            }
        }
        let eq_gram = eq_dense.tr_mul(&eq_dense);

        let mut soc_cache = Vec::new();
        let mut soc_index = 0;
        for b in &layout.blocks {
            if b.kind != BlockKind::Soc {
                continue;
            }
            let mut cols: Vec<usize> = b.range().flat_map(|r| g.row(r).0.iter().map(|&c| dense_pos[c])).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut local = DMatrix::zeros(b.dim, cols.len());
            for (i, r) in b.range().enumerate() {
                let (cs, vs) = g.row(r);
                for (&c, &v) in cs.iter().zip(vs) {
                    let pos = cols.binary_search(&dense_pos[c]).unwrap();
                    local[(i, pos)] = v;
                }
            }
            let ata = local.tr_mul(&local);
            soc_cache.push(SocCache { soc_index, cols, local, ata });
            soc_index += 1;
        }

        let n_sep = sep_vars.len();
        Self {
            n,
            layout,
            g,
            a_eq,
            dense_pos,
            n_dense,
            row_dense,
            row_sep,
            sep_rows,
            sep_vars,
            eq_gram,
            eq_dense,
            soc_cache,
            d: vec![0.0; m],
            hs: vec![0.0; n_sep],
            chol: None,
            hinv_at: DMatrix::zeros(0, 0),
            s_chol: None,
        }
    }

    #[cfg(test)]
    pub fn n_separable(&self) -> usize {
        self.sep_vars.len()
    }

    /// Builds and factors the reduced normal matrix for the scaling `sc`.
    pub fn factor(&mut self, sc: &Scaling) -> bool {
        let nd = self.n_dense;
        for b in &self.layout.blocks {
            if b.kind == BlockKind::NonNeg {
                for r in b.range() {
                    self.d[r] = 1.0 / (sc.w[r] * sc.w[r]);
                }
            }
        }
        let mut h = self.eq_gram.clone();
        {
            let hs = h.as_mut_slice();
            for r in 0..self.layout.m {
                let entries = &self.row_dense[r];
                if entries.is_empty() {
                    continue;
                }
                let dr = self.d[r];
                for (a, &(pa, va)) in entries.iter().enumerate() {
                    let f = dr * va;
                    let col = &mut hs[pa * nd..];
                    for &(pb, vb) in &entries[a..] {
                        col[pb] += f * vb;
                    }
                }
            }
            // Eliminate separable variables.
            let mut scratch = vec![0.0; nd];
            let mut touched: Vec<usize> = Vec::new();
            for (j, rows) in self.sep_rows.iter().enumerate() {
                let mut hjj = 0.0;
                for &(r, a) in rows {
                    let f = self.d[r] * a;
                    hjj += f * a;
                    for &(p, v) in &self.row_dense[r] {
                        if scratch[p] == 0.0 {
                            touched.push(p);
                        }
                        scratch[p] += f * v;
                        if scratch[p] == 0.0 {
                            scratch[p] = f64::MIN_POSITIVE;
                        }
                    }
                }
                self.hs[j] = hjj;
                touched.sort_unstable();
                for (a, &pa) in touched.iter().enumerate() {
                    let f = scratch[pa] / hjj;
                    let col = &mut hs[pa * nd..];
                    for &pb in &touched[a..] {
                        col[pb] -= f * scratch[pb];
                    }
                }
                for &p in &touched {
                    scratch[p] = 0.0;
                }
                touched.clear();
            }
        }
        for cache in &self.soc_cache {
            let s = &sc.soc[cache.soc_index];
            let inv_e2 = 1.0 / (s.eta * s.eta);
            let mut u = DVector::from_column_slice(&s.w);
            for k in 1..u.len() {
                u[k] = -u[k];
            }
            let p = cache.local.tr_mul(&u);
            let g0 = cache.local.row(0).transpose();
            for (a, &pa) in cache.cols.iter().enumerate() {
                for (bidx, &pb) in cache.cols.iter().enumerate().skip(a) {
                    let v = cache.ata[(bidx, a)] + 2.0 * p[bidx] * p[a] - 2.0 * g0[bidx] * g0[a];
                    // Lower triangle: row pb >= column pa.
                    h[(pb, pa)] += inv_e2 * v;
                }
            }
        }
        // Mirror the lower triangle.
        for j in 0..nd {
            for i in (j + 1)..nd {
                h[(j, i)] = h[(i, j)];
            }
        }
        let max_diag = (0..nd).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
        let mut reg = 1e-11 * (1.0 + max_diag);
        for _ in 0..6 {
            let mut hr = h.clone();
            for i in 0..nd {
                hr[(i, i)] += reg;
            }
            if let Some(ch) = Cholesky::new(hr) {
                self.chol = Some(ch);
                return self.factor_schur();
            }
            reg *= 100.0;
        }
        self.chol = None;
        false
    }

    fn factor_schur(&mut self) -> bool {
        let m_eq = self.eq_dense.nrows();
        if m_eq == 0 {
            self.s_chol = None;
            return true;
        }
        let chol = self.chol.as_ref().unwrap();
        self.hinv_at = chol.solve(&self.eq_dense.transpose());
        let mut s = &self.eq_dense * &self.hinv_at;
        let max_diag = (0..m_eq).map(|i| s[(i, i)].abs()).fold(0.0, f64::max);
        let mut reg = 1e-13 * (1.0 + max_diag);
        for _ in 0..6 {
            let mut sr = s.clone();
            for i in 0..m_eq {
                sr[(i, i)] += reg;
            }
            if let Some(ch) = Cholesky::new(sr) {
                self.s_chol = Some(ch);
                return true;
            }
            reg *= 100.0;
        }
        s.fill(0.0);
        false
    }

    fn solve_once(&self, sc: &Scaling, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let t3 = self.layout.apply_w_inv_sq(sc, r3);
        let mut rhs = r1.to_vec();
        self.g.tmul_add(&t3, &mut rhs);
        self.a_eq.tmul_add(r2, &mut rhs);

        // Reduce onto the dense variables.
        let ws: Vec<f64> = self.sep_vars.iter().enumerate().map(|(j, &v)| rhs[v] / self.hs[j]).collect();
        let mut rd = DVector::zeros(self.n_dense);
        for (j, &p) in self.dense_pos.iter().enumerate() {
            if p != NONE {
                rd[p] = rhs[j];
            }
        }
        for r in 0..self.layout.m {
            if let Some((j, a)) = self.row_sep[r] {
                let coef = self.d[r] * a * ws[j];
                for &(p, v) in &self.row_dense[r] {
                    rd[p] -= coef * v;
                }
            }
        }

        let chol = self.chol.as_ref().expect("factor before solve");
        let (xd, y) = match &self.s_chol {
            None => (chol.solve(&rd), DVector::zeros(0)),
            Some(sch) => {
                let hinv_rd = chol.solve(&rd);
                let r2v = DVector::from_column_slice(r2);
                let y = sch.solve(&(&self.eq_dense * &hinv_rd - r2v));
                let xd = hinv_rd - &self.hinv_at * &y;
                (xd, y)
            }
        };

        let mut x = vec![0.0; self.n];
        for (j, &p) in self.dense_pos.iter().enumerate() {
            if p != NONE {
                x[j] = xd[p];
            }
        }
        for (j, &v) in self.sep_vars.iter().enumerate() {
            let mut acc = rhs[v];
            for &(r, a) in &self.sep_rows[j] {
                let dot: f64 = self.row_dense[r].iter().map(|&(p, val)| val * xd[p]).sum();
                acc -= self.d[r] * a * dot;
            }
            x[v] = acc / self.hs[j];
        }

        let mut gx_r3 = self.g.mul_vec(&x);
        gx_r3.iter_mut().zip(r3).for_each(|(a, b)| *a -= b);
        let z = self.layout.apply_w_inv_sq(sc, &gx_r3);
        (x, y.as_slice().to_vec(), z)
    }

    /// `K [x; y; z]`.
    fn apply(&self, sc: &Scaling, x: &[f64], y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut k1 = self.g.tmul_vec(z);
        self.a_eq.tmul_add(y, &mut k1);
        let k2 = self.a_eq.mul_vec(x);
        let mut k3 = self.g.mul_vec(x);
        let w2z = self.layout.apply_w_sq(sc, z);
        k3.iter_mut().zip(&w2z).for_each(|(a, b)| *a -= b);
        (k1, k2, k3)
    }

    /// Solves the KKT system with iterative refinement.
    pub fn solve(&self, sc: &Scaling, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut x, mut y, mut z) = self.solve_once(sc, r1, r2, r3);
        let scale = 1.0 + inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3));
        for _ in 0..REFINEMENT_STEPS {
            let (k1, k2, k3) = self.apply(sc, &x, &y, &z);
            let e1: Vec<f64> = r1.iter().zip(&k1).map(|(a, b)| a - b).collect();
            let e2: Vec<f64> = r2.iter().zip(&k2).map(|(a, b)| a - b).collect();
            let e3: Vec<f64> = r3.iter().zip(&k3).map(|(a, b)| a - b).collect();
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            if err <= 1e-14 * scale {
                break;
            }
            let (dx, dy, dz) = self.solve_once(sc, &e1, &e2, &e3);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            y.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
            z.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        }
        (x, y, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior(rng: &mut ChaCha8Rng, layout: &ConeLayout) -> Vec<f64> {
        let mut v: Vec<f64> = (0..layout.m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for b in &layout.blocks {
            match b.kind {
                BlockKind::NonNeg => b.range().for_each(|i| v[i] = v[i].abs() + 0.1),
                BlockKind::Soc => {
                    let n: f64 = v[b.start + 1..b.start + b.dim].iter().map(|x| x * x).sum::<f64>().sqrt();
                    v[b.start] = n + rng.random_range(0.05..1.0);
                }
            }
        }
        v
    }

    /// Dense oracle: assemble the full KKT matrix and solve it by LU.
    fn dense_kkt_solve(a_eq: &CsrMatrix, g: &CsrMatrix, w2: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        let (n, me, m) = (g.ncols(), a_eq.nrows(), g.nrows());
        let tot = n + me + m;
        let mut k = DMatrix::zeros(tot, tot);
        let (ad, gd) = (a_eq.to_dense(), g.to_dense());
        for i in 0..me {
            for j in 0..n {
                k[(n + i, j)] = ad[i][j];
                k[(j, n + i)] = ad[i][j];
            }
        }
        for i in 0..m {
            for j in 0..n {
                k[(n + me + i, j)] = gd[i][j];
                k[(j, n + me + i)] = gd[i][j];
            }
            for j in 0..m {
                k[(n + me + i, n + me + j)] = -w2[(i, j)];
            }
        }
        k.lu().solve(r).unwrap()
    }

    #[test]
    fn reduced_solve_matches_dense_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // Variables 0..4 dense, 5..7 separable slacks used by nonnegative rows only.
        let n = 8;
        let blocks = vec![
            Block { kind: BlockKind::NonNeg, start: 0, dim: 6 },
            Block { kind: BlockKind::Soc, start: 6, dim: 4 },
            Block { kind: BlockKind::NonNeg, start: 10, dim: 2 },
        ];
        let layout = ConeLayout::new(blocks);
        let mut trip = Vec::new();
        for r in 0..6 {
            for c in 0..5 {
                trip.push((r, c, rng.random_range(-1.0..1.0)));
            }
            trip.push((r, 5 + r / 2, if r % 2 == 0 { -1.0 } else { -0.7 }));
        }
        for r in 6..12 {
            for c in 0..5 {
                trip.push((r, c, rng.random_range(-1.0..1.0)));
            }
        }
        let g = CsrMatrix::from_triplets(12, n, &trip);
        let a_eq = CsrMatrix::from_triplets(1, n, &[(0, 0, 1.0), (0, 3, 2.0)]);
        let mut kkt = Kkt::new(n, a_eq.clone(), g.clone(), layout.clone());
        assert_eq!(kkt.n_separable(), 3);

        let s = interior(&mut rng, &layout);
        let z = interior(&mut rng, &layout);
        let sc = layout.scaling(&s, &z).unwrap();
        assert!(kkt.factor(&sc));

        let mut w2 = DMatrix::zeros(12, 12);
        for j in 0..12 {
            let mut e = vec![0.0; 12];
            e[j] = 1.0;
            let col = layout.apply_w_sq(&sc, &e);
            for i in 0..12 {
                w2[(i, j)] = col[i];
            }
        }
        let r1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2 = vec![0.3];
        let r3: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (x, y, zz) = kkt.solve(&sc, &r1, &r2, &r3);
        let mut rv = r1.clone();
        rv.extend(&r2);
        rv.extend(&r3);
        let oracle = dense_kkt_solve(&a_eq, &g, &w2, &DVector::from_vec(rv));
        let mut got = x;
        got.extend(y);
        got.extend(zz);
        for (a, b) in got.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
