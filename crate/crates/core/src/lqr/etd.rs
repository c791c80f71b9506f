//! Exponential Runge-Kutta (ETDRK4) coefficient tables.
//!
//! The stiff linear part of both the Riccati equation (`P -> A^T P + P A`) and
//! the closed-loop dynamics (`z -> A z`) is integrated exactly through the
//! phi-functions `phi_0(z) = e^z`, `phi_{k+1}(z) = (phi_k(z) - 1/k!) / z`.
//! `A` is block diagonal, so every table is a collection of small dense blocks.
//! With `A = 0` every table collapses to the classical RK4 weights.

use nalgebra::DMatrix;

/// Coefficient operators of one ETDRK4 step of size `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub(crate) enum Op {
    /// `exp(L h/2)`
    HalfExp = 0,
    /// `h/2 phi_1(L h/2)`
    HalfPhi1 = 1,
    /// `exp(L h)`
    FullExp = 2,
    /// `h (phi_1 - 3 phi_2 + 4 phi_3)(L h)`
    W1 = 3,
    /// `h (2 phi_2 - 4 phi_3)(L h)`
    W2 = 4,
    /// `h (4 phi_3 - phi_2)(L h)`
    W3 = 5,
}

const N_OPS: usize = 6;

/// `[phi_0, phi_1, phi_2, phi_3]` of `h m`, read off the exponential of the
/// augmented matrix `[[h m, I, 0, 0], [0, 0, I, 0], [0, 0, 0, I], [0, 0, 0, 0]]`.
pub(crate) fn phi_functions(m: &DMatrix<f64>, h: f64) -> [DMatrix<f64>; 4] {
    let d = m.nrows();
    let mut aug = DMatrix::zeros(4 * d, 4 * d);
    aug.view_mut((0, 0), (d, d)).copy_from(&(m * h));
    for k in 0..3 {
        for i in 0..d {
            aug[(k * d + i, (k + 1) * d + i)] = 1.0;
        }
    }
    let e = aug.exp();
    std::array::from_fn(|k| e.view((0, k * d), (d, d)).into_owned())
}

/// The six ETDRK4 operators for generator `m` and step `h`, each `d x d`.
fn etdrk4_ops(m: &DMatrix<f64>, h: f64) -> [DMatrix<f64>; N_OPS] {
    let [half_exp, half_phi1, _, _] = phi_functions(m, 0.5 * h);
    let [full_exp, p1, p2, p3] = phi_functions(m, h);
    [
        half_exp,
        half_phi1 * (0.5 * h),
        full_exp,
        (&p1 - &p2 * 3.0 + &p3 * 4.0) * h,
        (&p2 * 2.0 - &p3 * 4.0) * h,
        (&p3 * 4.0 - &p2) * h,
    ]
}

fn flatten(ops: [DMatrix<f64>; N_OPS], out: &mut Vec<f64>) {
    for op in ops {
        out.extend_from_slice(op.as_slice());
    }
}

/// Packed storage for symmetric matrices that are partitioned by index
/// groups: only the blocks `(I, J)` with `I <= J` are kept, each one
/// contiguous and column-major.
#[derive(Debug, Clone)]
pub(crate) struct PackedLayout {
    pairs: Vec<BlockPair>,
    len: usize,
}

#[derive(Debug, Clone)]
struct BlockPair {
    rows: Vec<usize>,
    cols: Vec<usize>,
    offset: usize,
    diagonal: bool,
}

impl BlockPair {
    fn dim(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Indices `[r0, r1, c0, c1]` when both groups are pairs.
    #[inline]
    fn quad(&self) -> Option<[usize; 4]> {
        match (self.rows.as_slice(), self.cols.as_slice()) {
            (&[r0, r1], &[c0, c1]) => Some([r0, r1, c0, c1]),
            _ => None,
        }
    }
}

impl PackedLayout {
    pub(crate) fn new(groups: &[Vec<usize>]) -> Self {
        let mut pairs = Vec::new();
        let mut len = 0;
        for (gi, rows) in groups.iter().enumerate() {
            for (gj, cols) in groups.iter().enumerate().skip(gi) {
                pairs.push(BlockPair {
                    rows: rows.clone(),
                    cols: cols.clone(),
                    offset: len,
                    diagonal: gi == gj,
                });
                len += rows.len() * cols.len();
            }
        }
        Self { pairs, len }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn pack(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for p in &self.pairs {
            let r = p.rows.len();
            for (ci, &col) in p.cols.iter().enumerate() {
                for (ri, &row) in p.rows.iter().enumerate() {
                    out[p.offset + ri + ci * r] = m[(row, col)];
                }
            }
        }
        out
    }

    pub(crate) fn unpack_into(&self, packed: &[f64], out: &mut DMatrix<f64>) {
        for p in &self.pairs {
            let r = p.rows.len();
            for (ci, &col) in p.cols.iter().enumerate() {
                for (ri, &row) in p.rows.iter().enumerate() {
                    let v = packed[p.offset + ri + ci * r];
                    out[(row, col)] = v;
                    out[(col, row)] = v;
                }
            }
        }
    }

    /// `y = P x`
    pub(crate) fn matvec(&self, packed: &[f64], x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for p in &self.pairs {
            if let Some([r0, r1, c0, c1]) = p.quad() {
                let b: &[f64; 4] = packed[p.offset..p.offset + 4].try_into().unwrap();
                let (xr0, xr1, xc0, xc1) = (x[r0], x[r1], x[c0], x[c1]);
                y[r0] += b[0] * xc0 + b[2] * xc1;
                y[r1] += b[1] * xc0 + b[3] * xc1;
                if !p.diagonal {
                    y[c0] += b[0] * xr0 + b[1] * xr1;
                    y[c1] += b[2] * xr0 + b[3] * xr1;
                }
                continue;
            }
            let r = p.rows.len();
            for (ci, &col) in p.cols.iter().enumerate() {
                let block_col = &packed[p.offset + ci * r..p.offset + (ci + 1) * r];
                let xc = x[col];
                let mut acc = 0.0;
                for (&row, &v) in p.rows.iter().zip(block_col) {
                    y[row] += v * xc;
                    acc += v * x[row];
                }
                if !p.diagonal {
                    y[col] += acc;
                }
            }
        }
    }

    /// `out = base + scale * w w^T`
    pub(crate) fn rank_one(&self, base: &[f64], scale: f64, w: &[f64], out: &mut [f64]) {
        for p in &self.pairs {
            if let Some([r0, r1, c0, c1]) = p.quad() {
                let k = p.offset;
                let (a0, a1) = (scale * w[r0], scale * w[r1]);
                let (wc0, wc1) = (w[c0], w[c1]);
                out[k] = base[k] + a0 * wc0;
                out[k + 1] = base[k + 1] + a1 * wc0;
                out[k + 2] = base[k + 2] + a0 * wc1;
                out[k + 3] = base[k + 3] + a1 * wc1;
                continue;
            }
            let r = p.rows.len();
            for (ci, &col) in p.cols.iter().enumerate() {
                let wc = scale * w[col];
                for (ri, &row) in p.rows.iter().enumerate() {
                    let k = p.offset + ri + ci * r;
                    out[k] = base[k] + wc * w[row];
                }
            }
        }
    }

    /// Averages the mirrored entries of the diagonal blocks.
    pub(crate) fn symmetrize(&self, packed: &mut [f64]) {
        for p in self.pairs.iter().filter(|p| p.diagonal) {
            let r = p.rows.len();
            for ci in 0..r {
                for ri in 0..ci {
                    let (a, b) = (p.offset + ri + ci * r, p.offset + ci + ri * r);
                    let m = 0.5 * (packed[a] + packed[b]);
                    packed[a] = m;
                    packed[b] = m;
                }
            }
        }
    }
}

/// ETDRK4 tables for the Lyapunov generator `P -> A^T P + P A` acting on
/// symmetric matrices in [`PackedLayout`] form.
#[derive(Debug, Clone)]
pub(crate) struct LyapunovEtd {
    layout: PackedLayout,
    /// Per block pair: the six operators, each `d x d` column-major.
    coeffs: Vec<f64>,
}

impl LyapunovEtd {
    pub(crate) fn new(a: &DMatrix<f64>, groups: &[Vec<usize>], h: f64) -> Self {
        let layout = PackedLayout::new(groups);
        let mut coeffs = Vec::new();
        for p in &layout.pairs {
            let a_i = a.select_rows(&p.rows).select_columns(&p.rows);
            let a_j = a.select_rows(&p.cols).select_columns(&p.cols);
            let (r, c) = (p.rows.len(), p.cols.len());
            // vec(A_i^T X + X A_j) = (I_c (x) A_i^T + A_j^T (x) I_r) vec(X)
            let k = DMatrix::identity(c, c).kronecker(&a_i.transpose())
                + a_j.transpose().kronecker(&DMatrix::identity(r, r));
            flatten(etdrk4_ops(&k, h), &mut coeffs);
        }
        Self { layout, coeffs }
    }

    pub(crate) fn layout(&self) -> &PackedLayout {
        &self.layout
    }

    /// `out = sum_k op_k(x_k)` on packed symmetric matrices.
    pub(crate) fn apply(&self, out: &mut [f64], terms: &[(Op, &[f64])]) {
        let mut coeff_base = 0;
        for p in &self.layout.pairs {
            let d = p.dim();
            let block = p.offset..p.offset + d;
            if d == 4 {
                let mut acc = [0.0; 4];
                for (op, x) in terms {
                    let base = coeff_base + (*op as usize) * 16;
                    let m: &[f64; 16] = self.coeffs[base..base + 16].try_into().unwrap();
                    let x: &[f64; 4] = x[block.clone()].try_into().unwrap();
                    for j in 0..4 {
                        for i in 0..4 {
                            acc[i] += m[i + 4 * j] * x[j];
                        }
                    }
                }
                out[block].copy_from_slice(&acc);
            } else {
                let o = &mut out[block.clone()];
                o.fill(0.0);
                for (op, x) in terms {
                    let base = coeff_base + (*op as usize) * d * d;
                    let m = &self.coeffs[base..base + d * d];
                    for (j, &xj) in x[block.clone()].iter().enumerate() {
                        for (oi, &mij) in o.iter_mut().zip(&m[j * d..(j + 1) * d]) {
                            *oi += mij * xj;
                        }
                    }
                }
            }
            coeff_base += N_OPS * d * d;
        }
    }
}

/// ETDRK4 tables for `z -> A z` acting on vectors.
#[derive(Debug, Clone)]
pub(crate) struct VectorEtd {
    groups: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    coeffs: Vec<f64>,
}

impl VectorEtd {
    pub(crate) fn new(a: &DMatrix<f64>, groups: &[Vec<usize>], h: f64) -> Self {
        let mut offsets = Vec::with_capacity(groups.len());
        let mut coeffs = Vec::new();
        for g in groups {
            let block = a.select_rows(g).select_columns(g);
            offsets.push(coeffs.len());
            flatten(etdrk4_ops(&block, h), &mut coeffs);
        }
        Self {
            groups: groups.to_vec(),
            offsets,
            coeffs,
        }
    }

    /// `out = sum_k op_k(x_k)`.
    pub(crate) fn apply(&self, out: &mut [f64], terms: &[(Op, &[f64])]) {
        for (g, &offset) in self.groups.iter().zip(&self.offsets) {
            let d = g.len();
            for (ri, &row) in g.iter().enumerate() {
                let mut s = 0.0;
                for (op, x) in terms {
                    let base = offset + (*op as usize) * d * d;
                    for (ci, &col) in g.iter().enumerate() {
                        s += self.coeffs[base + ri + ci * d] * x[col];
                    }
                }
                out[row] = s;
            }
        }
    }
}
