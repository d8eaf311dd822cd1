//! Dense real tensors of order `l` over dimension `n`.
//!
//! Storage is a flat row-major buffer of `n^l` values (last index fastest).
//! Multi-indices are zero-based throughout.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Number of entries of an order-`order` tensor of dimension `dim`, or an
/// error when it overflows `usize`.
pub fn tensor_len(dim: usize, order: usize) -> Result<usize> {
    let mut len: usize = 1;
    for _ in 0..order {
        len = len.checked_mul(dim).ok_or_else(|| {
            Error::InvalidArgument(format!("{dim}^{order} overflows the address space"))
        })?;
    }
    Ok(len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.order, raw.dim, raw.data)
    }
}

impl From<DenseTensor> for RawTensor {
    fn from(t: DenseTensor) -> Self {
        RawTensor {
            order: t.order,
            dim: t.dim,
            data: t.data,
        }
    }
}

impl DenseTensor {
    pub fn new(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "tensor order must be positive".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "tensor dimension must be positive".into(),
            ));
        }
        ensure_len("tensor data", tensor_len(dim, order)?, data.len())?;
        Ok(Self { order, dim, data })
    }

    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let len = tensor_len(dim, order)?;
        Self::new(order, dim, vec![0.0; len])
    }

    /// The order-1 tensor holding `x`.
    pub fn from_vector(x: &[f64]) -> Result<Self> {
        Self::new(1, x.len(), x.to_vec())
    }

    /// The standard basis tensor with a single one at flat position `offset`.
    pub fn basis(order: usize, dim: usize, offset: usize) -> Result<Self> {
        let mut t = Self::zeros(order, dim)?;
        if offset >= t.data.len() {
            return Err(Error::InvalidArgument(format!(
                "basis offset {offset} out of range for {} entries",
                t.data.len()
            )));
        }
        t.data[offset] = 1.0;
        Ok(t)
    }

    /// Entries drawn i.i.d. from `N(0, sigma^2)`.
    pub fn gaussian<R: rand::Rng + ?Sized>(
        order: usize,
        dim: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let len = tensor_len(dim, order)?;
        let data = (0..len)
            .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        Self::new(order, dim, data)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat position of a multi-index. Panics when the index is malformed,
    /// like slice indexing.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(
            index.len(),
            self.order,
            "multi-index length must equal the order"
        );
        index.iter().fold(0, |acc, &i| {
            assert!(
                i < self.dim,
                "index {i} out of range for dimension {}",
                self.dim
            );
            acc * self.dim + i
        })
    }

    pub fn multi_index(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.order];
        for slot in index.iter_mut().rev() {
            *slot = offset % self.dim;
            offset /= self.dim;
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        ensure_len(context, self.order, other.order)?;
        ensure_len(context, self.dim, other.dim)
    }

    /// Frobenius inner product of two tensors of identical shape.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "inner product")?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            order: self.order,
            dim: self.dim,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "tensor sum")?;
        Ok(Self {
            order: self.order,
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    /// Tensor with modes rearranged so that mode `k` of the result is mode
    /// `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        ensure_len("mode permutation", self.order, perm.len())?;
        let mut seen = vec![false; self.order];
        for &p in perm {
            if p >= self.order || seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "{perm:?} is not a permutation"
                )));
            }
            seen[p] = true;
        }
        let mut out = vec![0.0; self.data.len()];
        let mut src_index = vec![0; self.order];
        for (dst, slot) in out.iter_mut().enumerate() {
            let dst_index = self.multi_index(dst);
            for (k, &p) in perm.iter().enumerate() {
                src_index[p] = dst_index[k];
            }
            *slot = self.data[self.offset(&src_index)];
        }
        Self::new(self.order, self.dim, out)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a ⊗ b`: entry `(i, j)` equals `a(i) * b(j)`.
pub fn outer_product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    ensure_len("outer product dimension", a.dim, b.dim)?;
    let mut data = Vec::with_capacity(a.data.len() * b.data.len());
    for &x in &a.data {
        data.extend(b.data.iter().map(|&y| x * y));
    }
    DenseTensor::new(a.order + b.order, a.dim, data)
}

/// Result of contracting modes: a scalar when every mode was contracted.
#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Scalar(f64),
    Tensor(DenseTensor),
}

impl Contraction {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Contraction::Scalar(v) => Some(*v),
            Contraction::Tensor(_) => None,
        }
    }

    pub fn tensor(&self) -> Option<&DenseTensor> {
        match self {
            Contraction::Scalar(_) => None,
            Contraction::Tensor(t) => Some(t),
        }
    }
}

/// Contracts the first `k` modes of `a` against the first `k` modes of `b`.
///
/// The result has order `order(a) + order(b) - 2k`, with the free modes of
/// `a` followed by the free modes of `b`.
pub fn multi_mode_inner(a: &DenseTensor, b: &DenseTensor, k: usize) -> Result<Contraction> {
    if k > a.order || k > b.order {
        return Err(Error::InvalidArgument(format!(
            "cannot contract {k} modes of tensors with orders {} and {}",
            a.order, b.order
        )));
    }
    ensure_len("contracted mode dimension", a.dim, b.dim)?;
    let n = a.dim;
    let shared = tensor_len(n, k)?;
    let a_free = a.data.len() / shared;
    let b_free = b.data.len() / shared;
    let mut out = vec![0.0; a_free * b_free];
    for s in 0..shared {
        let arow = &a.data[s * a_free..(s + 1) * a_free];
        let brow = &b.data[s * b_free..(s + 1) * b_free];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let dst = &mut out[i * b_free..(i + 1) * b_free];
            for (d, &bv) in dst.iter_mut().zip(brow) {
                *d += av * bv;
            }
        }
    }
    let order = a.order + b.order - 2 * k;
    if order == 0 {
        Ok(Contraction::Scalar(out[0]))
    } else {
        Ok(Contraction::Tensor(DenseTensor::new(order, n, out)?))
    }
}

/// `x^{⊗l}`, the symmetric rank-1 tensor with entries `x_{i1} ... x_{il}`.
pub fn rank1_power(x: &[f64], l: usize) -> Result<DenseTensor> {
    if l == 0 {
        return Err(Error::InvalidArgument(
            "rank-1 power needs order l >= 1".into(),
        ));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument(
            "rank-1 power of an empty vector".into(),
        ));
    }
    let n = x.len();
    let len = tensor_len(n, l)?;
    // factors multiplied in sorted index order, so permuted entries agree bitwise
    let mut data = Vec::with_capacity(len);
    let mut index = vec![0usize; l];
    let mut sorted = vec![0usize; l];
    for flat in 0..len {
        if flat > 0 {
            let mut k = l;
            while k > 0 {
                k -= 1;
                index[k] += 1;
                if index[k] < n {
                    break;
                }
                index[k] = 0;
            }
        }
        sorted.copy_from_slice(&index);
        for a in 1..l {
            let mut b = a;
            while b > 0 && sorted[b - 1] > sorted[b] {
                sorted.swap(b - 1, b);
                b -= 1;
            }
        }
        data.push(sorted.iter().fold(1.0, |acc, &i| acc * x[i]));
    }
    DenseTensor::new(l, n, data)
}

/// A linear map `R^in_dim -> R^rows` stored as sparse rows, used to apply a
/// matrix along one mode of a flat tensor.
#[derive(Debug, Clone)]
pub(crate) struct ModeMap {
    in_dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ModeMap {
    pub(crate) fn from_rows(in_dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert!(rows.iter().flatten().all(|&(c, _)| c < in_dim));
        Self { in_dim, rows }
    }

    pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows)
    }

    pub(crate) fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.in_dim];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                rows[j].push((i, v));
            }
        }
        Self::from_rows(self.rows.len(), rows)
    }

    pub(crate) fn out_dim(&self) -> usize {
        self.rows.len()
    }

    /// Applies the map along `mode` of a flat tensor of uniform dimension
    /// `in_dim` in modes `mode..` and `out_dim` in modes `..mode`.
    pub(crate) fn apply_mode(&self, data: &[f64], outer: usize, inner: usize) -> Vec<f64> {
        debug_assert_eq!(data.len(), outer * self.in_dim * inner);
        let out_dim = self.rows.len();
        let mut out = vec![0.0; outer * out_dim * inner];
        if inner == 1 {
            for (src, dst) in data
                .chunks_exact(self.in_dim)
                .zip(out.chunks_exact_mut(out_dim))
            {
                for (d, row) in dst.iter_mut().zip(&self.rows) {
                    *d = row.iter().map(|&(c, v)| v * src[c]).sum();
                }
            }
            return out;
        }
        for o in 0..outer {
            let src_base = o * self.in_dim * inner;
            let dst_base = o * out_dim * inner;
            for (j, row) in self.rows.iter().enumerate() {
                let dst = &mut out[dst_base + j * inner..dst_base + (j + 1) * inner];
                for &(c, v) in row {
                    let src = &data[src_base + c * inner..src_base + (c + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += v * s;
                    }
                }
            }
        }
        out
    }
}

/// Applies `map` along every mode of an order-`order` tensor whose modes all
/// have dimension `map.in_dim`.
pub(crate) fn apply_all_modes(map: &ModeMap, data: &[f64], order: usize) -> Vec<f64> {
    let mut current = data.to_vec();
    for mode in 0..order {
        let outer = map.out_dim().pow(mode as u32);
        let inner = map.in_dim.pow((order - mode - 1) as u32);
        current = map.apply_mode(&current, outer, inner);
    }
    current
}

/// `result_{i1..il} = Σ_j (M_1)_{i1 j1} ... (M_l)_{il jl} w_{j1..jl}`.
pub fn multilinear_apply(mats: &[DMatrix<f64>], w: &DenseTensor) -> Result<DenseTensor> {
    ensure_len("multilinear factors", w.order, mats.len())?;
    let n = w.dim;
    for m in mats {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "multilinear factor size",
                expected: n,
                actual: if m.nrows() != n { m.nrows() } else { m.ncols() },
            });
        }
    }
    let mut current = w.data.clone();
    for (mode, m) in mats.iter().enumerate() {
        let map = ModeMap::from_matrix(m);
        let outer = n.pow(mode as u32);
        let inner = n.pow((w.order - mode - 1) as u32);
        current = map.apply_mode(&current, outer, inner);
    }
    DenseTensor::new(w.order, n, current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Seed of the generator drawing the random unit starts.
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 200,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Best symmetric rank-1 approximation `v^{⊗l}` of a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Projection {
    pub vector: DVector<f64>,
    /// `‖w - v^{⊗l}‖_F`.
    pub residual: f64,
    /// Whether the restart that produced `vector` met the tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// `⟨w, u^{⊗l}⟩` together with its gradient in `u`.
fn rank1_form(w: &DenseTensor, u: &[f64]) -> (f64, Vec<f64>) {
    let n = w.dim;
    let l = w.order;
    let mut grad = vec![0.0; n];
    let mut value = 0.0;
    let mut index = vec![0usize; l];
    let mut prefix = vec![1.0; l + 1];
    let mut suffix = vec![1.0; l + 1];
    for (flat, &entry) in w.data.iter().enumerate() {
        if flat > 0 {
            // odometer increment
            let mut k = l;
            while k > 0 {
                k -= 1;
                index[k] += 1;
                if index[k] < n {
                    break;
                }
                index[k] = 0;
            }
        }
        if entry == 0.0 {
            continue;
        }
        for k in 0..l {
            prefix[k + 1] = prefix[k] * u[index[k]];
        }
        for k in (0..l).rev() {
            suffix[k] = suffix[k + 1] * u[index[k]];
        }
        value += entry * prefix[l];
        for k in 0..l {
            grad[index[k]] += entry * prefix[k] * suffix[k + 1];
        }
    }
    (value, grad)
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Flips `v` so that its first coordinate that is not negligible is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let scale = dot(v, v).sqrt();
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Approximately minimizes `‖w - v^{⊗l}‖_F` over vectors `v`.
///
/// Runs a shifted symmetric higher-order power iteration from
/// `cfg.restarts` random unit starts and keeps the best candidate. The shift
/// is zero unless an unshifted step would decrease `⟨w, u^{⊗l}⟩`, in which
/// case it is doubled until the step is monotone. Non-convergence is
/// reported through [`Rank1Projection::converged`].
pub fn best_rank1_projection(w: &DenseTensor, cfg: &ProjectionConfig) -> Result<Rank1Projection> {
    let wnorm = w.frobenius_norm();
    if wnorm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    if cfg.restarts == 0 || cfg.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "projection needs at least one restart and one iteration".into(),
        ));
    }
    let n = w.dim;
    let l = w.order;
    let odd = l % 2 == 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Rank1Projection> = None;

    for _ in 0..cfg.restarts {
        let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if normalize(&mut u) == 0.0 {
            u[0] = 1.0;
        }
        let (mut g, mut grad) = rank1_form(w, &u);
        if odd && g < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            g = -g;
            grad.iter_mut().for_each(|x| *x = -*x);
        }
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iters {
            iterations += 1;
            let mut shift = 0.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut cand: Vec<f64> = grad
                    .iter()
                    .zip(&u)
                    .map(|(gr, ui)| gr + shift * ui)
                    .collect();
                if normalize(&mut cand) > 0.0 {
                    let (mut gc, mut gradc) = rank1_form(w, &cand);
                    if odd && gc < 0.0 {
                        cand.iter_mut().for_each(|x| *x = -*x);
                        gc = -gc;
                        gradc.iter_mut().for_each(|x| *x = -*x);
                    }
                    if gc >= g - 1e-15 * wnorm {
                        accepted = Some((cand, gc, gradc));
                        break;
                    }
                }
                shift = if shift == 0.0 { wnorm } else { 2.0 * shift };
            }
            let Some((cand, gc, gradc)) = accepted else {
                break;
            };
            let step: f64 = cand
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let gain = gc - g;
            u = cand;
            g = gc;
            grad = gradc;
            if gain.abs() <= cfg.tol * wnorm && step <= cfg.tol.sqrt() {
                converged = true;
                break;
            }
        }

        // For even l only nonnegative magnitudes are representable.
        let magnitude = if g > 0.0 { g.powf(1.0 / l as f64) } else { 0.0 };
        let mut v: Vec<f64> = u.iter().map(|x| magnitude * x).collect();
        if !odd {
            canonical_sign(&mut v);
        }
        let residual = w.sub(&rank1_power(&v, l)?)?.frobenius_norm();
        let candidate = Rank1Projection {
            vector: DVector::from_vec(v),
            residual,
            converged,
            iterations,
        };
        match &best {
            Some(b) if b.residual <= candidate.residual => {}
            _ => best = Some(candidate),
        }
    }
    // restarts >= 1, so a candidate exists
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(order: usize, dim: usize, data: &[f64]) -> DenseTensor {
        DenseTensor::new(order, dim, data.to_vec()).unwrap()
    }

    #[test]
    fn construction_checks_length() {
        assert!(DenseTensor::new(2, 3, vec![0.0; 8]).is_err());
        assert!(DenseTensor::new(0, 3, vec![1.0]).is_err());
        assert_eq!(DenseTensor::zeros(3, 2).unwrap().len(), 8);
    }

    #[test]
    fn offsets_are_row_major_bijection() {
        let w = DenseTensor::zeros(3, 3).unwrap();
        for flat in 0..w.len() {
            assert_eq!(w.offset(&w.multi_index(flat)), flat);
        }
        assert_eq!(w.offset(&[0, 0, 1]), 1);
        assert_eq!(w.offset(&[1, 0, 0]), 9);
    }

    #[test]
    fn outer_of_basis_vectors() {
        let c = outer_product(&t(1, 2, &[1.0, 0.0]), &t(1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!(c.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn outer_then_full_contraction_factorizes() {
        let ab = outer_product(&t(1, 2, &[1.0, 2.0]), &t(1, 2, &[3.0, 4.0])).unwrap();
        let cd = outer_product(&t(1, 2, &[1.0, 0.0]), &t(1, 2, &[0.0, 1.0])).unwrap();
        let full = multi_mode_inner(&ab, &cd, 2).unwrap();
        assert_eq!(full.scalar(), Some(4.0));
    }

    #[test]
    fn outer_norm_example() {
        let c = outer_product(&t(1, 2, &[3.0, 4.0]), &t(1, 2, &[1.0, 0.0])).unwrap();
        assert!((c.frobenius_norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn outer_dimension_mismatch() {
        assert!(outer_product(&t(1, 2, &[1.0, 0.0]), &t(1, 3, &[0.0; 3])).is_err());
    }

    #[test]
    fn contraction_examples() {
        let eye = t(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(multi_mode_inner(&eye, &eye, 2).unwrap().scalar(), Some(3.0));

        // a^T v for a 2x2 matrix
        let a = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let v = t(1, 2, &[5.0, 6.0]);
        let r = multi_mode_inner(&a, &v, 1).unwrap();
        assert_eq!(
            r.tensor().unwrap().data(),
            &[1.0 * 5.0 + 3.0 * 6.0, 2.0 * 5.0 + 4.0 * 6.0]
        );

        let x3 = rank1_power(&[1.0, 1.0], 3).unwrap();
        assert_eq!(multi_mode_inner(&x3, &x3, 3).unwrap().scalar(), Some(8.0));
    }

    #[test]
    fn contraction_errors() {
        let a = t(1, 2, &[1.0, 0.0]);
        let b = t(2, 2, &[0.0; 4]);
        assert!(multi_mode_inner(&a, &b, 2).is_err());
        assert!(multi_mode_inner(&a, &t(1, 3, &[0.0; 3]), 1).is_err());
    }

    #[test]
    fn rank1_power_examples() {
        assert_eq!(
            rank1_power(&[1.0, 2.0], 2).unwrap().data(),
            &[1.0, 2.0, 2.0, 4.0]
        );
        let e = rank1_power(&[1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(e.get(&[0, 0, 0]), 1.0);
        assert_eq!(e.data().iter().filter(|&&v| v != 0.0).count(), 1);
        assert!((rank1_power(&[3.0, 4.0], 2).unwrap().frobenius_norm() - 25.0).abs() < 1e-12);
        assert!(rank1_power(&[1.0], 0).is_err());
    }

    #[test]
    fn multilinear_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = DenseTensor::gaussian(3, 3, 1.0, &mut rng).unwrap();
        let eye = vec![DMatrix::identity(3, 3); 3];
        assert_eq!(multilinear_apply(&eye, &w).unwrap(), w);

        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let x = DenseTensor::from_vector(&[1.0, -1.0]).unwrap();
        let y = multilinear_apply(std::slice::from_ref(&m), &x).unwrap();
        assert_eq!(y.data(), &[-1.0, -3.0]);

        let d1 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let d2 = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 7.0]));
        let w2 = t(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = multilinear_apply(&[d1, d2], &w2).unwrap();
        assert_eq!(s.data(), &[10.0, 14.0, 15.0, 21.0]);
    }

    #[test]
    fn multilinear_errors() {
        let w = DenseTensor::zeros(2, 2).unwrap();
        assert!(multilinear_apply(&[DMatrix::identity(2, 2)], &w).is_err());
        assert!(
            multilinear_apply(&[DMatrix::identity(2, 2), DMatrix::identity(3, 3)], &w).is_err()
        );
    }

    #[test]
    fn projection_of_exact_rank1() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = [s, 0.0, s];
        let w = rank1_power(&u, 3).unwrap();
        let p = best_rank1_projection(&w, &ProjectionConfig::default()).unwrap();
        assert!(
            p.residual <= 1e-10 * w.frobenius_norm(),
            "residual {}",
            p.residual
        );
        for (a, b) in p.vector.iter().zip(&u) {
            assert!((a - b).abs() < 1e-8);
        }

        let w = rank1_power(&[2.0, 0.0], 2).unwrap();
        let p = best_rank1_projection(&w, &ProjectionConfig::default()).unwrap();
        assert!(p.residual < 1e-12);
        assert!((p.vector[0] - 2.0).abs() < 1e-10 && p.vector[1].abs() < 1e-10);
    }

    #[test]
    fn projection_even_order_negative_definite_returns_zero_vector() {
        let w = rank1_power(&[1.0, 1.0], 2).unwrap().scaled(-1.0);
        let p = best_rank1_projection(&w, &ProjectionConfig::default()).unwrap();
        assert!((p.residual - w.frobenius_norm()).abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_zero_tensor() {
        let w = DenseTensor::zeros(3, 2).unwrap();
        assert!(matches!(
            best_rank1_projection(&w, &ProjectionConfig::default()),
            Err(Error::ZeroTensor)
        ));
    }

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn rank1_power_is_mode_symmetric() {
        let x = [0.3, -1.2, 0.7];
        for l in 1..=4 {
            let w = rank1_power(&x, l).unwrap();
            for perm in permutations(l) {
                assert_eq!(w.permuted(&perm).unwrap(), w);
            }
        }
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0..2.0f64, n)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        #[test]
        fn outer_norm_is_multiplicative(a in vec_strategy(9), b in vec_strategy(3)) {
            let ta = t(2, 3, &a);
            let tb = t(1, 3, &b);
            let c = outer_product(&ta, &tb).unwrap();
            prop_assert!(rel_close(c.frobenius_norm(), ta.frobenius_norm() * tb.frobenius_norm(), 1e-12));
        }

        #[test]
        fn multilinear_composes(
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3;
            let l = 3;
            let mut draw = || DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let ms: Vec<DMatrix<f64>> = (0..l).map(|_| draw()).collect();
            let ns: Vec<DMatrix<f64>> = (0..l).map(|_| draw()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let w = DenseTensor::gaussian(l, n, 1.0, &mut rng).unwrap();
            let two_step = multilinear_apply(&ns, &multilinear_apply(&ms, &w).unwrap()).unwrap();
            let products: Vec<DMatrix<f64>> = ns.iter().zip(&ms).map(|(a, b)| a * b).collect();
            let one_step = multilinear_apply(&products, &w).unwrap();
            let diff = two_step.sub(&one_step).unwrap().frobenius_norm();
            prop_assert!(diff <= 1e-12 * (1.0 + one_step.frobenius_norm()));
        }

        #[test]
        fn projection_residual_bounded_and_monotone_in_restarts(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = DenseTensor::gaussian(3, 3, 1.0, &mut rng).unwrap();
            let mut last = f64::INFINITY;
            for restarts in 1..=6 {
                let cfg = ProjectionConfig { restarts, ..ProjectionConfig::default() };
                let p = best_rank1_projection(&w, &cfg).unwrap();
                prop_assert!(p.residual <= w.frobenius_norm() + 1e-12);
                prop_assert!(p.residual <= last);
                last = p.residual;
            }
        }
    }
}
