//! Unlifted objective `h(x) = f(xxᵀ)` and lifted objective
//! `h^l(w) = f^l(w ⊗ w)`, with `f(M) = ½‖A(M - zzᵀ)‖²`.
//!
//! The lifted measurement for a multi-index `m = (m_1, ..., m_l)` is
//! `q_m(w) = ⟨w, K_m w⟩` with `K_m = A_{m_1} ⊗ ... ⊗ A_{m_l}` acting mode by
//! mode, and its target is `b_{m_1} ... b_{m_l}`. The matrix-free path never
//! forms `K_m`: the pair tensor `T[(i_1 j_1), ..., (i_l j_l)] = w_I v_J` is
//! pushed through `vec(A)` along each of its `l` modes, which yields every
//! `⟨w, K_m v⟩` at once.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::sensing::{make_benchmark, BenchmarkSpec, SensingOperator};
use crate::tensor::{apply_all_modes, dot, rank1_power, tensor_len, DenseTensor};

pub const DEFAULT_HESSIAN_CAP: usize = 4096;
pub const DEFAULT_MATERIALIZE_CAP: usize = 100_000_000;
/// Largest pair tensor (`n^{2l}` entries) the matrix-free path will build.
pub const DEFAULT_LIFT_CAP: usize = 50_000_000;

/// A sensing operator together with its ground truth `z` and `b = A(zzᵀ)`.
#[derive(Debug, Clone)]
pub struct Problem {
    op: SensingOperator,
    z: DVector<f64>,
    b: DVector<f64>,
}

impl Problem {
    pub fn new(op: SensingOperator, z: DVector<f64>) -> Result<Self> {
        ensure_len("ground truth", op.n(), z.len())?;
        if z.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument(
                "ground truth must be nonzero".into(),
            ));
        }
        let b = op.apply(&(&z * z.transpose()))?;
        Ok(Self { op, z, b })
    }

    /// Ground truth with ones on the odd one-based coordinates, e.g.
    /// `[1, 0, 1]` for `n = 3`.
    pub fn canonical_ground_truth(n: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 })
    }

    /// Benchmark operator `A_ε` with the canonical ground truth.
    pub fn benchmark(n: usize, eps: f64) -> Result<Self> {
        let op = make_benchmark(BenchmarkSpec::new(n, eps)?)?;
        Self::new(op, Self::canonical_ground_truth(n))
    }

    pub fn op(&self) -> &SensingOperator {
        &self.op
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn m(&self) -> usize {
        self.op.m()
    }

    /// `M* = zzᵀ`.
    pub fn mstar(&self) -> DMatrix<f64> {
        &self.z * self.z.transpose()
    }

    /// Residual vector `A(xxᵀ) - b`.
    pub fn residual(&self, x: &[f64]) -> Result<DVector<f64>> {
        ensure_len("point", self.n(), x.len())?;
        let xv = DVector::from_column_slice(x);
        Ok(self.op.apply(&(&xv * xv.transpose()))? - &self.b)
    }

    /// `∇f(xxᵀ) = Σ_a r_a A_a`.
    pub fn grad_f(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = self.residual(x)?;
        self.op.adjoint_weighted(r.as_slice())
    }

    fn check_lifted(&self, l: usize, w: &DenseTensor) -> Result<()> {
        if l == 0 {
            return Err(Error::InvalidArgument("lift order must be >= 1".into()));
        }
        ensure_len("lift order", l, w.order())?;
        ensure_len("lifted dimension", self.n(), w.dim())
    }
}

/// `h(x) = ½ Σ_a (xᵀA_a x - b_a)²`.
pub fn h_value(p: &Problem, x: &[f64]) -> Result<f64> {
    Ok(0.5 * p.residual(x)?.norm_squared())
}

/// `∇h(x) = 2 ∇f(xxᵀ) x`.
pub fn h_grad(p: &Problem, x: &[f64]) -> Result<DVector<f64>> {
    let g = p.grad_f(x)?;
    Ok(2.0 * g * DVector::from_column_slice(x))
}

/// `∇²h(x) = Σ_a [4 (A_a x)(A_a x)ᵀ + 2 r_a A_a]`.
pub fn h_hess(p: &Problem, x: &[f64]) -> Result<DMatrix<f64>> {
    let r = p.residual(x)?;
    let xv = DVector::from_column_slice(x);
    let n = p.n();
    let mut h = DMatrix::zeros(n, n);
    for (a, &ra) in p.op().matrices().iter().zip(r.iter()) {
        let ax = a * &xv;
        h.ger(4.0, &ax, &ax, 1.0);
        h.zip_apply(a, |hij, aij| *hij += 2.0 * ra * aij);
    }
    Ok(h)
}

/// Index helpers for pair tensors of order `l` over `n²`-dimensional modes.
struct PairLayout {
    n: usize,
    // spread[I] places the base-n digits of I at base-n² positions
    spread: Vec<usize>,
}

impl PairLayout {
    fn new(n: usize, l: usize, cap: usize) -> Result<Self> {
        let pair_len = tensor_len(n, 2 * l)?;
        if pair_len > cap {
            return Err(Error::CapExceeded {
                what: "lifted pair tensor",
                size: pair_len,
                cap,
            });
        }
        let len = tensor_len(n, l)?;
        let spread = (0..len)
            .map(|mut flat| {
                let mut out = 0;
                let mut weight = 1;
                for _ in 0..l {
                    out += (flat % n) * weight;
                    flat /= n;
                    weight *= n * n;
                }
                out
            })
            .collect();
        Ok(Self { n, spread })
    }

    /// `T[(i_1 j_1), ..., (i_l j_l)] = w_I v_J`.
    fn pair(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; w.len() * v.len()];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let base = self.n * self.spread[i];
            for (j, &vj) in v.iter().enumerate() {
                t[base + self.spread[j]] = wi * vj;
            }
        }
        t
    }

    /// `out_I = Σ_J S[(I, J)] v_J`.
    fn contract(&self, s: &[f64], v: &[f64]) -> Vec<f64> {
        self.spread
            .iter()
            .map(|&si| {
                let base = self.n * si;
                self.spread
                    .iter()
                    .zip(v)
                    .map(|(&sj, &vj)| s[base + sj] * vj)
                    .sum()
            })
            .collect()
    }
}

/// Matrix-free evaluator of `h^l` for a fixed problem and order, caching
/// the index tables and the lifted target `b^{⊗l}` across calls.
pub struct LiftedObjective<'a> {
    p: &'a Problem,
    l: usize,
    layout: PairLayout,
    target: Vec<f64>,
}

impl<'a> LiftedObjective<'a> {
    pub fn new(p: &'a Problem, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArgument("lift order must be >= 1".into()));
        }
        Ok(Self {
            p,
            l,
            layout: PairLayout::new(p.n(), l, DEFAULT_LIFT_CAP)?,
            target: rank1_power(p.b().as_slice(), l)?.into_data(),
        })
    }

    pub fn order(&self) -> usize {
        self.l
    }

    /// Number of entries of a lifted variable, `n^l`.
    pub fn dim(&self) -> usize {
        self.layout.spread.len()
    }

    /// All `⟨w, K_m v⟩` indexed by the measurement multi-index.
    fn measure(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        apply_all_modes(self.p.op().vec_map(), &self.layout.pair(w, v), self.l)
    }

    /// `Σ_m c_m K_m v`.
    fn weighted_apply(&self, c: &[f64], v: &[f64]) -> Vec<f64> {
        let s = apply_all_modes(self.p.op().vec_map_t(), c, self.l);
        self.layout.contract(&s, v)
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.measure(w, w);
        r.iter_mut()
            .zip(&self.target)
            .for_each(|(ri, ti)| *ri -= ti);
        r
    }

    /// `(h^l(w), ∇h^l(w))` on flat data.
    pub fn value_grad(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        ensure_len("lifted point", self.dim(), w.len())?;
        let r = self.residual(w);
        let mut g = self.weighted_apply(&r, w);
        g.iter_mut().for_each(|v| *v *= 2.0);
        Ok((0.5 * dot(&r, &r), g))
    }
}

/// Lifted residuals `q_m(w) - b_{m_1}...b_{m_l}` as an order-`l` tensor of
/// dimension `m`.
pub fn hl_residual(p: &Problem, l: usize, w: &DenseTensor) -> Result<DenseTensor> {
    p.check_lifted(l, w)?;
    let r = LiftedObjective::new(p, l)?.residual(w.data());
    DenseTensor::new(l, p.m(), r)
}

/// `h^l(w) = ½ Σ_m (q_m(w) - b_{m_1}...b_{m_l})²`.
pub fn hl_value(p: &Problem, l: usize, w: &DenseTensor) -> Result<f64> {
    p.check_lifted(l, w)?;
    let r = LiftedObjective::new(p, l)?.residual(w.data());
    Ok(0.5 * dot(&r, &r))
}

/// `∇h^l(w) = 2 Σ_m r_m K_m w`.
pub fn hl_grad(p: &Problem, l: usize, w: &DenseTensor) -> Result<DenseTensor> {
    hl_value_grad(p, l, w).map(|(_, g)| g)
}

pub fn hl_value_grad(p: &Problem, l: usize, w: &DenseTensor) -> Result<(f64, DenseTensor)> {
    p.check_lifted(l, w)?;
    let (value, g) = LiftedObjective::new(p, l)?.value_grad(w.data())?;
    Ok((value, DenseTensor::new(l, p.n(), g)?))
}

/// Hessian of `h^l` at `w` applied to `v`:
/// `Σ_m [4 ⟨K_m w, v⟩ K_m w + 2 r_m K_m v]`.
pub fn hl_hvp(p: &Problem, l: usize, w: &DenseTensor, v: &DenseTensor) -> Result<DenseTensor> {
    p.check_lifted(l, w)?;
    p.check_lifted(l, v)?;
    let lifted = LiftedObjective::new(p, l)?;
    let r = lifted.residual(w.data());
    HvpPlan { lifted, r }
        .apply(w.data(), v.data())
        .and_then(|d| DenseTensor::new(l, p.n(), d))
}

/// Residuals computed once, reused for many Hessian-vector products at the
/// same point.
struct HvpPlan<'a> {
    lifted: LiftedObjective<'a>,
    r: Vec<f64>,
}

impl HvpPlan<'_> {
    fn apply(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut cross = self.lifted.measure(v, w);
        cross.iter_mut().for_each(|c| *c *= 2.0);
        // 4⟨K_m w, v⟩ K_m w + 2 r_m K_m v = 2 (2 c_m K_m w + r_m K_m v)
        let a = self.lifted.weighted_apply(&cross, w);
        let b = self.lifted.weighted_apply(&self.r, v);
        Ok(a.iter().zip(&b).map(|(x, y)| 2.0 * (x + y)).collect())
    }
}

/// Hessian-vector product closure at a fixed point, for iterative
/// eigensolvers.
pub fn hl_hvp_operator<'a>(
    p: &'a Problem,
    l: usize,
    w: &'a DenseTensor,
) -> Result<impl Fn(&[f64]) -> Vec<f64> + 'a> {
    p.check_lifted(l, w)?;
    let lifted = LiftedObjective::new(p, l)?;
    let r = lifted.residual(w.data());
    let plan = HvpPlan { lifted, r };
    Ok(move |v: &[f64]| {
        plan.apply(w.data(), v)
            .expect("dimensions checked at construction")
    })
}

/// Full `n^l x n^l` Hessian of `h^l`, assembled from basis-tensor HVPs.
pub fn hl_hess_dense(p: &Problem, l: usize, w: &DenseTensor, cap: usize) -> Result<DMatrix<f64>> {
    p.check_lifted(l, w)?;
    let dim = w.len();
    if dim > cap {
        return Err(Error::CapExceeded {
            what: "dense lifted Hessian dimension",
            size: dim,
            cap,
        });
    }
    let hvp = hl_hvp_operator(p, l, w)?;
    let mut h = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        let col = hvp(&e);
        e[j] = 0.0;
        h.column_mut(j).copy_from_slice(&col);
    }
    Ok(h)
}

/// Explicit coefficient table of the lifted operator: row `(m_1, ..., m_l)`,
/// column `(i_1, j_1, ..., i_l, j_l)`, entry `Π_k (A_{m_k})_{i_k j_k}`.
///
/// Intended as a test oracle: evaluation is by direct summation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterializedLifted {
    pub l: usize,
    pub n: usize,
    pub m: usize,
    pub coefficients: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn materialize_lifted(p: &Problem, l: usize, cap: usize) -> Result<MaterializedLifted> {
    if l == 0 {
        return Err(Error::InvalidArgument("lift order must be >= 1".into()));
    }
    let n = p.n();
    let rows = tensor_len(p.m(), l)?;
    let cols = tensor_len(n, 2 * l)?;
    let size = rows.checked_mul(cols).ok_or(Error::CapExceeded {
        what: "materialized lifted operator",
        size: usize::MAX,
        cap,
    })?;
    if size > cap {
        return Err(Error::CapExceeded {
            what: "materialized lifted operator",
            size,
            cap,
        });
    }
    let vecs: Vec<Vec<f64>> = p
        .op()
        .matrices()
        .iter()
        .map(|a| (0..n * n).map(|k| a[(k / n, k % n)]).collect())
        .collect();
    // Kronecker product of the selected vec(A) rows, built mode by mode.
    let mut coefficients = Vec::with_capacity(size);
    let mut meas = vec![0usize; l];
    for _ in 0..rows {
        let mut row = vec![1.0];
        for &mk in &meas {
            let factor = &vecs[mk];
            let mut next = Vec::with_capacity(row.len() * factor.len());
            for &r in &row {
                next.extend(factor.iter().map(|&f| r * f));
            }
            row = next;
        }
        coefficients.extend(row);
        for k in (0..l).rev() {
            meas[k] += 1;
            if meas[k] < p.m() {
                break;
            }
            meas[k] = 0;
        }
    }
    Ok(MaterializedLifted {
        l,
        n,
        m: p.m(),
        coefficients,
        z: p.z().iter().copied().collect(),
    })
}

impl MaterializedLifted {
    pub fn rows(&self) -> usize {
        self.m.pow(self.l as u32)
    }

    pub fn cols(&self) -> usize {
        self.n.pow(2 * self.l as u32)
    }

    /// Coefficient at measurement multi-index `meas` and column multi-index
    /// `(i_1, j_1, ..., i_l, j_l)`.
    pub fn coefficient(&self, meas: &[usize], col: &[usize]) -> f64 {
        let row = meas.iter().fold(0, |acc, &m| acc * self.m + m);
        let c = col.iter().fold(0, |acc, &i| acc * self.n + i);
        self.coefficients[row * self.cols() + c]
    }

    /// Column position of the pair `(I, J)` of order-`l` multi-indices given
    /// as flat offsets.
    fn column_of(&self, mut i: usize, mut j: usize) -> usize {
        let mut col = 0;
        let mut weight = 1;
        for _ in 0..self.l {
            col += (i % self.n * self.n + j % self.n) * weight;
            i /= self.n;
            j /= self.n;
            weight *= self.n * self.n;
        }
        col
    }

    fn residuals(&self, w: &DenseTensor) -> Result<Vec<f64>> {
        ensure_len("materialized order", self.l, w.order())?;
        ensure_len("materialized dimension", self.n, w.dim())?;
        let zl = rank1_power(&self.z, self.l)?;
        let len = w.len();
        // ⟨A, w ⊗ w - z^{⊗l} ⊗ z^{⊗l}⟩, summed column by column
        let mut diff = vec![0.0; self.cols()];
        for i in 0..len {
            for j in 0..len {
                diff[self.column_of(i, j)] =
                    w.data()[i] * w.data()[j] - zl.data()[i] * zl.data()[j];
            }
        }
        Ok(self
            .coefficients
            .chunks_exact(self.cols())
            .map(|row| dot(row, &diff))
            .collect())
    }

    pub fn value(&self, w: &DenseTensor) -> Result<f64> {
        let r = self.residuals(w)?;
        Ok(0.5 * dot(&r, &r))
    }

    /// Gradient by direct differentiation of each row:
    /// `∂q_m/∂w_I = Σ_J (A_m[(I,J)] + A_m[(J,I)]) w_J`.
    pub fn grad(&self, w: &DenseTensor) -> Result<DenseTensor> {
        let r = self.residuals(w)?;
        let len = w.len();
        let mut g = vec![0.0; len];
        for (row, &rm) in self.coefficients.chunks_exact(self.cols()).zip(&r) {
            for (i, gi) in g.iter_mut().enumerate() {
                let mut dq = 0.0;
                for j in 0..len {
                    dq += (row[self.column_of(i, j)] + row[self.column_of(j, i)]) * w.data()[j];
                }
                *gi += rm * dq;
            }
        }
        DenseTensor::new(self.l, self.n, g)
    }
}
