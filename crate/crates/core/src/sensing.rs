//! Linear measurement operators `A(M) = [⟨A_1, M⟩, ..., ⟨A_m, M⟩]` over
//! symmetric `n x n` matrices.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::tensor::ModeMap;

/// Parameters of the entrywise benchmark family `A_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub eps: f64,
}

impl BenchmarkSpec {
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "benchmark needs n >= 2, got {n}"
            )));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!(
                "benchmark eps must lie in [0, 1], got {eps}"
            )));
        }
        Ok(Self { n, eps })
    }

    /// Membership of the zero-based entry `(i, j)` in the measurement set:
    /// the diagonal plus every row and column with an even one-based index.
    pub fn in_omega(&self, i: usize, j: usize) -> bool {
        i == j || (i + 1).is_multiple_of(2) || (j + 1).is_multiple_of(2)
    }

    /// `δ = (1 - ε) / (1 + ε)`, the closed-form RIP constant of the family.
    pub fn closed_form_delta(&self) -> f64 {
        (1.0 - self.eps) / (1.0 + self.eps)
    }
}

/// Provenance of one measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementLabel {
    /// Zero-based matrix entry `(i, j)` the measurement observes, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_omega: Option<bool>,
    pub scale: f64,
}

impl MeasurementLabel {
    fn plain() -> Self {
        Self {
            entry: None,
            in_omega: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensingOperator {
    n: usize,
    matrices: Vec<DMatrix<f64>>,
    labels: Vec<MeasurementLabel>,
    benchmark: Option<BenchmarkSpec>,
    // rows are vec(A_a), row-major over (i, j)
    vec_map: ModeMap,
    vec_map_t: ModeMap,
}

impl SensingOperator {
    /// Builds an operator from exactly symmetric matrices. An empty `labels`
    /// vector is replaced by unit-scale labels.
    pub fn new(matrices: Vec<DMatrix<f64>>, labels: Vec<MeasurementLabel>) -> Result<Self> {
        Self::build(matrices, labels, None)
    }

    fn build(
        matrices: Vec<DMatrix<f64>>,
        mut labels: Vec<MeasurementLabel>,
        benchmark: Option<BenchmarkSpec>,
    ) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidArgument(
                "operator needs at least one measurement".into(),
            ));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "measurement matrices must be nonempty".into(),
            ));
        }
        for (a, m) in matrices.iter().enumerate() {
            ensure_len("measurement rows", n, m.nrows())?;
            ensure_len("measurement columns", n, m.ncols())?;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "measurement {a} has non-finite entries"
                )));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    if m[(i, j)] != m[(j, i)] {
                        return Err(Error::InvalidArgument(format!(
                            "measurement {a} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        if labels.is_empty() {
            labels = vec![MeasurementLabel::plain(); matrices.len()];
        }
        ensure_len("measurement labels", matrices.len(), labels.len())?;

        let rows = matrices
            .iter()
            .map(|m| {
                let mut row = Vec::new();
                for i in 0..n {
                    for j in 0..n {
                        let v = m[(i, j)];
                        if v != 0.0 {
                            row.push((i * n + j, v));
                        }
                    }
                }
                row
            })
            .collect();
        let vec_map = ModeMap::from_rows(n * n, rows);
        let vec_map_t = vec_map.transpose();
        Ok(Self {
            n,
            matrices,
            labels,
            benchmark,
            vec_map,
            vec_map_t,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn labels(&self) -> &[MeasurementLabel] {
        &self.labels
    }

    pub fn benchmark(&self) -> Option<BenchmarkSpec> {
        self.benchmark
    }

    pub(crate) fn vec_map(&self) -> &ModeMap {
        &self.vec_map
    }

    pub(crate) fn vec_map_t(&self) -> &ModeMap {
        &self.vec_map_t
    }

    /// `A(M)`, the vector of trace inner products `⟨A_a, M⟩`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        ensure_len("apply rows", self.n, m.nrows())?;
        ensure_len("apply columns", self.n, m.ncols())?;
        Ok(DVector::from_iterator(
            self.m(),
            self.matrices.iter().map(|a| a.dot(m)),
        ))
    }

    /// `Σ_a y_a A_a`.
    pub fn adjoint_weighted(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        ensure_len("adjoint weights", self.m(), y.len())?;
        let mut out = DMatrix::zeros(self.n, self.n);
        for (a, &w) in self.matrices.iter().zip(y) {
            if w != 0.0 {
                out.zip_apply(a, |o, v| *o += w * v);
            }
        }
        Ok(out)
    }

    /// Matrix of the quadratic form `M -> ‖A(M)‖²` in an orthonormal basis of
    /// the symmetric matrices (diagonal units, then `(E_ij + E_ji)/√2`).
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let basis = symmetric_basis(self.n);
        let features = DMatrix::from_fn(self.m(), basis.len(), |a, p| {
            self.matrices[a].dot(&basis[p])
        });
        features.transpose() * features
    }

    /// Global smoothness/convexity constants of `f(M) = ½‖A(M - M*)‖²`.
    ///
    /// Restricted constants satisfy `alpha_global <= α_s <= L_s <= L_global`,
    /// so these are one-sided surrogates for them.
    pub fn spectrum_constants(&self) -> ConstantsReport {
        let eig = SymmetricEigen::new(self.gram_matrix());
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min().max(0.0);
        let delta_global = if lambda_max + lambda_min > 0.0 {
            (lambda_max - lambda_min) / (lambda_max + lambda_min)
        } else {
            1.0
        };
        ConstantsReport {
            lambda_max,
            lambda_min,
            l_global: lambda_max,
            alpha_global: lambda_min,
            delta_global,
            delta_closed_form: self.benchmark.map(|b| b.closed_form_delta()),
        }
    }

    /// Extremes of `‖A(M)‖²/‖M‖²_F` over randomly sampled symmetric matrices
    /// of the given rank. These are inner estimates (`alpha_est >= α_s`,
    /// `l_est <= L_s`) and only serve as diagnostics.
    pub fn sampled_restricted_constants(
        &self,
        rank: usize,
        samples: usize,
        seed: u64,
    ) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l_est: f64 = 0.0;
        let mut alpha_est = f64::INFINITY;
        for _ in 0..samples.max(1) {
            let mut m = DMatrix::zeros(self.n, self.n);
            for _ in 0..rank.max(1) {
                let g = DVector::from_fn(self.n, |_, _| StandardNormal.sample(&mut rng));
                let sign: f64 = if Distribution::<f64>::sample(&StandardNormal, &mut rng) > 0.0 {
                    1.0
                } else {
                    -1.0
                };
                m += sign * &g * g.transpose();
            }
            let norm_sq = m.norm_squared();
            if norm_sq == 0.0 {
                continue;
            }
            let ratio = self.apply(&m).expect("shape matches").norm_squared() / norm_sq;
            l_est = l_est.max(ratio);
            alpha_est = alpha_est.min(ratio);
        }
        (l_est, alpha_est)
    }

    pub fn to_file_format(&self) -> OperatorFile {
        OperatorFile {
            n: self.n,
            m: self.m(),
            matrices: self
                .matrices
                .iter()
                .map(|a| {
                    (0..self.n)
                        .map(|i| a.row(i).iter().copied().collect())
                        .collect()
                })
                .collect(),
            labels: self.labels.clone(),
            benchmark: self.benchmark,
        }
    }

    pub fn from_file_format(file: OperatorFile) -> Result<Self> {
        ensure_len(
            "operator file measurement count",
            file.m,
            file.matrices.len(),
        )?;
        let mut matrices = Vec::with_capacity(file.m);
        for rows in &file.matrices {
            ensure_len("operator file rows", file.n, rows.len())?;
            for row in rows {
                ensure_len("operator file columns", file.n, row.len())?;
            }
            matrices.push(DMatrix::from_fn(file.n, file.n, |i, j| rows[i][j]));
        }
        if let Some(spec) = file.benchmark {
            BenchmarkSpec::new(spec.n, spec.eps)?;
            ensure_len("benchmark dimension", file.n, spec.n)?;
        }
        Self::build(matrices, file.labels, file.benchmark)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_format())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_format(serde_json::from_str(text)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// JSON fixture layout: `{n, m, matrices, labels, benchmark?}` with each
/// matrix stored as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub n: usize,
    pub m: usize,
    pub matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub labels: Vec<MeasurementLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    /// Extreme eigenvalues of `M -> ‖A(M)‖²` on symmetric matrices.
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub l_global: f64,
    pub alpha_global: f64,
    pub delta_global: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_closed_form: Option<f64>,
}

fn symmetric_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        let mut e = DMatrix::zeros(n, n);
        e[(i, i)] = 1.0;
        basis.push(e);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = s;
            e[(j, i)] = s;
            basis.push(e);
        }
    }
    basis
}

/// The benchmark operator: one measurement per entry `(i, j)`, row-major,
/// observing the symmetrized elementary matrix `(e_i e_jᵀ + e_j e_iᵀ)/2`
/// scaled by 1 on the measurement set and by `ε` off it.
pub fn make_benchmark(spec: BenchmarkSpec) -> Result<SensingOperator> {
    let spec = BenchmarkSpec::new(spec.n, spec.eps)?;
    let n = spec.n;
    let mut matrices = Vec::with_capacity(n * n);
    let mut labels = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let in_omega = spec.in_omega(i, j);
            let scale = if in_omega { 1.0 } else { spec.eps };
            let mut a = DMatrix::zeros(n, n);
            a[(i, j)] += 0.5 * scale;
            a[(j, i)] += 0.5 * scale;
            matrices.push(a);
            labels.push(MeasurementLabel {
                entry: Some([i, j]),
                in_omega: Some(in_omega),
                scale,
            });
        }
    }
    SensingOperator::build(matrices, labels, Some(spec))
}
