use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::structured::StructuredMap;
use crate::error::{Error, Result};
use crate::seed::{derive_rng, Stream};

/// Row (or column) norms at or below this are treated as zero.
pub const ZERO_NORM_TOL: f64 = 1e-8;

/// Regeneration budget for key draws that violate a constraint.
pub const GENERATION_RETRIES: usize = 16;

/// Largest `n` for which [`KeyLayout::Auto`] keeps dense matrices.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KeyLayout {
    #[default]
    Auto,
    Dense,
    Structured,
}

fn default_scale() -> f64 {
    1.0
}

fn default_max_condition() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyGenConfig {
    pub n: usize,
    pub n_tilde: usize,
    pub p: usize,
    /// Target ℓ1 norm of the rows of `Π1` (exact for dense keys, an upper
    /// bound attained by the largest row for structured keys).
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// ℓ1 norm of `Π2`.
    #[serde(default = "default_scale")]
    pub pi2_scale: f64,
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
    pub seed: u64,
    #[serde(default)]
    pub layout: KeyLayout,
}

impl KeyGenConfig {
    pub fn new(n: usize, n_tilde: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            n_tilde,
            p,
            scale: default_scale(),
            pi2_scale: default_scale(),
            max_condition: default_max_condition(),
            seed,
            layout: KeyLayout::Auto,
        }
    }

    fn check_common(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgs(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.pi2_scale > 0.0 && self.pi2_scale.is_finite()) {
            return Err(Error::InvalidArgs(format!(
                "pi2_scale must be positive, got {}",
                self.pi2_scale
            )));
        }
        if !(self.max_condition >= 1.0) {
            return Err(Error::InvalidArgs(format!(
                "max_condition must be at least 1, got {}",
                self.max_condition
            )));
        }
        Ok(())
    }

    fn dense(&self) -> bool {
        match self.layout {
            KeyLayout::Auto => self.n <= DENSE_LIMIT,
            KeyLayout::Dense => true,
            KeyLayout::Structured => false,
        }
    }
}

/// The server half of the immersion map: `Π1` and its left inverse `Π1ᴸ`.
///
/// This is what clients receive inside the immersed optimizer; it does not
/// include the kernel basis `N1`.
#[derive(Debug, Clone)]
pub struct Immersion {
    repr: ImmersionRepr,
}

#[derive(Debug, Clone)]
enum ImmersionRepr {
    Dense {
        pi1: DMatrix<f64>,
        pi1_left: DMatrix<f64>,
    },
    Structured(Arc<StructuredMap>),
}

impl Immersion {
    pub fn from_dense(pi1: DMatrix<f64>, pi1_left: DMatrix<f64>) -> Result<Self> {
        if pi1_left.nrows() != pi1.ncols() || pi1_left.ncols() != pi1.nrows() {
            return Err(Error::dim(
                "pi1_left shape",
                format!("{}x{}", pi1.ncols(), pi1.nrows()),
                format!("{}x{}", pi1_left.nrows(), pi1_left.ncols()),
            ));
        }
        Ok(Self {
            repr: ImmersionRepr::Dense { pi1, pi1_left },
        })
    }

    pub fn n(&self) -> usize {
        match &self.repr {
            ImmersionRepr::Dense { pi1, .. } => pi1.ncols(),
            ImmersionRepr::Structured(s) => s.n,
        }
    }

    pub fn n_tilde(&self) -> usize {
        match &self.repr {
            ImmersionRepr::Dense { pi1, .. } => pi1.nrows(),
            ImmersionRepr::Structured(s) => s.n_tilde,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, ImmersionRepr::Dense { .. })
    }

    pub fn pi1(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            ImmersionRepr::Dense { pi1, .. } => Some(pi1),
            ImmersionRepr::Structured(_) => None,
        }
    }

    pub fn pi1_left(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            ImmersionRepr::Dense { pi1_left, .. } => Some(pi1_left),
            ImmersionRepr::Structured(_) => None,
        }
    }

    pub(crate) fn structured(&self) -> Option<&StructuredMap> {
        match &self.repr {
            ImmersionRepr::Structured(s) => Some(s),
            ImmersionRepr::Dense { .. } => None,
        }
    }

    /// `Π1·w`.
    pub fn lift(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.n() {
            return Err(Error::dim("lift input", self.n(), w.len()));
        }
        Ok(match &self.repr {
            ImmersionRepr::Dense { pi1, .. } => pi1 * w,
            ImmersionRepr::Structured(s) => DVector::from_vec(s.lift(w.as_slice())),
        })
    }

    /// `Π1ᴸ·x`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_tilde() {
            return Err(Error::dim("project input", self.n_tilde(), x.len()));
        }
        Ok(match &self.repr {
            ImmersionRepr::Dense { pi1_left, .. } => pi1_left * x,
            ImmersionRepr::Structured(s) => DVector::from_vec(s.project(x.as_slice())),
        })
    }

    /// Per-row ℓ1 and ℓ2 norms of `Π1`.
    pub fn row_norms(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.repr {
            ImmersionRepr::Dense { pi1, .. } => pi1
                .row_iter()
                .map(|r| (r.iter().map(|x| x.abs()).sum::<f64>(), r.norm()))
                .unzip(),
            ImmersionRepr::Structured(s) => {
                let (l1, l2, _) = s.row_norms();
                (l1, l2)
            }
        }
    }

    /// Spectral norm `‖Π1ᴸ‖₂ = 1/σ_min(Π1)`.
    pub fn left_inverse_norm(&self) -> f64 {
        match &self.repr {
            ImmersionRepr::Dense { pi1_left, .. } => pi1_left.singular_values().max(),
            ImmersionRepr::Structured(s) => 1.0 / s.singular_range().1,
        }
    }

    /// `Π1·W` for an `n×p` matrix.
    pub fn lift_matrix(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if w.nrows() != self.n() {
            return Err(Error::dim("lift_matrix rows", self.n(), w.nrows()));
        }
        Ok(match &self.repr {
            ImmersionRepr::Dense { pi1, .. } => pi1 * w,
            ImmersionRepr::Structured(s) => columnwise(w, self.n_tilde(), |c| s.lift(c)),
        })
    }

    /// `Π1ᴸ·X` for an `ñ×p` matrix.
    pub fn project_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n_tilde() {
            return Err(Error::dim("project_matrix rows", self.n_tilde(), x.nrows()));
        }
        Ok(match &self.repr {
            ImmersionRepr::Dense { pi1_left, .. } => pi1_left * x,
            ImmersionRepr::Structured(s) => columnwise(x, self.n(), |c| s.project(c)),
        })
    }
}

fn columnwise(m: &DMatrix<f64>, out_rows: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(out_rows, m.ncols());
    for j in 0..m.ncols() {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        out.set_column(j, &DVector::from_vec(f(&col)));
    }
    out
}

#[derive(Debug, Clone)]
enum KernelRepr {
    Dense(DMatrix<f64>),
    Structured(Arc<StructuredMap>),
}

/// The server's secret: `Π1`, `Π1ᴸ` and the kernel basis `N1`.
#[derive(Debug, Clone)]
pub struct ServerKeys {
    immersion: Arc<Immersion>,
    kernel: KernelRepr,
}

impl ServerKeys {
    /// Assembles dense keys without checking any invariant; see
    /// [`super::validate_keys`] for the checks.
    pub fn from_dense_unchecked(
        pi1: DMatrix<f64>,
        pi1_left: DMatrix<f64>,
        n1: DMatrix<f64>,
    ) -> Result<Self> {
        if n1.nrows() != pi1.nrows() || n1.ncols() + pi1.ncols() != pi1.nrows() {
            return Err(Error::dim(
                "n1 shape",
                format!("{}x{}", pi1.nrows(), pi1.nrows().saturating_sub(pi1.ncols())),
                format!("{}x{}", n1.nrows(), n1.ncols()),
            ));
        }
        if pi1.nrows() <= pi1.ncols() {
            return Err(Error::dim("n_tilde > n", format!("> {}", pi1.ncols()), pi1.nrows()));
        }
        Ok(Self {
            immersion: Arc::new(Immersion::from_dense(pi1, pi1_left)?),
            kernel: KernelRepr::Dense(n1),
        })
    }

    pub(crate) fn from_structured(map: StructuredMap) -> Self {
        let map = Arc::new(map);
        Self {
            immersion: Arc::new(Immersion {
                repr: ImmersionRepr::Structured(Arc::clone(&map)),
            }),
            kernel: KernelRepr::Structured(map),
        }
    }

    pub fn immersion(&self) -> &Arc<Immersion> {
        &self.immersion
    }

    pub fn n(&self) -> usize {
        self.immersion.n()
    }

    pub fn n_tilde(&self) -> usize {
        self.immersion.n_tilde()
    }

    pub fn kernel_dim(&self) -> usize {
        self.n_tilde() - self.n()
    }

    pub fn n1(&self) -> Option<&DMatrix<f64>> {
        match &self.kernel {
            KernelRepr::Dense(n1) => Some(n1),
            KernelRepr::Structured(_) => None,
        }
    }

    /// `N1·r`.
    pub fn kernel_apply(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.kernel_dim() {
            return Err(Error::dim("kernel noise length", self.kernel_dim(), r.len()));
        }
        Ok(match &self.kernel {
            KernelRepr::Dense(n1) => n1 * r,
            KernelRepr::Structured(s) => DVector::from_vec(s.kernel(r.as_slice())),
        })
    }

    /// `N1·R` for a `(ñ−n)×p` matrix.
    pub fn kernel_apply_matrix(&self, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if r.nrows() != self.kernel_dim() {
            return Err(Error::dim("kernel noise rows", self.kernel_dim(), r.nrows()));
        }
        Ok(match &self.kernel {
            KernelRepr::Dense(n1) => n1 * r,
            KernelRepr::Structured(s) => columnwise(r, self.n_tilde(), |c| s.kernel(c)),
        })
    }

    /// ℓ2 norms of the rows of `N1`.
    pub fn kernel_row_norms(&self) -> Vec<f64> {
        match &self.kernel {
            KernelRepr::Dense(n1) => n1.row_iter().map(|r| r.norm()).collect(),
            KernelRepr::Structured(s) => s.row_norms().2,
        }
    }
}

/// The aggregator's secret: `Π2`, its right inverse `Π2ᴿ` and the basis
/// `N2` of the left kernel of `Π2ᴿ`. Only `Π2ᴿ` is shared with clients.
#[derive(Debug, Clone)]
pub struct AggregatorKeys {
    pi2: RowDVector<f64>,
    pi2_right: DVector<f64>,
    n2: DMatrix<f64>,
}

impl AggregatorKeys {
    pub fn from_parts_unchecked(
        pi2: RowDVector<f64>,
        pi2_right: DVector<f64>,
        n2: DMatrix<f64>,
    ) -> Result<Self> {
        let p = pi2.len();
        if p < 2 {
            return Err(Error::dim("p", ">= 2", p));
        }
        if pi2_right.len() != p || n2.nrows() + 1 != p || n2.ncols() != p {
            return Err(Error::dim(
                "aggregator key shapes",
                format!("pi2_right {p}, n2 {}x{p}", p - 1),
                format!("pi2_right {}, n2 {}x{}", pi2_right.len(), n2.nrows(), n2.ncols()),
            ));
        }
        Ok(Self { pi2, pi2_right, n2 })
    }

    pub fn p(&self) -> usize {
        self.pi2.len()
    }

    pub fn pi2(&self) -> &RowDVector<f64> {
        &self.pi2
    }

    pub fn pi2_right(&self) -> &DVector<f64> {
        &self.pi2_right
    }

    pub fn n2(&self) -> &DMatrix<f64> {
        &self.n2
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Full orthonormal basis whose first `lead.ncols()` columns span
/// `range(lead)`; the remaining columns are returned.
fn orthogonal_complement<R: Rng + ?Sized>(lead: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let rows = lead.nrows();
    let k = lead.ncols();
    let mut full = DMatrix::zeros(rows, rows);
    full.columns_mut(0, k).copy_from(lead);
    full.columns_mut(k, rows - k).copy_from(&gaussian_matrix(rows, rows - k, rng));
    let q = full.qr().q();
    q.columns(k, rows - k).into_owned()
}

pub(crate) fn generate_server_keys(cfg: &KeyGenConfig) -> Result<ServerKeys> {
    if cfg.n == 0 || cfg.n_tilde <= cfg.n {
        return Err(Error::dim("n_tilde > n >= 1", format!("> {}", cfg.n), cfg.n_tilde));
    }
    cfg.check_common()?;
    let mut rng = derive_rng(cfg.seed, Stream::Keys, 1, 0);

    if !cfg.dense() {
        let mut map = StructuredMap::generate(
            cfg.n,
            cfg.n_tilde,
            cfg.max_condition,
            GENERATION_RETRIES,
            &mut rng,
        )?;
        let (l1, _, kernel) = map.row_norms();
        if let Some(j) = kernel.iter().position(|&x| x <= ZERO_NORM_TOL) {
            return Err(Error::GenerationFailure {
                attempts: 1,
                reason: format!("zero kernel row {j}"),
            });
        }
        let max_l1 = l1.iter().copied().fold(0.0, f64::max);
        map.rescale(cfg.scale / max_l1);
        return Ok(ServerKeys::from_structured(map));
    }

    let mut last_reason = String::new();
    for _ in 0..GENERATION_RETRIES {
        let mut pi1 = gaussian_matrix(cfg.n_tilde, cfg.n, &mut rng);
        for mut row in pi1.row_iter_mut() {
            let l1: f64 = row.iter().map(|x| x.abs()).sum();
            row *= cfg.scale / l1;
        }

        let qr = pi1.clone().qr();
        let r = qr.r();
        let sv = r.singular_values();
        let cond = sv.max() / sv.min();
        if !(cond <= cfg.max_condition) {
            last_reason = format!("condition number {cond:.3e} > {:.3e}", cfg.max_condition);
            continue;
        }
        let q = qr.q();
        let pi1_left = match r.solve_upper_triangular(&q.transpose()) {
            Some(m) => m,
            None => {
                last_reason = "singular triangular factor".into();
                continue;
            }
        };

        let n1 = orthogonal_complement(&q, &mut rng);
        if let Some(j) = n1.row_iter().position(|row| row.norm() <= ZERO_NORM_TOL) {
            last_reason = format!("zero kernel row {j}");
            continue;
        }
        return ServerKeys::from_dense_unchecked(pi1, pi1_left, n1);
    }
    Err(Error::GenerationFailure {
        attempts: GENERATION_RETRIES,
        reason: last_reason,
    })
}

pub(crate) fn generate_aggregator_keys(cfg: &KeyGenConfig) -> Result<AggregatorKeys> {
    if cfg.p < 2 {
        return Err(Error::dim("p >= 2", ">= 2", cfg.p));
    }
    cfg.check_common()?;
    let mut rng = derive_rng(cfg.seed, Stream::Keys, 2, 0);
    let mut last_reason = String::new();
    for _ in 0..GENERATION_RETRIES {
        let raw = gaussian_matrix(1, cfg.p, &mut rng);
        let l1: f64 = raw.iter().map(|x| x.abs()).sum();
        let pi2 = RowDVector::from_iterator(cfg.p, raw.iter().map(|x| x * cfg.pi2_scale / l1));
        let pi2_right = pi2.transpose() / pi2.dot(&pi2);
        let direction = DMatrix::from_column_slice(cfg.p, 1, pi2_right.as_slice());
        let n2 = orthogonal_complement(&direction, &mut rng).transpose();
        if let Some(m) = n2.column_iter().position(|c| c.norm() <= ZERO_NORM_TOL) {
            last_reason = format!("zero kernel column {m}");
            continue;
        }
        return AggregatorKeys::from_parts_unchecked(pi2, pi2_right, n2);
    }
    Err(Error::GenerationFailure {
        attempts: GENERATION_RETRIES,
        reason: last_reason,
    })
}
