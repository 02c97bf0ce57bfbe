//! Differential-privacy calculus for the kernel-noise mechanisms.
//!
//! Every released element `j` of a lifted model is `Π1^j·w` plus kernel
//! noise with per-element scale `‖N1^j‖₂·σ1` (times `‖Π2ᴿ‖₂` once the
//! aggregator's right inverse has been applied). The conditions below bound
//! the privacy loss of each element against a one-record change of the
//! client (local) or federation (global) dataset.
//!
//! Conventions: for Laplace noise `σ` is the scale parameter `b` (density
//! `∝ exp(−|x|/b)`, variance `2b²`); for Gaussian noise `σ` is the standard
//! deviation. All worst cases are taken row by row (and element by element
//! of `Π2`), not by combining independent maxima and minima.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::coding::{AggregatorKeys, ServerKeys};
use crate::error::{Error, Result};

/// `Δ = 2C/size`: the most one record can move a mean of values clipped to
/// norm `C`. The same value bounds both the ℓ1 and ℓ2 sensitivities.
pub fn sensitivity(clip: f64, size: usize) -> Result<f64> {
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::InvalidArgs(format!("clipping threshold {clip} must be positive")));
    }
    if size == 0 {
        return Err(Error::InvalidArgs("dataset size must be at least 1".into()));
    }
    Ok(2.0 * clip / size as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub clip: f64,
    pub local_size: usize,
    pub global_size: usize,
    /// `Δ^{wᵢ} = 2C/|Dᵢ|`.
    pub local: f64,
    /// `Δ^{w} = 2C/|D|`.
    pub global: f64,
}

impl Sensitivity {
    pub fn new(clip: f64, local_size: usize, global_size: usize) -> Result<Self> {
        if local_size > global_size {
            return Err(Error::InvalidArgs(format!(
                "local dataset ({local_size}) larger than the federation ({global_size})"
            )));
        }
        Ok(Sensitivity {
            clip,
            local_size,
            global_size,
            local: sensitivity(clip, local_size)?,
            global: sensitivity(clip, global_size)?,
        })
    }
}

/// Worst-case scalars of a [`NormProfile`]; this is also the shape in which
/// key norms are usually quoted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub max_pi1_l1: f64,
    pub max_pi1_l2: f64,
    pub min_n1_l2: f64,
    pub pi1_left_l2: f64,
    pub pi2_right_l2: f64,
    pub max_pi2_abs: f64,
    pub n2_l2: f64,
    pub min_n2_col_l2: f64,
}

/// Every norm the privacy conditions need, per row `j` of `Π1`/`N1` and per
/// element `m` of `Π2`/column of `N2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormProfile {
    pub pi1_l1: Vec<f64>,
    pub pi1_l2: Vec<f64>,
    pub n1_l2: Vec<f64>,
    /// Spectral norm of `Π1ᴸ`.
    pub pi1_left_l2: f64,
    pub pi2_right_l2: f64,
    pub pi2_abs: Vec<f64>,
    /// Spectral norm of `N2`.
    pub n2_l2: f64,
    pub n2_col_l2: Vec<f64>,
}

impl NormProfile {
    pub fn from_keys(server: &ServerKeys, agg: &AggregatorKeys) -> Self {
        let (pi1_l1, pi1_l2) = server.immersion().row_norms();
        NormProfile {
            pi1_l1,
            pi1_l2,
            n1_l2: server.kernel_row_norms(),
            pi1_left_l2: server.immersion().left_inverse_norm(),
            pi2_right_l2: agg.pi2_right().norm(),
            pi2_abs: agg.pi2().iter().map(|x| x.abs()).collect(),
            n2_l2: agg.n2().singular_values().max(),
            n2_col_l2: agg.n2().column_iter().map(|c| c.norm()).collect(),
        }
    }

    /// A single-row, single-element profile built from quoted worst cases.
    /// Pairing the largest `Π1` row with the smallest `N1` row is never
    /// optimistic.
    pub fn from_summary(s: &NormSummary) -> Self {
        NormProfile {
            pi1_l1: vec![s.max_pi1_l1],
            pi1_l2: vec![s.max_pi1_l2],
            n1_l2: vec![s.min_n1_l2],
            pi1_left_l2: s.pi1_left_l2,
            pi2_right_l2: s.pi2_right_l2,
            pi2_abs: vec![s.max_pi2_abs],
            n2_l2: s.n2_l2,
            n2_col_l2: vec![s.min_n2_col_l2],
        }
    }

    pub fn summary(&self) -> NormSummary {
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        NormSummary {
            max_pi1_l1: max(&self.pi1_l1),
            max_pi1_l2: max(&self.pi1_l2),
            min_n1_l2: min(&self.n1_l2),
            pi1_left_l2: self.pi1_left_l2,
            pi2_right_l2: self.pi2_right_l2,
            max_pi2_abs: max(&self.pi2_abs),
            n2_l2: self.n2_l2,
            min_n2_col_l2: min(&self.n2_col_l2),
        }
    }

    fn validate(&self) -> Result<()> {
        let rows = self.pi1_l1.len();
        if rows == 0 || self.pi1_l2.len() != rows || self.n1_l2.len() != rows {
            return Err(Error::InvalidArgs("norm profile rows disagree".into()));
        }
        if self.pi2_abs.is_empty() || self.pi2_abs.len() != self.n2_col_l2.len() {
            return Err(Error::InvalidArgs("norm profile columns disagree".into()));
        }
        let s = self.summary();
        let all = [
            s.max_pi1_l1,
            s.max_pi1_l2,
            s.min_n1_l2,
            s.pi1_left_l2,
            s.pi2_right_l2,
            s.max_pi2_abs,
            s.n2_l2,
            s.min_n2_col_l2,
        ];
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidArgs(format!("norm profile has a non-positive entry: {s:?}")));
        }
        Ok(())
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgs(format!("{name} = {x} must be positive")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgs(format!("δ = {delta} must lie in (0, 0.5)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsPair {
    /// Local level `ε̃` (client uploads).
    pub local: f64,
    /// Global level `ε′` (widened aggregates).
    pub global: f64,
}

/// Pure `ε` guarantees under Laplace kernel noise:
///
/// `ε̃ = max_j ‖Π1^j‖₁Δ^{wᵢ} / (‖N1^j‖₂σ1‖Π2ᴿ‖₂)` and
/// `ε′ = max_{j,m} ‖Π1^j‖₁Δ^{w}|Π2^m| / (‖N1^j‖₂σ1 + ‖Π1^j‖₂‖Π1ᴸ‖₂‖N2‖₂σ2)`.
pub fn laplace_eps(profile: &NormProfile, sens: &Sensitivity, sigma1: f64, sigma2: f64) -> Result<EpsPair> {
    profile.validate()?;
    positive("σ1", sigma1)?;
    positive("σ2", sigma2)?;
    let local = laplace_local_per_row(profile, sens, sigma1)
        .into_iter()
        .fold(0.0, f64::max);
    let max_pi2 = profile.summary().max_pi2_abs;
    let global = (0..profile.pi1_l1.len())
        .map(|j| {
            profile.pi1_l1[j] * sens.global * max_pi2
                / (profile.n1_l2[j] * sigma1 + profile.pi1_l2[j] * profile.pi1_left_l2 * profile.n2_l2 * sigma2)
        })
        .fold(0.0, f64::max);
    Ok(EpsPair { local, global })
}

/// Per-row local Laplace levels, for diagnostics.
pub fn laplace_local_per_row(profile: &NormProfile, sens: &Sensitivity, sigma1: f64) -> Vec<f64> {
    (0..profile.pi1_l1.len())
        .map(|j| profile.pi1_l1[j] * sens.local / (profile.n1_l2[j] * sigma1 * profile.pi2_right_l2))
        .collect()
}

/// Which form of the global Gaussian condition to evaluate.
///
/// The published condition squares `X = ‖N1^j‖σ1 + ‖N2^m‖σ2` but multiplies
/// the `Q⁻¹` term by `Y = ‖N1^j‖σ1 + ‖Π1^j‖₂‖Π1ᴸ‖₂‖N2‖₂σ2`; the Laplace
/// condition uses `Y` throughout. Both are available; `AsPrinted` is the
/// default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalVariant {
    #[default]
    AsPrinted,
    Uniform,
}

/// Slack of each Gaussian condition at its worst row, divided by the
/// squared noise scale of that row (so `0` is the boundary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCheck {
    pub local_margin: f64,
    pub global_margin: f64,
}

impl GaussianCheck {
    pub fn local_ok(&self) -> bool {
        self.local_margin >= 0.0
    }

    pub fn global_ok(&self) -> bool {
        self.global_margin >= 0.0
    }

    pub fn passed(&self) -> bool {
        self.local_ok() && self.global_ok()
    }
}

/// Targets for the Gaussian conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTarget {
    pub eps_local: f64,
    pub delta_local: f64,
    pub eps_global: f64,
    pub delta_global: f64,
}

impl GaussianTarget {
    fn validate(&self) -> Result<()> {
        positive("ε̃", self.eps_local)?;
        positive("ε′", self.eps_global)?;
        check_delta(self.delta_local)?;
        check_delta(self.delta_global)
    }
}

/// Terms of `s² − s·(a/ε)Q⁻¹(δ) − a²/(2ε)` for one (j, m) pair: the squared
/// factor, the cross factor and the released-difference norm `a`.
struct Quad {
    square: f64,
    cross: f64,
    a: f64,
}

fn local_terms<'a>(p: &'a NormProfile, sens: &'a Sensitivity, sigma1: f64) -> impl Iterator<Item = Quad> + 'a {
    (0..p.pi1_l2.len()).map(move |j| {
        let s = p.n1_l2[j] * sigma1 * p.pi2_right_l2;
        Quad {
            square: s,
            cross: s,
            a: p.pi1_l2[j] * sens.local,
        }
    })
}

fn global_terms<'a>(
    p: &'a NormProfile,
    sens: &'a Sensitivity,
    sigma1: f64,
    sigma2: f64,
    variant: GlobalVariant,
) -> impl Iterator<Item = Quad> + 'a {
    (0..p.pi1_l2.len()).flat_map(move |j| {
        (0..p.pi2_abs.len()).map(move |m| {
            let y = p.n1_l2[j] * sigma1 + p.pi1_l2[j] * p.pi1_left_l2 * p.n2_l2 * sigma2;
            let x = match variant {
                GlobalVariant::AsPrinted => p.n1_l2[j] * sigma1 + p.n2_col_l2[m] * sigma2,
                GlobalVariant::Uniform => y,
            };
            Quad {
                square: x,
                cross: y,
                a: p.pi1_l2[j] * sens.global * p.pi2_abs[m],
            }
        })
    })
}

fn margin(q: &Quad, eps: f64, qinv: f64) -> f64 {
    let lhs = q.square * q.square - q.cross * q.a * qinv / eps - q.a * q.a / (2.0 * eps);
    lhs / (q.square * q.square)
}

fn min_eps(q: &Quad, qinv: f64) -> f64 {
    (q.a * qinv * q.cross + q.a * q.a / 2.0) / (q.square * q.square)
}

/// Evaluates both Gaussian conditions at their worst rows.
pub fn gaussian_check(
    profile: &NormProfile,
    sens: &Sensitivity,
    sigma1: f64,
    sigma2: f64,
    target: &GaussianTarget,
    variant: GlobalVariant,
) -> Result<GaussianCheck> {
    profile.validate()?;
    target.validate()?;
    positive("σ1", sigma1)?;
    positive("σ2", sigma2)?;
    let ql = q_inverse(target.delta_local)?;
    let qg = q_inverse(target.delta_global)?;
    Ok(GaussianCheck {
        local_margin: local_terms(profile, sens, sigma1)
            .map(|q| margin(&q, target.eps_local, ql))
            .fold(f64::INFINITY, f64::min),
        global_margin: global_terms(profile, sens, sigma1, sigma2, variant)
            .map(|q| margin(&q, target.eps_global, qg))
            .fold(f64::INFINITY, f64::min),
    })
}

/// Smallest `(ε̃, ε′)` the Gaussian conditions certify at the given noise
/// levels: each condition is linear in `1/ε`, so
/// `ε ≥ (a·Q⁻¹(δ)·cross + a²/2) / square²`.
pub fn gaussian_eps(
    profile: &NormProfile,
    sens: &Sensitivity,
    sigma1: f64,
    sigma2: f64,
    delta_local: f64,
    delta_global: f64,
    variant: GlobalVariant,
) -> Result<EpsPair> {
    profile.validate()?;
    positive("σ1", sigma1)?;
    positive("σ2", sigma2)?;
    check_delta(delta_local)?;
    check_delta(delta_global)?;
    let ql = q_inverse(delta_local)?;
    let qg = q_inverse(delta_global)?;
    Ok(EpsPair {
        local: local_terms(profile, sens, sigma1)
            .map(|q| min_eps(&q, ql))
            .fold(0.0, f64::max),
        global: global_terms(profile, sens, sigma1, sigma2, variant)
            .map(|q| min_eps(&q, qg))
            .fold(0.0, f64::max),
    })
}

/// Smallest noise levels meeting both Gaussian conditions.
///
/// `σ1` comes from the positive root of the local quadratic in
/// `σ̄ = ‖N1^j‖₂σ1‖Π2ᴿ‖₂`, maximised over rows. `σ2` is then the smallest
/// value making the global condition hold given that `σ1`; it is `0` when
/// `σ1` alone already satisfies the global condition (the widening noise
/// is then not needed for the stated `ε′`).
pub fn gaussian_solve_sigma(
    profile: &NormProfile,
    sens: &Sensitivity,
    target: &GaussianTarget,
    variant: GlobalVariant,
) -> Result<(f64, f64)> {
    profile.validate()?;
    target.validate()?;
    let ql = q_inverse(target.delta_local)?;
    let qg = q_inverse(target.delta_global)?;

    let mut sigma1 = 0.0_f64;
    for j in 0..profile.pi1_l2.len() {
        let a = profile.pi1_l2[j] * sens.local;
        let b = a * ql / target.eps_local;
        let c = a * a / (2.0 * target.eps_local);
        let root = positive_root(1.0, -b, -c).ok_or_else(|| Error::NoSolution("local quadratic".into()))?;
        sigma1 = sigma1.max(root / (profile.n1_l2[j] * profile.pi2_right_l2));
    }
    // The root is exact up to rounding; step up until the check agrees.
    let local_ok = |s: f64| {
        local_terms(profile, sens, s)
            .map(|q| margin(&q, target.eps_local, ql))
            .fold(f64::INFINITY, f64::min)
            >= 0.0
    };
    sigma1 = nudge_up(sigma1, local_ok)?;

    let mut sigma2 = 0.0_f64;
    for j in 0..profile.pi1_l2.len() {
        let u = profile.n1_l2[j] * sigma1;
        let k = profile.pi1_l2[j] * profile.pi1_left_l2 * profile.n2_l2;
        for m in 0..profile.pi2_abs.len() {
            let a = profile.pi1_l2[j] * sens.global * profile.pi2_abs[m];
            let big_b = a * qg / target.eps_global;
            let big_a = a * a / (2.0 * target.eps_global);
            let root = match variant {
                // (u + c·s)² − B(u + k·s) − A ≥ 0
                GlobalVariant::AsPrinted => {
                    let c = profile.n2_col_l2[m];
                    positive_root(c * c, 2.0 * u * c - big_b * k, u * u - big_b * u - big_a)
                }
                // y² − B·y − A ≥ 0 with y = u + k·s
                GlobalVariant::Uniform => positive_root(1.0, -big_b, -big_a).map(|y| (y - u) / k),
            };
            if let Some(r) = root {
                sigma2 = sigma2.max(r);
            }
        }
    }
    if sigma2 > 0.0 {
        let global_ok = |s: f64| {
            global_terms(profile, sens, sigma1, s, variant)
                .map(|q| margin(&q, target.eps_global, qg))
                .fold(f64::INFINITY, f64::min)
                >= 0.0
        };
        sigma2 = nudge_up(sigma2, global_ok)?;
    }
    Ok((sigma1, sigma2))
}

/// Larger real root of `αx² + βx + γ`, computed without cancellation.
fn positive_root(alpha: f64, beta: f64, gamma: f64) -> Option<f64> {
    let disc = beta * beta - 4.0 * alpha * gamma;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let root = if beta <= 0.0 {
        (-beta + sq) / (2.0 * alpha)
    } else {
        (2.0 * gamma) / (-beta - sq)
    };
    Some(root)
}

fn nudge_up(mut x: f64, ok: impl Fn(f64) -> bool) -> Result<f64> {
    for _ in 0..64 {
        if ok(x) {
            return Ok(x);
        }
        x = f64::from_bits(x.to_bits() + 1);
    }
    Err(Error::NoSolution(format!("condition still fails just above σ = {x}")))
}

/// Standard normal tail `Q(x) = P(Z ≥ x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] on `(0, 1)`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q⁻¹ is defined on (0, 1), got {p}")));
    }
    if p > 0.5 {
        return Ok(-q_inverse(1.0 - p)?);
    }
    // Q is decreasing; Q(0) = ½ and Q(40) underflows far below any f64 > 0.
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density == 0.0 {
            break;
        }
        x += (q_function(x) - p) / density;
    }
    Ok(x)
}

/// Kernel-noise distribution. `σ` is the Laplace scale or the Gaussian
/// standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Laplace,
    #[default]
    Gaussian,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Laplace => "laplace",
            NoiseKind::Gaussian => "gaussian",
        })
    }
}

impl NoiseKind {
    pub fn sample(self, rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
        match self {
            NoiseKind::Laplace => sample_laplace(rows, cols, sigma, rng),
            NoiseKind::Gaussian => sample_gaussian(rows, cols, sigma, rng),
        }
    }
}

/// i.i.d. zero-mean Laplace entries with scale `b = σ`, by inverse CDF.
pub fn sample_laplace(rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    positive("σ", sigma)?;
    Ok(DMatrix::from_fn(rows, cols, |_, _| {
        let u: f64 = Open01.sample(rng);
        let u = u - 0.5;
        -sigma * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }))
}

/// i.i.d. zero-mean Gaussian entries with standard deviation `σ`.
pub fn sample_gaussian(rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    positive("σ", sigma)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgs(e.to_string()))?;
    Ok(DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng)))
}

/// Noise configuration the privacy levels are evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub noise: NoiseKind,
    pub sigma1: f64,
    pub sigma2: f64,
    pub clip: f64,
    /// `δ̃` and `δ′`; ignored for Laplace noise.
    #[serde(default = "default_delta")]
    pub delta_local: f64,
    #[serde(default = "default_delta")]
    pub delta_global: f64,
    #[serde(default)]
    pub variant: GlobalVariant,
}

fn default_delta() -> f64 {
    1e-5
}

/// Everything needed to audit a privacy claim: the levels and every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub noise: NoiseKind,
    pub sigma1: f64,
    pub sigma2: f64,
    pub clip: f64,
    pub local_size: usize,
    pub global_size: usize,
    pub sensitivity_local: f64,
    pub sensitivity_global: f64,
    pub eps_local: f64,
    pub delta_local: f64,
    pub eps_global: f64,
    pub delta_global: f64,
    pub variant: GlobalVariant,
    #[serde(flatten)]
    pub norms: NormSummary,
}

impl PrivacyReport {
    pub fn compute(profile: &NormProfile, sizes: (usize, usize), params: &PrivacyParams) -> Result<Self> {
        let sens = Sensitivity::new(params.clip, sizes.0, sizes.1)?;
        let (eps, delta_local, delta_global) = match params.noise {
            NoiseKind::Laplace => (laplace_eps(profile, &sens, params.sigma1, params.sigma2)?, 0.0, 0.0),
            NoiseKind::Gaussian => (
                gaussian_eps(
                    profile,
                    &sens,
                    params.sigma1,
                    params.sigma2,
                    params.delta_local,
                    params.delta_global,
                    params.variant,
                )?,
                params.delta_local,
                params.delta_global,
            ),
        };
        Ok(PrivacyReport {
            noise: params.noise,
            sigma1: params.sigma1,
            sigma2: params.sigma2,
            clip: params.clip,
            local_size: sizes.0,
            global_size: sizes.1,
            sensitivity_local: sens.local,
            sensitivity_global: sens.global,
            eps_local: eps.local,
            delta_local,
            eps_global: eps.global,
            delta_global,
            variant: params.variant,
            norms: profile.summary(),
        })
    }

    /// One `name=value` per line, keys sorted.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let map = value.as_object().expect("report is a struct");
        let sorted: BTreeMap<_, _> = map.iter().collect();
        let mut out = String::new();
        for (k, v) in sorted {
            let text = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k}={text}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                message: format!("expected name=value, got {line:?}"),
            })?;
            let v = v.trim();
            // Parse numbers with std so floats round-trip bit-exactly.
            let value = if let Ok(n) = v.parse::<u64>() {
                serde_json::Value::from(n)
            } else if let Some(n) = v.parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                serde_json::Value::Number(n)
            } else {
                serde_json::Value::String(v.to_string())
            };
            map.insert(k.trim().to_string(), value);
        }
        serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })
    }
}

impl fmt::Display for PrivacyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
