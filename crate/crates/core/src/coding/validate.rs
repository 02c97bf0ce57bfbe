use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::keys::{AggregatorKeys, ServerKeys, ZERO_NORM_TOL};
use super::{AGGREGATOR_TOL, ALGEBRA_TOL};
use crate::seed::rng_from_seed;

/// Random probes used to estimate Frobenius residuals of structured keys.
const PROBES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn below(&mut self, name: &'static str, measured: f64, threshold: f64, detail: String) {
        self.checks.push(InvariantCheck {
            name,
            measured,
            threshold,
            passed: measured < threshold,
            detail,
        });
    }

    fn above(&mut self, name: &'static str, measured: f64, threshold: f64, detail: String) {
        self.checks.push(InvariantCheck {
            name,
            measured,
            threshold,
            passed: measured > threshold,
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<5} {:<24} measured={:.3e} threshold={:.3e} {}",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                c.detail
            )?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Checks every key invariant and reports the measured residuals.
pub fn validate_keys(server: &ServerKeys, agg: &AggregatorKeys) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = server.n();
    let imm = server.immersion();

    match (imm.pi1(), imm.pi1_left(), server.n1()) {
        (Some(pi1), Some(pi1_left), Some(n1)) => {
            let left = (pi1_left * pi1 - DMatrix::identity(n, n)).norm();
            report.below("left_inverse", left, ALGEBRA_TOL, "‖Π1ᴸΠ1 − I‖_F".into());
            let kernel = (pi1_left * n1).norm();
            report.below("kernel_annihilation", kernel, ALGEBRA_TOL, "‖Π1ᴸN1‖_F".into());

            let sv = pi1.singular_values();
            let max = sv.max();
            let tol = max * (pi1.nrows().max(n) as f64) * f64::EPSILON;
            let rank = sv.iter().filter(|&&s| s > tol).count();
            report.checks.push(InvariantCheck {
                name: "full_column_rank",
                measured: rank as f64,
                threshold: n as f64,
                passed: rank == n,
                detail: format!("rank {rank} of {n}"),
            });
        }
        _ => {
            // Structured keys: Hutchinson estimates, ‖A‖_F² = E‖Az‖².
            let mut rng = rng_from_seed(0x5eed);
            let (mut left, mut kernel) = (0.0, 0.0);
            for _ in 0..PROBES {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let back = imm.project(&imm.lift(&z).expect("shape")).expect("shape");
                left += (back - z).norm_squared();
                let r = DVector::from_fn(server.kernel_dim(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let k = imm.project(&server.kernel_apply(&r).expect("shape")).expect("shape");
                kernel += k.norm_squared();
            }
            let left = (left / PROBES as f64).sqrt();
            let kernel = (kernel / PROBES as f64).sqrt();
            report.below("left_inverse", left, ALGEBRA_TOL, "estimated ‖Π1ᴸΠ1 − I‖_F".into());
            report.below("kernel_annihilation", kernel, ALGEBRA_TOL, "estimated ‖Π1ᴸN1‖_F".into());

            let (max, min) = imm.structured().expect("structured").singular_range();
            let tol = max * 16.0 * f64::EPSILON;
            report.above(
                "full_column_rank",
                min,
                tol,
                format!("smallest singular value {min:.3e}"),
            );
        }
    }

    let rows = server.kernel_row_norms();
    let (j, min_row) = rows
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, x)| if x < acc.1 { (j, x) } else { acc });
    let detail = if min_row > ZERO_NORM_TOL {
        format!("smallest row norm at row {j}")
    } else {
        format!("zero kernel row {j}")
    };
    report.above("kernel_rows_nonzero", min_row, ZERO_NORM_TOL, detail);

    let unit = (agg.pi2().dot(&agg.pi2_right().transpose()) - 1.0).abs();
    report.below("right_inverse", unit, AGGREGATOR_TOL, "|Π2Π2ᴿ − 1|".into());
    let k2 = (agg.n2() * agg.pi2_right()).norm();
    report.below("aggregator_kernel", k2, AGGREGATOR_TOL, "‖N2Π2ᴿ‖".into());
    let (m, min_col) = agg
        .n2()
        .column_iter()
        .map(|c| c.norm())
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (m, x)| if x < acc.1 { (m, x) } else { acc });
    let detail = if min_col > ZERO_NORM_TOL {
        format!("smallest column norm at column {m}")
    } else {
        format!("zero kernel column {m}")
    };
    report.above("kernel_columns_nonzero", min_col, ZERO_NORM_TOL, detail);

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{gen_aggregator_keys, gen_server_keys, KeyGenConfig};

    fn keys(n: usize, n_tilde: usize) -> (ServerKeys, AggregatorKeys) {
        let cfg = KeyGenConfig::new(n, n_tilde, 3, 17);
        (gen_server_keys(&cfg).unwrap(), gen_aggregator_keys(&cfg).unwrap())
    }

    #[test]
    fn fresh_keys_pass() {
        let (s, a) = keys(8, 11);
        let report = validate_keys(&s, &a);
        assert!(report.passed(), "{report}");
        assert!(report.get("left_inverse").unwrap().measured < 1e-10);
        assert_eq!(report.checks.len(), 7);
    }

    #[test]
    fn zeroed_kernel_row_is_reported() {
        let (s, a) = keys(4, 6);
        let imm = s.immersion();
        let mut n1 = s.n1().unwrap().clone();
        n1.row_mut(2).fill(0.0);
        let broken = ServerKeys::from_dense_unchecked(
            imm.pi1().unwrap().clone(),
            imm.pi1_left().unwrap().clone(),
            n1,
        )
        .unwrap();
        let report = validate_keys(&broken, &a);
        assert!(!report.passed());
        let check = report.get("kernel_rows_nonzero").unwrap();
        assert!(!check.passed);
        assert_eq!(check.detail, "zero kernel row 2");
    }

    #[test]
    fn duplicated_columns_fail_rank() {
        let (s, a) = keys(4, 6);
        let mut pi1 = s.immersion().pi1().unwrap().clone();
        let first = pi1.column(0).into_owned();
        pi1.set_column(1, &first);
        let pinv = pi1.clone().pseudo_inverse(1e-12).unwrap();
        let broken =
            ServerKeys::from_dense_unchecked(pi1, pinv, s.n1().unwrap().clone()).unwrap();
        let report = validate_keys(&broken, &a);
        let rank = report.get("full_column_rank").unwrap();
        assert!(!rank.passed);
        assert_eq!(rank.detail, "rank 3 of 4");
    }

    #[test]
    fn structured_keys_pass() {
        let mut cfg = KeyGenConfig::new(100, 110, 2, 3);
        cfg.layout = crate::coding::KeyLayout::Structured;
        let s = gen_server_keys(&cfg).unwrap();
        let a = gen_aggregator_keys(&cfg).unwrap();
        let report = validate_keys(&s, &a);
        assert!(report.passed(), "{report}");
    }
}
