//! Privacy levels for the large-norm key regime (‖Π1 rows‖ = 1e-3, ‖N1
//! rows‖ = 1e3, ‖Π2ᴿ‖ = 1e3, σ = 1e3, C = 1000, 6000 rows per client), then
//! the smallest noise meeting a modest Gaussian target for ordinary keys.

use sifl::coding::{gen_aggregator_keys, gen_server_keys, KeyGenConfig};
use sifl::dp::{
    gaussian_check, gaussian_eps, gaussian_solve_sigma, laplace_eps, GaussianTarget, GlobalVariant, NormProfile,
    NormSummary, Sensitivity,
};

fn main() -> sifl::Result<()> {
    let profile = NormProfile::from_summary(&NormSummary {
        max_pi1_l1: 1e-3,
        max_pi1_l2: 1e-3,
        min_n1_l2: 1e3,
        pi1_left_l2: 1e3,
        pi2_right_l2: 1e3,
        max_pi2_abs: 1e-3,
        n2_l2: 2f64.sqrt() * 1e3,
        min_n2_col_l2: 1e3,
    });
    let sens = Sensitivity::new(1000.0, 6000, 60000)?;
    let lap = laplace_eps(&profile, &sens, 1e3, 1e3)?;
    println!("Laplace   ε̃ = {:.3e}  ε′ = {:.3e}", lap.local, lap.global);
    for variant in [GlobalVariant::AsPrinted, GlobalVariant::Uniform] {
        let g = gaussian_eps(&profile, &sens, 1e3, 1e3, 1e-5, 1e-5, variant)?;
        println!("Gaussian  ε̃ = {:.3e}  ε′ = {:.3e}  (δ = 1e-5, {variant:?})", g.local, g.global);
    }

    let cfg = KeyGenConfig::new(50, 60, 3, 5);
    let profile = NormProfile::from_keys(&gen_server_keys(&cfg)?, &gen_aggregator_keys(&cfg)?);
    let sens = Sensitivity::new(1.0, 500, 5000)?;
    let target = GaussianTarget {
        eps_local: 1.0,
        delta_local: 1e-5,
        eps_global: 0.1,
        delta_global: 1e-5,
    };
    let (s1, s2) = gaussian_solve_sigma(&profile, &sens, &target, GlobalVariant::AsPrinted)?;
    let check = gaussian_check(&profile, &sens, s1, s2, &target, GlobalVariant::AsPrinted)?;
    println!("target ε̃=1, ε′=0.1 → σ1 = {s1:.4}, σ2 = {s2:.4}; margins {:.2e} / {:.2e}", check.local_margin, check.global_margin);
    Ok(())
}
