//! Run-wide hyperparameters, redrawn before every main iteration.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Toggles and sliders shared by the whole problem for one main iteration.
#[derive(Clone, Debug)]
pub struct GlobalHyperParams {
    /// Multiply the score denominator by the trunk-to-twig travel time.
    pub time_in_denominator: bool,
    /// When false every score denominator is 1.
    pub denominator_enabled: bool,
    /// Divide leaf multipliers by the adjusted transhipment degree.
    pub degree_affects_multiplier: bool,
    /// Multiply leaf exponents by the adjusted transhipment degree.
    pub degree_affects_exponent: bool,
    /// Interpolation between min and max degree when merging estimates.
    pub transhipment_degree_slider: f64,
    /// Same, for split-node port scoring.
    pub transhipment_degree_slider_np: f64,
    /// Pass the full requirement (not just the shortfall) to port estimation.
    pub full_demand_for_variability: bool,
    /// Keep recursing past a degree that already covers the request.
    pub global_transhipment_fathom: bool,
    /// Recurse with the full quantity instead of the shortfall.
    pub full_fathom: bool,
    /// Allow repeated sweeps over port candidates while requests remain.
    pub transhipment_trip_setting: bool,
    /// Permute integration-logic labels among live clusters after every
    /// SRE integration.
    pub shuffle_logics: bool,
    /// Penalty applied to port-twig scores per unit of adjusted degree;
    /// drawn from [-2, 8], negative values invert the preference.
    pub degree_score_reduction: f64,
}

/// Draw a fresh hyperparameter combination. The draw order is fixed; tests
/// rely on it for reproducibility.
pub fn sample_hyperparams<R: Rng>(rng: &mut R) -> GlobalHyperParams {
    let time_in_denominator = rng.gen_bool(0.5);
    let denominator_enabled = rng.gen_bool(0.5);
    let degree_affects_multiplier = rng.gen_bool(0.5);
    let degree_affects_exponent = rng.gen_bool(0.5);
    let transhipment_degree_slider = rng.gen::<f64>();
    let transhipment_degree_slider_np = rng.gen::<f64>();
    let full_demand_for_variability = rng.gen_bool(0.5);
    let global_transhipment_fathom = rng.gen_bool(0.5);
    let full_fathom = rng.gen_bool(0.5);
    let transhipment_trip_setting = rng.gen_bool(0.8);
    let shuffle_logics = rng.gen_bool(0.8);
    let degree_score_reduction = rng.gen_range(-2.0..=8.0);
    GlobalHyperParams {
        time_in_denominator,
        denominator_enabled,
        degree_affects_multiplier,
        degree_affects_exponent,
        transhipment_degree_slider,
        transhipment_degree_slider_np,
        full_demand_for_variability,
        global_transhipment_fathom,
        full_fathom,
        transhipment_trip_setting,
        shuffle_logics,
        degree_score_reduction,
    }
}

/// One leaf weight in (0, 1]: a rare exact 1.0, otherwise a draw from a
/// normal or a uniform distribution with random parameters, rejected until
/// it lands in (0, 1].
pub fn sample_leaf_weight<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.02) {
        return 1.0;
    }
    if rng.gen_bool(0.5) {
        let mu = rng.gen::<f64>();
        let sigma = rng.gen::<f64>();
        if sigma > 0.0 {
            if let Ok(normal) = Normal::new(mu, sigma) {
                for _ in 0..64 {
                    let x = normal.sample(rng);
                    if x > 0.0 && x <= 1.0 {
                        return x;
                    }
                }
            }
        }
    }
    let (a, b) = (rng.gen::<f64>(), rng.gen::<f64>());
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let x = lo + (hi - lo) * rng.gen::<f64>();
    if x > 0.0 && x <= 1.0 {
        x
    } else {
        // lower bound can be 0.0 exactly; nudge inside the half-open range
        f64::MIN_POSITIVE.max(hi * 0.5 + 0.25)
    }
}
