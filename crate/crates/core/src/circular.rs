//! Von Mises densities, finite von Mises mixtures over action direction, and
//! decision-point detection by modality.
//!
//! Every sub-policy action becomes one von Mises component: its mode is the
//! action's direction, its weight is the goal's belief score, and its
//! concentration grows with that score. A mixture whose density has a single
//! tall peak means the robot may act; a mixture whose mass is spread over
//! several directions marks a decision point that belongs to the human.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;


#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::subpolicy::SubpolicyAction;

/// Largest concentration accepted by [`vm_pdf`].
pub const KAPPA_MAX: f64 = 700.0;
const SERIES_LIMIT: f64 = 15.0;

/// Modified Bessel function of the first kind, order zero.
///
/// Power series below κ = 15, asymptotic expansion above.
pub fn bessel_i0(kappa: f64) -> f64 {
    let k = kappa.abs();
    if k < SERIES_LIMIT {
        i0_series(k)
    } else {
        k.exp() * i0_asymptotic_scaled(k)
    }
}

/// Exponentially scaled `e^{-κ} I₀(κ)`, finite for every finite κ.
pub fn bessel_i0e(kappa: f64) -> f64 {
    let k = kappa.abs();
    if k < SERIES_LIMIT {
        (-k).exp() * i0_series(k)
    } else {
        i0_asymptotic_scaled(k)
    }
}

fn i0_series(k: f64) -> f64 {
    let q = 0.25 * k * k;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 1.0;
    loop {
        term *= q / (m * m);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        m += 1.0;
    }
}

/// `e^{-κ} I₀(κ) ≈ (2πκ)^{-1/2} Σ_n [(2n-1)!!]² / (n! (8κ)^n)`, summed until
/// the terms stop shrinking.
fn i0_asymptotic_scaled(k: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    loop {
        let next = term * (2.0 * n - 1.0) * (2.0 * n - 1.0) / (8.0 * n * k);
        if next >= term || next < sum * 1e-17 {
            break;
        }
        sum += next;
        term = next;
        n += 1.0;
    }
    sum / (2.0 * PI * k).sqrt()
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !kappa.is_finite() || !(0.0..=KAPPA_MAX).contains(&kappa) {
        return Err(Error::Input(format!(
            "concentration {kappa} outside [0, {KAPPA_MAX}]"
        )));
    }
    Ok(())
}

/// Von Mises density `exp(κ cos(x-μ)) / (2π I₀(κ))`.
pub fn vm_pdf(x: f64, mu: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(vm_pdf_unchecked(x, mu, kappa))
}

#[inline]
fn vm_pdf_unchecked(x: f64, mu: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 1.0 / (2.0 * PI);
    }
    (kappa * ((x - mu).cos() - 1.0)).exp() / (2.0 * PI * bessel_i0e(kappa))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VonMisesComponent {
    /// Mode in `(-π, π]`.
    pub mode: f64,
    pub concentration: f64,
    pub weight: f64,
}

impl VonMisesComponent {
    pub fn new(mode: f64, concentration: f64, weight: f64) -> Result<Self> {
        check_kappa(concentration)?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Input(format!("weight {weight} outside [0, 1]")));
        }
        if !mode.is_finite() {
            return Err(Error::Input(format!("non-finite mode {mode}")));
        }
        Ok(VonMisesComponent {
            mode: wrap_angle(mode),
            concentration,
            weight,
        })
    }

    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        vm_pdf_unchecked(x, self.mode, self.concentration)
    }
}

/// Finite von Mises mixture: `π(x) = Σ_g w_g f(x | μ_g, κ_g)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VonMisesMixture {
    components: Vec<VonMisesComponent>,
}

impl VonMisesMixture {
    /// Builds a mixture; weights must sum to one within 1e-9.
    pub fn new(components: Vec<VonMisesComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Input("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("mixture weights sum to {total}")));
        }
        Ok(VonMisesMixture { components })
    }

    pub fn components(&self) -> &[VonMisesComponent] {
        &self.components
    }

    /// Same mixture with every mode shifted by `theta`.
    pub fn rotated(&self, theta: f64) -> VonMisesMixture {
        VonMisesMixture {
            components: self
                .components
                .iter()
                .map(|c| VonMisesComponent {
                    mode: wrap_angle(c.mode + theta),
                    ..*c
                })
                .collect(),
        }
    }
}

/// Maps belief scores to component concentrations: `κ = min + scale·b`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct KappaMapping {
    pub min: f64,
    pub scale: f64,
}

impl Default for KappaMapping {
    fn default() -> Self {
        KappaMapping { min: 0.5, scale: 8.0 }
    }
}

/// Result of [`build_fvmm`].
#[derive(Debug, Clone, PartialEq)]
pub struct FvmmBuild {
    pub mixture: VonMisesMixture,
    /// Set when every action had zero magnitude; the mixture then carries no
    /// directional information.
    pub degenerate: bool,
}

/// Builds the mixture over action directions from sub-policy actions and
/// their belief scores.
pub fn build_fvmm(
    sub_actions: &[SubpolicyAction],
    scores: &[f64],
    mapping: KappaMapping,
) -> Result<FvmmBuild> {
    if sub_actions.is_empty() || sub_actions.len() != scores.len() {
        return Err(Error::Input(format!(
            "{} sub-policy actions for {} scores",
            sub_actions.len(),
            scores.len()
        )));
    }
    let mut degenerate = true;
    let components = sub_actions
        .iter()
        .zip(scores)
        .map(|(sa, &b)| {
            let informative = sa.action.norm_sq() > 0.0;
            degenerate &= !informative;
            let kappa = if informative {
                mapping.min + mapping.scale * b
            } else {
                mapping.min
            };
            VonMisesComponent::new(sa.action.angle(), kappa, b.clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FvmmBuild {
        mixture: VonMisesMixture::new(components)?,
        degenerate,
    })
}

/// Mixture density at angle `x`.
pub fn fvmm_pdf(mixture: &VonMisesMixture, x: f64) -> f64 {
    mixture
        .components
        .iter()
        .map(|c| c.weight * c.density(x))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModalityClass {
    Unimodal,
    Multimodal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modality {
    pub class: ModalityClass,
    /// Highest sampled density.
    pub peak: f64,
}

impl Modality {
    pub fn is_multimodal(&self) -> bool {
        self.class == ModalityClass::Multimodal
    }
}

/// Modality detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModalityParams {
    pub n_samples: usize,
    pub peak_threshold: f64,
}

impl Default for ModalityParams {
    fn default() -> Self {
        ModalityParams {
            n_samples: 360,
            peak_threshold: 0.6,
        }
    }
}

/// Samples the density on `n_samples` evenly spaced angles; the mixture is
/// unimodal iff some sample exceeds `peak_threshold`.
pub fn classify_modality(
    mixture: &VonMisesMixture,
    n_samples: usize,
    peak_threshold: f64,
) -> Modality {
    assert!(n_samples >= 64, "need at least 64 samples, got {n_samples}");
    let step = 2.0 * PI / n_samples as f64;
    let peak = (0..n_samples)
        .map(|i| fvmm_pdf(mixture, -PI + step * i as f64))
        .fold(0.0, f64::max);
    let class = if peak > peak_threshold {
        ModalityClass::Unimodal
    } else {
        ModalityClass::Multimodal
    };
    Modality { class, peak }
}

/// Counts strict local maxima of the density on a circular grid whose
/// topographic prominence is at least 1% of the global maximum.
pub fn count_modes_oracle(mixture: &VonMisesMixture, grid_resolution: usize) -> usize {
    assert!(grid_resolution >= 1024, "grid too coarse: {grid_resolution}");
    let n = grid_resolution;
    let step = 2.0 * PI / n as f64;
    let values: Vec<f64> = (0..n)
        .map(|i| fvmm_pdf(mixture, -PI + step * i as f64))
        .collect();
    let global_max = values.iter().copied().fold(f64::MIN, f64::max);
    let global_min = values.iter().copied().fold(f64::MAX, f64::min);
    let at = |i: isize| values[i.rem_euclid(n as isize) as usize];

    let mut modes = 0;
    for i in 0..n as isize {
        let v = at(i);
        if !(v > at(i - 1) && v > at(i + 1)) {
            continue;
        }
        // Lowest point on each side before the walk meets higher ground.
        let mut key_col = f64::MIN;
        let mut escaped = false;
        for dir in [-1isize, 1] {
            let mut low = v;
            let mut j = i;
            let mut found_higher = false;
            for _ in 1..n {
                j += dir;
                let w = at(j);
                if w > v {
                    found_higher = true;
                    break;
                }
                low = low.min(w);
            }
            if found_higher {
                escaped = true;
                key_col = key_col.max(low);
            }
        }
        let prominence = if escaped { v - key_col } else { v - global_min };
        if prominence >= 0.01 * global_max {
            modes += 1;
        }
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec2;
    use alloc::vec;

    /// Independent I₀ reference: trapezoid rule on I₀(κ) = (1/π)∫₀^π e^{κ cos t} dt,
    /// which converges geometrically for periodic integrands.
    fn i0_quadrature(k: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let mut s = 0.5 * (k.exp() + (-k).exp());
        for i in 1..n {
            s += (k * (h * i as f64).cos()).exp();
        }
        s * h / PI
    }

    #[test]
    fn bessel_matches_quadrature() {
        for &k in &[0.0, 0.3, 1.0, 2.0, 7.5, 14.99, 15.0, 20.0, 50.0, 200.0, 690.0] {
            let a = bessel_i0(k);
            let b = i0_quadrature(k);
            assert!(((a - b) / b).abs() < 1e-10, "k={k}: {a} vs {b}");
        }
        // tabulated: I₀(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.2660658777520082).abs() < 1e-15);
    }

    #[test]
    fn uniform_limit() {
        for x in [-3.0, 0.0, 1.0, 2.5] {
            assert_eq!(vm_pdf(x, 0.7, 0.0).unwrap(), 1.0 / (2.0 * PI));
        }
        assert!((1.0 / (2.0 * PI) - 0.159155).abs() < 1e-6);
    }

    #[test]
    fn mode_density_kappa_two() {
        // e² / (2π I₀(2)) with I₀(2) from the quadrature reference
        let expected = 2f64.exp() / (2.0 * PI * i0_quadrature(2.0));
        let got = vm_pdf(0.4, 0.4, 2.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.5159).abs() < 1e-4);
    }

    #[test]
    fn kappa_out_of_range_rejected() {
        assert!(vm_pdf(0.0, 0.0, -1.0).is_err());
        assert!(vm_pdf(0.0, 0.0, 701.0).is_err());
        assert!(vm_pdf(0.0, 0.0, f64::NAN).is_err());
        assert!(vm_pdf(0.0, 0.0, 700.0).unwrap().is_finite());
    }

    #[test]
    fn symmetric_about_mode() {
        for &d in &[0.1, 0.7, 1.9, 3.0] {
            let a = vm_pdf(1.0 + d, 1.0, 3.0).unwrap();
            let b = vm_pdf(1.0 - d, 1.0, 3.0).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn actions(dirs: &[f64]) -> Vec<SubpolicyAction> {
        dirs.iter()
            .enumerate()
            .map(|(goal, &a)| SubpolicyAction {
                goal,
                action: Vec2::from_angle(a) * 0.2,
            })
            .collect()
    }

    #[test]
    fn build_east_west() {
        let sub = actions(&[0.0, PI]);
        let built = build_fvmm(&sub, &[0.5, 0.5], KappaMapping::default()).unwrap();
        let c = built.mixture.components();
        assert!(!built.degenerate);
        assert_eq!(c[0].mode, 0.0);
        assert!((c[1].mode - PI).abs() < 1e-15);
        assert_eq!((c[0].weight, c[1].weight), (0.5, 0.5));
        assert_eq!(c[0].concentration, 4.5);
    }

    #[test]
    fn build_identical_directions() {
        let sub = actions(&[0.3, 0.3, 0.3]);
        let built = build_fvmm(&sub, &[0.2, 0.3, 0.5], KappaMapping::default()).unwrap();
        assert!(built.mixture.components().iter().all(|c| (c.mode - 0.3).abs() < 1e-15));
    }

    #[test]
    fn build_dominant_score() {
        let sub = actions(&[0.3, 1.3, -2.0]);
        let built = build_fvmm(&sub, &[0.973, 0.021, 0.006], KappaMapping::default()).unwrap();
        assert_eq!(built.mixture.components()[0].weight, 0.973);
    }

    #[test]
    fn build_all_zero_is_flagged() {
        let sub: Vec<_> = (0..3)
            .map(|goal| SubpolicyAction {
                goal,
                action: Vec2::ZERO,
            })
            .collect();
        let built = build_fvmm(&sub, &[0.2, 0.3, 0.5], KappaMapping::default()).unwrap();
        assert!(built.degenerate);
        assert!(built
            .mixture
            .components()
            .iter()
            .all(|c| c.concentration == 0.5));
        assert!(build_fvmm(&sub[..2], &[0.2, 0.3, 0.5], KappaMapping::default()).is_err());
    }

    #[test]
    fn mixture_pdf_linearity() {
        let single = VonMisesMixture::new(vec![VonMisesComponent::new(0.5, 3.0, 1.0).unwrap()])
            .unwrap();
        let double = VonMisesMixture::new(vec![
            VonMisesComponent::new(0.5, 3.0, 0.5).unwrap(),
            VonMisesComponent::new(0.5, 3.0, 0.5).unwrap(),
        ])
        .unwrap();
        for x in [-2.0, 0.0, 0.5, 2.0] {
            let v = vm_pdf(x, 0.5, 3.0).unwrap();
            assert!((fvmm_pdf(&single, x) - v).abs() < 1e-15);
            assert!((fvmm_pdf(&double, x) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn modality_examples() {
        let one = VonMisesMixture::new(vec![VonMisesComponent::new(0.0, 8.0, 1.0).unwrap()])
            .unwrap();
        let params = ModalityParams::default();
        assert_eq!(
            classify_modality(&one, params.n_samples, params.peak_threshold).class,
            ModalityClass::Unimodal
        );
        assert_eq!(count_modes_oracle(&one, 4096), 1);

        let two = VonMisesMixture::new(vec![
            VonMisesComponent::new(0.0, 8.0, 0.5).unwrap(),
            VonMisesComponent::new(PI, 8.0, 0.5).unwrap(),
        ])
        .unwrap();
        let m = classify_modality(&two, params.n_samples, params.peak_threshold);
        assert_eq!(m.class, ModalityClass::Multimodal);
        let single_peak = vm_pdf(0.0, 0.0, 8.0).unwrap();
        assert!((m.peak - 0.5 * single_peak).abs() < 1e-3 * single_peak);
        assert_eq!(count_modes_oracle(&two, 4096), 2);

        let three = VonMisesMixture::new(
            [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]
                .iter()
                .map(|&m| VonMisesComponent::new(m, 8.0, 1.0 / 3.0).unwrap())
                .collect(),
        )
        .unwrap();
        assert_eq!(count_modes_oracle(&three, 4096), 3);
    }

    #[test]
    fn fig_two_dominant_case_is_unimodal() {
        // Scores from a near-goal approach; the three sub-policies point
        // roughly the same way.
        let sub = actions(&[1.2, 1.5, 1.9]);
        let built = build_fvmm(&sub, &[0.054, 0.761, 0.185], KappaMapping::default()).unwrap();
        let p = ModalityParams::default();
        assert_eq!(
            classify_modality(&built.mixture, p.n_samples, p.peak_threshold).class,
            ModalityClass::Unimodal
        );
    }
}
