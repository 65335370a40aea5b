//! Exact sums over finite spectra: state preparation, energy expectations,
//! unitary phase evolution, and the comparison against the continuum
//! distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amplitude_profiles::AmplitudeProfile;
use crate::distribution::{build_distribution, moments, GridPolicy};
use crate::dos_models::{DensityOfStatesModel, DiscreteSpectrum};
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, NeumaierSum};
use crate::output::fmt_real;
use crate::scalar::Real;

/// A pure state on a finite spectrum, described level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState<T> {
    spectrum: DiscreteSpectrum<T>,
    ln_weights: Vec<T>,
    phases: Vec<T>,
}

fn wrap_phase<T: Real>(x: T) -> T {
    let two_pi = T::TAU();
    let r = x - two_pi * (x / two_pi).floor();
    if r >= two_pi || r < T::zero() {
        T::zero()
    } else {
        r
    }
}

/// Populate every level with weight `g_k |a(E_k)|²` and a seeded uniform
/// phase in `[0, 2π)`.
pub fn prepare_state<T: Real>(
    spectrum: &DiscreteSpectrum<T>,
    profile: &AmplitudeProfile<T>,
    phase_seed: u64,
) -> Result<DiscreteState<T>> {
    let raw: Vec<T> = spectrum
        .levels()
        .iter()
        .map(|l| {
            let v = l.ln_degeneracy + profile.ln_amp_sq(l.energy);
            if v.is_nan() {
                T::neg_infinity()
            } else {
                v
            }
        })
        .collect();
    let ln_z = logsumexp(&raw);
    if !ln_z.is_finite() {
        return Err(Error::EmptySupport);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(phase_seed);
    let phases = (0..raw.len())
        .map(|_| wrap_phase(T::lit(rng.gen::<f64>() * std::f64::consts::TAU)))
        .collect();
    Ok(DiscreteState {
        spectrum: spectrum.clone(),
        ln_weights: raw.into_iter().map(|v| v - ln_z).collect(),
        phases,
    })
}

/// `Σ_k w_k f(E_k)` over pairs `(E_k, ln w_k)` with compensated summation;
/// zero-weight levels are skipped, so `f` need only be finite where the
/// weight is not zero.
pub fn discrete_expectation<T: Real>(levels: &[(T, T)], f: impl Fn(T) -> T) -> T {
    let mut acc = NeumaierSum::new();
    for &(e, lw) in levels {
        if lw > T::neg_infinity() {
            acc.add(lw.exp() * f(e));
        }
    }
    acc.total()
}

impl<T: Real> DiscreteState<T> {
    pub fn spectrum(&self) -> &DiscreteSpectrum<T> {
        &self.spectrum
    }

    /// Normalized `ln w_k`; their log-sum-exp is zero.
    pub fn ln_weights(&self) -> &[T] {
        &self.ln_weights
    }

    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    /// Levels with non-zero weight.
    pub fn populated_levels(&self) -> usize {
        self.ln_weights
            .iter()
            .filter(|&&w| w > T::neg_infinity())
            .count()
    }

    fn pairs(&self) -> Vec<(T, T)> {
        self.spectrum
            .levels()
            .iter()
            .zip(&self.ln_weights)
            .map(|(l, &w)| (l.energy, w))
            .collect()
    }

    /// `ln Σ w_k`, zero up to rounding.
    pub fn ln_norm(&self) -> T {
        logsumexp(&self.ln_weights)
    }

    pub fn expectation(&self, f: impl Fn(T) -> T) -> T {
        discrete_expectation(&self.pairs(), f)
    }

    /// `(Ē, ΔE)` by direct sums.
    pub fn energy_moments(&self) -> (T, T) {
        let mean = self.expectation(|e| e);
        let var = self.expectation(|e| (e - mean) * (e - mean));
        (mean, var.max(T::zero()).sqrt())
    }

    /// `k,E,ln_weight,phase` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,E,ln_weight,phase\n");
        for (k, ((l, &w), &p)) in self
            .spectrum
            .levels()
            .iter()
            .zip(&self.ln_weights)
            .zip(&self.phases)
            .enumerate()
        {
            out.push_str(&format!(
                "{k},{},{},{}\n",
                fmt_real(l.energy),
                fmt_real(w),
                fmt_real(p)
            ));
        }
        out
    }
}

/// `Σ_k |c_k|² f(E_k)` for the state.
pub fn expectation_of_energy_function<T: Real>(state: &DiscreteState<T>, f: impl Fn(T) -> T) -> T {
    state.expectation(f)
}

/// Advance every amplitude by `exp(-i E_k t)`; weights are untouched.
pub fn evolve_phases<T: Real>(state: &DiscreteState<T>, t: T) -> DiscreteState<T> {
    let phases = state
        .spectrum
        .levels()
        .iter()
        .zip(&state.phases)
        .map(|(l, &p)| wrap_phase(p - wrap_phase(l.energy * t)))
        .collect();
    DiscreteState {
        spectrum: state.spectrum.clone(),
        ln_weights: state.ln_weights.clone(),
        phases,
    }
}

/// Discrete versus continuum moments for one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyReport<T> {
    pub discrete_mean: T,
    pub discrete_width: T,
    pub continuum_mean: T,
    pub continuum_width: T,
    /// `|Ē_d - Ē_c| / |Ē_d|`.
    pub mean_rel: T,
    /// `|ΔE_d - ΔE_c| / ΔE_d` (infinite when the discrete width is zero).
    pub width_rel: T,
    pub populated_levels: usize,
    /// Only one level is populated, so the discrete width is zero: the
    /// preparation is finer than the level spacing.
    pub sub_resolution: bool,
}

impl<T: Real> DiscrepancyReport<T> {
    pub fn max_rel(&self) -> T {
        self.mean_rel.max(self.width_rel)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "E_mean_discrete,dE_discrete,E_mean_continuum,dE_continuum,mean_rel,width_rel,levels,sub_resolution\n{},{},{},{},{},{},{},{}\n",
            fmt_real(self.discrete_mean),
            fmt_real(self.discrete_width),
            fmt_real(self.continuum_mean),
            fmt_real(self.continuum_width),
            fmt_real(self.mean_rel),
            fmt_real(self.width_rel),
            self.populated_levels,
            self.sub_resolution
        )
    }
}

fn relative<T: Real>(reference: T, other: T) -> T {
    let d = (reference - other).abs();
    if d == T::zero() {
        T::zero()
    } else {
        d / reference.abs()
    }
}

pub fn compare_discrete_continuum<T: Real>(
    spectrum: &DiscreteSpectrum<T>,
    profile: &AmplitudeProfile<T>,
    model: &DensityOfStatesModel<T>,
    policy: &GridPolicy<T>,
) -> Result<DiscrepancyReport<T>> {
    let state = prepare_state(spectrum, profile, 0)?;
    let (dm, dw) = state.energy_moments();
    let dist = build_distribution(model, profile, policy)?;
    let m = moments(&dist);
    let populated = state.populated_levels();
    Ok(DiscrepancyReport {
        discrete_mean: dm,
        discrete_width: dw,
        continuum_mean: m.mean,
        continuum_width: m.width,
        mean_rel: relative(dm, m.mean),
        width_rel: relative(dw, m.width),
        populated_levels: populated,
        sub_resolution: populated == 1,
    })
}

/// Gaussian window on the positive-temperature half of an Ising band:
/// centre `-B/2`, scale `√(B J)`, vanishing at both ends `-B` and `0`,
/// with `B = J(N-1)`.
pub fn band_scaled_gaussian_profile<T: Real>(n: usize, coupling: T) -> Result<AmplitudeProfile<T>> {
    if n < 2 || !(coupling > T::zero()) {
        return Err(Error::Argument(
            "band profile needs N >= 2 and J > 0".into(),
        ));
    }
    let band = coupling * T::from_usize_lossy(n - 1);
    AmplitudeProfile::exponential_cutoff(
        -band * T::lit(0.5),
        (band * coupling).sqrt(),
        T::lit(2.0),
        T::zero(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dos_models::{ising_chain_spectrum, Level};

    #[test]
    fn two_spin_chain_weights() {
        let s = ising_chain_spectrum::<f64>(2, 1.0).unwrap();
        let st =
            prepare_state(&s, &AmplitudeProfile::uniform_window(-2.0, 2.0).unwrap(), 1).unwrap();
        for &w in st.ln_weights() {
            assert!((w.exp() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn three_spin_chain_moments() {
        let s = ising_chain_spectrum::<f64>(3, 1.0).unwrap();
        let st =
            prepare_state(&s, &AmplitudeProfile::uniform_window(-3.0, 3.0).unwrap(), 9).unwrap();
        let w: Vec<f64> = st.ln_weights().iter().map(|w| w.exp()).collect();
        for (a, b) in w.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(expectation_of_energy_function(&st, |e| e).abs() < 1e-15);
        assert!((expectation_of_energy_function(&st, |e| e * e) - 2.0).abs() < 1e-14);
        assert!((expectation_of_energy_function(&st, |_| 1.0) - 1.0).abs() < 1e-15);
        assert!(st.ln_norm().abs() < 1e-15);
    }

    #[test]
    fn excluded_level_has_zero_weight() {
        let s = ising_chain_spectrum::<f64>(3, 1.0).unwrap();
        let st =
            prepare_state(&s, &AmplitudeProfile::uniform_window(-3.0, 1.0).unwrap(), 0).unwrap();
        assert_eq!(st.ln_weights()[2], f64::NEG_INFINITY);
        assert_eq!(st.ln_weights()[2].exp(), 0.0);
        assert_eq!(st.populated_levels(), 2);
        let err =
            prepare_state(&s, &AmplitudeProfile::uniform_window(5.0, 6.0).unwrap(), 0).unwrap_err();
        assert!(matches!(err, Error::EmptySupport));
    }

    #[test]
    fn phases_seeded_and_in_range() {
        let s = ising_chain_spectrum::<f64>(40, 1.0).unwrap();
        let p = band_scaled_gaussian_profile(40, 1.0).unwrap();
        let a = prepare_state(&s, &p, 42).unwrap();
        let b = prepare_state(&s, &p, 42).unwrap();
        let c = prepare_state(&s, &p, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.phases(), c.phases());
        assert!(a
            .phases()
            .iter()
            .all(|&x| (0.0..std::f64::consts::TAU).contains(&x)));
    }

    #[test]
    fn evolution_composes_and_keeps_weights() {
        let s = ising_chain_spectrum::<f64>(12, 0.7).unwrap();
        let st = prepare_state(
            &s,
            &AmplitudeProfile::uniform_window(-10.0, 10.0).unwrap(),
            5,
        )
        .unwrap();
        assert_eq!(evolve_phases(&st, 0.0), st);
        let two = evolve_phases(&evolve_phases(&st, 1.3), 2.9);
        let one = evolve_phases(&st, 4.2);
        assert_eq!(two.ln_weights(), st.ln_weights());
        for (&a, &b) in two.phases().iter().zip(one.phases()) {
            let d = (a - b).abs();
            assert!(d.min(std::f64::consts::TAU - d) < 1e-12);
        }
        assert_eq!(two.energy_moments(), st.energy_moments());
    }

    #[test]
    fn single_level_window_is_sub_resolution() {
        let n = 50;
        let spectrum = ising_chain_spectrum::<f64>(n, 1.0).unwrap();
        let model = DensityOfStatesModel::ising_chain(n, 1.0).unwrap();
        // only E = -29 lies inside
        let prof = AmplitudeProfile::uniform_window(-29.5, -28.5).unwrap();
        let rep =
            compare_discrete_continuum(&spectrum, &prof, &model, &GridPolicy::default()).unwrap();
        assert!(rep.sub_resolution);
        assert_eq!(rep.discrete_width, 0.0);
        assert!(rep.width_rel.is_infinite());
    }

    #[test]
    fn dense_spectrum_agrees_with_continuum() {
        let policy = GridPolicy::default();
        let report = |n: usize| {
            let spectrum = ising_chain_spectrum::<f64>(n, 1.0).unwrap();
            let model = DensityOfStatesModel::ising_chain(n, 1.0).unwrap();
            let prof = band_scaled_gaussian_profile(n, 1.0).unwrap();
            compare_discrete_continuum(&spectrum, &prof, &model, &policy).unwrap()
        };
        let big = report(1000);
        let small = report(10);
        assert!(big.max_rel() < 1e-2, "{big:?}");
        assert!(
            big.max_rel() * 10.0 < small.max_rel(),
            "{big:?} vs {small:?}"
        );
    }

    #[test]
    fn permutation_leaves_expectations_unchanged() {
        let pairs = vec![
            (-1.0, 0.3_f64.ln()),
            (0.5, 0.2_f64.ln()),
            (2.0, 0.5_f64.ln()),
        ];
        let mut rev = pairs.clone();
        rev.reverse();
        let a = discrete_expectation(&pairs, |e| e * e);
        let b = discrete_expectation(&rev, |e| e * e);
        assert!((a - b).abs() <= 1e-14);
    }

    #[test]
    fn synthetic_spectrum_csv() {
        let s = DiscreteSpectrum::new(vec![
            Level {
                energy: 0.0,
                ln_degeneracy: 0.0,
            },
            Level {
                energy: 1.0,
                ln_degeneracy: 2f64.ln(),
            },
        ])
        .unwrap();
        let st =
            prepare_state(&s, &AmplitudeProfile::uniform_window(0.0, 1.0).unwrap(), 3).unwrap();
        let csv = st.to_csv();
        assert!(csv.starts_with("k,E,ln_weight,phase\n0,0,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
