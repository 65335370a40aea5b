//! System-size sweeps of the relative width `ΔE/Ē` and power-law fits of
//! its decay, plus the broad and non-normalizable counter-examples.

use rayon::prelude::*;

use crate::amplitude_profiles::{AmplitudeProfile, ProfileShape};
use crate::distribution::{build_distribution, moments, tail_profile_prediction, GridPolicy};
use crate::dos_models::DensityOfStatesModel;
use crate::error::{Error, Result};
use crate::output::fmt_real;
use crate::scalar::Real;

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRecord<T> {
    pub n: usize,
    pub mean: T,
    pub width: T,
    pub ratio: T,
}

/// Least-squares fit `ln(ΔE/Ē) = intercept - kappa ln N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit<T> {
    pub kappa: T,
    pub intercept: T,
    pub r_squared: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Bounded,
    Tail,
    TailoredFailure,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Bounded => "bounded",
            Regime::Tail => "tail-κ≥1",
            Regime::TailoredFailure => "tailored-failure",
        }
    }

    /// Classify a profile: finite upper edge, exponential tail with κ ≥ 1,
    /// or anything else.
    pub fn of_profile<T: Real>(profile: &AmplitudeProfile<T>) -> Self {
        match profile.shape() {
            ProfileShape::ExponentialTail { kappa, .. } if *kappa >= T::one() => Regime::Tail,
            _ if profile.upper_edge().is_some() => Regime::Bounded,
            _ => Regime::TailoredFailure,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult<T> {
    /// Sorted by N.
    pub records: Vec<ScalingRecord<T>>,
    /// Present whenever at least three records exist.
    pub fit: Option<PowerLawFit<T>>,
    pub regime: Regime,
    /// Sizes that failed in a lenient sweep, with the error text.
    pub failures: Vec<(usize, String)>,
}

pub const SWEEP_CSV_HEADER: &str = "N,E_mean,dE,ratio";

impl<T: Real> ScalingResult<T> {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.n,
                fmt_real(r.mean),
                fmt_real(r.width),
                fmt_real(r.ratio)
            ));
        }
        if let Some(f) = &self.fit {
            out.push_str(&format!(
                "# kappa={}, intercept={}, r2={}\n",
                fmt_real(f.kappa),
                fmt_real(f.intercept),
                fmt_real(f.r_squared)
            ));
        }
        out.push_str(&format!("# regime={}\n", self.regime.label()));
        for (n, e) in &self.failures {
            out.push_str(&format!("# failed N={n}: {e}\n"));
        }
        out
    }
}

/// Five log-spaced sizes per decade over `[10², 10⁴]`.
pub fn default_n_list() -> Vec<usize> {
    (0..=10)
        .map(|i| 10f64.powf(2.0 + i as f64 / 5.0).round() as usize)
        .collect()
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 3 {
        return Err(Error::Argument(format!(
            "a sweep needs at least 3 sizes, got {}",
            n_list.len()
        )));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(
            "sweep sizes must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn sweep_point<T, B>(
    builder: &B,
    n: usize,
    policy: &GridPolicy<T>,
) -> Result<(ScalingRecord<T>, Regime)>
where
    T: Real,
    B: Fn(usize) -> Result<(DensityOfStatesModel<T>, AmplitudeProfile<T>)> + Sync,
{
    let (model, profile) = builder(n)?;
    let dist = build_distribution(&model, &profile, policy)?;
    let m = moments(&dist);
    let ratio = m.ratio();
    if !(ratio > T::zero()) || !ratio.is_finite() {
        return Err(Error::Contract(format!(
            "relative width {ratio} is not positive and finite"
        )));
    }
    let record = ScalingRecord {
        n,
        mean: m.mean,
        width: m.width,
        ratio,
    };
    Ok((record, Regime::of_profile(&profile)))
}

type PointResult<T> = Result<(ScalingRecord<T>, Regime)>;

fn evaluate_all<T, B>(
    builder: &B,
    n_list: &[usize],
    policy: &GridPolicy<T>,
) -> Vec<(usize, PointResult<T>)>
where
    T: Real,
    B: Fn(usize) -> Result<(DensityOfStatesModel<T>, AmplitudeProfile<T>)> + Sync,
{
    n_list
        .par_iter()
        .map(|&n| (n, sweep_point(builder, n, policy)))
        .collect()
}

/// Build the distribution at every size; the first failure aborts the sweep
/// with its size attached.
pub fn sweep<T, B>(
    builder: &B,
    n_list: &[usize],
    policy: &GridPolicy<T>,
) -> Result<ScalingResult<T>>
where
    T: Real,
    B: Fn(usize) -> Result<(DensityOfStatesModel<T>, AmplitudeProfile<T>)> + Sync,
{
    check_n_list(n_list)?;
    let mut records = Vec::with_capacity(n_list.len());
    let mut regime = Regime::TailoredFailure;
    for (n, r) in evaluate_all(builder, n_list, policy) {
        let (rec, reg) = r.map_err(|e| e.at_size(n))?;
        records.push(rec);
        regime = reg;
    }
    let fit = Some(fit_power_law(&records)?);
    Ok(ScalingResult {
        records,
        fit,
        regime,
        failures: Vec::new(),
    })
}

/// Like [`sweep`], but failed sizes are recorded and skipped; the fit uses
/// whatever points survive, if there are at least three.
pub fn sweep_points<T, B>(
    builder: &B,
    n_list: &[usize],
    policy: &GridPolicy<T>,
) -> Result<ScalingResult<T>>
where
    T: Real,
    B: Fn(usize) -> Result<(DensityOfStatesModel<T>, AmplitudeProfile<T>)> + Sync,
{
    check_n_list(n_list)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut regime = Regime::TailoredFailure;
    for (n, r) in evaluate_all(builder, n_list, policy) {
        match r {
            Ok((rec, reg)) => {
                records.push(rec);
                regime = reg;
            }
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let fit = if records.len() >= 3 {
        Some(fit_power_law(&records)?)
    } else {
        None
    };
    Ok(ScalingResult {
        records,
        fit,
        regime,
        failures,
    })
}

/// Ordinary least squares of `ln ratio` against `ln N`.
pub fn fit_power_law<T: Real>(records: &[ScalingRecord<T>]) -> Result<PowerLawFit<T>> {
    if records.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            records.len()
        )));
    }
    if let Some(r) = records
        .iter()
        .find(|r| !(r.ratio > T::zero()) || !r.ratio.is_finite())
    {
        return Err(Error::Fit(format!(
            "ratio {} at N={} is not positive",
            r.ratio, r.n
        )));
    }
    let xs: Vec<T> = records
        .iter()
        .map(|r| T::from_usize_lossy(r.n).ln())
        .collect();
    let ys: Vec<T> = records.iter().map(|r| r.ratio.ln()).collect();
    let m = T::from_usize_lossy(records.len());
    let xbar = xs.iter().fold(T::zero(), |a, &x| a + x) / m;
    let ybar = ys.iter().fold(T::zero(), |a, &y| a + y) / m;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - xbar, y - ybar);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero()) {
        return Err(Error::Fit(
            "all sizes are equal; the slope is undetermined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let r_squared = if syy > T::zero() {
        (sxy * sxy / (sxx * syy)).min(T::one())
    } else {
        T::one()
    };
    Ok(PowerLawFit {
        kappa: -slope,
        intercept,
        r_squared,
    })
}

/// How the tail scale `Δ` grows with `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaScaling {
    /// `Δ = Δ0`.
    Constant,
    /// `Δ = Δ0 N^((κ-1)/κ)`.
    Balanced,
    /// `Δ = Δ0 N`.
    Linear,
}

impl DeltaScaling {
    pub fn name(self) -> &'static str {
        match self {
            DeltaScaling::Constant => "constant",
            DeltaScaling::Balanced => "balanced",
            DeltaScaling::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(DeltaScaling::Constant),
            "balanced" => Ok(DeltaScaling::Balanced),
            "linear" => Ok(DeltaScaling::Linear),
            _ => Err(Error::Config(format!(
                "unknown delta scaling `{s}` (constant | balanced | linear)"
            ))),
        }
    }
}

/// How the profile parameters follow the system size in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingPreset<T> {
    /// Uniform window `[0, E_max]` with `E_max` held fixed.
    BoundedWindow { e_max: T },
    /// Algebraic cutoff with fixed `E0`, `E_max`, `α`.
    BoundedCutoff { e0: T, e_max: T, alpha: T },
    /// Exponential tail with `Δ` scaled per [`DeltaScaling`].
    ExponentialTail {
        kappa: T,
        delta0: T,
        scaling: DeltaScaling,
    },
}

impl<T: Real> ScalingPreset<T> {
    pub fn delta_at(&self, n: usize) -> Option<T> {
        let ScalingPreset::ExponentialTail {
            kappa,
            delta0,
            scaling,
        } = *self
        else {
            return None;
        };
        let nr = T::from_usize_lossy(n);
        Some(match scaling {
            DeltaScaling::Constant => delta0,
            DeltaScaling::Balanced => delta0 * nr.powf((kappa - T::one()) / kappa),
            DeltaScaling::Linear => delta0 * nr,
        })
    }

    pub fn profile_at(&self, n: usize) -> Result<AmplitudeProfile<T>> {
        match *self {
            ScalingPreset::BoundedWindow { e_max } => {
                AmplitudeProfile::uniform_window(T::zero(), e_max)
            }
            ScalingPreset::BoundedCutoff { e0, e_max, alpha } => {
                AmplitudeProfile::algebraic_cutoff(e0, e_max, alpha)
            }
            ScalingPreset::ExponentialTail { kappa, .. } => {
                AmplitudeProfile::exponential_tail(self.delta_at(n).expect("tail preset"), kappa)
            }
        }
    }

    /// Builder pairing the preset with an ideal gas of each size.
    pub fn ideal_gas_builder(
        self,
    ) -> impl Fn(usize) -> Result<(DensityOfStatesModel<T>, AmplitudeProfile<T>)> + Sync {
        move |n| {
            Ok((
                DensityOfStatesModel::ideal_gas(n, T::zero())?,
                self.profile_at(n)?,
            ))
        }
    }
}

/// Counter-examples to a sharply peaked distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureVariant<T> {
    /// Exponential tail with stretch exponent `κ < 1`.
    SubUnitKappaTail { kappa: T, delta: T },
    /// Power-law tail `(E/E_ref)^(-η)`.
    AlgebraicTail { eta: T, e_ref: T },
}

impl<T: Real> FailureVariant<T> {
    pub fn name(&self) -> &'static str {
        match self {
            FailureVariant::SubUnitKappaTail { .. } => "sub-unit-kappa-tail",
            FailureVariant::AlgebraicTail { .. } => "algebraic-tail",
        }
    }

    pub fn profile(&self) -> Result<AmplitudeProfile<T>> {
        match *self {
            FailureVariant::SubUnitKappaTail { kappa, delta } => {
                if !(kappa < T::one()) {
                    return Err(Error::Argument(format!(
                        "sub-unit tail needs κ < 1, got {kappa}"
                    )));
                }
                AmplitudeProfile::exponential_tail(delta, kappa)
            }
            FailureVariant::AlgebraicTail { eta, e_ref } => {
                AmplitudeProfile::algebraic_tail(eta, e_ref)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureOutcome<T> {
    /// The distribution exists; `broad` when its ratio exceeds the threshold.
    Distribution {
        mean: T,
        width: T,
        ratio: T,
        broad: bool,
        variance_divergent: bool,
    },
    Divergence(String),
    NoMaximum(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureReport<T> {
    pub variant: FailureVariant<T>,
    pub model_id: String,
    pub threshold: T,
    /// Saddle-point diagnosis for exponential tails, when it fails.
    pub no_maximum: Option<String>,
    pub outcome: FailureOutcome<T>,
}

impl<T: Real> FailureReport<T> {
    /// True when the demo shows the failure it was built for: a broad
    /// distribution or a missing maximum / normalization.
    pub fn demonstrates_failure(&self) -> bool {
        match &self.outcome {
            FailureOutcome::Distribution { broad, .. } => *broad,
            FailureOutcome::Divergence(_) | FailureOutcome::NoMaximum(_) => true,
        }
    }

    pub fn regime(&self) -> &'static str {
        match &self.outcome {
            FailureOutcome::Distribution { broad: true, .. } => "broad",
            FailureOutcome::Distribution { .. } => "sharp",
            FailureOutcome::Divergence(_) => "divergence",
            FailureOutcome::NoMaximum(_) => "no-maximum",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,regime,E_mean,dE,ratio,threshold,variance_divergent\n");
        let (mean, width, ratio, vd) = match &self.outcome {
            FailureOutcome::Distribution {
                mean,
                width,
                ratio,
                variance_divergent,
                ..
            } => (
                fmt_real(*mean),
                fmt_real(*width),
                fmt_real(*ratio),
                variance_divergent.to_string(),
            ),
            _ => Default::default(),
        };
        out.push_str(&format!(
            "{},{},{mean},{width},{ratio},{},{vd}\n",
            self.variant.name(),
            self.regime(),
            fmt_real(self.threshold)
        ));
        if let Some(m) = &self.no_maximum {
            out.push_str(&format!("# saddle point: {m}\n"));
        }
        match &self.outcome {
            FailureOutcome::Divergence(m) | FailureOutcome::NoMaximum(m) => {
                out.push_str(&format!("# {m}\n"));
            }
            FailureOutcome::Distribution { .. } => {}
        }
        out
    }
}

pub const DEFAULT_BROADNESS_THRESHOLD: f64 = 0.2;

/// Build the failure-mode distribution and classify what happens.
pub fn failure_mode_demo<T: Real>(
    variant: FailureVariant<T>,
    model: &DensityOfStatesModel<T>,
    threshold: T,
    policy: &GridPolicy<T>,
) -> Result<FailureReport<T>> {
    let profile = variant.profile()?;
    let no_maximum = match variant {
        FailureVariant::SubUnitKappaTail { .. } => match tail_profile_prediction(model, &profile) {
            Err(Error::NoMaximum(m)) => Some(m),
            _ => None,
        },
        FailureVariant::AlgebraicTail { .. } => None,
    };
    let outcome = match build_distribution(model, &profile, policy) {
        Ok(dist) => {
            let m = moments(&dist);
            let ratio = m.ratio();
            FailureOutcome::Distribution {
                mean: m.mean,
                width: m.width,
                ratio,
                broad: ratio > threshold,
                variance_divergent: m.variance_divergent,
            }
        }
        Err(Error::Divergence(msg)) => FailureOutcome::Divergence(msg),
        Err(Error::NoMaximum(msg)) => FailureOutcome::NoMaximum(msg),
        Err(e) => return Err(e),
    };
    Ok(FailureReport {
        variant,
        model_id: model.id(),
        threshold,
        no_maximum,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dos_models::EntropyTerms;

    fn recs(pairs: &[(usize, f64)]) -> Vec<ScalingRecord<f64>> {
        pairs
            .iter()
            .map(|&(n, ratio)| ScalingRecord {
                n,
                mean: 1.0,
                width: ratio,
                ratio,
            })
            .collect()
    }

    #[test]
    fn exact_power_laws_fit_exactly() {
        let r = recs(&[(100, 0.07), (1000, 0.007), (10000, 0.0007)]);
        let f = fit_power_law(&r).unwrap();
        assert!((f.kappa - 1.0).abs() < 1e-12);
        assert!((f.intercept - 7f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let half: Vec<_> = [100usize, 400, 900, 1600]
            .iter()
            .map(|&n| (n, 3.0 / (n as f64).sqrt()))
            .collect();
        assert!((fit_power_law(&recs(&half)).unwrap().kappa - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(
            fit_power_law(&recs(&[(10, 0.1), (10, 0.2), (10, 0.3)])),
            Err(Error::Fit(_))
        ));
        assert!(matches!(
            fit_power_law(&recs(&[(10, 0.1), (20, 0.2)])),
            Err(Error::Fit(_))
        ));
        assert!(matches!(
            fit_power_law(&recs(&[(10, 0.1), (20, 0.0), (30, 0.1)])),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn default_sizes() {
        let n = default_n_list();
        assert_eq!(n.len(), 11);
        assert_eq!(n[0], 100);
        assert_eq!(n[5], 1000);
        assert_eq!(n[10], 10000);
        assert_eq!(n[1], 158);
    }

    #[test]
    fn bounded_sweep_matches_closed_form_ratios() {
        let b = ScalingPreset::BoundedWindow { e_max: 1.0 }.ideal_gas_builder();
        let res = sweep(&b, &[100, 316, 1000, 3162, 10000], &GridPolicy::default()).unwrap();
        assert_eq!(res.regime, Regime::Bounded);
        for r in &res.records {
            let p = 1.5 * r.n as f64;
            let exact = 1.0 / ((p + 1.0) * (p + 3.0)).sqrt();
            assert!((r.ratio - exact).abs() < 1e-7 * exact);
        }
        let fit = res.fit.unwrap();
        assert!((fit.kappa - 1.0).abs() < 0.01);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn tail_presets_scale_as_inverse_root() {
        for scaling in [
            DeltaScaling::Constant,
            DeltaScaling::Balanced,
            DeltaScaling::Linear,
        ] {
            let preset = ScalingPreset::ExponentialTail {
                kappa: 2.0,
                delta0: 1.0,
                scaling,
            };
            let res = sweep(
                &preset.ideal_gas_builder(),
                &[100, 1000, 10000],
                &GridPolicy::default(),
            )
            .unwrap();
            assert_eq!(res.regime, Regime::Tail);
            let k: f64 = res.fit.unwrap().kappa;
            assert!((k - 0.5).abs() < 0.02, "{scaling:?}: {k}");
        }
    }

    #[test]
    fn sweep_errors_carry_size() {
        let b = |n: usize| -> Result<_> {
            let model = DensityOfStatesModel::ideal_gas(n, 0.0)?;
            let eta = if n == 200 {
                1.5 * n as f64 + 1.0
            } else {
                1.5 * n as f64 + 5.0
            };
            Ok((model, AmplitudeProfile::algebraic_tail(eta, 1.0)?))
        };
        let err = sweep(&b, &[100, 200, 300], &GridPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::AtSize { n: 200, .. }), "{err}");
        assert_eq!(err.regime(), "divergence");
        let lenient = sweep_points(&b, &[100, 200, 300, 400], &GridPolicy::default()).unwrap();
        assert_eq!(lenient.records.len(), 3);
        assert_eq!(lenient.failures[0].0, 200);
        assert!(lenient.fit.is_some());
        assert!(matches!(
            sweep(&b, &[100, 300], &GridPolicy::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn algebraic_tail_failure_modes() {
        let model = DensityOfStatesModel::ideal_gas(100, 0.0).unwrap();
        let policy = GridPolicy::default();
        let th = DEFAULT_BROADNESS_THRESHOLD;
        let div = failure_mode_demo(
            FailureVariant::AlgebraicTail {
                eta: 151.0,
                e_ref: 1.0,
            },
            &model,
            th,
            &policy,
        )
        .unwrap();
        assert!(matches!(div.outcome, FailureOutcome::Divergence(_)));
        let broad = failure_mode_demo(
            FailureVariant::AlgebraicTail {
                eta: 153.0,
                e_ref: 1.0,
            },
            &model,
            th,
            &policy,
        )
        .unwrap();
        let FailureOutcome::Distribution {
            ratio,
            broad: true,
            variance_divergent: true,
            ..
        } = broad.outcome
        else {
            panic!("{:?}", broad.outcome);
        };
        assert!(ratio > 0.2);
        assert!(broad.to_csv().starts_with("variant,regime"));
    }

    #[test]
    fn sub_unit_kappa_without_maximum() {
        // s(e) = e^0.8 grows faster than (E/Δ)^0.5 can suppress
        let terms = EntropyTerms {
            constant: 0.0,
            log_coef: 0.0,
            powers: vec![(1.0, 0.8)],
        };
        let model = DensityOfStatesModel::custom_terms(50, terms).unwrap();
        let rep = failure_mode_demo(
            FailureVariant::SubUnitKappaTail {
                kappa: 0.5,
                delta: 1.0,
            },
            &model,
            0.2,
            &GridPolicy::default(),
        )
        .unwrap();
        assert!(rep.no_maximum.is_some());
        assert!(rep.demonstrates_failure());
        assert_eq!(rep.regime(), "divergence");
    }

    #[test]
    fn small_kappa_on_ideal_gas_is_broad() {
        let model = DensityOfStatesModel::ideal_gas(100, 0.0).unwrap();
        let rep = failure_mode_demo(
            FailureVariant::SubUnitKappaTail {
                kappa: 0.1,
                delta: 1.0,
            },
            &model,
            0.2,
            &GridPolicy::default(),
        )
        .unwrap();
        assert_eq!(rep.regime(), "broad");
        assert!(rep.no_maximum.is_none());
    }

    #[test]
    fn csv_has_fit_comment() {
        let res = ScalingResult {
            records: recs(&[(100, 0.1), (1000, 0.01), (10000, 0.001)]),
            fit: Some(PowerLawFit {
                kappa: 1.0,
                intercept: 0.5,
                r_squared: 1.0,
            }),
            regime: Regime::Bounded,
            failures: vec![],
        };
        let csv = res.to_csv();
        assert!(csv.starts_with("N,E_mean,dE,ratio\n100,1,0.1,0.1\n"));
        assert!(csv.contains("# kappa=1, intercept=0.5, r2=1\n"));
    }
}
