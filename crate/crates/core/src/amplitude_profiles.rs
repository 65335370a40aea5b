//! Squared expansion amplitudes `|a(E)|²` as log-scale shape functions.
//!
//! Every variant reports `ln |a(E)|²` (`-inf` outside its support) and the
//! first two energy derivatives of that logarithm. Normalization constants
//! `K` enter only as the additive `ln_k`; the distribution module
//! normalizes once, against the density of states.

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::numerics::log_diff_exp;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileShape<T> {
    /// `K [(E_max - E0)^α - |E - E0|^α]`, vanishing at `E_max` and at the
    /// mirror point `2E0 - E_max`.
    AlgebraicCutoff { e0: T, e_max: T, alpha: T, ln_k: T },
    /// `K [exp(-(|E - E0|/E1)^γ) - exp(-((E_max - E0)/E1)^γ)]`.
    ExponentialCutoff {
        e0: T,
        e1: T,
        gamma: T,
        e_max: T,
        ln_k: T,
    },
    /// `K exp(-(E/Δ)^κ)` on `[0, ∞)`.
    ExponentialTail { delta: T, kappa: T, ln_k: T },
    /// `K` below `E_ref`, `K (E/E_ref)^(-η)` above, on `[0, ∞)`.
    AlgebraicTail { eta: T, e_ref: T, ln_k: T },
    /// Constant on `[E_min, E_max]`.
    UniformWindow { e_min: T, e_max: T },
    /// Disjoint sorted intervals, each carrying its own sub-profile.
    Lumps(Vec<Lump<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lump<T> {
    pub interval: Interval<T>,
    pub profile: AmplitudeProfile<T>,
}

/// A validated amplitude profile.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeProfile<T> {
    shape: ProfileShape<T>,
}

fn positive<T: Real>(name: &str, x: T) -> Result<()> {
    if x > T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

fn finite<T: Real>(name: &str, x: T) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be finite, got {x}")))
    }
}

impl<T: Real> AmplitudeProfile<T> {
    pub fn new(shape: ProfileShape<T>) -> Result<Self> {
        match &shape {
            ProfileShape::AlgebraicCutoff {
                e0,
                e_max,
                alpha,
                ln_k,
            } => {
                finite("E0", *e0)?;
                finite("ln_k", *ln_k)?;
                positive("alpha", *alpha)?;
                positive("E_max - E0", *e_max - *e0)?;
            }
            ProfileShape::ExponentialCutoff {
                e0,
                e1,
                gamma,
                e_max,
                ln_k,
            } => {
                finite("E0", *e0)?;
                finite("ln_k", *ln_k)?;
                positive("E1", *e1)?;
                positive("gamma", *gamma)?;
                positive("E_max - E0", *e_max - *e0)?;
            }
            ProfileShape::ExponentialTail { delta, kappa, ln_k } => {
                positive("delta", *delta)?;
                positive("kappa", *kappa)?;
                finite("ln_k", *ln_k)?;
            }
            ProfileShape::AlgebraicTail { eta, e_ref, ln_k } => {
                positive("eta", *eta)?;
                positive("E_ref", *e_ref)?;
                finite("ln_k", *ln_k)?;
            }
            ProfileShape::UniformWindow { e_min, e_max } => {
                finite("E_min", *e_min)?;
                finite("E_max", *e_max)?;
                if !(e_min <= e_max) {
                    return Err(Error::Argument(
                        "uniform window needs E_min <= E_max".into(),
                    ));
                }
            }
            ProfileShape::Lumps(lumps) => {
                if lumps.is_empty() {
                    return Err(Error::Argument(
                        "lumps profile needs at least one lump".into(),
                    ));
                }
                for lump in lumps {
                    finite("lump lower edge", lump.interval.lo)?;
                    finite("lump upper edge", lump.interval.hi)?;
                    if !(lump.interval.lo < lump.interval.hi) {
                        return Err(Error::Argument(format!("empty lump {}", lump.interval)));
                    }
                    if matches!(lump.profile.shape, ProfileShape::Lumps(_)) {
                        return Err(Error::Argument("lumps cannot be nested".into()));
                    }
                }
                if lumps
                    .windows(2)
                    .any(|w| !(w[0].interval.hi < w[1].interval.lo))
                {
                    return Err(Error::Argument(
                        "lump intervals must be sorted and pairwise disjoint".into(),
                    ));
                }
            }
        }
        Ok(Self { shape })
    }

    pub fn algebraic_cutoff(e0: T, e_max: T, alpha: T) -> Result<Self> {
        Self::new(ProfileShape::AlgebraicCutoff {
            e0,
            e_max,
            alpha,
            ln_k: T::zero(),
        })
    }

    pub fn exponential_cutoff(e0: T, e1: T, gamma: T, e_max: T) -> Result<Self> {
        Self::new(ProfileShape::ExponentialCutoff {
            e0,
            e1,
            gamma,
            e_max,
            ln_k: T::zero(),
        })
    }

    pub fn exponential_tail(delta: T, kappa: T) -> Result<Self> {
        Self::new(ProfileShape::ExponentialTail {
            delta,
            kappa,
            ln_k: T::zero(),
        })
    }

    pub fn algebraic_tail(eta: T, e_ref: T) -> Result<Self> {
        Self::new(ProfileShape::AlgebraicTail {
            eta,
            e_ref,
            ln_k: T::zero(),
        })
    }

    pub fn uniform_window(e_min: T, e_max: T) -> Result<Self> {
        Self::new(ProfileShape::UniformWindow { e_min, e_max })
    }

    /// Lumps with a uniform sub-profile on each interval.
    pub fn uniform_lumps(intervals: &[(T, T)]) -> Result<Self> {
        let lumps = intervals
            .iter()
            .map(|&(lo, hi)| {
                Ok(Lump {
                    interval: Interval::new(lo, hi),
                    profile: Self::uniform_window(lo, hi)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ProfileShape::Lumps(lumps))
    }

    pub fn lumps(lumps: Vec<Lump<T>>) -> Result<Self> {
        Self::new(ProfileShape::Lumps(lumps))
    }

    pub fn shape(&self) -> &ProfileShape<T> {
        &self.shape
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            ProfileShape::AlgebraicCutoff { .. } => "algebraic-cutoff",
            ProfileShape::ExponentialCutoff { .. } => "exponential-cutoff",
            ProfileShape::ExponentialTail { .. } => "exponential-tail",
            ProfileShape::AlgebraicTail { .. } => "algebraic-tail",
            ProfileShape::UniformWindow { .. } => "uniform-window",
            ProfileShape::Lumps(_) => "lumps",
        }
    }

    /// Copy with `ln_k` replaced (no-op for windows and lumps).
    pub fn with_ln_k(&self, new_ln_k: T) -> Self {
        let mut shape = self.shape.clone();
        match &mut shape {
            ProfileShape::AlgebraicCutoff { ln_k, .. }
            | ProfileShape::ExponentialCutoff { ln_k, .. }
            | ProfileShape::ExponentialTail { ln_k, .. }
            | ProfileShape::AlgebraicTail { ln_k, .. } => *ln_k = new_ln_k,
            ProfileShape::UniformWindow { .. } | ProfileShape::Lumps(_) => {}
        }
        Self { shape }
    }

    /// Additive constant separating [`ln_amp_sq`] from [`ln_amp_sq_shape`].
    /// Lumps keep their sub-profile constants in the shape, since those set
    /// relative lump weights.
    ///
    /// [`ln_amp_sq`]: Self::ln_amp_sq
    /// [`ln_amp_sq_shape`]: Self::ln_amp_sq_shape
    pub fn ln_k_offset(&self) -> T {
        match &self.shape {
            ProfileShape::AlgebraicCutoff { ln_k, .. }
            | ProfileShape::ExponentialCutoff { ln_k, .. }
            | ProfileShape::ExponentialTail { ln_k, .. }
            | ProfileShape::AlgebraicTail { ln_k, .. } => *ln_k,
            ProfileShape::UniformWindow { .. } | ProfileShape::Lumps(_) => T::zero(),
        }
    }

    /// `ln |a(E)|²`; `-inf` outside the support.
    pub fn ln_amp_sq(&self, energy: T) -> T {
        self.ln_amp_sq_shape(energy) + self.ln_k_offset()
    }

    /// `ln |a(E)|²` without the `ln_k` offset.
    pub fn ln_amp_sq_shape(&self, energy: T) -> T {
        if energy.is_nan() {
            return T::neg_infinity();
        }
        match &self.shape {
            ProfileShape::AlgebraicCutoff {
                e0, e_max, alpha, ..
            } => {
                let span = *e_max - *e0;
                let dist = (energy - *e0).abs();
                if dist >= span {
                    return T::neg_infinity();
                }
                // ln[D^α (1 - (|x|/D)^α)]
                *alpha * span.ln() + (-(*alpha * (dist / span).ln()).exp_m1()).ln()
            }
            ProfileShape::ExponentialCutoff {
                e0,
                e1,
                gamma,
                e_max,
                ..
            } => {
                let span = *e_max - *e0;
                let dist = (energy - *e0).abs();
                if dist >= span {
                    return T::neg_infinity();
                }
                let a = -(dist / *e1).powf(*gamma);
                let b = -(span / *e1).powf(*gamma);
                log_diff_exp(a, b)
            }
            ProfileShape::ExponentialTail { delta, kappa, .. } => {
                if energy < T::zero() {
                    return T::neg_infinity();
                }
                -(energy / *delta).powf(*kappa)
            }
            ProfileShape::AlgebraicTail { eta, e_ref, .. } => {
                if energy < T::zero() {
                    T::neg_infinity()
                } else if energy < *e_ref {
                    T::zero()
                } else {
                    -*eta * (energy / *e_ref).ln()
                }
            }
            ProfileShape::UniformWindow { e_min, e_max } => {
                if energy >= *e_min && energy <= *e_max {
                    T::zero()
                } else {
                    T::neg_infinity()
                }
            }
            ProfileShape::Lumps(lumps) => lumps
                .iter()
                .find(|l| l.interval.contains(energy))
                .map(|l| l.profile.ln_amp_sq(energy))
                .unwrap_or_else(T::neg_infinity),
        }
    }

    /// Closed intervals where `ln_amp_sq > -inf` (tails: `[0, +inf]`).
    pub fn support(&self) -> Vec<Interval<T>> {
        self.support_components()
            .into_iter()
            .map(|(_, s)| s)
            .collect()
    }

    /// Support intervals tagged with the lump they belong to (always 0 for
    /// single-piece profiles).
    pub fn support_components(&self) -> Vec<(usize, Interval<T>)> {
        if let ProfileShape::Lumps(lumps) = &self.shape {
            return lumps
                .iter()
                .enumerate()
                .filter_map(|(i, l)| {
                    let sub = l.profile.support_hull();
                    l.interval.intersect(&sub).map(|s| (i, s))
                })
                .collect();
        }
        let single = match &self.shape {
            ProfileShape::AlgebraicCutoff { e0, e_max, .. }
            | ProfileShape::ExponentialCutoff { e0, e_max, .. } => {
                Interval::new(*e0 - (*e_max - *e0), *e_max)
            }
            ProfileShape::ExponentialTail { .. } | ProfileShape::AlgebraicTail { .. } => {
                Interval::new(T::zero(), T::infinity())
            }
            ProfileShape::UniformWindow { e_min, e_max } => Interval::new(*e_min, *e_max),
            ProfileShape::Lumps(_) => unreachable!(),
        };
        vec![(0, single)]
    }

    pub fn support_hull(&self) -> Interval<T> {
        let s = self.support();
        match (s.first(), s.last()) {
            (Some(a), Some(b)) => Interval::new(a.lo, b.hi),
            _ => Interval::new(T::nan(), T::nan()),
        }
    }

    /// Upper support edge for bounded profiles; `None` for tails.
    pub fn upper_edge(&self) -> Option<T> {
        let hull = self.support_hull();
        hull.hi.is_finite().then_some(hull.hi)
    }

    /// Natural energy scale, used to seed searches over unbounded supports.
    pub fn scale_hint(&self) -> T {
        let hint = match &self.shape {
            ProfileShape::AlgebraicCutoff { e0, e_max, .. }
            | ProfileShape::ExponentialCutoff { e0, e_max, .. } => *e_max - *e0,
            ProfileShape::ExponentialTail { delta, .. } => *delta,
            ProfileShape::AlgebraicTail { e_ref, .. } => *e_ref,
            ProfileShape::UniformWindow { .. } | ProfileShape::Lumps(_) => {
                self.support_hull().width()
            }
        };
        if hint > T::zero() && hint.is_finite() {
            hint
        } else {
            T::one()
        }
    }

    /// First and second derivative of `ln |a(E)|²` at an interior point.
    pub fn derivative_ln_amp_sq(&self, energy: T) -> Result<(T, T)> {
        let inside = self.support().iter().any(|s| s.contains_interior(energy));
        if !inside {
            return Err(Error::domain("energy (profile support interior)", energy));
        }
        let out = match &self.shape {
            ProfileShape::AlgebraicCutoff {
                e0, e_max, alpha, ..
            } => {
                let (x, span, a) = (energy - *e0, *e_max - *e0, *alpha);
                let dist = x.abs();
                if dist == T::zero() {
                    cusp_derivatives(a, || -a * (a - T::one()) / (span * span))?
                } else {
                    let r = (dist / span).powf(a);
                    let one_minus_r = -(a * (dist / span).ln()).exp_m1();
                    let first = -a * x.signum() * r / (dist * one_minus_r);
                    let curv = -a * (a - T::one()) * r / (dist * dist * one_minus_r);
                    (first, curv - first * first)
                }
            }
            ProfileShape::ExponentialCutoff {
                e0,
                e1,
                gamma,
                e_max,
                ..
            } => {
                let (x, span, g) = (energy - *e0, *e_max - *e0, *gamma);
                let dist = x.abs();
                let u = (dist / *e1).powf(g);
                let c = (span / *e1).powf(g);
                // e^{-u} / (e^{-u} - e^{-c})
                let q = (-(u - c).exp_m1()).recip();
                if dist == T::zero() {
                    cusp_derivatives(g, || -g * (g - T::one()) / (*e1 * *e1) * q)?
                } else {
                    let du = g * x.signum() * u / dist;
                    let d2u = g * (g - T::one()) * u / (dist * dist);
                    let first = -du * q;
                    (first, (du * du - d2u) * q - first * first)
                }
            }
            ProfileShape::ExponentialTail { delta, kappa, .. } => {
                let k = *kappa;
                let p = (energy / *delta).powf(k);
                (-k * p / energy, -k * (k - T::one()) * p / (energy * energy))
            }
            ProfileShape::AlgebraicTail { eta, e_ref, .. } => {
                if energy < *e_ref {
                    (T::zero(), T::zero())
                } else if energy > *e_ref {
                    (-*eta / energy, *eta / (energy * energy))
                } else {
                    return Err(Error::domain("energy (algebraic-tail kink)", energy));
                }
            }
            ProfileShape::UniformWindow { .. } => (T::zero(), T::zero()),
            ProfileShape::Lumps(lumps) => {
                let lump = lumps
                    .iter()
                    .find(|l| l.interval.contains_interior(energy))
                    .ok_or_else(|| Error::domain("energy (lump interior)", energy))?;
                lump.profile.derivative_ln_amp_sq(energy)?
            }
        };
        if !out.0.is_finite() || !out.1.is_finite() {
            return Err(Error::domain("energy (non-differentiable point)", energy));
        }
        Ok(out)
    }

    pub fn id(&self) -> String {
        let kv = self.to_kv();
        let params: Vec<String> = kv
            .iter()
            .filter(|(k, _)| *k != "kind")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{}({})", self.kind_name(), params.join(","))
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("kind", self.kind_name());
        match &self.shape {
            ProfileShape::AlgebraicCutoff {
                e0,
                e_max,
                alpha,
                ln_k,
            } => {
                kv.set_real("e0", *e0);
                kv.set_real("e_max", *e_max);
                kv.set_real("alpha", *alpha);
                kv.set_real("ln_k", *ln_k);
            }
            ProfileShape::ExponentialCutoff {
                e0,
                e1,
                gamma,
                e_max,
                ln_k,
            } => {
                kv.set_real("e0", *e0);
                kv.set_real("e1", *e1);
                kv.set_real("gamma", *gamma);
                kv.set_real("e_max", *e_max);
                kv.set_real("ln_k", *ln_k);
            }
            ProfileShape::ExponentialTail { delta, kappa, ln_k } => {
                kv.set_real("delta", *delta);
                kv.set_real("kappa", *kappa);
                kv.set_real("ln_k", *ln_k);
            }
            ProfileShape::AlgebraicTail { eta, e_ref, ln_k } => {
                kv.set_real("eta", *eta);
                kv.set_real("e_ref", *e_ref);
                kv.set_real("ln_k", *ln_k);
            }
            ProfileShape::UniformWindow { e_min, e_max } => {
                kv.set_real("e_min", *e_min);
                kv.set_real("e_max", *e_max);
            }
            ProfileShape::Lumps(lumps) => {
                kv.set("count", lumps.len());
                for (i, lump) in lumps.iter().enumerate() {
                    let prefix = format!("lump{i}.");
                    kv.set_real(format!("{prefix}lo"), lump.interval.lo);
                    kv.set_real(format!("{prefix}hi"), lump.interval.hi);
                    kv.merge_prefixed(&prefix, &lump.profile.to_kv());
                }
            }
        }
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let kind = kv.require("kind")?;
        let ln_k = || kv.real_or("ln_k", T::zero());
        let shape = match kind {
            "algebraic-cutoff" => ProfileShape::AlgebraicCutoff {
                e0: kv.require_real("e0")?,
                e_max: kv.require_real("e_max")?,
                alpha: kv.require_real("alpha")?,
                ln_k: ln_k()?,
            },
            "exponential-cutoff" => ProfileShape::ExponentialCutoff {
                e0: kv.require_real("e0")?,
                e1: kv.require_real("e1")?,
                gamma: kv.require_real("gamma")?,
                e_max: kv.require_real("e_max")?,
                ln_k: ln_k()?,
            },
            "exponential-tail" => ProfileShape::ExponentialTail {
                delta: kv.require_real("delta")?,
                kappa: kv.require_real("kappa")?,
                ln_k: ln_k()?,
            },
            "algebraic-tail" => ProfileShape::AlgebraicTail {
                eta: kv.require_real("eta")?,
                e_ref: kv.require_real("e_ref")?,
                ln_k: ln_k()?,
            },
            "uniform-window" => ProfileShape::UniformWindow {
                e_min: kv.require_real("e_min")?,
                e_max: kv.require_real("e_max")?,
            },
            "lumps" => {
                let count: usize = kv
                    .parse_value("count")?
                    .ok_or_else(|| Error::Config("lumps: missing `count`".into()))?;
                let mut lumps = Vec::with_capacity(count);
                for i in 0..count {
                    let mut sub = kv.section(&format!("lump{i}."));
                    let lo: T = sub.require_real("lo")?;
                    let hi: T = sub.require_real("hi")?;
                    if !sub.contains("kind") {
                        sub.set("kind", "uniform-window");
                    }
                    if sub.get("kind") == Some("uniform-window") {
                        if !sub.contains("e_min") {
                            sub.set_real("e_min", lo);
                        }
                        if !sub.contains("e_max") {
                            sub.set_real("e_max", hi);
                        }
                    }
                    lumps.push(Lump {
                        interval: Interval::new(lo, hi),
                        profile: Self::from_kv(&sub)?,
                    });
                }
                ProfileShape::Lumps(lumps)
            }
            other => return Err(Error::Config(format!("unknown profile kind `{other}`"))),
        };
        Self::new(shape)
    }
}

/// Derivatives at the symmetric centre `E = E0` of a cutoff profile, where
/// the first derivative vanishes for exponents above 1 and the second is
/// finite only for exponents of at least 2.
fn cusp_derivatives<T: Real>(exponent: T, second_at_two: impl Fn() -> T) -> Result<(T, T)> {
    let two = T::lit(2.0);
    if exponent > two {
        Ok((T::zero(), T::zero()))
    } else if exponent == two {
        Ok((T::zero(), second_at_two()))
    } else {
        Err(Error::domain("cutoff centre exponent (cusp)", exponent))
    }
}
