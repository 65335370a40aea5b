//! Density-of-states models.
//!
//! A model supplies `ln ΔΓ(E)` (the log of the number of states in a fixed
//! microcanonical shell, up to an additive constant) together with the
//! entropy per particle `s(e)` and its first two derivatives. Energies are
//! reduced (`k_B = 1`), and `e = E / N`.
//!
//! Entropy values follow the same additive convention as [`ln_density`]:
//! `N · s(E / N) == ln_density(E)` for every model.
//!
//! [`ln_density`]: DensityOfStatesModel::ln_density

use std::fmt;
use std::sync::Arc;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::numerics::logsumexp;
use crate::scalar::Real;
use crate::special::{digamma, ln_binomial, ln_gamma, trigamma};

/// `s(e, v)` or one of its `e`-derivatives.
pub type EntropyFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Entropy per particle as a sum of elementary terms:
/// `constant + log_coef · ln e + Σ coef · e^exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTerms<T> {
    pub constant: T,
    pub log_coef: T,
    pub powers: Vec<(T, T)>,
}

impl<T: Real> EntropyTerms<T> {
    fn value(&self, e: T) -> T {
        let mut s = self.constant;
        if self.log_coef != T::zero() {
            s = s + self.log_coef * e.ln();
        }
        for &(c, p) in &self.powers {
            s = s + c * e.powf(p);
        }
        s
    }

    fn first(&self, e: T) -> T {
        let mut d = T::zero();
        if self.log_coef != T::zero() {
            d = d + self.log_coef / e;
        }
        for &(c, p) in &self.powers {
            if p != T::zero() {
                d = d + c * p * e.powf(p - T::one());
            }
        }
        d
    }

    fn second(&self, e: T) -> T {
        let mut d = T::zero();
        if self.log_coef != T::zero() {
            d = d - self.log_coef / (e * e);
        }
        for &(c, p) in &self.powers {
            if p != T::zero() && p != T::one() {
                d = d + c * p * (p - T::one()) * e.powf(p - T::lit(2.0));
            }
        }
        d
    }

    /// Whether every term is defined for negative `e`.
    fn defined_below_zero(&self) -> bool {
        self.log_coef == T::zero()
            && self
                .powers
                .iter()
                .all(|&(_, p)| p >= T::zero() && p.fract() == T::zero())
    }
}

/// User-supplied entropy function.
#[derive(Clone)]
pub enum EntropyFunction<T> {
    /// Closed-form sum of terms; analytic derivatives, serializable.
    Terms(EntropyTerms<T>),
    /// Arbitrary callable. Missing derivatives fall back to centered finite
    /// differences with relative step `1e-5`.
    Callable {
        s: EntropyFn<T>,
        ds: Option<EntropyFn<T>>,
        d2s: Option<EntropyFn<T>>,
    },
}

impl<T> fmt::Debug for EntropyFunction<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyFunction::Terms(t) => f.debug_tuple("Terms").field(t).finish(),
            EntropyFunction::Callable { ds, d2s, .. } => f
                .debug_struct("Callable")
                .field("ds", &ds.is_some())
                .field("d2s", &d2s.is_some())
                .finish(),
        }
    }
}

/// Custom entropy model: `ln ΔΓ(E) = N [s(E/N) - s(anchor/N)] + ln_c`.
#[derive(Debug, Clone)]
pub struct CustomEntropy<T> {
    pub function: EntropyFunction<T>,
    /// Per-particle energy domain `[e_min, e_max]`.
    pub e_domain: Interval<T>,
    /// Total energy at which `ln_density` equals `ln_c`.
    pub anchor: T,
    pub ln_c: T,
}

#[derive(Debug, Clone)]
pub enum ModelKind<T> {
    /// `ΔΓ = C E^{3N/2}`.
    IdealGas {
        ln_c: T,
    },
    /// Open nearest-neighbour chain, zero field, continuum interpolation of
    /// the exact binomial degeneracies on the positive-temperature branch.
    IsingChain {
        coupling: T,
    },
    CustomEntropy(CustomEntropy<T>),
}

#[derive(Debug, Clone)]
pub struct DensityOfStatesModel<T> {
    n: usize,
    volume_per_particle: T,
    kind: ModelKind<T>,
}

/// `(s, ds/de, d²s/de²)` at one per-particle energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyDerivatives<T> {
    pub s: T,
    pub ds: T,
    pub d2s: T,
}

impl<T: Real> EntropyDerivatives<T> {
    /// `T(e) = 1 / s'(e)` in reduced units.
    pub fn temperature(&self) -> T {
        self.ds.recip()
    }
}

impl<T: Real> DensityOfStatesModel<T> {
    pub fn ideal_gas(n: usize, ln_c: T) -> Result<Self> {
        check_particle_count(n)?;
        if !ln_c.is_finite() {
            return Err(Error::Argument("ln_c must be finite".into()));
        }
        Ok(Self {
            n,
            volume_per_particle: T::one(),
            kind: ModelKind::IdealGas { ln_c },
        })
    }

    pub fn ising_chain(n: usize, coupling: T) -> Result<Self> {
        check_particle_count(n)?;
        if !(coupling > T::zero()) || !coupling.is_finite() {
            return Err(Error::Argument("Ising coupling J must be positive".into()));
        }
        Ok(Self {
            n,
            volume_per_particle: T::one(),
            kind: ModelKind::IsingChain { coupling },
        })
    }

    pub fn custom(n: usize, custom: CustomEntropy<T>) -> Result<Self> {
        check_particle_count(n)?;
        if custom.e_domain.lo > custom.e_domain.hi || custom.e_domain.lo.is_nan() {
            return Err(Error::Argument(format!(
                "empty entropy domain {}",
                custom.e_domain
            )));
        }
        if !custom.ln_c.is_finite() {
            return Err(Error::Argument("ln_c must be finite".into()));
        }
        let model = Self {
            n,
            volume_per_particle: T::one(),
            kind: ModelKind::CustomEntropy(custom),
        };
        let anchor = model.custom_raw_s(model.custom_spec().anchor / model.n_real());
        if !anchor.is_finite() {
            return Err(Error::Argument(
                "custom entropy must be finite at the anchor energy".into(),
            ));
        }
        Ok(model)
    }

    /// Custom model from a closed-form term list, domain inferred from the
    /// terms (`e >= 0` when a log or non-integer power is present).
    pub fn custom_terms(n: usize, terms: EntropyTerms<T>) -> Result<Self> {
        let e_domain = if terms.defined_below_zero() {
            Interval::new(T::neg_infinity(), T::infinity())
        } else {
            Interval::new(T::zero(), T::infinity())
        };
        Self::custom(
            n,
            CustomEntropy {
                function: EntropyFunction::Terms(terms),
                e_domain,
                anchor: T::one(),
                ln_c: T::zero(),
            },
        )
    }

    pub fn with_volume_per_particle(mut self, v: T) -> Result<Self> {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::Argument(
                "volume per particle must be positive".into(),
            ));
        }
        self.volume_per_particle = v;
        Ok(self)
    }

    pub fn particle_count(&self) -> usize {
        self.n
    }

    pub fn volume_per_particle(&self) -> T {
        self.volume_per_particle
    }

    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::IdealGas { .. } => "ideal-gas",
            ModelKind::IsingChain { .. } => "ising-chain",
            ModelKind::CustomEntropy(_) => "custom-entropy",
        }
    }

    fn n_real(&self) -> T {
        T::from_usize_lossy(self.n)
    }

    fn custom_spec(&self) -> &CustomEntropy<T> {
        match &self.kind {
            ModelKind::CustomEntropy(c) => c,
            _ => unreachable!("custom() on a built-in model"),
        }
    }

    fn custom_raw_s(&self, e: T) -> T {
        let c = self.custom_spec();
        if !c.e_domain.contains(e) {
            return T::neg_infinity();
        }
        match &c.function {
            EntropyFunction::Terms(t) => t.value(e),
            EntropyFunction::Callable { s, .. } => s(e, self.volume_per_particle),
        }
    }

    /// Exponent `3N/2` of the ideal-gas state count.
    pub fn ideal_gas_exponent(&self) -> Option<T> {
        match self.kind {
            ModelKind::IdealGas { .. } => Some(T::lit(1.5) * self.n_real()),
            _ => None,
        }
    }

    /// Energy domain of the continuum model. Outside it `ln_density` is
    /// `-inf`.
    pub fn domain(&self) -> Interval<T> {
        match &self.kind {
            ModelKind::IdealGas { .. } => Interval::new(T::zero(), T::infinity()),
            ModelKind::IsingChain { coupling } => {
                let span = *coupling * T::from_usize_lossy(self.n - 1);
                Interval::new(-span, T::zero())
            }
            ModelKind::CustomEntropy(c) => {
                let n = self.n_real();
                Interval::new(c.e_domain.lo * n, c.e_domain.hi * n)
            }
        }
    }

    /// Additive constant separating `ln_density` from [`ln_density_shape`].
    ///
    /// [`ln_density_shape`]: Self::ln_density_shape
    pub fn ln_density_offset(&self) -> T {
        match &self.kind {
            ModelKind::IdealGas { ln_c } => *ln_c,
            ModelKind::IsingChain { coupling } => -(T::lit(2.0) * *coupling).ln(),
            ModelKind::CustomEntropy(c) => {
                c.ln_c - self.n_real() * self.custom_raw_s(c.anchor / self.n_real())
            }
        }
    }

    /// `ln_density` without its additive constant.
    pub fn ln_density_shape(&self, energy: T) -> T {
        if !self.domain().contains(energy) || energy.is_nan() {
            return T::neg_infinity();
        }
        match &self.kind {
            ModelKind::IdealGas { .. } => {
                let p = T::lit(1.5) * self.n_real();
                if energy == T::zero() {
                    T::neg_infinity()
                } else {
                    p * energy.ln()
                }
            }
            ModelKind::IsingChain { coupling } => {
                let k = self.ising_level_index(energy, *coupling);
                T::LN_2() + ln_binomial(T::from_usize_lossy(self.n - 1), k)
            }
            ModelKind::CustomEntropy(_) => {
                let n = self.n_real();
                let s = self.custom_raw_s(energy / n);
                if s.is_nan() {
                    T::neg_infinity()
                } else {
                    n * s
                }
            }
        }
    }

    /// `ln[ΔΓ(E)/δE]` up to the normalization constant. Out-of-domain
    /// energies give `-inf`.
    pub fn ln_density(&self, energy: T) -> T {
        self.ln_density_shape(energy) + self.ln_density_offset()
    }

    fn ising_level_index(&self, energy: T, coupling: T) -> T {
        let span = coupling * T::from_usize_lossy(self.n - 1);
        (energy + span) / (T::lit(2.0) * coupling)
    }

    /// Entropy per particle and its derivatives at `e = E/N`.
    pub fn entropy_derivatives(&self, e: T) -> Result<EntropyDerivatives<T>> {
        let n = self.n_real();
        let energy = e * n;
        match &self.kind {
            ModelKind::IdealGas { .. } => {
                if !(e > T::zero()) || !e.is_finite() {
                    return Err(Error::domain("ideal-gas energy per particle", e));
                }
                let c = T::lit(1.5);
                Ok(EntropyDerivatives {
                    s: self.ln_density(energy) / n,
                    ds: c / e,
                    d2s: -c / (e * e),
                })
            }
            ModelKind::IsingChain { coupling } => {
                if !self.domain().contains(energy) {
                    return Err(Error::domain("Ising energy per particle", e));
                }
                let j = *coupling;
                let k = self.ising_level_index(energy, j);
                let upper = T::from_usize_lossy(self.n) - k;
                let two_j = T::lit(2.0) * j;
                // ln g(k) = ln 2 + lnΓ(N) - lnΓ(k+1) - lnΓ(N-k), k = (E + J(N-1)) / 2J
                let d1 = (digamma(upper) - digamma(k + T::one())) / two_j;
                let d2 = -(trigamma(k + T::one()) + trigamma(upper)) / (two_j * two_j);
                Ok(EntropyDerivatives {
                    s: self.ln_density(energy) / n,
                    ds: d1,
                    d2s: d2 * n,
                })
            }
            ModelKind::CustomEntropy(c) => {
                if !c.e_domain.contains(e) {
                    return Err(Error::domain("custom-entropy energy per particle", e));
                }
                let v = self.volume_per_particle;
                let s = self.ln_density(energy) / n;
                let (ds, d2s) = match &c.function {
                    EntropyFunction::Terms(t) => (t.first(e), t.second(e)),
                    EntropyFunction::Callable { s: sf, ds, d2s } => {
                        let h = fd_step(e);
                        let first = match ds {
                            Some(f) => f(e, v),
                            None => (sf(e + h, v) - sf(e - h, v)) / (T::lit(2.0) * h),
                        };
                        let second = match (d2s, ds) {
                            (Some(f), _) => f(e, v),
                            (None, Some(f)) => (f(e + h, v) - f(e - h, v)) / (T::lit(2.0) * h),
                            (None, None) => {
                                (sf(e + h, v) - T::lit(2.0) * sf(e, v) + sf(e - h, v)) / (h * h)
                            }
                        };
                        (first, second)
                    }
                };
                if !ds.is_finite() || !d2s.is_finite() {
                    return Err(Error::domain("custom-entropy energy per particle", e));
                }
                Ok(EntropyDerivatives { s, ds, d2s })
            }
        }
    }

    /// First and second derivative of `ln_density` with respect to the total
    /// energy: `(s'(e), s''(e) / N)`.
    pub fn ln_density_derivatives(&self, energy: T) -> Result<(T, T)> {
        let n = self.n_real();
        let d = self.entropy_derivatives(energy / n)?;
        Ok((d.ds, d.d2s / n))
    }

    /// Temperature `1 / s'(e)`.
    pub fn temperature(&self, e: T) -> Result<T> {
        Ok(self.entropy_derivatives(e)?.temperature())
    }

    /// True when `entropy_derivatives` is exact rather than a finite
    /// difference.
    pub fn has_analytic_derivatives(&self) -> bool {
        match &self.kind {
            ModelKind::CustomEntropy(CustomEntropy {
                function: EntropyFunction::Callable { ds, d2s, .. },
                ..
            }) => ds.is_some() && d2s.is_some(),
            _ => true,
        }
    }

    /// Short identifier used in provenance records and output headers.
    pub fn id(&self) -> String {
        let head = format!("{}(N={}", self.kind_name(), self.n);
        match &self.kind {
            ModelKind::IdealGas { ln_c } => format!("{head},ln_c={})", ln_c.as_f64()),
            ModelKind::IsingChain { coupling } => format!("{head},J={})", coupling.as_f64()),
            ModelKind::CustomEntropy(c) => match &c.function {
                EntropyFunction::Terms(t) => format!(
                    "{head},s_const={},s_log={},s_pow={})",
                    t.constant.as_f64(),
                    t.log_coef.as_f64(),
                    format_powers(&t.powers)
                ),
                EntropyFunction::Callable { .. } => format!("{head},callable)"),
            },
        }
    }

    /// Serialize to the key=value dialect. Callable custom entropies cannot
    /// be serialized.
    pub fn to_kv(&self) -> Result<KeyValues> {
        let mut kv = KeyValues::new();
        kv.set("kind", self.kind_name());
        kv.set("N", self.n);
        kv.set_real("v", self.volume_per_particle);
        match &self.kind {
            ModelKind::IdealGas { ln_c } => kv.set_real("ln_c", *ln_c),
            ModelKind::IsingChain { coupling } => kv.set_real("J", *coupling),
            ModelKind::CustomEntropy(c) => {
                let EntropyFunction::Terms(t) = &c.function else {
                    return Err(Error::Config(
                        "callable custom entropy has no text form".into(),
                    ));
                };
                kv.set_real("s_const", t.constant);
                kv.set_real("s_log", t.log_coef);
                kv.set("s_pow", format_powers(&t.powers));
                kv.set_real("e_min", c.e_domain.lo);
                kv.set_real("e_max", c.e_domain.hi);
                kv.set_real("anchor", c.anchor);
                kv.set_real("ln_c", c.ln_c);
            }
        }
        Ok(kv)
    }

    /// Parse from the key=value dialect (`kind`, `N`, `v`, parameters).
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let n: usize = kv
            .parse_value("N")?
            .ok_or_else(|| Error::Config("model: missing `N`".into()))?;
        let v = kv.real_or("v", T::one())?;
        let model = match kv.get("kind").unwrap_or("ideal-gas") {
            "ideal-gas" => Self::ideal_gas(n, kv.real_or("ln_c", T::zero())?)?,
            "ising-chain" => Self::ising_chain(n, kv.real_or("J", T::one())?)?,
            "custom-entropy" => {
                let terms = EntropyTerms {
                    constant: kv.real_or("s_const", T::zero())?,
                    log_coef: kv.real_or("s_log", T::zero())?,
                    powers: parse_powers(kv.get("s_pow").unwrap_or(""))?,
                };
                let inferred = Self::custom_terms(n, terms.clone())?;
                let default_domain = inferred.custom_spec().e_domain;
                let e_domain = Interval::new(
                    kv.real_or("e_min", default_domain.lo)?,
                    kv.real_or("e_max", default_domain.hi)?,
                );
                Self::custom(
                    n,
                    CustomEntropy {
                        function: EntropyFunction::Terms(terms),
                        e_domain,
                        anchor: kv.real_or("anchor", T::one())?,
                        ln_c: kv.real_or("ln_c", T::zero())?,
                    },
                )?
            }
            other => return Err(Error::Config(format!("unknown model kind `{other}`"))),
        };
        model.with_volume_per_particle(v)
    }

    /// Numerically verify `s' > 0` and `s'' <= 0` on an even grid of total
    /// energies. Violations are reported, not raised.
    pub fn check_concavity_monotonicity(
        &self,
        energy_range: Interval<T>,
        grid_points: usize,
    ) -> ConcavityReport<T> {
        let points = grid_points.max(3);
        let n = self.n_real();
        let step = energy_range.width() / T::from_usize_lossy(points - 1);
        let analytic = self.has_analytic_derivatives();
        for i in 0..points {
            let energy = energy_range.lo + step * T::from_usize_lossy(i);
            let e = energy / n;
            let d = match self.entropy_derivatives(e) {
                Ok(d) => d,
                Err(_) => {
                    return ConcavityReport::failed(i, energy, ViolationKind::OutOfDomain, T::nan())
                }
            };
            if !(d.ds > T::zero()) {
                return ConcavityReport::failed(i, energy, ViolationKind::NotIncreasing, d.ds);
            }
            // finite-difference fallbacks carry O(sqrt(eps)) noise
            let tol = if analytic {
                T::zero()
            } else {
                T::epsilon().sqrt() * d.ds / e.abs().max(T::min_positive_value())
            };
            if d.d2s > tol {
                return ConcavityReport::failed(i, energy, ViolationKind::NotConcave, d.d2s);
            }
        }
        ConcavityReport {
            passed: true,
            points_checked: points,
            first_violation: None,
        }
    }
}

fn check_particle_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "particle count must be >= 2, got {n}"
        )));
    }
    Ok(())
}

fn fd_step<T: Real>(e: T) -> T {
    let h = T::lit(1e-5) * e.abs();
    if h > T::zero() {
        h
    } else {
        T::lit(1e-5)
    }
}

fn format_powers<T: Real>(powers: &[(T, T)]) -> String {
    powers
        .iter()
        .map(|(c, p)| format!("{}:{}", c.as_f64(), p.as_f64()))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_powers<T: Real>(text: &str) -> Result<Vec<(T, T)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|term| {
            let (c, p) = term.split_once(':').ok_or_else(|| {
                Error::Config(format!("power term `{term}` is not coef:exponent"))
            })?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Config(format!("power term `{term}`: {e}")))
            };
            Ok((parse(c)?, parse(p)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NotIncreasing,
    NotConcave,
    OutOfDomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation<T> {
    pub index: usize,
    pub energy: T,
    pub kind: ViolationKind,
    /// The offending derivative value (`s'` or `s''`).
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport<T> {
    pub passed: bool,
    pub points_checked: usize,
    pub first_violation: Option<Violation<T>>,
}

impl<T: Real> ConcavityReport<T> {
    fn failed(index: usize, energy: T, kind: ViolationKind, value: T) -> Self {
        Self {
            passed: false,
            points_checked: index + 1,
            first_violation: Some(Violation {
                index,
                energy,
                kind,
                value,
            }),
        }
    }
}

/// One level of a discrete spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level<T> {
    pub energy: T,
    pub ln_degeneracy: T,
}

/// Exact finite spectrum: strictly increasing energies with log
/// degeneracies.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpectrum<T> {
    levels: Vec<Level<T>>,
    total_ln_count: T,
}

impl<T: Real> DiscreteSpectrum<T> {
    pub fn new(levels: Vec<Level<T>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Argument("spectrum has no levels".into()));
        }
        for l in &levels {
            if !l.energy.is_finite() || l.ln_degeneracy.is_nan() || l.ln_degeneracy == T::infinity()
            {
                return Err(Error::Argument("spectrum level is not finite".into()));
            }
        }
        if levels.windows(2).any(|w| !(w[0].energy < w[1].energy)) {
            return Err(Error::Argument(
                "spectrum energies must be strictly increasing".into(),
            ));
        }
        let ln_g: Vec<T> = levels.iter().map(|l| l.ln_degeneracy).collect();
        Ok(Self {
            total_ln_count: logsumexp(&ln_g),
            levels,
        })
    }

    pub fn levels(&self) -> &[Level<T>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn total_ln_count(&self) -> T {
        self.total_ln_count
    }

    pub fn energy_span(&self) -> Interval<T> {
        Interval::new(
            self.levels[0].energy,
            self.levels[self.levels.len() - 1].energy,
        )
    }

    /// Levels strictly below the energy of maximal degeneracy (ties are
    /// centred), i.e. where the entropy still increases with energy.
    pub fn positive_temperature_branch(&self) -> Result<Self> {
        let max = self
            .levels
            .iter()
            .map(|l| l.ln_degeneracy)
            .fold(T::neg_infinity(), T::max);
        let tol = T::lit(1e-12) * max.abs().max(T::one());
        let tied: Vec<T> = self
            .levels
            .iter()
            .filter(|l| max - l.ln_degeneracy <= tol)
            .map(|l| l.energy)
            .collect();
        let centre =
            tied.iter().copied().fold(T::zero(), |a, b| a + b) / T::from_usize_lossy(tied.len());
        Self::new(
            self.levels
                .iter()
                .copied()
                .filter(|l| l.energy < centre)
                .collect(),
        )
    }

    /// CSV with header `k,E,ln_g`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,E,ln_g\n");
        for (k, l) in self.levels.iter().enumerate() {
            out.push_str(&format!(
                "{k},{},{}\n",
                l.energy.as_f64(),
                l.ln_degeneracy.as_f64()
            ));
        }
        out
    }
}

/// Exact spectrum of the open zero-field Ising chain with `n` spins:
/// `E_k = -J(N-1) + 2Jk`, `g_k = 2·C(N-1, k)`.
pub fn ising_chain_spectrum<T: Real>(n: usize, coupling: T) -> Result<DiscreteSpectrum<T>> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "Ising chain needs N >= 2, got {n}"
        )));
    }
    if n > 1_000_000 {
        return Err(Error::Argument(format!(
            "Ising chain limited to N <= 1e6, got {n}"
        )));
    }
    if !(coupling > T::zero()) {
        return Err(Error::Argument("Ising coupling J must be positive".into()));
    }
    let bonds = n - 1;
    let bonds_real = T::from_usize_lossy(bonds);
    let ln_fact_bonds = ln_gamma(bonds_real + T::one());
    let levels = (0..n)
        .map(|k| {
            let kr = T::from_usize_lossy(k);
            Level {
                energy: coupling * (T::lit(2.0) * kr - bonds_real),
                ln_degeneracy: T::LN_2() + ln_fact_bonds
                    - ln_gamma(kr + T::one())
                    - ln_gamma(bonds_real - kr + T::one()),
            }
        })
        .collect();
    DiscreteSpectrum::new(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ideal_gas_ln_density_examples() {
        let m2 = DensityOfStatesModel::<f64>::ideal_gas(2, 0.0).unwrap();
        assert_eq!(m2.ln_density(1.0), 0.0);
        let m = DensityOfStatesModel::<f64>::ideal_gas(100, 0.0).unwrap();
        assert!(close(m.ln_density(2.0), 150.0 * 2f64.ln(), 1e-14));
        assert!(close(m.ln_density(2.0), 103.972, 1e-5));
    }

    #[test]
    fn custom_log_entropy_matches_ideal_gas() {
        let custom = DensityOfStatesModel::<f64>::custom_terms(
            100,
            EntropyTerms {
                constant: 0.0,
                log_coef: 1.5,
                powers: vec![],
            },
        )
        .unwrap();
        let ideal = DensityOfStatesModel::<f64>::ideal_gas(100, 0.0).unwrap();
        for &e in &[0.3, 1.0, 2.0, 17.0] {
            assert!(
                close(custom.ln_density(e), ideal.ln_density(e), 1e-13),
                "E={e}"
            );
        }
    }

    #[test]
    fn out_of_domain_is_negative_infinity() {
        let m = DensityOfStatesModel::<f64>::ideal_gas(10, 0.0).unwrap();
        assert_eq!(m.ln_density(-1.0), f64::NEG_INFINITY);
        assert_eq!(m.ln_density(0.0), f64::NEG_INFINITY);
        assert_eq!(m.ln_density(f64::NAN), f64::NEG_INFINITY);
        let ising = DensityOfStatesModel::<f64>::ising_chain(10, 1.0).unwrap();
        assert_eq!(ising.ln_density(-9.5), f64::NEG_INFINITY);
        assert_eq!(ising.ln_density(0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn ideal_gas_entropy_derivatives() {
        let m = DensityOfStatesModel::<f64>::ideal_gas(50, 0.0).unwrap();
        let d = m.entropy_derivatives(3.0).unwrap();
        assert!(close(d.ds, 0.5, 1e-15));
        assert!(close(d.temperature(), 2.0, 1e-15));
        assert!(close(m.entropy_derivatives(1.0).unwrap().d2s, -1.5, 1e-15));
        assert!(matches!(
            m.entropy_derivatives(0.0),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            m.entropy_derivatives(-2.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn entropy_is_consistent_with_ln_density() {
        let m = DensityOfStatesModel::<f64>::ideal_gas(40, 1.3).unwrap();
        let d = m.entropy_derivatives(0.7).unwrap();
        assert!(close(40.0 * d.s, m.ln_density(28.0), 1e-13));
    }

    #[test]
    fn ising_midpoint_has_zero_slope() {
        // s' from the smooth interpolation vs a finite difference on the
        // exact binomial log-degeneracies
        let n = 101;
        let m = DensityOfStatesModel::<f64>::ising_chain(n, 1.0).unwrap();
        let d = m.entropy_derivatives(0.0).unwrap();
        assert!(d.ds.abs() < 1e-12);
        let spec = ising_chain_spectrum::<f64>(n, 1.0).unwrap();
        let lv = spec.levels();
        let mid = (n - 1) / 2;
        let fd = (lv[mid + 1].ln_degeneracy - lv[mid - 1].ln_degeneracy)
            / (lv[mid + 1].energy - lv[mid - 1].energy);
        assert!(fd.abs() < 1e-12);
    }

    #[test]
    fn ising_continuum_interpolates_exact_levels() {
        let m = DensityOfStatesModel::<f64>::ising_chain(30, 0.5).unwrap();
        let spec = ising_chain_spectrum::<f64>(30, 0.5).unwrap();
        for l in spec.levels().iter().filter(|l| l.energy <= 0.0) {
            let v = m.ln_density(l.energy) - m.ln_density_offset();
            assert!(close(v, l.ln_degeneracy, 1e-12), "E={}", l.energy);
        }
    }

    #[test]
    fn ising_spectrum_small_cases_by_enumeration() {
        for n in 2..=10usize {
            let mut counts = std::collections::BTreeMap::<i64, u64>::new();
            for config in 0u32..(1 << n) {
                let spin = |i: usize| if config >> i & 1 == 1 { 1i64 } else { -1 };
                let e: i64 = (0..n - 1).map(|i| -spin(i) * spin(i + 1)).sum();
                *counts.entry(e).or_default() += 1;
            }
            let spec = ising_chain_spectrum::<f64>(n, 1.0).unwrap();
            assert_eq!(spec.len(), counts.len());
            for (l, (&e, &g)) in spec.levels().iter().zip(&counts) {
                assert_eq!(l.energy, e as f64);
                assert!(close(l.ln_degeneracy, (g as f64).ln(), 1e-13));
            }
            assert!(close(spec.total_ln_count(), n as f64 * 2f64.ln(), 1e-13));
        }
        let s2 = ising_chain_spectrum::<f64>(2, 1.0).unwrap();
        assert_eq!(s2.levels()[0].energy, -1.0);
        assert_eq!(s2.levels()[1].energy, 1.0);
    }

    #[test]
    fn ising_spectrum_rejects_tiny_chain() {
        assert!(matches!(
            ising_chain_spectrum::<f64>(1, 1.0),
            Err(Error::Argument(_))
        ));
        assert!(DensityOfStatesModel::<f64>::ising_chain(1, 1.0).is_err());
    }

    #[test]
    fn positive_branch_filter() {
        let s = ising_chain_spectrum::<f64>(3, 1.0).unwrap();
        let b = s.positive_temperature_branch().unwrap();
        assert_eq!(b.len(), 1);
        let s4 = ising_chain_spectrum::<f64>(4, 1.0).unwrap();
        let b4 = s4.positive_temperature_branch().unwrap();
        assert_eq!(b4.len(), 2);
        assert!(b4.levels().iter().all(|l| l.energy < 0.0));
    }

    #[test]
    fn concavity_examples() {
        let ideal = DensityOfStatesModel::<f64>::ideal_gas(100, 0.0).unwrap();
        assert!(
            ideal
                .check_concavity_monotonicity(Interval::new(0.1, 100.0), 1000)
                .passed
        );

        let convex = DensityOfStatesModel::<f64>::custom_terms(
            10,
            EntropyTerms {
                constant: 0.0,
                log_coef: 0.0,
                powers: vec![(1.0, 2.0)],
            },
        )
        .unwrap();
        let r = convex.check_concavity_monotonicity(Interval::new(0.1, 10.0), 50);
        assert!(!r.passed);
        let v = r.first_violation.unwrap();
        assert_eq!(v.index, 0);
        assert_eq!(v.kind, ViolationKind::NotConcave);

        let n = 200;
        let ising = DensityOfStatesModel::<f64>::ising_chain(n, 1.0).unwrap();
        let span = (n - 1) as f64;
        assert!(
            ising
                .check_concavity_monotonicity(Interval::new(-span, -0.5), 500)
                .passed
        );
        // the band centre is the edge of the positive-temperature domain
        let r = ising.check_concavity_monotonicity(Interval::new(-span, 0.0), 11);
        assert_eq!(
            r.first_violation.unwrap().kind,
            ViolationKind::NotIncreasing
        );
    }

    #[test]
    fn exact_binomial_branch_is_increasing_and_concave() {
        // independent finite-difference check on the discrete log-degeneracies
        let spec = ising_chain_spectrum::<f64>(500, 1.0).unwrap();
        let branch = spec.positive_temperature_branch().unwrap();
        let lv = branch.levels();
        for w in lv.windows(3) {
            let d1 = (w[1].ln_degeneracy - w[0].ln_degeneracy) / (w[1].energy - w[0].energy);
            let d2 = (w[2].ln_degeneracy - w[1].ln_degeneracy) / (w[2].energy - w[1].energy);
            assert!(d1 > 0.0 && d2 > 0.0);
            assert!(d2 - d1 <= 1e-12);
        }
    }

    #[test]
    fn callable_custom_uses_finite_differences() {
        let s: EntropyFn<f64> = Arc::new(|e, _v| 1.5 * e.ln());
        let m = DensityOfStatesModel::custom(
            20,
            CustomEntropy {
                function: EntropyFunction::Callable {
                    s,
                    ds: None,
                    d2s: None,
                },
                e_domain: Interval::new(0.0, f64::INFINITY),
                anchor: 1.0,
                ln_c: 0.0,
            },
        )
        .unwrap();
        assert!(!m.has_analytic_derivatives());
        let d = m.entropy_derivatives(2.0).unwrap();
        assert!(close(d.ds, 0.75, 1e-9));
        assert!((d.d2s + 0.375).abs() < 1e-4);
        assert!(m.to_kv().is_err());
    }

    #[test]
    fn model_kv_round_trip() {
        let text = "kind=custom-entropy\nN=64\nv=2.5\ns_log=1.5\ns_pow=-0.25:2,3:0.5\nanchor=4\n";
        let kv = KeyValues::parse(text).unwrap();
        let m = DensityOfStatesModel::<f64>::from_kv(&kv).unwrap();
        assert_eq!(m.volume_per_particle(), 2.5);
        let again = DensityOfStatesModel::<f64>::from_kv(&m.to_kv().unwrap()).unwrap();
        assert_eq!(again.to_kv().unwrap(), m.to_kv().unwrap());
        assert_eq!(m.ln_density(4.0), 0.0);

        let bad = KeyValues::parse("kind=quantum-foam\nN=3").unwrap();
        assert!(DensityOfStatesModel::<f64>::from_kv(&bad).is_err());
        let missing = KeyValues::parse("kind=ideal-gas").unwrap();
        assert!(DensityOfStatesModel::<f64>::from_kv(&missing).is_err());
    }

    #[test]
    fn single_precision_model() {
        let m = DensityOfStatesModel::<f32>::ideal_gas(100, 0.0).unwrap();
        assert!((m.ln_density(2.0) - 103.972).abs() < 1e-3);
    }
}
