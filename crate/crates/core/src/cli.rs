//! Batch runner behind the `sharp-energy` binary.
//!
//! A run is fully described by a flat key=value map. Values come from
//! built-in defaults, then the config file, then `--set` flags, later sources
//! winning. The effective map is echoed as `#` lines at the top of every
//! output file so each CSV carries its own provenance.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::amplitude_profiles::AmplitudeProfile;
use crate::config::KeyValues;
use crate::distribution::{
    build_distribution, lump_mass_fractions, moments, peak, summarize, GridPolicy,
    SUMMARY_CSV_HEADER,
};
use crate::dos_models::{ising_chain_spectrum, DensityOfStatesModel};
use crate::error::{Error, Result};
use crate::exact_oracle::{
    band_scaled_gaussian_profile, compare_discrete_continuum, evolve_phases, prepare_state,
};
use crate::output::{fmt_real, write_atomic};
use crate::scaling::{
    default_n_list, failure_mode_demo, sweep_points, DeltaScaling, FailureVariant, ScalingPreset,
    DEFAULT_BROADNESS_THRESHOLD,
};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "SHARP_ENERGY_OUT";
pub const DEFAULT_OUT_DIR: &str = "sharp-energy-out";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Dist,
    Scaling,
    Oracle,
    Fig1,
    FailureDemo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dist => "dist",
            Command::Scaling => "scaling",
            Command::Oracle => "oracle",
            Command::Fig1 => "fig1",
            Command::FailureDemo => "failure-demo",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dist" => Command::Dist,
            "scaling" => Command::Scaling,
            "oracle" => Command::Oracle,
            "fig1" => Command::Fig1,
            "failure-demo" => Command::FailureDemo,
            _ => return Err(Error::Config(format!("unknown command `{s}`"))),
        })
    }
}

/// Effective settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub settings: KeyValues,
    pub out_dir: PathBuf,
}

fn set_default(kv: &mut KeyValues, key: &str, value: impl fmt::Display) {
    if !kv.contains(key) {
        kv.set(key, value);
    }
}

fn has_section(kv: &KeyValues, prefix: &str) -> bool {
    !kv.section(prefix).is_empty()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list<V: FromStr>(key: &str, s: &str) -> Result<Vec<V>>
where
    V::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<V>()
                .map_err(|e| Error::Config(format!("`{key}`: bad entry `{t}`: {e}")))
        })
        .collect()
}

/// Fill every key the command reads that the user left unset.
fn fill_defaults(command: Command, kv: &mut KeyValues) -> Result<()> {
    set_default(kv, "grid.rel_tol", "1e-10");
    set_default(kv, "grid.max_points", 1usize << 21);
    set_default(kv, "grid.window_nats", 60);
    set_default(kv, "grid.scan_points", 2048);
    match command {
        Command::Dist => {
            set_default(kv, "model.kind", "ideal-gas");
            set_default(kv, "model.N", 100);
            if !has_section(kv, "profile.") {
                kv.set("profile.kind", "uniform-window");
                kv.set("profile.e_min", 0);
                kv.set("profile.e_max", 1);
            }
        }
        Command::Scaling => {
            set_default(kv, "model.kind", "ideal-gas");
            set_default(kv, "sweep.N", join(&default_n_list()));
            set_default(kv, "sweep.preset", "bounded-window");
            match kv.get("sweep.preset").unwrap_or_default() {
                "bounded-window" => set_default(kv, "sweep.e_max", 1),
                "bounded-cutoff" => {
                    set_default(kv, "sweep.e0", 0.2);
                    set_default(kv, "sweep.e_max", 1);
                    set_default(kv, "sweep.alpha", 2);
                }
                "exponential-tail" => {
                    set_default(kv, "sweep.kappa", 1);
                    set_default(kv, "sweep.delta0", 1);
                    set_default(kv, "sweep.delta_scaling", "constant");
                }
                other => return Err(Error::Config(format!("unknown sweep preset `{other}`"))),
            }
        }
        Command::Oracle => {
            set_default(kv, "oracle.N", 1000);
            set_default(kv, "oracle.J", 1);
            set_default(kv, "oracle.times", "0,0.5,1,2,5,10");
            set_default(kv, "seed", 0);
            if !has_section(kv, "profile.") {
                set_default(kv, "oracle.profile", "band-gaussian");
            }
        }
        Command::Fig1 => {
            set_default(kv, "fig1.N", 100);
            set_default(kv, "fig1.e0", 0.2);
            set_default(kv, "fig1.e_max", 1);
            set_default(kv, "fig1.alpha", 2);
            set_default(kv, "fig1.lumps", "0:0.5,0.8:1");
            set_default(kv, "fig1.amp_points", 1001);
        }
        Command::FailureDemo => {
            set_default(kv, "model.kind", "ideal-gas");
            set_default(kv, "model.N", 100);
            set_default(kv, "failure.variant", "algebraic-tail");
            set_default(kv, "failure.threshold", DEFAULT_BROADNESS_THRESHOLD);
            match kv.get("failure.variant").unwrap_or_default() {
                "algebraic-tail" => {
                    let n: f64 = kv.require_real("model.N")?;
                    set_default(kv, "failure.eta", 1.5 * n + 3.0);
                    set_default(kv, "failure.e_ref", 1);
                }
                "sub-unit-kappa-tail" => {
                    set_default(kv, "failure.kappa", 0.1);
                    set_default(kv, "failure.delta", 1);
                }
                other => return Err(Error::Config(format!("unknown failure variant `{other}`"))),
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Defaults only.
    pub fn new(command: Command, out_dir: impl Into<PathBuf>) -> Result<Self> {
        Self::from_sources(command, None, &[], Some(out_dir.into()), None)
    }

    /// Merge defaults, an optional config file and `key=value` overrides.
    /// The output directory is `out`, else `env_out`, else
    /// [`DEFAULT_OUT_DIR`].
    pub fn from_sources(
        command: Command,
        config_file: Option<&Path>,
        overrides: &[String],
        out: Option<PathBuf>,
        env_out: Option<String>,
    ) -> Result<Self> {
        let mut kv = match config_file {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "config file {} not found",
                        p.display()
                    )));
                }
                KeyValues::from_file(p)?
            }
            None => KeyValues::new(),
        };
        for o in overrides {
            kv.insert_assignment(o)?;
        }
        if let Some(c) = kv.remove("command") {
            if c != command.name() {
                return Err(Error::Config(format!(
                    "config is for `{c}` but the command is `{command}`"
                )));
            }
        }
        fill_defaults(command, &mut kv)?;
        let out_dir = out
            .or_else(|| env_out.filter(|s| !s.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(Self {
            command,
            settings: kv,
            out_dir,
        })
    }

    pub fn grid_policy(&self) -> Result<GridPolicy<f64>> {
        let kv = &self.settings;
        let p = GridPolicy {
            rel_tol: kv.require_real("grid.rel_tol")?,
            max_points: kv.parse_value("grid.max_points")?.unwrap_or(1 << 21),
            window_nats: kv.require_real("grid.window_nats")?,
            scan_points: kv.parse_value("grid.scan_points")?.unwrap_or(2048),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn model(&self) -> Result<DensityOfStatesModel<f64>> {
        DensityOfStatesModel::from_kv(&self.settings.section("model."))
    }

    pub fn profile(&self) -> Result<AmplitudeProfile<f64>> {
        AmplitudeProfile::from_kv(&self.settings.section("profile."))
    }

    pub fn n_list(&self) -> Result<Vec<usize>> {
        parse_list("sweep.N", self.settings.require("sweep.N")?)
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.settings.parse_value("seed")?.unwrap_or(0))
    }

    /// `#` lines naming the toolkit version, the command and every effective
    /// setting, in key order.
    pub fn header(&self) -> String {
        let mut out = format!("# sharp-energy {VERSION}\n# command={}\n", self.command);
        for (k, v) in self.settings.iter() {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        write_atomic(&path, &format!("{}{body}", self.header()))?;
        Ok(path)
    }
}

/// Distribution CSV and a one-row summary CSV.
pub fn run_dist(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = config.model()?;
    let profile = config.profile()?;
    let dist = build_distribution(&model, &profile, &config.grid_policy()?)?;
    let s = summarize(&dist);
    let summary = format!("{SUMMARY_CSV_HEADER}\n{}\n", s.csv_row());
    Ok(vec![
        config.write("distribution.csv", &dist.to_csv())?,
        config.write("summary.csv", &summary)?,
    ])
}

fn sweep_preset(kv: &KeyValues) -> Result<ScalingPreset<f64>> {
    Ok(match kv.require("sweep.preset")? {
        "bounded-window" => ScalingPreset::BoundedWindow {
            e_max: kv.require_real("sweep.e_max")?,
        },
        "bounded-cutoff" => ScalingPreset::BoundedCutoff {
            e0: kv.require_real("sweep.e0")?,
            e_max: kv.require_real("sweep.e_max")?,
            alpha: kv.require_real("sweep.alpha")?,
        },
        "exponential-tail" => ScalingPreset::ExponentialTail {
            kappa: kv.require_real("sweep.kappa")?,
            delta0: kv.require_real("sweep.delta0")?,
            scaling: DeltaScaling::parse(kv.require("sweep.delta_scaling")?)?,
        },
        other => return Err(Error::Config(format!("unknown sweep preset `{other}`"))),
    })
}

/// Sweep CSV with fit comment lines. Sizes that fail are listed as comments;
/// the run fails only when fewer than three sizes survive.
pub fn run_scaling(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let preset = sweep_preset(&config.settings)?;
    let n_list = config.n_list()?;
    let model_kv = config.settings.section("model.");
    let builder = move |n: usize| {
        let mut kv = model_kv.clone();
        kv.set("N", n);
        Ok((DensityOfStatesModel::from_kv(&kv)?, preset.profile_at(n)?))
    };
    let result = sweep_points(&builder, &n_list, &config.grid_policy()?)?;
    if result.fit.is_none() {
        let detail = result
            .failures
            .first()
            .map(|(n, e)| format!("; first failure at N={n}: {e}"))
            .unwrap_or_default();
        return Err(Error::Fit(format!(
            "only {} of {} sizes succeeded{detail}",
            result.records.len(),
            n_list.len()
        )));
    }
    Ok(vec![config.write("scaling.csv", &result.to_csv())?])
}

/// Discrete state dump, discrete-versus-continuum report and the
/// stationarity table.
pub fn run_oracle(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let kv = &config.settings;
    let n: usize = kv
        .parse_value("oracle.N")?
        .ok_or_else(|| Error::Config("missing `oracle.N`".into()))?;
    let j: f64 = kv.require_real("oracle.J")?;
    let profile = match kv.get("oracle.profile") {
        Some("band-gaussian") => band_scaled_gaussian_profile(n, j)?,
        Some(other) => return Err(Error::Config(format!("unknown oracle profile `{other}`"))),
        None => config.profile()?,
    };
    let spectrum = ising_chain_spectrum(n, j)?;
    let model = DensityOfStatesModel::ising_chain(n, j)?;
    let report = compare_discrete_continuum(&spectrum, &profile, &model, &config.grid_policy()?)?;
    let state = prepare_state(&spectrum, &profile, config.seed()?)?;
    let times: Vec<f64> = parse_list("oracle.times", kv.require("oracle.times")?)?;
    let (m0, w0) = state.energy_moments();
    let mut table = String::from("t,E_mean,dE,abs_change\n");
    for &t in &times {
        let (m, w) = evolve_phases(&state, t).energy_moments();
        let change = (m - m0).abs().max((w - w0).abs());
        table.push_str(&format!(
            "{},{},{},{}\n",
            fmt_real(t),
            fmt_real(m),
            fmt_real(w),
            fmt_real(change)
        ));
    }
    Ok(vec![
        config.write("state.csv", &state.to_csv())?,
        config.write("oracle.csv", &report.to_csv())?,
        config.write("stationarity.csv", &table)?,
    ])
}

fn amplitude_csv(profile: &AmplitudeProfile<f64>, lo: f64, hi: f64, points: usize) -> String {
    let mut out = String::from("E,ln_amp_sq,amp_sq\n");
    let steps = points.max(2) - 1;
    for i in 0..=steps {
        let e = lo + (hi - lo) * i as f64 / steps as f64;
        let l = profile.ln_amp_sq(e);
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_real(e),
            fmt_real(l),
            fmt_real(l.exp())
        ));
    }
    out
}

/// Paired `|a|²` and `W` tables for a bounded profile (panel a) and a
/// two-lump profile (panel b), plus a summary of where `W` concentrates.
pub fn run_fig1(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let kv = &config.settings;
    let n: usize = kv
        .parse_value("fig1.N")?
        .ok_or_else(|| Error::Config("missing `fig1.N`".into()))?;
    let points: usize = kv.parse_value("fig1.amp_points")?.unwrap_or(1001);
    let model = DensityOfStatesModel::ideal_gas(n, 0.0)?;
    let policy = config.grid_policy()?;
    let single = AmplitudeProfile::algebraic_cutoff(
        kv.require_real("fig1.e0")?,
        kv.require_real("fig1.e_max")?,
        kv.require_real("fig1.alpha")?,
    )?;
    let intervals: Vec<(f64, f64)> = parse_list::<String>("fig1.lumps", kv.require("fig1.lumps")?)?
        .iter()
        .map(|s| {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("`fig1.lumps`: expected lo:hi, got `{s}`")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("`fig1.lumps`: {e}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect::<Result<_>>()?;
    let lumps = AmplitudeProfile::uniform_lumps(&intervals)?;

    let mut files = Vec::new();
    let mut summary = String::from("panel,E_mean,dE,E_peak,top_mass_fraction\n");
    for (tag, profile) in [("fig1a", &single), ("fig1b", &lumps)] {
        let dist = build_distribution(&model, profile, &policy)?;
        let hull = profile.support_hull();
        let domain = model.domain();
        let lo = hull.lo.max(domain.lo);
        files.push(config.write(
            &format!("{tag}_amp.csv"),
            &amplitude_csv(profile, lo, hull.hi, points),
        )?);
        files.push(config.write(&format!("{tag}_w.csv"), &dist.to_csv())?);
        let m = moments(&dist);
        let top = match lump_mass_fractions(&dist) {
            Ok(f) => f.last().copied().unwrap_or(1.0),
            Err(_) => 1.0,
        };
        summary.push_str(&format!(
            "{tag},{},{},{},{}\n",
            fmt_real(m.mean),
            fmt_real(m.width),
            fmt_real(peak(&dist).energy),
            fmt_real(top)
        ));
    }
    files.push(config.write("fig1_summary.csv", &summary)?);
    Ok(files)
}

/// Report on a broad or non-normalizable configuration. Divergence is the
/// expected outcome here and is written out rather than raised.
pub fn run_failure_demo(config: &RunConfig) -> Result<(Vec<PathBuf>, &'static str)> {
    let kv = &config.settings;
    let variant = match kv.require("failure.variant")? {
        "algebraic-tail" => FailureVariant::AlgebraicTail {
            eta: kv.require_real("failure.eta")?,
            e_ref: kv.require_real("failure.e_ref")?,
        },
        "sub-unit-kappa-tail" => FailureVariant::SubUnitKappaTail {
            kappa: kv.require_real("failure.kappa")?,
            delta: kv.require_real("failure.delta")?,
        },
        other => return Err(Error::Config(format!("unknown failure variant `{other}`"))),
    };
    let report = failure_mode_demo(
        variant,
        &config.model()?,
        kv.require_real("failure.threshold")?,
        &config.grid_policy()?,
    )?;
    let path = config.write("failure.csv", &report.to_csv())?;
    Ok((vec![path], report.regime()))
}

/// Dispatch on the configured command. Returns the written files and a
/// short outcome label.
pub fn run(config: &RunConfig) -> Result<(Vec<PathBuf>, &'static str)> {
    match config.command {
        Command::Dist => Ok((run_dist(config)?, "ok")),
        Command::Scaling => Ok((run_scaling(config)?, "ok")),
        Command::Oracle => Ok((run_oracle(config)?, "ok")),
        Command::Fig1 => Ok((run_fig1(config)?, "ok")),
        Command::FailureDemo => run_failure_demo(config),
    }
}

/// Process exit code for an error: 2 for usage problems, 3 when the
/// requested distribution does not exist, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err.regime() {
        "usage" => 2,
        "divergence" | "no-maximum" | "empty-support" => 3,
        _ => 1,
    }
}
