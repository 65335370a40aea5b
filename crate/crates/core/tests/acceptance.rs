use std::cell::RefCell;
use std::path::Path;
use std::process::ExitCode;

use sharp_energy::amplitude_profiles::AmplitudeProfile;
use sharp_energy::cli::{self, Command, RunConfig};
use sharp_energy::distribution::{
    bounded_profile_prediction, build_distribution, lump_mass_fractions, moments, peak,
    tail_profile_prediction, EnergyDistribution, GridPolicy,
};
use sharp_energy::dos_models::{ising_chain_spectrum, DensityOfStatesModel};
use sharp_energy::exact_oracle::{
    band_scaled_gaussian_profile, compare_discrete_continuum, evolve_phases, prepare_state,
};
use sharp_energy::scaling::{
    default_n_list, failure_mode_demo, sweep, DeltaScaling, FailureOutcome, FailureVariant,
    ScalingPreset,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

thread_local! {
    static NORMS: RefCell<Vec<(String, f64)>> = const { RefCell::new(Vec::new()) };
}

fn build(
    model: &DensityOfStatesModel<f64>,
    profile: &AmplitudeProfile<f64>,
) -> Result<EnergyDistribution<f64>, String> {
    let d =
        build_distribution(model, profile, &GridPolicy::default()).map_err(|e| e.to_string())?;
    NORMS.with(|n| {
        n.borrow_mut().push((
            format!("{} / {}", model.id(), profile.id()),
            d.total_probability(),
        ))
    });
    Ok(d)
}

fn gas(n: usize) -> Result<DensityOfStatesModel<f64>, String> {
    DensityOfStatesModel::ideal_gas(n, 0.0).map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gamma_oracle() -> Outcome {
    let profile = AmplitudeProfile::exponential_tail(1.0, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0f64;
    for n in [10, 100, 1000] {
        let m = moments(&build(&gas(n)?, &profile)?);
        let shape = 1.5 * n as f64 + 1.0;
        worst = worst
            .max(rel(m.mean, shape))
            .max(rel(m.width, shape.sqrt()));
    }
    check(worst <= 1e-6, format!("max rel err {worst:.2e}"))
}

fn bounded_window_oracle() -> Outcome {
    let profile = AmplitudeProfile::uniform_window(0.0, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0f64;
    for n in [100, 1000] {
        let m = moments(&build(&gas(n)?, &profile)?);
        let p = 1.5 * n as f64;
        let mean = (p + 1.0) / (p + 2.0);
        let var = (p + 1.0) / ((p + 2.0) * (p + 2.0) * (p + 3.0));
        worst = worst.max(rel(m.mean, mean)).max(rel(m.width, var.sqrt()));
    }
    let n = 10_000;
    let model = gas(n)?;
    let m = moments(&build(&model, &profile)?);
    let shift = 1.0 - m.mean;
    let eps = 1.0 / (1.5 * n as f64);
    let pred = bounded_profile_prediction(&model, &profile).map_err(|e| e.to_string())?;
    let shift_err = rel(shift, eps).max(rel(pred.eps, eps));
    check(
        worst <= 1e-6 && shift_err <= 0.02,
        format!("moment rel err {worst:.2e}, shift vs 1/(3N/2) at N=1e4 {shift_err:.2e}"),
    )
}

fn scaling_band() -> Outcome {
    let policy = GridPolicy::default();
    let ns = default_n_list();
    let fit_of = |preset: ScalingPreset<f64>| -> Result<(f64, f64), String> {
        let r = sweep(&preset.ideal_gas_builder(), &ns, &policy).map_err(|e| e.to_string())?;
        let f = r.fit.ok_or("no fit")?;
        Ok((f.kappa, f.r_squared))
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, preset) in [
        ("window", ScalingPreset::BoundedWindow { e_max: 1.0 }),
        (
            "cutoff",
            ScalingPreset::BoundedCutoff {
                e0: 0.2,
                e_max: 1.0,
                alpha: 2.0,
            },
        ),
    ] {
        let (k, r2) = fit_of(preset)?;
        ok &= (k - 1.0).abs() <= 0.05 && r2 > 0.999;
        parts.push(format!("{name} κ={k:.4} r²={r2:.6}"));
    }
    for scaling in [
        DeltaScaling::Constant,
        DeltaScaling::Balanced,
        DeltaScaling::Linear,
    ] {
        let (k, _) = fit_of(ScalingPreset::ExponentialTail {
            kappa: 1.0,
            delta0: 1.0,
            scaling,
        })?;
        ok &= (k - 0.5).abs() <= 0.02;
        parts.push(format!("tail/{} κ={k:.4}", scaling.name()));
    }
    check(ok, parts.join(", "))
}

fn tail_saddle_point() -> Outcome {
    let model = gas(100)?;
    let profile = AmplitudeProfile::exponential_tail(1.0, 2.0).map_err(|e| e.to_string())?;
    let d = build(&model, &profile)?;
    let pk = peak(&d);
    let m = moments(&d);
    let pred = tail_profile_prediction(&model, &profile).map_err(|e| e.to_string())?;
    let peak_err = rel(pk.energy, 75f64.sqrt());
    let width_err = rel(pred.width, m.width);
    check(
        peak_err <= 1e-6 && width_err <= 0.05,
        format!("peak rel err {peak_err:.2e}, width rel err {width_err:.2e}"),
    )
}

fn lumps_concentration() -> Outcome {
    let profile =
        AmplitudeProfile::uniform_lumps(&[(0.0, 0.5), (0.8, 1.0)]).map_err(|e| e.to_string())?;
    let fractions =
        lump_mass_fractions(&build(&gas(100)?, &profile)?).map_err(|e| e.to_string())?;
    let q = 151.0;
    let ln_low = q * 0.5f64.ln() - q.ln();
    let ln_high = (-q.ln()) + (-(0.8f64.powf(q))).ln_1p();
    let oracle = 1.0 / (1.0 + (ln_high - ln_low).exp());
    let lower = fractions[0];
    check(
        lower < 1e-40 && rel(lower, oracle) <= 1e-6,
        format!("lower lump {lower:.3e} (oracle {oracle:.3e})"),
    )
}

fn failure_modes() -> Outcome {
    let n = 100;
    let model = gas(n)?;
    let p = 1.5 * n as f64;
    let policy = GridPolicy::default();
    let demo = |eta: f64| {
        failure_mode_demo(
            FailureVariant::AlgebraicTail { eta, e_ref: 1.0 },
            &model,
            0.2,
            &policy,
        )
        .map_err(|e| e.to_string())
    };
    let diverges = matches!(demo(p + 1.0)?.outcome, FailureOutcome::Divergence(_));
    let ratio = match demo(p + 3.0)?.outcome {
        FailureOutcome::Distribution { ratio, .. } => ratio,
        _ => f64::NAN,
    };
    check(
        diverges && ratio > 0.2,
        format!("η=p+1 divergence={diverges}, η=p+3 ratio={ratio:.3}"),
    )
}

fn stationarity() -> Outcome {
    let n = 200;
    let spectrum = ising_chain_spectrum::<f64>(n, 1.0).map_err(|e| e.to_string())?;
    let profile = band_scaled_gaussian_profile(n, 1.0).map_err(|e| e.to_string())?;
    let times = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1e3, 1e4];
    let mut worst = 0f64;
    for seed in 0..100u64 {
        let state = prepare_state(&spectrum, &profile, seed).map_err(|e| e.to_string())?;
        let (m0, w0) = state.energy_moments();
        let e2 = state.expectation(|e| e * e);
        for &t in &times {
            let s = evolve_phases(&state, t);
            let (m, w) = s.energy_moments();
            let d = (m - m0)
                .abs()
                .max((w - w0).abs())
                .max((s.expectation(|e| e * e) - e2).abs());
            worst = worst.max(d);
        }
    }
    check(
        worst <= 1e-12,
        format!("max moment drift {worst:.2e} over 100 seeds × 10 times"),
    )
}

fn discrete_continuum() -> Outcome {
    let discrepancy = |n: usize| -> Result<f64, String> {
        let spectrum = ising_chain_spectrum::<f64>(n, 1.0).map_err(|e| e.to_string())?;
        let profile = band_scaled_gaussian_profile(n, 1.0).map_err(|e| e.to_string())?;
        let model = DensityOfStatesModel::ising_chain(n, 1.0).map_err(|e| e.to_string())?;
        build(&model, &profile)?;
        let r = compare_discrete_continuum(&spectrum, &profile, &model, &GridPolicy::default())
            .map_err(|e| e.to_string())?;
        Ok(r.max_rel())
    };
    let small = discrepancy(10)?;
    let large = discrepancy(1000)?;
    check(
        large < 1e-2 && large * 10.0 <= small,
        format!("N=10 {small:.3e}, N=1000 {large:.3e}"),
    )
}

fn outputs(command: Command, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let config = RunConfig::new(command, dir).map_err(|e| e.to_string())?;
    let (files, _) = cli::run(&config).map_err(|e| e.to_string())?;
    files
        .iter()
        .map(|f| {
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            std::fs::read(f)
                .map(|b| (name, b))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn normalization_and_determinism() -> Outcome {
    for (n, profile) in [
        (3, AmplitudeProfile::algebraic_cutoff(0.1, 2.0, 0.5)),
        (
            500,
            AmplitudeProfile::exponential_cutoff(0.0, 0.3, 1.5, 1.0),
        ),
        (50, AmplitudeProfile::algebraic_tail(200.0, 2.0)),
        (2000, AmplitudeProfile::exponential_tail(0.01, 0.7)),
    ] {
        build(&gas(n)?, &profile.map_err(|e| e.to_string())?)?;
    }
    let (count, worst, worst_id) = NORMS.with(|n| {
        let n = n.borrow();
        let (id, dev) = n
            .iter()
            .map(|(id, p)| (id.clone(), (p - 1.0).abs()))
            .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
        (n.len(), dev, id)
    });
    let mut mismatched = Vec::new();
    let mut files = 0;
    for command in [
        Command::Dist,
        Command::Scaling,
        Command::Oracle,
        Command::Fig1,
        Command::FailureDemo,
    ] {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (x, y) = (outputs(command, a.path())?, outputs(command, b.path())?);
        files += x.len();
        if x != y {
            mismatched.push(command.name());
        }
    }
    let mut msg =
        format!("{count} distributions, max |∫W-1| {worst:.2e}; {files} output files compared");
    if worst > 1e-9 {
        msg.push_str(&format!(" (worst: {worst_id})"));
    }
    if !mismatched.is_empty() {
        msg.push_str(&format!("; differing: {}", mismatched.join(",")));
    }
    check(worst <= 1e-9 && mismatched.is_empty(), msg)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gamma oracle", gamma_oracle),
        ("bounded window oracle", bounded_window_oracle),
        ("scaling band", scaling_band),
        ("tail saddle point", tail_saddle_point),
        ("lump concentration", lumps_concentration),
        ("failure modes", failure_modes),
        ("stationarity", stationarity),
        ("discrete-continuum convergence", discrete_continuum),
        (
            "normalization and determinism",
            normalization_and_determinism,
        ),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS {} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg}", i + 1);
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
