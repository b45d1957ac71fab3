//! Figure-level experiments behind the `wdm` command-line tool.
//!
//! Each experiment composes the library into one sweep, writes
//! self-describing CSV artifacts (unit-suffixed column names, full sweep
//! coordinates on every row) plus a `key = value` manifest sidecar, and is
//! deterministic: re-running the same spec yields byte-identical CSV
//! bodies. Failures at a sweep point flush a `FAILED` marker row before
//! propagating, so partial artifacts are never silently truncated.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;

use crate::channel::{
    matched_receive_layout, mimo_coupling, significant_mode_count,
    wdm_coupling, CouplingMatrix, paraxial_dof,
};
use crate::basis::DipoleLayout;
use crate::eigenmodes;
use crate::emi::{
    covariance_spectrum, mimo_covariance, wdm_covariance, AngularDensity, NoiseModel,
};
use crate::error::{Result, WdmError};
use crate::fields::{GreenKernel, WavenumberSpectrum};
use crate::power::prad_bound_check;
use crate::quadrature::QuadratureSpec;
use crate::scenario::{baseline_config, parse_config, validate, Scenario};
use crate::transceiver::{evaluate, whiten, PowerPolicy, Receiver};

/// Everything the paper-style figure set needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    /// Spatial Green's function profiles.
    Green,
    /// Wavenumber spectra of the Green's function.
    Spectra,
    /// Diagonal coupling coefficients against the spectrum.
    Coupling,
    /// Significant-mode staircase over distance.
    Nbar,
    /// EMI covariance eigenvalue profiles.
    EmiEig,
    /// Spectral efficiency of all schemes versus receiver length.
    SeVsLr,
    /// Spectral efficiency versus distance.
    SeVsD,
    /// WDM versus the electromagnetic matched filter.
    EmmfCompare,
    /// WDM versus classical dipole MIMO with matched RF chains.
    MimoCompare,
    /// Radiated-power bound Monte Carlo.
    PowerCheck,
    /// Channel-operator eigenvalues.
    Modes,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 11] = [
        ExperimentId::Green,
        ExperimentId::Spectra,
        ExperimentId::Coupling,
        ExperimentId::Nbar,
        ExperimentId::EmiEig,
        ExperimentId::SeVsLr,
        ExperimentId::SeVsD,
        ExperimentId::EmmfCompare,
        ExperimentId::MimoCompare,
        ExperimentId::PowerCheck,
        ExperimentId::Modes,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ExperimentId::Green => "green",
            ExperimentId::Spectra => "spectra",
            ExperimentId::Coupling => "coupling",
            ExperimentId::Nbar => "nbar",
            ExperimentId::EmiEig => "emi-eig",
            ExperimentId::SeVsLr => "se-vs-lr",
            ExperimentId::SeVsD => "se-vs-d",
            ExperimentId::EmmfCompare => "emmf-compare",
            ExperimentId::MimoCompare => "mimo-compare",
            ExperimentId::PowerCheck => "power-check",
            ExperimentId::Modes => "modes",
        }
    }

    /// Configuration overrides the experiment applies on top of the
    /// baseline (file and `--set` overrides still win).
    fn preset(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            ExperimentId::EmmfCompare => &[("d", "10")],
            ExperimentId::MimoCompare => &[("d", "10"), ("hdw_emi_ratio", "10")],
            _ => &[],
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = WdmError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.label() == s)
            .ok_or_else(|| WdmError::UnknownExperiment(s.to_string()))
    }
}

/// A fully resolved experiment request.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    /// Final configuration map (baseline + preset + file + overrides).
    pub config: BTreeMap<String, String>,
    pub out_dir: PathBuf,
    /// Coarser sweep grids for quick runs.
    pub fast: bool,
}

impl ExperimentSpec {
    /// Resolve a spec from optional config text and `key=value` overrides.
    pub fn resolve(
        id: ExperimentId,
        config_text: Option<&str>,
        overrides: &[(String, String)],
        out_dir: &Path,
        fast: bool,
    ) -> Result<Self> {
        let mut config = baseline_config();
        for (k, v) in id.preset() {
            config.insert((*k).to_string(), (*v).to_string());
        }
        if let Some(text) = config_text {
            for (k, v) in parse_config(text)? {
                config.insert(k, v);
            }
        }
        for (k, v) in overrides {
            config.insert(k.clone(), v.clone());
        }
        Ok(Self {
            id,
            config,
            out_dir: out_dir.to_path_buf(),
            fast,
        })
    }

    pub fn scenario(&self) -> Result<Scenario> {
        validate(&self.config)
    }

    fn config_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.config.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|e: std::num::ParseFloatError| {
                WdmError::BadValue {
                    key: key.to_string(),
                    value: raw.clone(),
                    reason: e.to_string(),
                }
            }),
        }
    }
}

/// Files produced by one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub wall_time_s: f64,
    /// One-line human summary.
    pub headline: String,
}

struct Csv {
    writer: BufWriter<File>,
    path: PathBuf,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut writer = BufWriter::new(File::create(&path)?);
        writeln!(writer, "{}", header.join(","))?;
        Ok(Self { writer, path })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.writer, "{}", fields.join(","))?;
        Ok(())
    }

    fn fail_marker(&mut self, point: &str, error: &WdmError) -> Result<()> {
        writeln!(self.writer, "FAILED,{point},\"{error}\"")?;
        self.writer.flush()?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn db(power_ratio: f64) -> f64 {
    10.0 * power_ratio.max(1e-300).log10()
}

fn sweep_error(id: ExperimentId, point: String, source: WdmError) -> WdmError {
    WdmError::SweepPointFailed {
        experiment: id.label().to_string(),
        point,
        source: Box::new(source),
    }
}

fn write_manifest(
    spec: &ExperimentSpec,
    scenario: &Scenario,
    extras: &[(String, String)],
    wall_time_s: f64,
) -> Result<PathBuf> {
    let path = spec
        .out_dir
        .join(format!("{}.manifest.txt", spec.id.label()));
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "experiment = {}", spec.id.label())?;
    writeln!(w, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "fast = {}", spec.fast)?;
    write!(w, "{}", scenario.serialize())?;
    writeln!(w, "quadrature_rel_tol = {:e}", sweep_spec().rel_tol)?;
    for (k, v) in extras {
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(w, "wall_time_s = {wall_time_s:.3}")?;
    w.flush()?;
    Ok(path)
}

fn sweep_spec() -> QuadratureSpec {
    QuadratureSpec::sweep()
}

/// Receiver lengths for SE sweeps: integer multiples of `Ls` spanning the
/// figure axis.
fn lr_grid(scenario: &Scenario, fast: bool) -> Vec<f64> {
    let ls = scenario.ls;
    let steps: Vec<i64> = if fast {
        vec![2, 5, 10, 15, 25, 50]
    } else {
        (2..=25).chain([30, 35, 40, 50]).collect()
    };
    steps.into_iter().map(|k| k as f64 * ls).collect()
}

/// Distances for the SE-versus-distance sweep.
fn d_grid(fast: bool) -> Vec<f64> {
    if fast {
        vec![2.0, 5.0, 10.0, 20.0, 30.0]
    } else {
        (0..29).map(|i| 2.0 + i as f64).collect()
    }
}

/// Evaluate every receiver and power policy on one channel.
fn scheme_rows(
    h: &CouplingMatrix,
    noise: &NoiseModel,
    r: &nalgebra::DMatrix<Complex64>,
    budget: f64,
) -> Result<Vec<(Receiver, PowerPolicy, f64)>> {
    let c = noise.covariance(r)?;
    let wc = whiten(&h.entries, &c.matrix)?;
    let mut rows = Vec::new();
    for policy in [PowerPolicy::Waterfill, PowerPolicy::Uniform] {
        for receiver in [Receiver::Svd, Receiver::Mmse, Receiver::Mr, Receiver::OneTap] {
            if receiver == Receiver::OneTap && h.entries.nrows() < h.entries.ncols() {
                continue;
            }
            let link = evaluate(&wc, receiver, budget, policy)?;
            rows.push((receiver, policy, link.se));
        }
    }
    Ok(rows)
}

fn policy_label(policy: PowerPolicy) -> &'static str {
    match policy {
        PowerPolicy::Waterfill => "waterfill",
        PowerPolicy::Uniform => "uniform",
    }
}

/// Run one experiment, returning the files written.
pub fn run(spec: &ExperimentSpec) -> Result<RunSummary> {
    let start = Instant::now();
    let scenario = spec.scenario()?;
    let (files, extras, headline) = match spec.id {
        ExperimentId::Green => run_green(spec, &scenario)?,
        ExperimentId::Spectra => run_spectra(spec, &scenario)?,
        ExperimentId::Coupling => run_coupling(spec, &scenario)?,
        ExperimentId::Nbar => run_nbar(spec, &scenario)?,
        ExperimentId::EmiEig => run_emi_eig(spec, &scenario)?,
        ExperimentId::SeVsLr => run_se_vs_lr(spec, &scenario)?,
        ExperimentId::SeVsD => run_se_vs_d(spec, &scenario)?,
        ExperimentId::EmmfCompare => run_emmf_compare(spec, &scenario)?,
        ExperimentId::MimoCompare => run_mimo_compare(spec, &scenario)?,
        ExperimentId::PowerCheck => run_power_check(spec, &scenario)?,
        ExperimentId::Modes => run_modes(spec, &scenario)?,
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut files = files;
    files.push(write_manifest(spec, &scenario, &extras, wall_time_s)?);
    Ok(RunSummary {
        files,
        wall_time_s,
        headline,
    })
}

type ExperimentOutput = (Vec<PathBuf>, Vec<(String, String)>, String);

fn run_green(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(
        &spec.out_dir,
        "green.csv",
        &["d_m", "z_m", "re", "im", "mag_db"],
    )?;
    let points = if spec.fast { 201 } else { 1201 };
    let z_max = 30.0;
    for d in [5.0, 10.0, 25.0] {
        let kernel = GreenKernel::new(d, scenario.kappa())?;
        for i in 0..points {
            let z = -z_max + 2.0 * z_max * i as f64 / (points - 1) as f64;
            let g = kernel.eval(z);
            csv.row(&[num(d), num(z), num(g.re), num(g.im), num(db(g.norm_sqr()))])?;
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![("z_max_m".to_string(), "30".to_string())],
        "spatial Green profiles for d = 5, 10, 25 m".to_string(),
    ))
}

fn run_spectra(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(
        &spec.out_dir,
        "spectra.csv",
        &["d_m", "kz_radpm", "re", "im", "psd_db"],
    )?;
    let points = if spec.fast { 301 } else { 1401 };
    let kappa = scenario.kappa();
    for d in [5.0, 10.0, 25.0] {
        let spectrum = WavenumberSpectrum::build(d, kappa, scenario.lambda)
            .map_err(|e| sweep_error(spec.id, format!("d={d}"), e))?;
        for i in 0..points {
            let kz = -1.1 * kappa + 2.2 * kappa * i as f64 / (points - 1) as f64;
            let g = spectrum.eval(kz);
            csv.row(&[num(d), num(kz), num(g.re), num(g.im), num(db(g.norm_sqr()))])?;
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![],
        "wavenumber spectra for d = 5, 10, 25 m".to_string(),
    ))
}

fn run_coupling(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(
        &spec.out_dir,
        "coupling.csv",
        &[
            "Lr_m",
            "d_m",
            "n",
            "kz_n_radpm",
            "re",
            "im",
            "norm_power_db",
            "spectrum_power_db",
        ],
    )?;
    let quad = sweep_spec();
    let distances: &[f64] = if spec.fast { &[5.0, 10.0] } else { &[5.0, 10.0, 25.0] };
    for &d in distances {
        for lr in [1.0, 5.0] {
            let mut s = *scenario;
            s.d = d;
            s.lr = lr;
            let point = || format!("d={d},Lr={lr}");
            let diag = crate::channel::wdm_coupling_diagonal(&s, &quad)
                .map_err(|e| sweep_error(spec.id, point(), e));
            let diag = match diag {
                Ok(v) => v,
                Err(e) => {
                    csv.fail_marker(&point(), &e)?;
                    return Err(e);
                }
            };
            let spectrum = WavenumberSpectrum::build(d, s.kappa(), s.lambda)?;
            for (i, h) in diag.iter().enumerate() {
                let kz = s.mode_wavenumber(i + 1);
                csv.row(&[
                    num(lr),
                    num(d),
                    (i + 1).to_string(),
                    num(kz),
                    num(h.re),
                    num(h.im),
                    num(db(h.norm_sqr() / s.ls)),
                    num(db(spectrum.eval(kz).norm_sqr())),
                ])?;
            }
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![],
        "diagonal couplings vs spectrum".to_string(),
    ))
}

fn run_nbar(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(
        &spec.out_dir,
        "nbar.csv",
        &["Lr_m", "d_m", "nbar", "paraxial"],
    )?;
    let quad = sweep_spec();
    let step = if spec.fast { 2.0 } else { 0.5 };
    let mut d = 2.0;
    let mut points = Vec::new();
    while d <= 30.0 + 1e-9 {
        points.push(d);
        d += step;
    }
    for lr in [1.0, 5.0] {
        for &d in &points {
            let mut s = *scenario;
            s.d = d;
            s.lr = lr;
            let point = format!("d={d},Lr={lr}");
            match significant_mode_count(&s, &quad) {
                Ok(nbar) => csv.row(&[
                    num(lr),
                    num(d),
                    nbar.to_string(),
                    paraxial_dof(&s).to_string(),
                ])?,
                Err(e) => {
                    let e = sweep_error(spec.id, point, e);
                    csv.fail_marker(&format!("d={d},Lr={lr}"), &e)?;
                    return Err(e);
                }
            }
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![("d_step_m".to_string(), step.to_string())],
        "significant-mode staircase".to_string(),
    ))
}

fn run_emi_eig(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(
        &spec.out_dir,
        "emi-eig.csv",
        &["kind", "Lr_m", "index", "eigenvalue_db"],
    )?;
    let quad = sweep_spec();
    let lrs: &[f64] = if spec.fast {
        &[1.0, 5.0]
    } else {
        &[1.0, 2.0, 5.0, 10.0, 20.0]
    };
    for (kind, density) in [
        ("isotropic", AngularDensity::Isotropic),
        ("band-limited", AngularDensity::band_limited_elevation()),
    ] {
        for &lr in lrs {
            let mut s = *scenario;
            s.lr = lr;
            let point = format!("kind={kind},Lr={lr}");
            let r = match wdm_covariance(&s, &density, &quad) {
                Ok(r) => r,
                Err(e) => {
                    let e = sweep_error(spec.id, point, e);
                    csv.fail_marker(&format!("{kind},{lr}"), &e)?;
                    return Err(e);
                }
            };
            for (i, v) in covariance_spectrum(&r).iter().enumerate() {
                csv.row(&[kind.to_string(), num(lr), (i + 1).to_string(), num(*v)])?;
            }
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![],
        "EMI covariance eigenvalue profiles".to_string(),
    ))
}

fn se_header() -> [&'static str; 6] {
    ["family", "scheme", "policy", "Lr_m", "d_m", "se_bpcu"]
}

fn run_se_vs_lr(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(&spec.out_dir, "se-vs-lr.csv", &se_header())?;
    let quad = sweep_spec();
    let budget = scenario.power_budget();
    let noise = NoiseModel::isotropic(scenario);
    for lr in lr_grid(scenario, spec.fast) {
        let mut s = *scenario;
        s.lr = lr;
        let point = format!("Lr={lr}");
        let result = (|| -> Result<()> {
            let r = wdm_covariance(&s, &noise.density, &quad)?;
            let h = wdm_coupling(&s, &quad)?;
            for (receiver, policy, se) in scheme_rows(&h, &noise, &r, budget)? {
                csv.row(&[
                    "wdm".to_string(),
                    receiver.label().to_string(),
                    policy_label(policy).to_string(),
                    num(lr),
                    num(s.d),
                    num(se),
                ])?;
            }
            let decomp = eigenmodes::solve(&s, eigenmodes::default_grid_size(&s), &quad)?;
            for policy in [PowerPolicy::Waterfill, PowerPolicy::Uniform] {
                let optimal = eigenmodes::optimal_se(&decomp, &s, &noise, policy)?;
                csv.row(&[
                    "eigenmode".to_string(),
                    "svd".to_string(),
                    policy_label(policy).to_string(),
                    num(lr),
                    num(s.d),
                    num(optimal.link.se),
                ])?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            let e = sweep_error(spec.id, point, e);
            csv.fail_marker(&format!("Lr={lr}"), &e)?;
            return Err(e);
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![],
        format!("SE vs receiver length at d = {} m", scenario.d),
    ))
}

fn run_se_vs_d(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(&spec.out_dir, "se-vs-d.csv", &se_header())?;
    let quad = sweep_spec();
    let budget = scenario.power_budget();
    let noise = NoiseModel::isotropic(scenario);
    // The EMI covariance does not depend on distance; build it once.
    let r = wdm_covariance(scenario, &noise.density, &quad)?;
    for d in d_grid(spec.fast) {
        let mut s = *scenario;
        s.d = d;
        let point = format!("d={d}");
        let result = (|| -> Result<()> {
            let h = wdm_coupling(&s, &quad)?;
            for (receiver, policy, se) in scheme_rows(&h, &noise, &r, budget)? {
                csv.row(&[
                    "wdm".to_string(),
                    receiver.label().to_string(),
                    policy_label(policy).to_string(),
                    num(s.lr),
                    num(d),
                    num(se),
                ])?;
            }
            let decomp = eigenmodes::solve(&s, eigenmodes::default_grid_size(&s), &quad)?;
            let optimal = eigenmodes::optimal_se(&decomp, &s, &noise, PowerPolicy::Waterfill)?;
            csv.row(&[
                "eigenmode".to_string(),
                "svd".to_string(),
                "waterfill".to_string(),
                num(s.lr),
                num(d),
                num(optimal.link.se),
            ])?;
            Ok(())
        })();
        if let Err(e) = result {
            let e = sweep_error(spec.id, point, e);
            csv.fail_marker(&format!("d={d}"), &e)?;
            return Err(e);
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![],
        format!("SE vs distance at Lr = {} m", scenario.lr),
    ))
}

fn run_emmf_compare(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(&spec.out_dir, "emmf-compare.csv", &se_header())?;
    let quad = sweep_spec();
    let budget = scenario.power_budget();
    let noise = NoiseModel::isotropic(scenario);
    for lr in lr_grid(scenario, spec.fast) {
        let mut s = *scenario;
        s.lr = lr;
        let point = format!("Lr={lr}");
        let result = (|| -> Result<()> {
            let r = wdm_covariance(&s, &noise.density, &quad)?;
            let h = wdm_coupling(&s, &quad)?;
            for (receiver, policy, se) in scheme_rows(&h, &noise, &r, budget)? {
                csv.row(&[
                    "wdm".to_string(),
                    receiver.label().to_string(),
                    policy_label(policy).to_string(),
                    num(lr),
                    num(s.d),
                    num(se),
                ])?;
            }
            let family = crate::channel::emmf_receive_family(&s)?;
            let h = crate::channel::emmf_coupling(&s, &family)?;
            let r = crate::emi::sampled_covariance(
                &family.grid,
                &family.values,
                &noise.density,
                s.lambda,
            )?;
            for (receiver, policy, se) in scheme_rows(&h, &noise, &r, budget)? {
                csv.row(&[
                    "emmf".to_string(),
                    receiver.label().to_string(),
                    policy_label(policy).to_string(),
                    num(lr),
                    num(s.d),
                    num(se),
                ])?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            let e = sweep_error(spec.id, point, e);
            csv.fail_marker(&format!("Lr={lr}"), &e)?;
            return Err(e);
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![],
        format!("WDM vs EM matched filter at d = {} m", scenario.d),
    ))
}

fn run_mimo_compare(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let mut csv = Csv::create(&spec.out_dir, "mimo-compare.csv", &se_header())?;
    let quad = sweep_spec();
    let budget = scenario.power_budget();
    let noise = NoiseModel::isotropic(scenario);
    let delta = spec.config_f64("delta", scenario.lambda / 2.0)?;
    let delta_s = spec.config_f64("Delta_s", scenario.lambda / 2.0)?;
    for lr in lr_grid(scenario, spec.fast) {
        let mut s = *scenario;
        s.lr = lr;
        let point = format!("Lr={lr}");
        let result = (|| -> Result<()> {
            let r = wdm_covariance(&s, &noise.density, &quad)?;
            let h = wdm_coupling(&s, &quad)?;
            for (receiver, policy, se) in scheme_rows(&h, &noise, &r, budget)? {
                csv.row(&[
                    "wdm".to_string(),
                    receiver.label().to_string(),
                    policy_label(policy).to_string(),
                    num(lr),
                    num(s.d),
                    num(se),
                ])?;
            }
            let source = DipoleLayout::fill(s.ls, delta, delta_s)?;
            let receive = match spec.config.get("Delta_r") {
                Some(raw) => {
                    let spacing: f64 = raw.parse().map_err(|e: std::num::ParseFloatError| {
                        WdmError::BadValue {
                            key: "Delta_r".to_string(),
                            value: raw.clone(),
                            reason: e.to_string(),
                        }
                    })?;
                    DipoleLayout::fill(s.lr, delta, spacing)?
                }
                None => matched_receive_layout(&s, delta)?,
            };
            let h = mimo_coupling(&s, &source, &receive, &quad)?;
            let r = mimo_covariance(&s, &receive, &noise.density, &quad)?;
            for (receiver, policy, se) in scheme_rows(&h, &noise, &r, budget)? {
                csv.row(&[
                    format!("mimo[{}x{}]", receive.count, source.count),
                    receiver.label().to_string(),
                    policy_label(policy).to_string(),
                    num(lr),
                    num(s.d),
                    num(se),
                ])?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            let e = sweep_error(spec.id, point, e);
            csv.fail_marker(&format!("Lr={lr}"), &e)?;
            return Err(e);
        }
    }
    Ok((
        vec![csv.finish()?],
        vec![(
            "dipole_size_m".to_string(),
            format!("{delta:e}"),
        )],
        format!(
            "WDM vs dipole MIMO at d = {} m with hardware noise",
            scenario.d
        ),
    ))
}

fn run_power_check(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let draws = if spec.fast { 20 } else { 100 };
    let seed = 20_260_810;
    let report = prad_bound_check(scenario, draws, seed, &QuadratureSpec::channel())?;
    let mut csv = Csv::create(
        &spec.out_dir,
        "power-check.csv",
        &["draw", "value_w_per_m", "bound_w_per_m", "ratio"],
    )?;
    for (i, v) in report.draw_values.iter().enumerate() {
        csv.row(&[
            (i + 1).to_string(),
            num(*v),
            num(report.bound),
            num(v / report.bound),
        ])?;
    }
    let headline = format!(
        "radiated-power bound {:.3e} W/m, {} draws, {} violations",
        report.bound, draws, report.violations
    );
    Ok((
        vec![csv.finish()?],
        vec![
            ("seed".to_string(), seed.to_string()),
            ("draws".to_string(), draws.to_string()),
            ("q_factor".to_string(), format!("{:e}", report.q_factor)),
            ("violations".to_string(), report.violations.to_string()),
        ],
        headline,
    ))
}

fn run_modes(spec: &ExperimentSpec, scenario: &Scenario) -> Result<ExperimentOutput> {
    let quad = sweep_spec();
    let decomp = eigenmodes::solve(scenario, eigenmodes::default_grid_size(scenario), &quad)?;
    let mut csv = Csv::create(&spec.out_dir, "modes.csv", &["n", "gamma", "gamma_db"])?;
    let top = decomp.eigenvalues[0];
    for (i, g) in decomp.eigenvalues.iter().take(2 * scenario.n).enumerate() {
        csv.row(&[(i + 1).to_string(), num(*g), num(db(g.max(0.0) / top))])?;
    }
    let mut funcs = Csv::create(
        &spec.out_dir,
        "modes-functions.csv",
        &["n", "s_m", "re", "im"],
    )?;
    for n in 0..scenario.n.min(6) {
        for (j, &s) in decomp.nodes.iter().enumerate() {
            let v = decomp.source_modes[(j, n)];
            funcs.row(&[(n + 1).to_string(), num(s), num(v.re), num(v.im)])?;
        }
    }
    Ok((
        vec![csv.finish()?, funcs.finish()?],
        vec![(
            "grid_size".to_string(),
            eigenmodes::default_grid_size(scenario).to_string(),
        )],
        "channel-operator eigenvalues".to_string(),
    ))
}

/// Single-scenario dump: Green's function in both domains.
pub fn dump_green(scenario: &Scenario, out_dir: &Path) -> Result<PathBuf> {
    let mut csv = Csv::create(
        out_dir,
        "dump-green.csv",
        &["domain", "z_or_kz", "re", "im", "mag_db"],
    )?;
    let kernel = GreenKernel::for_scenario(scenario);
    let points = 1001;
    let z_max = 5.0 * scenario.d;
    for i in 0..points {
        let z = -z_max + 2.0 * z_max * i as f64 / (points - 1) as f64;
        let g = kernel.eval(z);
        csv.row(&[
            "spatial".to_string(),
            num(z),
            num(g.re),
            num(g.im),
            num(db(g.norm_sqr())),
        ])?;
    }
    let spectrum = WavenumberSpectrum::for_scenario(scenario)?;
    let kappa = scenario.kappa();
    for i in 0..points {
        let kz = -1.1 * kappa + 2.2 * kappa * i as f64 / (points - 1) as f64;
        let g = spectrum.eval(kz);
        csv.row(&[
            "wavenumber".to_string(),
            num(kz),
            num(g.re),
            num(g.im),
            num(db(g.norm_sqr())),
        ])?;
    }
    csv.finish()
}

/// Single-scenario dump: the WDM coupling matrix.
pub fn dump_coupling(scenario: &Scenario, out_dir: &Path) -> Result<PathBuf> {
    let h = wdm_coupling(scenario, &QuadratureSpec::channel())?;
    let mut csv = Csv::create(out_dir, "dump-coupling.csv", &["n", "m", "re", "im", "mag_db"])?;
    for n in 0..scenario.n {
        for m in 0..scenario.n {
            let v = h.entries[(n, m)];
            csv.row(&[
                (n + 1).to_string(),
                (m + 1).to_string(),
                num(v.re),
                num(v.im),
                num(db(v.norm_sqr())),
            ])?;
        }
    }
    csv.finish()
}

/// Single-scenario dump: EMI covariance entries and eigenvalues.
pub fn dump_emi(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let r = wdm_covariance(scenario, &AngularDensity::Isotropic, &QuadratureSpec::channel())?;
    let mut eig = Csv::create(out_dir, "dump-emi-eigenvalues.csv", &["index", "eigenvalue_db"])?;
    for (i, v) in covariance_spectrum(&r).iter().enumerate() {
        eig.row(&[(i + 1).to_string(), num(*v)])?;
    }
    let mut entries = Csv::create(out_dir, "dump-emi-entries.csv", &["n", "m", "re", "im"])?;
    for n in 0..scenario.n {
        for m in 0..scenario.n {
            let v = r[(n, m)];
            entries.row(&[
                (n + 1).to_string(),
                (m + 1).to_string(),
                num(v.re),
                num(v.im),
            ])?;
        }
    }
    Ok(vec![eig.finish()?, entries.finish()?])
}

/// Single-scenario dump: eigenvalues and (optionally) eigenfunctions.
pub fn dump_modes(scenario: &Scenario, out_dir: &Path, functions: bool) -> Result<Vec<PathBuf>> {
    let decomp = eigenmodes::solve(
        scenario,
        eigenmodes::default_grid_size(scenario),
        &QuadratureSpec::channel(),
    )?;
    let mut csv = Csv::create(out_dir, "dump-modes.csv", &["n", "gamma", "gamma_db"])?;
    let top = decomp.eigenvalues[0];
    for (i, g) in decomp.eigenvalues.iter().take(2 * scenario.n).enumerate() {
        csv.row(&[(i + 1).to_string(), num(*g), num(db(g.max(0.0) / top))])?;
    }
    let mut files = vec![csv.finish()?];
    if functions {
        let mut funcs = Csv::create(out_dir, "dump-modes-functions.csv", &["n", "s_m", "re", "im"])?;
        for n in 0..scenario.n.min(8) {
            for (j, &s) in decomp.nodes.iter().enumerate() {
                let v = decomp.source_modes[(j, n)];
                funcs.row(&[(n + 1).to_string(), num(s), num(v.re), num(v.im)])?;
            }
        }
        files.push(funcs.finish()?);
    }
    Ok(files)
}
