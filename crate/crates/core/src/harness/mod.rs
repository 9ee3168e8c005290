//! TOML-driven experiment harness: load a config, run parameter sweeps
//! (optionally with Monte-Carlo ensembles), and write CSV/JSON/SVG.
//!
//! Precedence for configuration values: command-line `--set` overrides
//! environment variables, which override the config file, which overrides
//! built-in defaults. Environment variables use the `LEVOPT_` prefix with
//! the section and key joined by underscores (`LEVOPT_PARAMS_GAMMA_REHEAT`,
//! `LEVOPT_RUN_FRAME`); only scalar keys in the `params`, `run` and
//! `output` sections can be overridden that way.
//!
//! Sweep outputs are deterministic: the same config (including ensemble
//! seeds) produces byte-identical CSV on every run, regardless of the
//! worker-thread count.

pub mod output;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{
    apply_loss, min_variance_at, optimize_angles, LogBase, Measures, PhiMode,
};
use crate::model::{Frame, SystemParams, GAMMA_FLOOR};
use crate::propagate::CovarianceMatrix;
use crate::protocol::{
    adiabatic_blue, adiabatic_red, blue_gain, monte_carlo_ensemble, red_transmittance, run_blue,
    run_full, Bipartition, MeasureKind, TargetMeasure,
};

/// `[params]` section: physical parameters in `kappa` units.
///
/// Decoherence can be given either as the reheating rate `gamma_reheat`
/// (with the damping pinned to a floor of `1e-6 kappa`) or explicitly via
/// `gamma` and `n_th`; explicit values win.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub kappa: f64,
    pub g: f64,
    pub omega: f64,
    pub gamma_reheat: f64,
    pub gamma: Option<f64>,
    pub n_th: Option<f64>,
    pub n0: f64,
    pub eta_b: f64,
    pub eta_r: f64,
    pub eta_m: f64,
    pub tau: f64,
    pub tau_d: f64,
    pub tau_r: Option<f64>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            kappa: 1.0,
            g: 0.6,
            omega: 2.0,
            gamma_reheat: 0.06,
            gamma: None,
            n_th: None,
            n0: 1e4,
            eta_b: 0.8,
            eta_r: 0.8,
            eta_m: 0.8,
            tau: 8.0,
            tau_d: 0.0,
            tau_r: None,
        }
    }
}

impl ParamsSection {
    /// Resolve the section into validated [`SystemParams`].
    pub fn to_system(&self, dt: Option<f64>) -> Result<SystemParams> {
        let gamma = self.gamma.unwrap_or(GAMMA_FLOOR * self.kappa);
        let n_th = match self.n_th {
            Some(n) => n,
            None if gamma > 0.0 => self.gamma_reheat / gamma,
            None if self.gamma_reheat == 0.0 => 0.0,
            None => {
                return Err(Error::InvalidParams(
                    "gamma = 0 cannot carry a nonzero gamma_reheat; set n_th explicitly".into(),
                ))
            }
        };
        let p = SystemParams {
            kappa: self.kappa,
            g: self.g,
            omega: self.omega,
            gamma,
            n_th,
            n0: self.n0,
            eta_b: self.eta_b,
            eta_r: self.eta_r,
            eta_m: self.eta_m,
            tau: self.tau,
            tau_d: self.tau_d,
            tau_r: self.tau_r.unwrap_or(self.tau),
            dt,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Partial overlay of [`ParamsSection`] used inside a sweep.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsPatch {
    pub kappa: Option<f64>,
    pub g: Option<f64>,
    pub omega: Option<f64>,
    pub gamma_reheat: Option<f64>,
    pub gamma: Option<f64>,
    pub n_th: Option<f64>,
    pub n0: Option<f64>,
    pub eta_b: Option<f64>,
    pub eta_r: Option<f64>,
    pub eta_m: Option<f64>,
    pub tau: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_r: Option<f64>,
}

impl ParamsPatch {
    pub fn apply(&self, base: &ParamsSection) -> ParamsSection {
        let mut out = base.clone();
        macro_rules! patch {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { out.$f = v; } )* };
        }
        patch!(kappa, g, omega, gamma_reheat, n0, eta_b, eta_r, eta_m, tau, tau_d);
        if self.gamma.is_some() {
            out.gamma = self.gamma;
        }
        if self.n_th.is_some() {
            out.n_th = self.n_th;
        }
        if self.tau_r.is_some() {
            out.tau_r = self.tau_r;
        }
        out
    }
}

/// `[run]` section: integration frame and global numerics.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// `"rwa"` or `"beyond-rwa"`.
    pub frame: String,
    /// Integrator step override.
    pub dt: Option<f64>,
    /// Negativity units: `"nat"` or `"log2"`.
    pub e_n_base: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            frame: "rwa".into(),
            dt: None,
            e_n_base: "nat".into(),
        }
    }
}

/// `[sweep.ensemble]`: Monte-Carlo settings for each sweep point.
#[derive(Copy, Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n: usize,
    pub rel_width: f64,
    pub seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n: 40,
            rel_width: 0.1,
            seed: 7,
        }
    }
}

/// One `[[sweep]]` block.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Output file stem; defaults to `sweep<index>`.
    pub name: Option<String>,
    /// What to vary: a parameter name, `eta` for all efficiencies at once,
    /// or `theta_b` for a homodyne-angle scan at fixed parameters.
    pub variable: String,
    /// `"linear"` or `"log10"`.
    pub scale: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// `"pulse-mech"` or `"pulse-pulse"`.
    pub bipartition: String,
    /// `"dynamics"` (integrate) or `"adiabatic"` (closed forms).
    pub model: String,
    /// Per-sweep frame override.
    pub frame: Option<String>,
    /// Tracked measures; the first one is what ensembles average and
    /// plots show.
    pub targets: Vec<String>,
    /// `theta_b` scans: how the remaining angles are chosen at each point.
    /// `"reoptimize"` them, hold the mixing angle `"fixed"` while the
    /// readout angle re-optimizes, or keep both `"locked"` at the global
    /// optimum of the scanned state (a local oscillator that stays put).
    pub phi_mode: String,
    /// Fixed mixing angle for `phi_mode = "fixed"` (radians).
    pub phi: Option<f64>,
    pub ensemble: Option<EnsembleSection>,
    /// Parameter overlay for this sweep only.
    pub params: Option<ParamsPatch>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            name: None,
            variable: "gamma_reheat".into(),
            scale: "log10".into(),
            lo: 1e-4,
            hi: 1.0,
            points: 25,
            bipartition: "pulse-mech".into(),
            model: "dynamics".into(),
            frame: None,
            targets: vec!["s_db".into()],
            phi_mode: "reoptimize".into(),
            phi: None,
            ensemble: None,
            params: None,
        }
    }
}

/// `[output]` section.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Any of `"csv"`, `"json"`.
    pub formats: Vec<String>,
    /// Additionally write an SVG plot per sweep.
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            formats: vec!["csv".into()],
            plot: false,
        }
    }
}

/// Whole config file.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub run: RunSection,
    #[serde(rename = "sweep")]
    pub sweeps: Vec<SweepSpec>,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parse from TOML text (no environment or overrides applied).
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config_from_table(table)
    }
}

fn config_from_table(table: toml::Table) -> Result<RunConfig> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))
}

fn parse_scalar(text: &str) -> toml::Value {
    if let Ok(i) = text.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = text.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match text {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        other => toml::Value::String(other.to_string()),
    }
}

/// Apply `LEVOPT_<SECTION>_<KEY>` environment overrides to a raw table.
///
/// Sections must be `params`, `run` or `output`; keys may themselves
/// contain underscores (`LEVOPT_PARAMS_GAMMA_REHEAT`). Exposed with an
/// injectable variable list so it can be tested without touching the
/// process environment.
pub fn apply_env_overrides<I>(table: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (key, value) in vars {
        let Some(rest) = key.strip_prefix("LEVOPT_") else {
            continue;
        };
        let Some((section, field)) = rest.split_once('_') else {
            return Err(Error::Config(format!(
                "malformed override {key}: expected LEVOPT_<SECTION>_<KEY>"
            )));
        };
        let section = section.to_ascii_lowercase();
        let field = field.to_ascii_lowercase();
        if !matches!(section.as_str(), "params" | "run" | "output") {
            return Err(Error::Config(format!(
                "override {key}: section {section} is not overridable (use params, run or output)"
            )));
        }
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let Some(sub) = entry.as_table_mut() else {
            return Err(Error::Config(format!("config key {section} is not a table")));
        };
        sub.insert(field, parse_scalar(&value));
    }
    Ok(())
}

/// Apply one `--set key.path=value` override to a raw table.
pub fn apply_set(table: &mut toml::Table, key_path: &str, value: &str) -> Result<()> {
    let segments: Vec<&str> = key_path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("bad --set path: {key_path}")));
    }
    let mut current = table;
    for seg in &segments[..segments.len() - 1] {
        let entry = current
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!(
                "--set {key_path}: {seg} is not a table (arrays cannot be addressed)"
            ))
        })?;
    }
    current.insert(
        segments[segments.len() - 1].to_string(),
        parse_scalar(value),
    );
    Ok(())
}

/// Load a config: optional file, then environment, then `--set` pairs.
pub fn load_config(
    path: Option<&Path>,
    sets: &[(String, String)],
) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    apply_env_overrides(&mut table, std::env::vars())?;
    for (key, value) in sets {
        apply_set(&mut table, key, value)?;
    }
    config_from_table(table)
}

/// Analysis model for a sweep.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Model {
    Dynamics,
    Adiabatic,
}

/// Axis scaling of a sweep.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

/// Handling of the non-scanned angles in a `theta_b` scan. `Locked`
/// resolves to [`PhiMode::Pinned`] once the scanned state is known.
#[derive(Copy, Clone, Debug, PartialEq)]
enum AnglePolicy {
    Reoptimize,
    Fixed(f64),
    Locked,
}

/// Parameter (or angle) being swept.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SweepVariable {
    Kappa,
    G,
    Omega,
    GammaReheat,
    N0,
    Eta,
    EtaB,
    EtaR,
    EtaM,
    Tau,
    TauD,
    TauR,
    ThetaB,
}

impl SweepVariable {
    fn parse(s: &str) -> Option<SweepVariable> {
        Some(match s {
            "kappa" => SweepVariable::Kappa,
            "g" => SweepVariable::G,
            "omega" => SweepVariable::Omega,
            "gamma_reheat" => SweepVariable::GammaReheat,
            "n0" => SweepVariable::N0,
            "eta" => SweepVariable::Eta,
            "eta_b" => SweepVariable::EtaB,
            "eta_r" => SweepVariable::EtaR,
            "eta_m" => SweepVariable::EtaM,
            "tau" => SweepVariable::Tau,
            "tau_d" => SweepVariable::TauD,
            "tau_r" => SweepVariable::TauR,
            "theta_b" => SweepVariable::ThetaB,
            _ => return None,
        })
    }

    fn apply(&self, p: &mut SystemParams, v: f64) -> Result<()> {
        match self {
            SweepVariable::Kappa => p.kappa = v,
            SweepVariable::G => p.g = v,
            SweepVariable::Omega => p.omega = v,
            SweepVariable::GammaReheat => p.set_reheat(v)?,
            SweepVariable::N0 => p.n0 = v,
            SweepVariable::Eta => {
                p.eta_b = v;
                p.eta_r = v;
                p.eta_m = v;
            }
            SweepVariable::EtaB => p.eta_b = v,
            SweepVariable::EtaR => p.eta_r = v,
            SweepVariable::EtaM => p.eta_m = v,
            SweepVariable::Tau => p.tau = v,
            SweepVariable::TauD => p.tau_d = v,
            SweepVariable::TauR => p.tau_r = v,
            SweepVariable::ThetaB => {
                return Err(Error::Config(
                    "theta_b is scanned on a fixed state, not applied to parameters".into(),
                ))
            }
        }
        Ok(())
    }
}

fn parse_frame(s: &str) -> Option<Frame> {
    match s {
        "rwa" => Some(Frame::Rwa),
        "beyond-rwa" | "beyond_rwa" => Some(Frame::BeyondRwa),
        _ => None,
    }
}

fn parse_measure(s: &str) -> Option<MeasureKind> {
    Some(match s {
        "s_db" => MeasureKind::SDb,
        "e_n" => MeasureKind::EN,
        "nu_minus" => MeasureKind::NuMinus,
        "lambda_min" => MeasureKind::LambdaMin,
        _ => None?,
    })
}

/// Column name a measure uses in CSV/JSON output.
pub fn measure_column(kind: MeasureKind) -> &'static str {
    match kind {
        MeasureKind::SDb => "S_db",
        MeasureKind::EN => "E_N",
        MeasureKind::NuMinus => "nu_minus",
        MeasureKind::LambdaMin => "lambda_min",
    }
}

/// Fully validated sweep, ready to execute.
struct ResolvedSweep {
    name: String,
    variable: SweepVariable,
    variable_name: String,
    scale: Scale,
    values: Vec<f64>,
    bipartition: Bipartition,
    model: Model,
    frame: Frame,
    target: MeasureKind,
    phi_mode: AnglePolicy,
    ensemble: Option<EnsembleSection>,
    base: SystemParams,
    e_n_base: LogBase,
}

/// One evaluated sweep point.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub s_db: Option<f64>,
    pub e_n: Option<f64>,
    pub nu_minus: Option<f64>,
    pub lambda_min: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub error: Option<String>,
}

/// Executed sweep with everything the writers need.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub name: String,
    pub variable: String,
    pub log_x: bool,
    /// Which measure the optional ensemble columns refer to.
    pub ensemble_kind: Option<MeasureKind>,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn any_error(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }
}

fn grid(scale: Scale, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            match scale {
                Scale::Linear => lo + (hi - lo) * t,
                Scale::Log10 => 10f64.powf(lo.log10() + (hi.log10() - lo.log10()) * t),
            }
        })
        .collect()
}

fn resolve_sweep(cfg: &RunConfig, spec: &SweepSpec, index: usize) -> Result<ResolvedSweep> {
    let mut errs = Vec::new();
    let label = spec
        .name
        .clone()
        .unwrap_or_else(|| format!("sweep{}", index + 1));

    let variable = SweepVariable::parse(&spec.variable);
    if variable.is_none() {
        errs.push(format!("{label}: unknown variable {:?}", spec.variable));
    }
    let scale = match spec.scale.as_str() {
        "linear" => Some(Scale::Linear),
        "log10" => Some(Scale::Log10),
        other => {
            errs.push(format!("{label}: unknown scale {other:?}"));
            None
        }
    };
    if !(spec.lo.is_finite() && spec.hi.is_finite() && spec.lo < spec.hi) {
        errs.push(format!(
            "{label}: need lo < hi, got [{}, {}]",
            spec.lo, spec.hi
        ));
    }
    if scale == Some(Scale::Log10) && spec.lo <= 0.0 {
        errs.push(format!("{label}: log10 scale needs lo > 0"));
    }
    if spec.points < 2 {
        errs.push(format!("{label}: need at least 2 points"));
    }
    let bipartition = match spec.bipartition.as_str() {
        "pulse-mech" => Some(Bipartition::PulseMech),
        "pulse-pulse" => Some(Bipartition::PulsePulse),
        other => {
            errs.push(format!("{label}: unknown bipartition {other:?}"));
            None
        }
    };
    let model = match spec.model.as_str() {
        "dynamics" => Some(Model::Dynamics),
        "adiabatic" => Some(Model::Adiabatic),
        other => {
            errs.push(format!("{label}: unknown model {other:?}"));
            None
        }
    };
    let frame_str = spec.frame.as_deref().unwrap_or(&cfg.run.frame);
    let frame = parse_frame(frame_str);
    if frame.is_none() {
        errs.push(format!("{label}: unknown frame {frame_str:?}"));
    }
    let target = spec.targets.first().map(|t| parse_measure(t));
    let target = match target {
        None => {
            errs.push(format!("{label}: targets must not be empty"));
            None
        }
        Some(None) => {
            errs.push(format!(
                "{label}: unknown target {:?}",
                spec.targets.first().unwrap()
            ));
            None
        }
        Some(some) => some,
    };
    for t in spec.targets.iter().skip(1) {
        if parse_measure(t).is_none() {
            errs.push(format!("{label}: unknown target {t:?}"));
        }
    }
    let phi_mode = match spec.phi_mode.as_str() {
        "reoptimize" => Some(AnglePolicy::Reoptimize),
        "locked" => Some(AnglePolicy::Locked),
        "fixed" => {
            let phi = spec.phi.unwrap_or(std::f64::consts::FRAC_PI_4);
            if !(phi.is_finite() && (0.0..=std::f64::consts::FRAC_PI_2).contains(&phi)) {
                errs.push(format!("{label}: phi must lie in [0, pi/2], got {phi}"));
                None
            } else {
                Some(AnglePolicy::Fixed(phi))
            }
        }
        other => {
            errs.push(format!("{label}: unknown phi_mode {other:?}"));
            None
        }
    };
    if let Some(e) = &spec.ensemble {
        if e.n == 0 {
            errs.push(format!("{label}: ensemble.n must be >= 1"));
        }
        if !(e.rel_width.is_finite() && (0.0..1.0).contains(&e.rel_width)) {
            errs.push(format!(
                "{label}: ensemble.rel_width must lie in [0, 1), got {}",
                e.rel_width
            ));
        }
        if variable == Some(SweepVariable::ThetaB) {
            errs.push(format!("{label}: ensembles are not defined for theta_b scans"));
        }
    }
    let e_n_base = match cfg.run.e_n_base.as_str() {
        "nat" => Some(LogBase::Nat),
        "log2" => Some(LogBase::Two),
        other => {
            errs.push(format!("run.e_n_base: unknown value {other:?}"));
            None
        }
    };

    let section = match &spec.params {
        Some(patch) => patch.apply(&cfg.params),
        None => cfg.params.clone(),
    };
    let base = match section.to_system(cfg.run.dt) {
        Ok(p) => Some(p),
        Err(e) => {
            errs.push(format!("{label}: {e}"));
            None
        }
    };

    if !errs.is_empty() {
        return Err(Error::Config(errs.join("; ")));
    }
    let scale = scale.unwrap();
    Ok(ResolvedSweep {
        name: label,
        variable: variable.unwrap(),
        variable_name: spec.variable.clone(),
        scale,
        values: grid(scale, spec.lo, spec.hi, spec.points),
        bipartition: bipartition.unwrap(),
        model: model.unwrap(),
        frame: frame.unwrap(),
        target: target.unwrap(),
        phi_mode: phi_mode.unwrap(),
        ensemble: spec.ensemble,
        base: base.unwrap(),
        e_n_base: e_n_base.unwrap(),
    })
}

fn convert_base(m: &mut Measures, base: LogBase) {
    if base == LogBase::Two {
        m.e_n /= std::f64::consts::LN_2;
    }
}

/// The lossy covariance matrix a sweep's measures are computed from.
fn state_for(p: &SystemParams, sweep: &ResolvedSweep) -> Result<CovarianceMatrix> {
    match (sweep.model, sweep.bipartition) {
        (Model::Dynamics, Bipartition::PulseMech) => Ok(run_blue(p, sweep.frame)?.0),
        (Model::Dynamics, Bipartition::PulsePulse) => {
            Ok(run_full(p, sweep.frame)?.cm_pulse_pulse)
        }
        (Model::Adiabatic, Bipartition::PulseMech) => {
            let pm = adiabatic_blue(blue_gain(p), p.n0)?;
            apply_loss(&pm, &[p.eta_b, p.eta_m])
        }
        (Model::Adiabatic, Bipartition::PulsePulse) => {
            let pm = adiabatic_blue(blue_gain(p), p.n0)?;
            let pp = adiabatic_red(red_transmittance(p), &pm)?;
            apply_loss(&pp, &[p.eta_b, p.eta_r])
        }
    }
}

fn eval_measures(p: &SystemParams, sweep: &ResolvedSweep) -> Result<Measures> {
    let cm = state_for(p, sweep)?;
    let mut m = Measures::of(&cm, LogBase::Nat)?;
    convert_base(&mut m, sweep.e_n_base);
    Ok(m)
}

fn parameter_row(sweep: &ResolvedSweep, value: f64) -> SweepRow {
    let mut row = SweepRow {
        value,
        s_db: None,
        e_n: None,
        nu_minus: None,
        lambda_min: None,
        mean: None,
        std: None,
        error: None,
    };
    let mut p = sweep.base.clone();
    if let Err(e) = sweep.variable.apply(&mut p, value) {
        row.error = Some(e.to_string());
        return row;
    }
    match eval_measures(&p, sweep) {
        Ok(m) => {
            row.s_db = Some(m.s_db);
            row.e_n = Some(m.e_n);
            row.nu_minus = Some(m.nu_minus);
            row.lambda_min = Some(m.lambda_min);
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    if let Some(ens) = &sweep.ensemble {
        let target = TargetMeasure {
            bipartition: sweep.bipartition,
            kind: sweep.target,
        };
        match monte_carlo_ensemble(&p, sweep.frame, target, ens.n, ens.rel_width, ens.seed) {
            Ok(mut stats) => {
                if sweep.target == MeasureKind::EN && sweep.e_n_base == LogBase::Two {
                    stats.mean /= std::f64::consts::LN_2;
                    stats.std /= std::f64::consts::LN_2;
                }
                row.mean = Some(stats.mean);
                row.std = Some(stats.std);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
    }
    row
}

fn theta_rows(sweep: &ResolvedSweep) -> Result<Vec<SweepRow>> {
    let cm = state_for(&sweep.base, sweep)?;
    let mut global = Measures::of(&cm, LogBase::Nat)?;
    convert_base(&mut global, sweep.e_n_base);
    let mode = match sweep.phi_mode {
        AnglePolicy::Reoptimize => PhiMode::Reoptimize,
        AnglePolicy::Fixed(phi) => PhiMode::Fixed(phi),
        AnglePolicy::Locked => {
            let (best, _) = optimize_angles(&cm)?;
            PhiMode::Pinned {
                phi: best.phi,
                theta_r: best.theta_r,
            }
        }
    };
    let rows = sweep
        .values
        .par_iter()
        .map(|&theta| match min_variance_at(&cm, theta, mode) {
            Ok((_, var)) => SweepRow {
                value: theta,
                s_db: Some(-10.0 * var.max(f64::MIN_POSITIVE).log10()),
                e_n: Some(global.e_n),
                nu_minus: Some(global.nu_minus),
                lambda_min: Some(var),
                mean: None,
                std: None,
                error: None,
            },
            Err(e) => SweepRow {
                value: theta,
                s_db: None,
                e_n: None,
                nu_minus: None,
                lambda_min: None,
                mean: None,
                std: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(rows)
}

fn execute_sweep(sweep: &ResolvedSweep) -> Result<SweepOutcome> {
    let rows = if sweep.variable == SweepVariable::ThetaB {
        theta_rows(sweep)?
    } else {
        sweep
            .values
            .par_iter()
            .map(|&v| parameter_row(sweep, v))
            .collect()
    };
    Ok(SweepOutcome {
        name: sweep.name.clone(),
        variable: sweep.variable_name.clone(),
        log_x: sweep.scale == Scale::Log10,
        ensemble_kind: sweep.ensemble.map(|_| sweep.target),
        rows,
    })
}

/// Validate and run every sweep in the config.
///
/// Config-level problems (unknown names, bad ranges, duplicate sweep
/// names) fail up front with a message listing all of them; problems at
/// individual sweep points are recorded in the row's `error` field
/// instead of aborting the sweep.
pub fn run_config(cfg: &RunConfig) -> Result<Vec<SweepOutcome>> {
    if cfg.sweeps.is_empty() {
        return Err(Error::Config("config defines no [[sweep]] blocks".into()));
    }
    let mut errs = Vec::new();
    let mut resolved = Vec::new();
    for (i, spec) in cfg.sweeps.iter().enumerate() {
        match resolve_sweep(cfg, spec, i) {
            Ok(r) => resolved.push(r),
            Err(e) => errs.push(e.to_string()),
        }
    }
    let mut seen = std::collections::HashSet::new();
    for r in &resolved {
        if !seen.insert(r.name.clone()) {
            errs.push(format!("duplicate sweep name {:?}", r.name));
        }
    }
    for f in &cfg.output.formats {
        if !matches!(f.as_str(), "csv" | "json") {
            errs.push(format!("unknown output format {f:?}"));
        }
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs.join("; ")));
    }
    resolved.iter().map(execute_sweep).collect()
}

/// A built-in, ready-to-run configuration.
pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: &'static str,
}

/// Built-in recipes reproducing the headline protocol studies.
pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "reheat-sweep",
        description: "entangling-pulse squeezing and negativity vs reheating rate, \
                      with shot-to-shot ensemble bars and a non-secular cross-check",
        toml: include_str!("../../recipes/reheat-sweep.toml"),
    },
    Recipe {
        name: "coupling-sweep",
        description: "integrated dynamics vs the adiabatic model across drive strength",
        toml: include_str!("../../recipes/coupling-sweep.toml"),
    },
    Recipe {
        name: "loss-budget",
        description: "pulse-pulse vs pulse-mech squeezing across reheating at two \
                      detection efficiencies",
        toml: include_str!("../../recipes/loss-budget.toml"),
    },
    Recipe {
        name: "angle-scan",
        description: "joint-quadrature variance vs homodyne angle at two initial \
                      occupations",
        toml: include_str!("../../recipes/angle-scan.toml"),
    },
];

pub fn find_recipe(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}
