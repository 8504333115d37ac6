//! JSON run configuration.

use std::path::Path;

use serde::Deserialize;

use fredstab::model::validate;
use fredstab::spectral::{Rect, ROOT_TOL};
use fredstab::{KernelExpr, PlantModel};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Iterative,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    plant: Option<RawPlant>,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    spectrum: RawSpectrum,
    #[serde(default)]
    initial: RawInitial,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    tau0: Option<f64>,
    tau1: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    #[serde(rename = "N")]
    n: Option<String>,
    #[serde(rename = "M")]
    m: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    n: Option<usize>,
    dt: Option<f64>,
    t_max: Option<f64>,
    method: Option<Method>,
    tol: Option<f64>,
    maxiter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrum {
    re_min: Option<f64>,
    re_max: Option<f64>,
    im_max: Option<f64>,
    root_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    x0: Option<String>,
    #[serde(rename = "U0")]
    u0: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub method: Method,
    pub tol: f64,
    pub maxiter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
    pub root_tol: f64,
}

impl SpectrumRegion {
    pub fn rect(&self) -> Rect {
        Rect::new(self.re_min, self.re_max, -self.im_max, self.im_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plant: PlantModel,
    pub numerics: Numerics,
    pub spectrum: SpectrumRegion,
    pub x0: KernelExpr,
    pub u0: KernelExpr,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Validation(format!("config parse error at '{path}': {}", e.inner()))
    })?;
    build(raw)
}

fn build(raw: RawConfig) -> Result<RunConfig, CliError> {
    let mut problems: Vec<String> = Vec::new();
    let mut need = |key: &str, v: Option<f64>| -> f64 {
        match v {
            Some(x) if x.is_finite() => x,
            Some(x) => {
                problems.push(format!("{key}: must be finite (got {x})"));
                f64::NAN
            }
            None => {
                problems.push(format!("{key}: missing"));
                f64::NAN
            }
        }
    };
    let plant = raw.plant.unwrap_or(RawPlant { tau0: None, tau1: None, a: None, b: None, n: None, m: None });
    let tau0 = need("plant.tau0", plant.tau0);
    let tau1 = need("plant.tau1", plant.tau1);
    let a = need("plant.a", plant.a);
    let b = need("plant.b", plant.b);

    let mut formula = |key: &str, v: Option<String>, default: Option<&str>| -> Option<KernelExpr> {
        let Some(text) = v.or(default.map(str::to_owned)) else {
            problems.push(format!("{key}: missing"));
            return None;
        };
        KernelExpr::parse(&text).map_err(|e| problems.push(format!("{key}: {e}"))).ok()
    };
    let n_expr = formula("plant.N", plant.n, None);
    let m_expr = formula("plant.M", plant.m, None);
    let x0 = formula("initial.x0", raw.initial.x0, Some("1"));
    let u0 = formula("initial.U0", raw.initial.u0, Some("0"));

    let num = raw.numerics;
    let numerics = Numerics {
        n: num.n.unwrap_or(200),
        dt: num.dt.unwrap_or(0.005),
        t_max: num.t_max.unwrap_or(20.0),
        method: num.method.unwrap_or(Method::Direct),
        tol: num.tol.unwrap_or(1e-10),
        maxiter: num.maxiter.unwrap_or(200),
    };
    let spectrum = SpectrumRegion {
        re_min: raw.spectrum.re_min.unwrap_or(-5.0),
        re_max: raw.spectrum.re_max.unwrap_or(1.0),
        im_max: raw.spectrum.im_max.unwrap_or(40.0 / if tau0 > 0.0 { tau0 } else { 1.0 }),
        root_tol: raw.spectrum.root_tol.unwrap_or(ROOT_TOL),
    };
    problems.extend(check_numerics(&numerics, &spectrum));

    let (Some(n_expr), Some(m_expr), Some(x0), Some(u0)) = (n_expr, m_expr, x0, u0) else {
        return Err(CliError::Validation(problems.join("; ")));
    };
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }
    let plant = PlantModel::new(tau0, tau1, a, b, n_expr, m_expr);
    let report = validate(&plant);
    if !report.passed() {
        let failed: Vec<String> = report.failures().map(|c| format!("{} {}", c.name, c.detail)).collect();
        return Err(CliError::Validation(format!("plant assumptions violated: {}", failed.join("; "))));
    }
    Ok(RunConfig { plant, numerics, spectrum, x0, u0 })
}

pub(crate) fn check_numerics(n: &Numerics, s: &SpectrumRegion) -> Vec<String> {
    let mut p = Vec::new();
    if n.n < 8 {
        p.push(format!("numerics.n: must be >= 8 (got {})", n.n));
    }
    if !(n.dt > 0.0 && n.dt.is_finite()) {
        p.push(format!("numerics.dt: must be > 0 (got {})", n.dt));
    }
    if !(n.t_max > 0.0 && n.t_max.is_finite()) {
        p.push(format!("numerics.t_max: must be > 0 (got {})", n.t_max));
    }
    if !(n.tol > 0.0 && n.tol.is_finite()) {
        p.push(format!("numerics.tol: must be > 0 (got {})", n.tol));
    }
    if n.maxiter == 0 {
        p.push("numerics.maxiter: must be >= 1".into());
    }
    if !(s.re_min.is_finite() && s.re_max.is_finite() && s.re_min < s.re_max) {
        p.push(format!("spectrum.re_min/re_max: need re_min < re_max (got {}, {})", s.re_min, s.re_max));
    }
    if !(s.im_max > 0.0 && s.im_max.is_finite()) {
        p.push(format!("spectrum.im_max: must be > 0 (got {})", s.im_max));
    }
    if !(s.root_tol > 0.0 && s.root_tol.is_finite()) {
        p.push(format!("spectrum.root_tol: must be > 0 (got {})", s.root_tol));
    }
    p
}
