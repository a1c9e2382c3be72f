//! Run configuration: TOML text in, validated [`RunConfig`] out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{stability_limit, Integrator, SchemeConfig};
use crate::effective_field::{Constraint, FieldAssembly, SurfaceModel};
use crate::energetics::{AnisotropyField, MaterialParams};
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, DomainGeometry, GeometryConfig};
use crate::maxwell::{AppliedCurrent, BoundaryCondition, YeeBox};
use crate::vec3::{is_finite, is_symmetric_psd, norm, Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub maxwell: MaxwellSection,
    pub initial: InitialCondition,
    #[serde(default)]
    pub current: CurrentSpec,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub a_exch: f64,
    pub alpha: f64,
    #[serde(default)]
    pub ks: f64,
    #[serde(default)]
    pub j1: f64,
    #[serde(default)]
    pub j2: f64,
    #[serde(default = "one")]
    pub mu0: f64,
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub anisotropy: AnisotropySpec,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnisotropySpec {
    #[default]
    None,
    /// `K = κ(I − a aᵀ)`.
    EasyAxis { axis: Vec3, kappa: f64 },
    /// The same symmetric matrix in every cell.
    Uniform { matrix: Mat3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Projected,
    Penalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub dt: f64,
    pub subcycles: usize,
    pub integrator: Integrator,
    pub surface: SurfaceModel,
    pub constraint: ConstraintKind,
    /// Penalty constant, required when `constraint = "penalized"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_k: Option<f64>,
    pub stability_c: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let s = SchemeConfig::default();
        Self {
            dt: s.dt,
            subcycles: s.subcycles,
            integrator: s.integrator,
            surface: SurfaceModel::SharpBc,
            constraint: ConstraintKind::Projected,
            penalty_k: None,
            stability_c: s.stability_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxwellSection {
    /// With `enabled = false` the magnetization sees the static `applied_field`;
    /// otherwise `h0` is magnetostatic.
    pub enabled: bool,
    pub padding: usize,
    pub bc: BoundaryCondition,
    pub applied_field: Vec3,
}

impl Default for MaxwellSection {
    fn default() -> Self {
        Self { enabled: true, padding: 4, bc: BoundaryCondition::Pec, applied_field: [0.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Uniform { direction: Vec3 },
    Vortexish,
    Random { seed: u64 },
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentSpec {
    #[default]
    Zero,
    Pulse { amplitude: Vec3, t0: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Steps between energy rows.
    pub every: usize,
    pub snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), every: 10, snapshots: false }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), reason: reason.into() }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().replace('\n', " "),
    })?;
    config.validate()?;
    Ok(config)
}

/// Canonical TOML form; `parse_config(&print_config(c))` returns `c`.
pub fn print_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("configuration is always representable")
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(invalid("t_end", "must be finite and non-negative"));
        }
        let geom = self.geometry()?;
        let params = self.material_params(&geom)?;
        let scheme = self.scheme_config()?;
        let limit = stability_limit(&geom, &params, &scheme);
        if scheme.dt > limit * (1.0 + 1e-12) {
            return Err(invalid("scheme.dt", format!("StabilityViolation: {:e} exceeds {:e}", scheme.dt, limit)));
        }
        if self.maxwell.enabled {
            let yee = YeeBox::around(&geom, self.maxwell.padding);
            let tau = scheme.dt / scheme.subcycles as f64;
            let cfl = yee.cfl_limit(params.mu0, params.eps0);
            if tau > cfl * (1.0 + 1e-12) {
                return Err(invalid("scheme.subcycles", format!("CFLViolation: substep {tau:e} exceeds {cfl:e}")));
            }
        } else if !is_finite(self.maxwell.applied_field) {
            return Err(invalid("maxwell.applied_field", "must be finite"));
        }
        match &self.initial {
            InitialCondition::Uniform { direction } if !(is_finite(*direction) && norm(*direction) > 0.0) => {
                return Err(invalid("initial.direction", "must be a finite nonzero vector"));
            }
            InitialCondition::Random { seed } if i64::try_from(*seed).is_err() => {
                return Err(invalid("initial.seed", "must fit in a signed 64-bit integer"));
            }
            InitialCondition::Snapshot { path } if path.as_os_str().is_empty() => {
                return Err(invalid("initial.path", "empty path"));
            }
            _ => {}
        }
        if let CurrentSpec::Pulse { amplitude, t0, width } = self.current {
            if !(is_finite(amplitude) && t0.is_finite() && width.is_finite() && width > 0.0) {
                return Err(invalid("current", "pulse needs finite amplitude and t0 and a positive width"));
            }
        }
        if self.output.every == 0 {
            return Err(invalid("output.every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<DomainGeometry> {
        build_geometry(&self.geometry).map_err(|e| match e {
            Error::NonTilingGrid { what } => {
                let field = if what == "eta" { "geometry.eta" } else { "geometry.l_plus" };
                invalid(field, format!("NonTiling: {what}"))
            }
            Error::EtaTooLarge { eta, limit } => invalid("geometry.eta", format!("EtaTooLarge: {eta} > {limit}")),
            other => invalid("geometry", other.to_string()),
        })
    }

    pub fn material_params(&self, geom: &DomainGeometry) -> Result<MaterialParams> {
        let m = &self.material;
        let cells = geom.cell_count();
        let anisotropy = match &m.anisotropy {
            AnisotropySpec::None => AnisotropyField::zero(cells),
            AnisotropySpec::EasyAxis { axis, kappa } => {
                if !(is_finite(*axis) && norm(*axis) > 0.0 && kappa.is_finite() && *kappa >= 0.0) {
                    return Err(invalid("material.anisotropy", "easy axis must be nonzero with kappa >= 0"));
                }
                AnisotropyField::easy_axis(cells, *axis, *kappa)
            }
            AnisotropySpec::Uniform { matrix } => {
                if !is_symmetric_psd(matrix, 1e-12) {
                    return Err(invalid("material.anisotropy", "matrix must be symmetric positive-semidefinite"));
                }
                AnisotropyField::uniform(cells, *matrix)
            }
        };
        let params = MaterialParams {
            a_exch: m.a_exch,
            anisotropy,
            ks: m.ks,
            j1: m.j1,
            j2: m.j2,
            alpha: m.alpha,
            mu0: m.mu0,
            eps0: m.eps0,
            sigma: m.sigma,
        };
        params.validate(geom).map_err(|e| invalid("material", e.to_string()))?;
        if m.a_exch == 0.0 && self.scheme.surface == SurfaceModel::SharpBc && (m.ks != 0.0 || m.j1 != 0.0 || m.j2 != 0.0)
        {
            return Err(invalid("material.a_exch", "ZeroExchange: sharp spacer condition needs a positive exchange constant"));
        }
        if self.scheme.surface == SurfaceModel::ThinLayer && !geom.thin_layer_active() {
            return Err(invalid("geometry.eta", "thin-layer surface model needs eta"));
        }
        Ok(params)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let s = &self.scheme;
        if !(s.dt.is_finite() && s.dt > 0.0) {
            return Err(invalid("scheme.dt", "must be positive"));
        }
        if s.subcycles == 0 {
            return Err(invalid("scheme.subcycles", "must be at least 1"));
        }
        if !(s.stability_c.is_finite() && s.stability_c > 0.0) {
            return Err(invalid("scheme.stability_c", "must be positive"));
        }
        let constraint = match (s.constraint, s.penalty_k) {
            (ConstraintKind::Projected, None) => Constraint::Projected,
            (ConstraintKind::Projected, Some(_)) => {
                return Err(invalid("scheme.penalty_k", "only allowed with constraint = \"penalized\""));
            }
            (ConstraintKind::Penalized, Some(k)) if k.is_finite() && k > 0.0 => Constraint::Penalized { k },
            (ConstraintKind::Penalized, _) => return Err(invalid("scheme.penalty_k", "penalized mode needs k > 0")),
        };
        let current = match self.current {
            CurrentSpec::Zero => AppliedCurrent::Zero,
            CurrentSpec::Pulse { amplitude, t0, width } => AppliedCurrent::Pulse { amplitude, t0, width },
        };
        Ok(SchemeConfig {
            dt: s.dt,
            subcycles: s.subcycles,
            integrator: s.integrator,
            assembly: FieldAssembly { surface: s.surface, constraint },
            stability_c: s.stability_c,
            current,
        })
    }

    /// Resolves a relative snapshot path against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let InitialCondition::Snapshot { path } = &mut self.initial {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// A small valid configuration, used by `check` tests and the README.
pub const EXAMPLE_CONFIG: &str = r#"t_end = 0.05

[geometry]
lx = 4.0
ly = 4.0
l_minus = 2.0
l_plus = 2.0
nx = 4
ny = 4
nz_minus = 2
nz_plus = 2

[material]
a_exch = 1.0
alpha = 1.0
ks = 0.5
j1 = 0.5
j2 = 0.5
sigma = 1.0

[scheme]
dt = 0.01
subcycles = 1
integrator = "heun"
surface = "sharp_bc"
constraint = "projected"
stability_c = 0.25

[maxwell]
enabled = true
padding = 2
bc = "pec"
applied_field = [0.0, 0.0, 0.0]

[initial]
preset = "random"
seed = 7

[output]
directory = "out"
every = 1
snapshots = false
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_parses_and_round_trips() {
        let c = parse_config(EXAMPLE_CONFIG).unwrap();
        assert_eq!(parse_config(&print_config(&c)).unwrap(), c);
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let text = "t_end = 1.0\n[geometry]\nlx=2.0\nly=2.0\nl_minus=1.0\nl_plus=1.0\nnx=2\nny=2\nnz_minus=1\nnz_plus=1\n\
                    [material]\na_exch=1.0\nalpha=0.5\n[initial]\npreset=\"vortexish\"\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.maxwell, MaxwellSection::default());
        assert_eq!(c.output, OutputSection::default());
        assert_eq!(c.material.mu0, 1.0);
        assert_eq!(c.current, CurrentSpec::Zero);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = EXAMPLE_CONFIG.replace("sigma = 1.0", "sigma = 1.0\nfoo = 3");
        match parse_config(&text) {
            Err(Error::Parse { line, message }) => {
                assert!(message.contains("foo"), "{message}");
                assert_eq!(line, text.lines().position(|l| l.starts_with("foo")).unwrap() + 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_tiling_eta_is_a_validation_error() {
        let text = EXAMPLE_CONFIG.replace("nz_plus = 2", "nz_plus = 2\neta = 0.7");
        match parse_config(&text) {
            Err(Error::Validation { field, reason }) => {
                assert!(field.ends_with("eta"));
                assert!(reason.contains("NonTiling"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn penalized_requires_k() {
        let text = EXAMPLE_CONFIG.replace("constraint = \"projected\"", "constraint = \"penalized\"");
        assert!(matches!(parse_config(&text), Err(Error::Validation { .. })));
        let text = text.replace("stability_c", "penalty_k = 10.0\nstability_c");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.scheme_config().unwrap().assembly.constraint, Constraint::Penalized { k: 10.0 });
    }

    #[test]
    fn huge_seed_is_rejected() {
        let mut c = parse_config(EXAMPLE_CONFIG).unwrap();
        c.initial = InitialCondition::Random { seed: u64::MAX };
        assert!(matches!(c.validate(), Err(Error::Validation { field, .. }) if field == "initial.seed"));
    }

    #[test]
    fn oversized_dt_is_rejected() {
        let text = EXAMPLE_CONFIG.replace("dt = 0.01", "dt = 0.5");
        assert!(matches!(parse_config(&text), Err(Error::Validation { field, .. }) if field == "scheme.dt"));
    }
}
