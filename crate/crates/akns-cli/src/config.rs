//! Scenario schema (version 1) and conversion into library objects.
//! Parsing keeps the JSON path in every error so a bad config names the
//! field that broke; physical preconditions are checked here, before any
//! numerics run.

use akns_core::grid::Grid1D;
use akns_core::linearsol::{close_dispersion, DispersionParams};
use akns_core::soliton::{soliton_config, soliton_field, Provenance, SolitonField};
use akns_core::verify::EquationId;
use akns_core::{c64, CMat, C64};
use serde::{Deserialize, Serialize};

/// Complex numbers enter as [re, im] pairs.
pub type Cx = [f64; 2];

pub fn cx(v: Cx) -> C64 {
    c64(v[0], v[1])
}

#[derive(Deserialize, Serialize, Clone, Debug)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    /// One-line statement of the object or identity the scenario exercises.
    pub context: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub target: Target,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(tag = "target", content = "spec", rename_all = "snake_case")]
pub enum Target {
    Hierarchy(HierarchySpec),
    Charges(ChargesSpec),
    Verify(VerifySpec),
    Glm(GlmSpec),
    Riccati(RiccatiSpec),
    Backlund(BacklundSpec),
    Burgers(BurgersSpec),
    Airy(AirySpec),
    Soliton(SolitonSampleSpec),
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    pub n: u32,
    #[serde(default)]
    pub eom: bool,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x0: f64,
    pub xmax: f64,
    pub dx: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D, String> {
        if !(self.dx > 0.0) || !(self.xmax > self.x0) {
            return Err(format!(
                "grid: needs xmax > x0 and dx > 0, got [{}, {}] at {}",
                self.x0, self.xmax, self.dx
            ));
        }
        Ok(Grid1D::from_range(self.x0, self.xmax, self.dx))
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) || self.steps == 0 {
            return Err(format!(
                "time: needs dt > 0 and steps >= 1, got dt {} steps {}",
                self.dt, self.steps
            ));
        }
        Ok(())
    }
}

/// Discrete-exponential data: weights, mode rates, and per-mode amplitude
/// matrices entered row-major.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct SolitonSpec {
    pub w1: Cx,
    pub w2: Cx,
    pub kappa: Vec<Cx>,
    pub kappa_hat: Vec<Cx>,
    pub flow: u32,
    pub b: Vec<Vec<Vec<Cx>>>,
    pub bhat: Vec<Vec<Vec<Cx>>>,
    #[serde(default)]
    pub tl_xi: Option<Cx>,
    pub provenance: ProvenanceSpec,
}

#[derive(Deserialize, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceSpec {
    ClosedFormTl,
    MatrixSolve,
}

fn matrix(rows: &[Vec<Cx>], ctx: &str) -> Result<CMat, String> {
    let r = rows.len();
    if r == 0 {
        return Err(format!("{}: empty matrix", ctx));
    }
    let c = rows[0].len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(format!("{}: ragged or empty matrix rows", ctx));
    }
    let mut m = CMat::zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = cx(*v);
        }
    }
    Ok(m)
}

impl SolitonSpec {
    pub fn dispersion(&self) -> Result<DispersionParams, String> {
        close_dispersion(
            cx(self.w1),
            cx(self.w2),
            self.kappa.iter().map(|k| cx(*k)).collect(),
            self.kappa_hat.iter().map(|k| cx(*k)).collect(),
            self.flow,
        )
        .map_err(|e| format!("soliton dispersion: {}", e))
    }

    pub fn field(&self) -> Result<SolitonField, String> {
        let disp = self.dispersion()?;
        let b = self
            .b
            .iter()
            .enumerate()
            .map(|(a, m)| matrix(m, &format!("soliton.b[{}]", a)))
            .collect::<Result<Vec<_>, _>>()?;
        let bhat = self
            .bhat
            .iter()
            .enumerate()
            .map(|(a, m)| matrix(m, &format!("soliton.bhat[{}]", a)))
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = soliton_config(disp, b, bhat, self.tl_xi.map(cx))
            .map_err(|e| format!("soliton config: {}", e))?;
        let prov = match self.provenance {
            ProvenanceSpec::ClosedFormTl => Provenance::ClosedFormTl,
            ProvenanceSpec::MatrixSolve => Provenance::MatrixSolve,
        };
        soliton_field(cfg, prov).map_err(|e| format!("soliton field: {}", e))
    }

    /// The same exponential data as a sampled linear kernel pair.
    pub fn kernel(&self) -> Result<akns_core::linearsol::LinearKernel, String> {
        let disp = self.dispersion()?;
        let b = self
            .b
            .iter()
            .enumerate()
            .map(|(a, m)| matrix(m, &format!("soliton.b[{}]", a)))
            .collect::<Result<Vec<_>, _>>()?;
        let bhat = self
            .bhat
            .iter()
            .enumerate()
            .map(|(a, m)| matrix(m, &format!("soliton.bhat[{}]", a)))
            .collect::<Result<Vec<_>, _>>()?;
        akns_core::linearsol::discrete_kernel(disp, b, bhat)
            .map_err(|e| format!("soliton kernel: {}", e))
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct ChargesSpec {
    pub soliton: SolitonSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub kmax: u32,
    pub tol: f64,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub eq: String,
    #[serde(default)]
    pub w1: Option<Cx>,
    #[serde(default)]
    pub w2: Option<Cx>,
    #[serde(default)]
    pub what1: Option<Cx>,
    #[serde(default)]
    pub what2: Option<Cx>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub n: Option<u32>,
    pub source: SourceSpec,
    #[serde(default = "default_order")]
    pub order: u32,
    pub tol: f64,
    /// Multiplies u before the residual runs; the negative-control knob.
    #[serde(default)]
    pub perturb: Option<f64>,
    #[serde(default)]
    pub curvature: Option<CurvatureSpec>,
}

fn default_order() -> u32 {
    4
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Soliton {
        soliton: SolitonSpec,
        grid: GridSpec,
        time: TimeSpec,
    },
    Glm {
        soliton: SolitonSpec,
        grid: GridSpec,
        time: TimeSpec,
    },
    File {
        path: String,
    },
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSpec {
    pub n: u32,
    pub lambdas: Vec<Cx>,
    /// Sampling clock for the bridged trajectory the Lax check runs on;
    /// higher flows need finer steps than the field residual does.
    pub time: TimeSpec,
    pub tol: f64,
}

impl VerifySpec {
    fn need(&self, v: Option<Cx>, field: &str) -> Result<C64, String> {
        v.map(cx)
            .ok_or_else(|| format!("spec.{}: required for eq \"{}\"", field, self.eq))
    }

    pub fn equation(&self) -> Result<EquationId, String> {
        let eq = match self.eq.as_str() {
            "linear_space" => EquationId::LinearSpace {
                w1: self.need(self.w1, "w1")?,
                w2: self.need(self.w2, "w2")?,
            },
            "linear_time" => EquationId::LinearTime {
                n: self
                    .n
                    .ok_or_else(|| "spec.n: required for eq \"linear_time\"".to_string())?,
            },
            "transport_s3" => EquationId::TransportS3 {
                w1: self.need(self.w1, "w1")?,
                w2: self.need(self.w2, "w2")?,
                what1: self.need(self.what1, "what1")?,
                what2: self.need(self.what2, "what2")?,
            },
            "nls_s3" => EquationId::NlsS3 {
                w1: self.need(self.w1, "w1")?,
                w2: self.need(self.w2, "w2")?,
            },
            "mkdv_s3" => EquationId::MkdvS3 {
                w1: self.need(self.w1, "w1")?,
                w2: self.need(self.w2, "w2")?,
            },
            "transport_s4" => EquationId::TransportS4,
            "nls_s4" => EquationId::NlsS4,
            "mkdv_s4_derived" => EquationId::MkdvS4Derived,
            "burgers_viscous" => EquationId::BurgersViscous {
                nu: self
                    .nu
                    .ok_or_else(|| "spec.nu: required for eq \"burgers_viscous\"".to_string())?,
            },
            "burgers_inviscid" => EquationId::BurgersInviscid,
            "airy_ode" => EquationId::AiryOde,
            other => return Err(format!("spec.eq: unknown equation \"{}\"", other)),
        };
        if !matches!(self.order, 2 | 4) {
            return Err(format!("spec.order: stencil order must be 2 or 4, got {}", self.order));
        }
        Ok(eq)
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct GlmSpec {
    pub kernel: GlmKernelSpec,
    pub grid: GridSpec,
    /// Evaluation time for the sampled kernels.
    #[serde(default)]
    pub t: f64,
    pub tol_fact: f64,
    pub tol_constr: f64,
    /// Gate for |solved fields - closed form|; needs a TL soliton kernel.
    #[serde(default)]
    pub tol_diag: Option<f64>,
    /// Gates for the integral Riccati identities (diagonal, kernel PDE).
    #[serde(default)]
    pub tol_riccati: Option<f64>,
    #[serde(default)]
    pub kernel_csv: bool,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlmKernelSpec {
    Soliton {
        soliton: SolitonSpec,
    },
    Airy {
        w1: f64,
        w2: f64,
        t: f64,
    },
    File {
        path: String,
        path_hat: String,
        /// Weights the kernels were generated with; they fix the field
        /// normalization of the solve.
        w1: Cx,
        w2: Cx,
    },
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct RiccatiSpec {
    pub kmax: u32,
    /// Real spectral samples; each must come with its double to measure decay.
    pub lambdas: Vec<f64>,
    /// Floor for the residual ratio r(lambda)/r(2 lambda).
    pub decay_floor: f64,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct BacklundSpec {
    pub grid: GridSpec,
    /// Eigenvalues and mixing amplitudes of the vacuum wavefunction matrix.
    pub l1: f64,
    pub l2: f64,
    pub mix1: f64,
    pub mix2: f64,
    pub tol: f64,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct BurgersSpec {
    pub profile: ProfileSpec,
    pub nu_hat: f64,
    /// Square idempotent-direction amplitude matrix, row-major.
    pub b: Vec<Vec<Cx>>,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub tol: f64,
    pub tol_scalar: f64,
}

#[derive(Deserialize, Serialize, Clone, Copy, Debug)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Constant { value: f64 },
    Gaussian { amplitude: f64, floor: f64, center: f64, t_shift: f64 },
    TwoHump { amplitude: f64, floor: f64, separation: f64, t_shift: f64 },
}

impl ProfileSpec {
    pub fn build(&self) -> akns_core::linearsol::PhiProfile {
        use akns_core::linearsol::PhiProfile;
        match *self {
            ProfileSpec::Constant { value } => PhiProfile::Constant { value },
            ProfileSpec::Gaussian { amplitude, floor, center, t_shift } => {
                PhiProfile::Gaussian { amplitude, floor, center, t_shift }
            }
            ProfileSpec::TwoHump { amplitude, floor, separation, t_shift } => {
                PhiProfile::TwoHump { amplitude, floor, separation, t_shift }
            }
        }
    }
}

impl BurgersSpec {
    pub fn amplitude(&self) -> Result<CMat, String> {
        matrix(&self.b, "spec.b")
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct AirySpec {
    pub w1: f64,
    pub w2: f64,
    /// Reference time for the self-similar kernel.
    pub t: f64,
    pub grid: GridSpec,
    pub time: TimeSpec,
    /// Domain of the pointwise Airy-equation scan.
    pub ode_grid: GridSpec,
    pub tol: f64,
    #[serde(default)]
    pub table_csv: bool,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct SolitonSampleSpec {
    pub soliton: SolitonSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
}

/// Trajectory-from-file layout: u[frame][point][row][col] = [re, im].
#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct FileTrajectory {
    pub flow: u32,
    pub t0: f64,
    pub dt: f64,
    pub x0: f64,
    pub dx: f64,
    pub n_dim: usize,
    pub m_dim: usize,
    pub u: Vec<Vec<Vec<Vec<Cx>>>>,
    pub uhat: Vec<Vec<Vec<Vec<Cx>>>>,
}

pub fn parse_scenario(src: &str) -> Result<Scenario, String> {
    let de = &mut serde_json::Deserializer::from_str(src);
    let sc: Scenario = serde_path_to_error::deserialize(de)
        .map_err(|e| format!("config error at {}: {}", e.path(), e.inner()))?;
    if sc.schema != 1 {
        return Err(format!("config error at schema: unsupported version {}", sc.schema));
    }
    Ok(sc)
}

pub fn parse_file_trajectory(src: &str) -> Result<FileTrajectory, String> {
    let de = &mut serde_json::Deserializer::from_str(src);
    serde_path_to_error::deserialize(de)
        .map_err(|e| format!("trajectory file error at {}: {}", e.path(), e.inner()))
}
