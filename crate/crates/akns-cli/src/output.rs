//! Report assembly and CSV emission. Reports carry no timestamps or
//! absolute paths so identical configs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use akns_core::grid::Trajectory;
use akns_core::C64;
use serde::Serialize;

/// One gated quantity. `op` says which side of the tolerance passes:
/// "lt" for residual-style checks, "gt" for decay ratios and controls
/// that must exceed a floor.
#[derive(Serialize, Clone, Debug)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_floor: Option<f64>,
    pub tolerance: f64,
    pub op: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Check {
    pub fn lt(name: &str, value: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            value,
            fd_floor: None,
            tolerance,
            op: "lt".into(),
            pass: value < tolerance,
            notes: Vec::new(),
        }
    }

    pub fn gt(name: &str, value: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            value,
            fd_floor: None,
            tolerance,
            op: "gt".into(),
            pass: value > tolerance,
            notes: Vec::new(),
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Check {
        self.fd_floor = Some(floor);
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Check {
        self.notes.push(s.into());
        self
    }
}

#[derive(Serialize, Debug)]
pub struct Report {
    pub schema: u32,
    pub scenario: String,
    pub context: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Relative names of files written next to the report.
    pub artifacts: Vec<String>,
    /// Scenario-specific payload (symbol tables, charge series, samples).
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub data: serde_json::Value,
    pub pass: bool,
}

impl Report {
    pub fn new(scenario: &str, context: &str, seed: u64) -> Report {
        Report {
            schema: 1,
            scenario: scenario.into(),
            context: context.into(),
            seed,
            checks: Vec::new(),
            artifacts: Vec::new(),
            data: serde_json::Value::Null,
            pass: true,
        }
    }

    pub fn push(&mut self, c: Check) {
        self.pass &= c.pass;
        self.checks.push(c);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn failing(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn push_c64(line: &mut String, z: C64) {
    let _ = write!(line, ",{},{}", z.re, z.im);
}

/// Fields CSV: one row per (frame, grid point), columns
/// x,t,Re_u_rc,Im_u_rc,...,Re_uhat_rc,Im_uhat_rc in row-major block order.
pub fn fields_csv(traj: &Trajectory) -> String {
    let g = traj.x_grid();
    let (n, m) = (traj.frames[0].n_dim, traj.frames[0].m_dim);
    let mut out = String::from("x,t");
    for r in 0..m {
        for c in 0..n {
            let _ = write!(out, ",Re_u_{}{},Im_u_{}{}", r, c, r, c);
        }
    }
    for r in 0..n {
        for c in 0..m {
            let _ = write!(out, ",Re_uhat_{}{},Im_uhat_{}{}", r, c, r, c);
        }
    }
    out.push('\n');
    for (k, fr) in traj.frames.iter().enumerate() {
        let t = traj.t(k);
        for i in 0..g.len {
            let mut line = format!("{},{}", g.x(i), t);
            for z in fr.u[i].transpose().iter() {
                push_c64(&mut line, *z);
            }
            for z in fr.uhat[i].transpose().iter() {
                push_c64(&mut line, *z);
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Charges CSV: t,Re_I1,Im_I1,... one row per frame.
pub fn charges_csv(t0: f64, dt: f64, series: &[Vec<C64>]) -> String {
    let kmax = series.len();
    let mut out = String::from("t");
    for k in 1..=kmax {
        let _ = write!(out, ",Re_I{},Im_I{}", k, k);
    }
    out.push('\n');
    let steps = series.first().map_or(0, Vec::len);
    for s in 0..steps {
        let mut line = format!("{}", t0 + s as f64 * dt);
        for column in series {
            push_c64(&mut line, column[s]);
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Kernel CSV rows (i, j, Re, Im); the format carries scalar blocks only.
pub fn kernel_csv(kernel: &akns_core::glm::Kernel2D) -> Result<String, String> {
    if kernel.block_rows() != 1 || kernel.block_cols() != 1 {
        return Err(format!(
            "kernel CSV rows (i, j, Re, Im) carry scalar blocks only, this kernel is {}x{} blocked",
            kernel.block_rows(),
            kernel.block_cols()
        ));
    }
    let l = kernel.grid().len;
    let mut out = String::from("i,j,Re,Im\n");
    for i in 0..l {
        for j in 0..l {
            if !kernel.in_support(i, j) {
                continue;
            }
            let z = kernel.block(i, j)[(0, 0)];
            let _ = writeln!(out, "{},{},{},{}", i, j, z.re, z.im);
        }
    }
    Ok(out)
}

/// Plain two-column table, e.g. the Airy samples.
pub fn table_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut out = format!("{}\n", header);
    for (a, b) in rows {
        let _ = writeln!(out, "{},{}", a, b);
    }
    out
}

pub fn write_artifact(
    report: &mut Report,
    out_dir: &Path,
    name: &str,
    content: &str,
) -> Result<(), String> {
    fs::write(out_dir.join(name), content)
        .map_err(|e| format!("cannot write {}: {}", name, e))?;
    report.artifacts.push(name.to_string());
    Ok(())
}
