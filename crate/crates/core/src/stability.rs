//! Linear stability of the composed memory + residual reservoir.
//!
//! The Jacobian of the global update with respect to `(m(t-1), h(t-1))` is
//! block lower-triangular:
//!
//! ```text
//! [ V_m                 0                   ]
//! [ beta D_t W_m V_m    alpha O + beta D_t W_h ]
//! ```
//!
//! with `D_t = diag(1 - tanh^2(pre))`, so its spectrum is the union of the
//! spectra of the two diagonal blocks.

use std::io::Write;

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{eigenvalues, spectral_norm, spectral_radius, Matrix, RngStream, Spectrum};
use crate::reservoir::{OrthoKind, ResEsn, ResRmnModel};

/// Tolerance used when deciding whether a radius is at most one.
pub const RADIUS_SLACK: f64 = 1e-10;

/// `diag(1 - tanh^2(W_h h_prev + W_m m + W_x x + b_h))`.
pub fn dt_diag(model: &ResEsn, h_prev: &[f64], m: &[f64], x: &[f64]) -> Result<Matrix> {
    let pre = model.preactivation(h_prev, m, x)?;
    let d: Vec<f64> = pre.iter().map(|&p| tanh_derivative(p)).collect();
    Matrix::diag(&d)
}

/// `1 - tanh^2(p)`, evaluated as `sech^2(p)` so saturated units stay
/// positive until `cosh` overflows.
#[inline]
pub fn tanh_derivative(p: f64) -> f64 {
    let c = p.cosh();
    1.0 / (c * c)
}

/// Blocks of the Jacobian at one point of the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianParts {
    /// `dm(t)/dm(t-1) = V_m`
    pub v_m_block: Matrix,
    /// `dh(t)/dm(t-1) = beta D_t W_m V_m`
    pub coupling_block: Matrix,
    /// `dh(t)/dh(t-1) = alpha O + beta D_t W_h`
    pub resesn_block: Matrix,
    /// The assembled `(N_m + N_h)` square matrix.
    pub full: Matrix,
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(dim_err!("{what} has length {}, expected {n}", v.len()));
    }
    Ok(())
}

/// Jacobian of the global update at `(m_prev, h_prev)` under input `x`.
pub fn jacobian_at(
    model: &ResRmnModel,
    h_prev: &[f64],
    m_prev: &[f64],
    x: &[f64],
) -> Result<JacobianParts> {
    let mem = model.memory();
    let res = model.resesn();
    check_len("h_prev", h_prev, res.n_h())?;
    let m = mem.step(m_prev, x)?;
    let dt = dt_diag(res, h_prev, &m, x)?;
    let d: Vec<f64> = (0..res.n_h()).map(|i| dt[(i, i)]).collect();
    let (n_m, n_h) = (mem.n_m(), res.n_h());
    let beta = res.beta();

    let v_m_block = mem.v_m().clone();

    let w_m = res
        .w_m()
        .ok_or_else(|| dim_err!("ResESN has no memory weights"))?;
    let w_m_v_m = w_m.matmul(mem.v_m())?;
    let mut coupling_block = Matrix::zeros(n_h, n_m)?;
    for (i, &di) in d.iter().enumerate() {
        let scale = beta * di;
        for (dst, src) in coupling_block.row_mut(i).iter_mut().zip(w_m_v_m.row(i)) {
            *dst = scale * src;
        }
    }

    let mut resesn_block = res.ortho().matrix().scaled(res.alpha());
    for (i, &di) in d.iter().enumerate() {
        let scale = beta * di;
        for (dst, src) in resesn_block.row_mut(i).iter_mut().zip(res.w_h().row(i)) {
            *dst += scale * src;
        }
    }

    let mut full = Matrix::zeros(n_m + n_h, n_m + n_h)?;
    full.set_block(0, 0, &v_m_block);
    full.set_block(n_m, 0, &coupling_block);
    full.set_block(n_m, n_m, &resesn_block);

    Ok(JacobianParts {
        v_m_block,
        coupling_block,
        resesn_block,
        full,
    })
}

/// Module-wise eigenvalues and the checks that tie them to the full
/// Jacobian.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub memory_eigs: Spectrum,
    pub resesn_eigs: Spectrum,
    pub full_eigs: Spectrum,
    /// Largest matched distance between `full_eigs` and the union of the
    /// module spectra.
    pub union_residual: f64,
    /// Spectral radius of the full Jacobian.
    pub rho_resrmn: f64,
    pub rho_memory: f64,
    pub rho_resesn: f64,
    /// `|rho_resrmn - max(rho_memory, rho_resesn)|`
    pub radius_gap: f64,
}

/// Solves the full Jacobian and the two diagonal blocks independently and
/// compares them.
pub fn verify_theorem1(
    model: &ResRmnModel,
    h_prev: &[f64],
    m_prev: &[f64],
    x: &[f64],
) -> Result<SpectrumReport> {
    let parts = jacobian_at(model, h_prev, m_prev, x)?;
    let full_eigs = eigenvalues(&parts.full)?;
    let memory_eigs = eigenvalues(&parts.v_m_block)?;
    let resesn_eigs = eigenvalues(&parts.resesn_block)?;
    let union_residual = full_eigs.matched_distance(&memory_eigs.union(&resesn_eigs))?;
    let rho_resrmn = full_eigs.radius();
    let rho_memory = memory_eigs.radius();
    let rho_resesn = resesn_eigs.radius();
    Ok(SpectrumReport {
        radius_gap: (rho_resrmn - rho_memory.max(rho_resesn)).abs(),
        memory_eigs,
        resesn_eigs,
        full_eigs,
        union_residual,
        rho_resrmn,
        rho_memory,
        rho_resesn,
    })
}

/// Radii at the origin with zero input and bias, where `D_t = I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NecessaryCondition {
    pub rho_vm: f64,
    pub rho_zero_input: f64,
    pub satisfied: bool,
}

pub fn necessary_condition(model: &ResRmnModel) -> Result<NecessaryCondition> {
    let res = model.resesn();
    let rho_vm = spectral_radius(model.memory().v_m())?;
    let block = res
        .ortho()
        .matrix()
        .scaled(res.alpha())
        .add(&res.w_h().scaled(res.beta()))?;
    let rho_zero_input = spectral_radius(&block)?;
    Ok(NecessaryCondition {
        rho_vm,
        rho_zero_input,
        satisfied: rho_vm <= 1.0 + RADIUS_SLACK && rho_zero_input <= 1.0 + RADIUS_SLACK,
    })
}

/// Which diagonal block an eigenvalue belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Memory,
    Resesn,
}

impl Module {
    pub fn name(self) -> &'static str {
        match self {
            Module::Memory => "memory",
            Module::Resesn => "resesn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenRecord {
    pub module: Module,
    pub re: f64,
    pub im: f64,
}

/// Writes `module,re,im` rows for one Jacobian and returns the records.
pub fn dump_spectrum<W: Write>(
    model: &ResRmnModel,
    h: &[f64],
    m: &[f64],
    x: &[f64],
    out: &mut W,
) -> Result<Vec<EigenRecord>> {
    let report = verify_theorem1(model, h, m, x)?;
    let records = eigen_records(&report);
    write_eigen_csv(&records, out)?;
    Ok(records)
}

/// Memory eigenvalues followed by ResESN eigenvalues.
pub fn eigen_records(report: &SpectrumReport) -> Vec<EigenRecord> {
    report
        .memory_eigs
        .iter()
        .map(|z| (Module::Memory, z))
        .chain(report.resesn_eigs.iter().map(|z| (Module::Resesn, z)))
        .map(|(module, z)| EigenRecord {
            module,
            re: z.re,
            im: z.im,
        })
        .collect()
}

/// CSV with header `module,re,im`, LF line endings.
pub fn write_eigen_csv<W: Write>(records: &[EigenRecord], out: &mut W) -> Result<()> {
    let io = |e| Error::io("<eigen csv>", e);
    writeln!(out, "module,re,im").map_err(io)?;
    for r in records {
        writeln!(out, "{},{},{}", r.module.name(), r.re, r.im).map_err(io)?;
    }
    Ok(())
}

/// Random state, memory and input, each uniform on (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub h: Vec<f64>,
    pub m: Vec<f64>,
    pub x: Vec<f64>,
}

impl Probe {
    pub fn uniform(model: &ResRmnModel, seed: u64) -> Self {
        let draw = |label: &str, n: usize| {
            let mut rng = RngStream::new(seed, label);
            (0..n).map(|_| rng.next_symmetric()).collect::<Vec<f64>>()
        };
        Self {
            h: draw("probe_h", model.resesn().n_h()),
            m: draw("probe_m", model.memory().n_m()),
            x: draw("probe_x", model.memory().n_x()),
        }
    }
}

/// Eigenvalue placement relative to the residual branch.
///
/// With `O = I` the ResESN eigenvalues lie within `beta ||W_h||` of `alpha`;
/// for any orthogonal `O` their moduli lie within `beta ||W_h||` of `alpha`.
/// Memory eigenvalues lie on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryCheck {
    pub norm_w_h: f64,
    pub radius_bound: f64,
    pub resesn_violations: usize,
    pub memory_violations: usize,
    pub worst_resesn_excess: f64,
    pub worst_memory_offset: f64,
}

pub fn geometry_check(
    model: &ResRmnModel,
    report: &SpectrumReport,
    tol: f64,
) -> Result<GeometryCheck> {
    let res = model.resesn();
    let norm_w_h = spectral_norm(res.w_h())?;
    let bound = res.beta() * norm_w_h;
    let alpha = res.alpha();
    let identity = res.ortho().kind() == OrthoKind::Identity;
    let mut worst_resesn_excess = f64::NEG_INFINITY;
    let mut resesn_violations = 0;
    for z in report.resesn_eigs.iter() {
        let dev = if identity {
            (z - alpha).norm()
        } else {
            (z.norm() - alpha).abs()
        };
        let excess = dev - bound;
        worst_resesn_excess = worst_resesn_excess.max(excess);
        if excess > tol {
            resesn_violations += 1;
        }
    }
    let mut worst_memory_offset: f64 = 0.0;
    let mut memory_violations = 0;
    for z in report.memory_eigs.iter() {
        let off = (z.norm() - 1.0).abs();
        worst_memory_offset = worst_memory_offset.max(off);
        if off > tol {
            memory_violations += 1;
        }
    }
    Ok(GeometryCheck {
        norm_w_h,
        radius_bound: bound,
        resesn_violations,
        memory_violations,
        worst_resesn_excess,
        worst_memory_offset,
    })
}
