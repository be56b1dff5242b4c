use serde::{Deserialize, Serialize};

use super::{OrthoKind, Orthogonal};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{cyclic_orthogonal, rescale_to_radius, uniform_matrix, Matrix, RngStream};

/// Leaky ESN hyperparameters. `n_m` and `omega_m` are zero for a standalone
/// leaky ESN and set when it is the non-linear module of an RMN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakyEsnParams {
    pub n_h: usize,
    pub n_x: usize,
    pub rho: f64,
    pub omega_x: f64,
    pub omega_b: f64,
    pub tau: f64,
    #[serde(default)]
    pub n_m: usize,
    #[serde(default)]
    pub omega_m: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub n_m: usize,
    pub n_x: usize,
    pub omega_xm: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResEsnParams {
    pub n_h: usize,
    pub n_x: usize,
    pub n_m: usize,
    pub rho: f64,
    pub omega_x: f64,
    pub omega_m: f64,
    pub omega_b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ortho: OrthoKind,
    pub seed: u64,
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Param(format!("{name} must be >= 1")));
    }
    Ok(())
}

fn check_scale(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Param(format!(
            "{name} must be finite and >= 0, got {v}"
        )));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Param(format!("rho must be > 0, got {rho}")));
    }
    Ok(())
}

impl LeakyEsnParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("n_h", self.n_h)?;
        check_positive("n_x", self.n_x)?;
        check_rho(self.rho)?;
        check_scale("omega_x", self.omega_x)?;
        check_scale("omega_b", self.omega_b)?;
        check_scale("omega_m", self.omega_m)?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Param(format!(
                "tau must be in (0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("n_m", self.n_m)?;
        check_positive("n_x", self.n_x)?;
        check_scale("omega_xm", self.omega_xm)
    }
}

impl ResEsnParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("n_h", self.n_h)?;
        check_positive("n_x", self.n_x)?;
        check_rho(self.rho)?;
        check_scale("omega_x", self.omega_x)?;
        check_scale("omega_b", self.omega_b)?;
        check_scale("omega_m", self.omega_m)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Param(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Param(format!(
                "beta must be in (0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Weights shared by both non-linear modules.
fn draw_recurrent(n_h: usize, rho: f64, seed: u64) -> Result<Matrix> {
    let raw = uniform_matrix(&mut RngStream::new(seed, "W_h"), n_h, n_h, 1.0)?;
    rescale_to_radius(&raw, rho)
}

fn draw_inputs(
    n_h: usize,
    n_x: usize,
    n_m: usize,
    omega_x: f64,
    omega_m: f64,
    omega_b: f64,
    seed: u64,
) -> Result<(Option<Matrix>, Matrix, Vec<f64>)> {
    let w_m = if n_m > 0 {
        Some(uniform_matrix(
            &mut RngStream::new(seed, "W_m"),
            n_h,
            n_m,
            omega_m,
        )?)
    } else {
        None
    };
    let w_x = uniform_matrix(&mut RngStream::new(seed, "W_x"), n_h, n_x, omega_x)?;
    let b = uniform_matrix(&mut RngStream::new(seed, "b_h"), n_h, 1, omega_b)?.into_vec();
    Ok((w_m, w_x, b))
}

/// `W_h h + W_m m + W_x x + b`, accumulated in that order.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn preactivation_into(
    w_h: &Matrix,
    w_m: Option<&Matrix>,
    w_x: &Matrix,
    b: &[f64],
    h_prev: &[f64],
    m: &[f64],
    x: &[f64],
    out: &mut [f64],
) {
    w_h.matvec_into(h_prev, out);
    if let Some(w_m) = w_m {
        w_m.matvec_add_into(m, out);
    }
    w_x.matvec_add_into(x, out);
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
    }
}

/// As [`preactivation_into`] with the memory term given as `coeff * feed`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn preactivation_fed_into(
    w_h: &Matrix,
    feed: &[f64],
    coeff: f64,
    w_x: &Matrix,
    b: &[f64],
    h_prev: &[f64],
    x: &[f64],
    out: &mut [f64],
) {
    w_h.matvec_into(h_prev, out);
    for (o, f) in out.iter_mut().zip(feed) {
        *o += coeff * f;
    }
    w_x.matvec_add_into(x, out);
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
    }
}

fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(dim_err!(
            "{what} has length {}, expected {expected}",
            v.len()
        ));
    }
    Ok(())
}

/// Leaky ESN: `h = (1 - tau) h_prev + tau tanh(W_h h_prev [+ W_m m] + W_x x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakyEsn {
    w_h: Matrix,
    w_m: Option<Matrix>,
    w_x: Matrix,
    b: Vec<f64>,
    tau: f64,
}

pub fn build_leaky_esn(p: &LeakyEsnParams) -> Result<LeakyEsn> {
    p.validate()?;
    let w_h = draw_recurrent(p.n_h, p.rho, p.seed)?;
    let (w_m, w_x, b) = draw_inputs(p.n_h, p.n_x, p.n_m, p.omega_x, p.omega_m, p.omega_b, p.seed)?;
    Ok(LeakyEsn {
        w_h,
        w_m,
        w_x,
        b,
        tau: p.tau,
    })
}

impl LeakyEsn {
    /// Assembles a model from explicit weights.
    pub fn from_parts(
        w_h: Matrix,
        w_m: Option<Matrix>,
        w_x: Matrix,
        b: Vec<f64>,
        tau: f64,
    ) -> Result<Self> {
        let n_h = w_h.rows();
        if !w_h.is_square() || w_x.rows() != n_h || b.len() != n_h {
            return Err(dim_err!("inconsistent leaky ESN weight shapes"));
        }
        if let Some(w_m) = &w_m {
            if w_m.rows() != n_h {
                return Err(dim_err!("W_m has {} rows, expected {n_h}", w_m.rows()));
            }
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Param(format!("tau must be in (0, 1], got {tau}")));
        }
        Ok(Self {
            w_h,
            w_m,
            w_x,
            b,
            tau,
        })
    }

    pub fn n_h(&self) -> usize {
        self.w_h.rows()
    }

    pub fn n_x(&self) -> usize {
        self.w_x.cols()
    }

    pub fn n_m(&self) -> usize {
        self.w_m.as_ref().map_or(0, Matrix::cols)
    }

    pub fn w_h(&self) -> &Matrix {
        &self.w_h
    }

    pub fn w_m(&self) -> Option<&Matrix> {
        self.w_m.as_ref()
    }

    pub fn w_x(&self) -> &Matrix {
        &self.w_x
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// One standalone step (no memory input).
    pub fn leaky_step(&self, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.step(h_prev, &[], x)
    }

    /// One step with memory input `m` (empty when the model has none).
    pub fn step(&self, h_prev: &[f64], m: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_len("h_prev", h_prev, self.n_h())?;
        check_len("m", m, self.n_m())?;
        check_len("x", x, self.n_x())?;
        let mut h = h_prev.to_vec();
        let mut pre = vec![0.0; self.n_h()];
        self.advance(&mut h, m, x, &mut pre);
        Ok(h)
    }

    #[inline]
    pub(crate) fn advance(&self, h: &mut [f64], m: &[f64], x: &[f64], pre: &mut [f64]) {
        preactivation_into(
            &self.w_h,
            self.w_m.as_ref(),
            &self.w_x,
            &self.b,
            h,
            m,
            x,
            pre,
        );
        let keep = 1.0 - self.tau;
        for (hi, p) in h.iter_mut().zip(pre.iter()) {
            *hi = keep * *hi + self.tau * p.tanh();
        }
    }

    pub(crate) fn advance_fed(
        &self,
        h: &mut [f64],
        feed: &[f64],
        coeff: f64,
        x: &[f64],
        pre: &mut [f64],
    ) {
        preactivation_fed_into(&self.w_h, feed, coeff, &self.w_x, &self.b, h, x, pre);
        let keep = 1.0 - self.tau;
        for (hi, p) in h.iter_mut().zip(pre.iter()) {
            *hi = keep * *hi + self.tau * p.tanh();
        }
    }
}

/// Linear memory reservoir `m = V_m m_prev + V_x x` with cyclic `V_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReservoir {
    v_m: Matrix,
    v_x: Matrix,
}

pub fn build_memory(p: &MemoryParams) -> Result<MemoryReservoir> {
    p.validate()?;
    let v_x = uniform_matrix(&mut RngStream::new(p.seed, "V_x"), p.n_m, p.n_x, p.omega_xm)?;
    MemoryReservoir::with_input_weights(v_x)
}

impl MemoryReservoir {
    /// Memory with the given `N_m x N_x` input weights and a cyclic `V_m`.
    pub fn with_input_weights(v_x: Matrix) -> Result<Self> {
        Ok(Self {
            v_m: cyclic_orthogonal(v_x.rows())?,
            v_x,
        })
    }

    pub fn n_m(&self) -> usize {
        self.v_m.rows()
    }

    pub fn n_x(&self) -> usize {
        self.v_x.cols()
    }

    pub fn v_m(&self) -> &Matrix {
        &self.v_m
    }

    pub fn v_x(&self) -> &Matrix {
        &self.v_x
    }

    pub fn step(&self, m_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_len("m_prev", m_prev, self.n_m())?;
        check_len("x", x, self.n_x())?;
        let mut m = m_prev.to_vec();
        let mut tmp = vec![0.0; self.n_m()];
        self.advance(&mut m, x, &mut tmp);
        Ok(m)
    }

    /// In-place update. `V_m` is the cyclic shift, applied as a rotation.
    #[inline]
    pub(crate) fn advance(&self, m: &mut [f64], x: &[f64], tmp: &mut [f64]) {
        let n = m.len();
        tmp[0] = m[n - 1];
        tmp[1..].copy_from_slice(&m[..n - 1]);
        for (i, (mi, ti)) in m.iter_mut().zip(tmp.iter()).enumerate() {
            *mi = ti + crate::linalg::dot(self.v_x.row(i), x);
        }
    }
}

/// Residual ESN: `h = alpha O h_prev + beta tanh(W_h h_prev + W_m m + W_x x + b_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResEsn {
    o: Orthogonal,
    w_h: Matrix,
    w_m: Option<Matrix>,
    w_x: Matrix,
    b_h: Vec<f64>,
    alpha: f64,
    beta: f64,
}

pub fn build_resesn(p: &ResEsnParams) -> Result<ResEsn> {
    p.validate()?;
    let o = Orthogonal::build(p.ortho, p.n_h, p.seed)?;
    let w_h = draw_recurrent(p.n_h, p.rho, p.seed)?;
    let (w_m, w_x, b_h) =
        draw_inputs(p.n_h, p.n_x, p.n_m, p.omega_x, p.omega_m, p.omega_b, p.seed)?;
    Ok(ResEsn {
        o,
        w_h,
        w_m,
        w_x,
        b_h,
        alpha: p.alpha,
        beta: p.beta,
    })
}

impl ResEsn {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        o: Orthogonal,
        w_h: Matrix,
        w_m: Option<Matrix>,
        w_x: Matrix,
        b_h: Vec<f64>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let n_h = w_h.rows();
        if !w_h.is_square() || o.order() != n_h || w_x.rows() != n_h || b_h.len() != n_h {
            return Err(dim_err!("inconsistent ResESN weight shapes"));
        }
        if let Some(w_m) = &w_m {
            if w_m.rows() != n_h {
                return Err(dim_err!("W_m has {} rows, expected {n_h}", w_m.rows()));
            }
        }
        if !(0.0..=1.0).contains(&alpha) || !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Param(format!(
                "need alpha in [0, 1] and beta in (0, 1], got {alpha}, {beta}"
            )));
        }
        Ok(Self {
            o,
            w_h,
            w_m,
            w_x,
            b_h,
            alpha,
            beta,
        })
    }

    pub fn n_h(&self) -> usize {
        self.w_h.rows()
    }

    pub fn n_x(&self) -> usize {
        self.w_x.cols()
    }

    pub fn n_m(&self) -> usize {
        self.w_m.as_ref().map_or(0, Matrix::cols)
    }

    pub fn ortho(&self) -> &Orthogonal {
        &self.o
    }

    pub fn w_h(&self) -> &Matrix {
        &self.w_h
    }

    pub fn w_m(&self) -> Option<&Matrix> {
        self.w_m.as_ref()
    }

    pub fn w_x(&self) -> &Matrix {
        &self.w_x
    }

    pub fn bias(&self) -> &[f64] {
        &self.b_h
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Pre-activation `W_h h_prev + W_m m + W_x x + b_h`.
    pub fn preactivation(&self, h_prev: &[f64], m: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(h_prev, m, x)?;
        let mut pre = vec![0.0; self.n_h()];
        preactivation_into(
            &self.w_h,
            self.w_m.as_ref(),
            &self.w_x,
            &self.b_h,
            h_prev,
            m,
            x,
            &mut pre,
        );
        Ok(pre)
    }

    pub fn step(&self, h_prev: &[f64], m: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(h_prev, m, x)?;
        let mut h = h_prev.to_vec();
        let mut pre = vec![0.0; self.n_h()];
        let mut rot = vec![0.0; self.n_h()];
        self.advance(&mut h, m, x, &mut pre, &mut rot);
        Ok(h)
    }

    fn check_inputs(&self, h_prev: &[f64], m: &[f64], x: &[f64]) -> Result<()> {
        check_len("h_prev", h_prev, self.n_h())?;
        check_len("m", m, self.n_m())?;
        check_len("x", x, self.n_x())
    }

    #[inline]
    pub(crate) fn advance(
        &self,
        h: &mut [f64],
        m: &[f64],
        x: &[f64],
        pre: &mut [f64],
        rot: &mut [f64],
    ) {
        preactivation_into(
            &self.w_h,
            self.w_m.as_ref(),
            &self.w_x,
            &self.b_h,
            h,
            m,
            x,
            pre,
        );
        self.o.apply_into(h, rot);
        for ((hi, r), p) in h.iter_mut().zip(rot.iter()).zip(pre.iter()) {
            *hi = self.alpha * r + self.beta * p.tanh();
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn advance_fed(
        &self,
        h: &mut [f64],
        feed: &[f64],
        coeff: f64,
        x: &[f64],
        pre: &mut [f64],
        rot: &mut [f64],
    ) {
        preactivation_fed_into(&self.w_h, feed, coeff, &self.w_x, &self.b_h, h, x, pre);
        self.o.apply_into(h, rot);
        for ((hi, r), p) in h.iter_mut().zip(rot.iter()).zip(pre.iter()) {
            *hi = self.alpha * r + self.beta * p.tanh();
        }
    }
}

/// Memory reservoir feeding a residual ESN.
#[derive(Debug, Clone, PartialEq)]
pub struct ResRmnModel {
    memory: MemoryReservoir,
    resesn: ResEsn,
}

pub fn build_resrmn(mp: &MemoryParams, rp: &ResEsnParams) -> Result<ResRmnModel> {
    if mp.n_m != rp.n_m {
        return Err(dim_err!(
            "memory has {} units but the ResESN expects {}",
            mp.n_m,
            rp.n_m
        ));
    }
    if mp.n_x != rp.n_x {
        return Err(dim_err!(
            "memory input dim {} differs from ResESN input dim {}",
            mp.n_x,
            rp.n_x
        ));
    }
    ResRmnModel::new(build_memory(mp)?, build_resesn(rp)?)
}

impl ResRmnModel {
    pub fn new(memory: MemoryReservoir, resesn: ResEsn) -> Result<Self> {
        if memory.n_m() != resesn.n_m() || memory.n_x() != resesn.n_x() {
            return Err(dim_err!(
                "memory ({} units, {} inputs) does not fit ResESN ({} memory inputs, {} inputs)",
                memory.n_m(),
                memory.n_x(),
                resesn.n_m(),
                resesn.n_x()
            ));
        }
        Ok(Self { memory, resesn })
    }

    pub fn memory(&self) -> &MemoryReservoir {
        &self.memory
    }

    pub fn resesn(&self) -> &ResEsn {
        &self.resesn
    }
}

/// Memory reservoir feeding a leaky ESN.
#[derive(Debug, Clone, PartialEq)]
pub struct RmnModel {
    memory: MemoryReservoir,
    esn: LeakyEsn,
}

pub fn build_rmn(mp: &MemoryParams, lp: &LeakyEsnParams) -> Result<RmnModel> {
    if mp.n_m != lp.n_m {
        return Err(dim_err!(
            "memory has {} units but the ESN expects {}",
            mp.n_m,
            lp.n_m
        ));
    }
    if mp.n_x != lp.n_x {
        return Err(dim_err!(
            "memory input dim {} differs from ESN input dim {}",
            mp.n_x,
            lp.n_x
        ));
    }
    RmnModel::new(build_memory(mp)?, build_leaky_esn(lp)?)
}

impl RmnModel {
    pub fn new(memory: MemoryReservoir, esn: LeakyEsn) -> Result<Self> {
        if memory.n_m() != esn.n_m() || memory.n_x() != esn.n_x() {
            return Err(dim_err!("memory does not fit the leaky ESN"));
        }
        Ok(Self { memory, esn })
    }

    pub fn memory(&self) -> &MemoryReservoir {
        &self.memory
    }

    pub fn esn(&self) -> &LeakyEsn {
        &self.esn
    }
}
