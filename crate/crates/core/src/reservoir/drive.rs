use rayon::prelude::*;

use super::{build_memory, LeakyEsn, MemoryParams, ResEsn, ResRmnModel, RmnModel};
use crate::error::{dim_err, Result};
use crate::linalg::{uniform_matrix, Matrix, RngStream};

/// Anything that can be driven by an input sequence.
///
/// The global state is `(m, h)`; models without a memory module keep `m`
/// empty. Readouts consume `h`.
pub trait Reservoir: Send + Sync {
    fn input_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn memory_dim(&self) -> usize;

    /// Advances the global state by one input. Dimensions are validated by
    /// the caller.
    fn advance(&self, m: &mut [f64], h: &mut [f64], x: &[f64], scratch: &mut Scratch);
}

/// Per-drive work buffers.
#[derive(Debug, Clone)]
pub struct Scratch {
    pre: Vec<f64>,
    rot: Vec<f64>,
    mem: Vec<f64>,
}

impl Scratch {
    pub fn for_model<R: Reservoir + ?Sized>(model: &R) -> Self {
        Self {
            pre: vec![0.0; model.state_dim()],
            rot: vec![0.0; model.state_dim()],
            mem: vec![0.0; model.memory_dim()],
        }
    }
}

impl Reservoir for LeakyEsn {
    fn input_dim(&self) -> usize {
        self.n_x()
    }
    fn state_dim(&self) -> usize {
        self.n_h()
    }
    fn memory_dim(&self) -> usize {
        0
    }
    fn advance(&self, _m: &mut [f64], h: &mut [f64], x: &[f64], s: &mut Scratch) {
        // A standalone ESN built with memory weights still sees m = 0.
        let zeros;
        let m: &[f64] = if self.n_m() > 0 {
            zeros = vec![0.0; self.n_m()];
            &zeros
        } else {
            &[]
        };
        LeakyEsn::advance(self, h, m, x, &mut s.pre);
    }
}

impl Reservoir for ResEsn {
    fn input_dim(&self) -> usize {
        self.n_x()
    }
    fn state_dim(&self) -> usize {
        self.n_h()
    }
    fn memory_dim(&self) -> usize {
        0
    }
    fn advance(&self, _m: &mut [f64], h: &mut [f64], x: &[f64], s: &mut Scratch) {
        let zeros;
        let m: &[f64] = if self.n_m() > 0 {
            zeros = vec![0.0; self.n_m()];
            &zeros
        } else {
            &[]
        };
        ResEsn::advance(self, h, m, x, &mut s.pre, &mut s.rot);
    }
}

impl Reservoir for ResRmnModel {
    fn input_dim(&self) -> usize {
        self.memory().n_x()
    }
    fn state_dim(&self) -> usize {
        self.resesn().n_h()
    }
    fn memory_dim(&self) -> usize {
        self.memory().n_m()
    }
    fn advance(&self, m: &mut [f64], h: &mut [f64], x: &[f64], s: &mut Scratch) {
        // Memory first: the ResESN consumes m(t), not m(t-1).
        self.memory().advance(m, x, &mut s.mem);
        self.resesn().advance(h, m, x, &mut s.pre, &mut s.rot);
    }
}

impl Reservoir for RmnModel {
    fn input_dim(&self) -> usize {
        self.memory().n_x()
    }
    fn state_dim(&self) -> usize {
        self.esn().n_h()
    }
    fn memory_dim(&self) -> usize {
        self.memory().n_m()
    }
    fn advance(&self, m: &mut [f64], h: &mut [f64], x: &[f64], s: &mut Scratch) {
        self.memory().advance(m, x, &mut s.mem);
        self.esn().advance(h, m, x, &mut s.pre);
    }
}

/// Any of the four model families.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Leaky(LeakyEsn),
    ResEsn(ResEsn),
    Rmn(RmnModel),
    ResRmn(ResRmnModel),
}

impl Model {
    fn inner(&self) -> &dyn Reservoir {
        match self {
            Model::Leaky(m) => m,
            Model::ResEsn(m) => m,
            Model::Rmn(m) => m,
            Model::ResRmn(m) => m,
        }
    }
}

impl Reservoir for Model {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn memory_dim(&self) -> usize {
        self.inner().memory_dim()
    }
    fn advance(&self, m: &mut [f64], h: &mut [f64], x: &[f64], s: &mut Scratch) {
        self.inner().advance(m, h, x, s)
    }
}

/// What a drive returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collect {
    FinalOnly,
    Full,
}

/// Global states after each input, `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub m: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Driven {
    Final(Vec<f64>),
    Full(Trajectory),
}

fn check_sequence<R: Reservoir + ?Sized>(model: &R, seq: &Matrix) -> Result<()> {
    if seq.cols() != model.input_dim() {
        return Err(dim_err!(
            "sequence has {} features per step, model expects {}",
            seq.cols(),
            model.input_dim()
        ));
    }
    Ok(())
}

/// Runs the model over a `T x N_x` sequence from the zero state.
pub fn drive<R: Reservoir + ?Sized>(model: &R, seq: &Matrix, collect: Collect) -> Result<Driven> {
    check_sequence(model, seq)?;
    let mut m = vec![0.0; model.memory_dim()];
    let mut h = vec![0.0; model.state_dim()];
    let mut scratch = Scratch::for_model(model);
    match collect {
        Collect::FinalOnly => {
            for t in 0..seq.rows() {
                model.advance(&mut m, &mut h, seq.row(t), &mut scratch);
            }
            Ok(Driven::Final(h))
        }
        Collect::Full => {
            let mut traj = Trajectory {
                m: Vec::with_capacity(seq.rows()),
                h: Vec::with_capacity(seq.rows()),
            };
            for t in 0..seq.rows() {
                model.advance(&mut m, &mut h, seq.row(t), &mut scratch);
                traj.m.push(m.clone());
                traj.h.push(h.clone());
            }
            Ok(Driven::Full(traj))
        }
    }
}

/// `h(T)` for one sequence.
pub fn final_state<R: Reservoir + ?Sized>(model: &R, seq: &Matrix) -> Result<Vec<f64>> {
    match drive(model, seq, Collect::FinalOnly)? {
        Driven::Final(h) => Ok(h),
        Driven::Full(_) => unreachable!(),
    }
}

pub fn trajectory<R: Reservoir + ?Sized>(model: &R, seq: &Matrix) -> Result<Trajectory> {
    match drive(model, seq, Collect::Full)? {
        Driven::Full(t) => Ok(t),
        Driven::Final(_) => unreachable!(),
    }
}

/// Final states of many sequences, one row each. Sequences run in parallel.
pub fn final_states<R: Reservoir + ?Sized>(model: &R, seqs: &[Matrix]) -> Result<Matrix> {
    if seqs.is_empty() {
        return Err(dim_err!("no sequences to drive"));
    }
    let rows: Vec<Vec<f64>> = seqs
        .par_iter()
        .map(|s| final_state(model, s))
        .collect::<Result<_>>()?;
    let n_h = model.state_dim();
    Matrix::from_vec(rows.len(), n_h, rows.concat())
}

/// Unit-scale memory contributions `W_m m(t)` of one seed, per sequence.
///
/// With input scalings `omega_xm` and `omega_m`, the memory term of a
/// memory model built from the same seed is `omega_m * omega_xm` times these
/// rows, so one feed serves every hyperparameter setting of that seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryFeed {
    n_h: usize,
    n_m: usize,
    /// One `T x N_h` matrix per sequence.
    rows: Vec<Matrix>,
}

impl MemoryFeed {
    pub fn compute(n_h: usize, n_m: usize, seed: u64, seqs: &[Matrix]) -> Result<Self> {
        let first = seqs
            .first()
            .ok_or_else(|| dim_err!("no sequences to drive"))?;
        let memory = build_memory(&MemoryParams {
            n_m,
            n_x: first.cols(),
            omega_xm: 1.0,
            seed,
        })?;
        let w_m = uniform_matrix(&mut RngStream::new(seed, "W_m"), n_h, n_m, 1.0)?;
        let rows = seqs
            .par_iter()
            .map(|seq| {
                if seq.cols() != memory.n_x() {
                    return Err(dim_err!("sequences differ in feature count"));
                }
                let mut m = vec![0.0; n_m];
                let mut tmp = vec![0.0; n_m];
                let mut out = Vec::with_capacity(seq.rows() * n_h);
                let mut row = vec![0.0; n_h];
                for t in 0..seq.rows() {
                    memory.advance(&mut m, seq.row(t), &mut tmp);
                    w_m.matvec_into(&m, &mut row);
                    out.extend_from_slice(&row);
                }
                Matrix::from_vec(seq.rows(), n_h, out)
            })
            .collect::<Result<_>>()?;
        Ok(Self { n_h, n_m, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Size of the stored rows.
    pub fn bytes(&self) -> usize {
        self.rows.iter().map(|r| r.as_slice().len() * 8).sum()
    }
}

/// Final states of a memory model using a precomputed feed built from the
/// model's seed. `coeff` is `omega_m * omega_xm`.
pub fn final_states_fed(
    model: &Model,
    feed: &MemoryFeed,
    coeff: f64,
    seqs: &[Matrix],
) -> Result<Matrix> {
    let (n_h, n_m) = (model.state_dim(), model.memory_dim());
    if n_m == 0 {
        return Err(dim_err!("model has no memory module"));
    }
    if feed.n_h != n_h || feed.n_m != n_m || feed.rows.len() != seqs.len() {
        return Err(dim_err!(
            "feed ({} sequences, N_h={}, N_m={}) does not match model and data ({} sequences, N_h={n_h}, N_m={n_m})",
            feed.rows.len(),
            feed.n_h,
            feed.n_m,
            seqs.len()
        ));
    }
    let rows: Vec<Vec<f64>> = seqs
        .par_iter()
        .zip(feed.rows.par_iter())
        .map(|(seq, fed)| {
            check_sequence(model, seq)?;
            if fed.rows() != seq.rows() {
                return Err(dim_err!(
                    "feed length {} differs from sequence length {}",
                    fed.rows(),
                    seq.rows()
                ));
            }
            let mut h = vec![0.0; n_h];
            let mut pre = vec![0.0; n_h];
            let mut rot = vec![0.0; n_h];
            for t in 0..seq.rows() {
                match model {
                    Model::Rmn(m) => {
                        m.esn()
                            .advance_fed(&mut h, fed.row(t), coeff, seq.row(t), &mut pre)
                    }
                    Model::ResRmn(m) => m.resesn().advance_fed(
                        &mut h,
                        fed.row(t),
                        coeff,
                        seq.row(t),
                        &mut pre,
                        &mut rot,
                    ),
                    Model::Leaky(_) | Model::ResEsn(_) => unreachable!("memory size checked above"),
                }
            }
            Ok(h)
        })
        .collect::<Result<_>>()?;
    Matrix::from_vec(rows.len(), n_h, rows.concat())
}
