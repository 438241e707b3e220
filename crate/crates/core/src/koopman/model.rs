use nalgebra::{DMatrix, DVector};

use super::encoder::Encoder;
use crate::data::NormScales;
use crate::error::{Error, Result};

/// Lifted-space dynamics `z' = A z + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanOperator {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl KoopmanOperator {
    /// `A = I`, `B = 0`.
    pub fn neutral(m: usize) -> Self {
        Self {
            a: DMatrix::identity(m, m),
            b: DVector::zeros(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.b.len();
        if self.a.nrows() != m || self.a.ncols() != m {
            return Err(Error::Dimension {
                context: "Koopman operator A",
                expected: m,
                actual: self.a.nrows(),
            });
        }
        if self.a.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("Koopman operator has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Anything that maps a physical state to a lifted state whose first
/// `n_x` entries are that state.
pub trait Lifting {
    fn state_dim(&self) -> usize;
    fn lift(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl Lifting for Encoder {
    fn state_dim(&self) -> usize {
        self.input_dim
    }

    fn lift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        encode(x, self)
    }
}

/// `Z = [x; psi(x)]`.
pub fn encode(x: &DVector<f64>, encoder: &Encoder) -> Result<DVector<f64>> {
    if x.len() != encoder.input_dim {
        return Err(Error::Dimension {
            context: "encode",
            expected: encoder.input_dim,
            actual: x.len(),
        });
    }
    let psi = encoder.forward(x);
    let mut z = DVector::zeros(x.len() + psi.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), psi.len()).copy_from(&psi);
    Ok(z)
}

/// Applies `M = [I 0]`: the first `n_x` entries of `z`.
pub fn project(z: &DVector<f64>, n_x: usize) -> Result<DVector<f64>> {
    if z.len() < n_x {
        return Err(Error::Dimension {
            context: "project",
            expected: n_x,
            actual: z.len(),
        });
    }
    Ok(z.rows(0, n_x).into_owned())
}

pub fn step(z: &DVector<f64>, u: f64, op: &KoopmanOperator) -> Result<DVector<f64>> {
    if z.len() != op.dim() {
        return Err(Error::Dimension {
            context: "step",
            expected: op.dim(),
            actual: z.len(),
        });
    }
    let mut next = &op.a * z;
    next.axpy(u, &op.b, 1.0);
    Ok(next)
}

/// Lifted trajectory `Z_0..Z_K` and projected predictions `X_1..X_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub lifted: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
}

/// Lifts `x0` once, then evolves linearly under `controls`.
pub fn rollout(
    x0: &DVector<f64>,
    controls: &[f64],
    lifting: &impl Lifting,
    op: &KoopmanOperator,
) -> Result<Rollout> {
    let n_x = lifting.state_dim();
    let mut z = lifting.lift(x0)?;
    let mut lifted = Vec::with_capacity(controls.len() + 1);
    let mut states = Vec::with_capacity(controls.len());
    lifted.push(z.clone());
    for (k, &u) in controls.iter().enumerate() {
        z = step(&z, u, op)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
        states.push(project(&z, n_x)?);
        lifted.push(z.clone());
    }
    Ok(Rollout { lifted, states })
}

/// Embedding network, linear operator, and the scales mapping physical
/// units to the normalized coordinates both were trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub encoder: Encoder,
    pub operator: KoopmanOperator,
    pub norm: NormScales,
    pub dt: f64,
}

impl KoopmanModel {
    pub fn new(
        encoder: Encoder,
        operator: KoopmanOperator,
        norm: NormScales,
        dt: f64,
    ) -> Result<Self> {
        let model = Self {
            encoder,
            operator,
            norm,
            dt,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.operator.validate()?;
        self.norm.validate()?;
        if self.operator.dim() != self.lifted_dim() {
            return Err(Error::Dimension {
                context: "operator vs encoder",
                expected: self.lifted_dim(),
                actual: self.operator.dim(),
            });
        }
        if self.norm.state.len() != self.state_dim() {
            return Err(Error::Dimension {
                context: "normalization scales",
                expected: self.state_dim(),
                actual: self.norm.state.len(),
            });
        }
        if !(self.dt > 0.0) {
            return Err(Error::Invalid(format!("non-positive dt {}", self.dt)));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.encoder.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn lifted_dim(&self) -> usize {
        self.state_dim() + self.embed_dim()
    }

    pub fn n_followers(&self) -> usize {
        self.state_dim() / 3
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        encode(x, &self.encoder)
    }

    /// Rollout in normalized coordinates.
    pub fn rollout(&self, x0: &DVector<f64>, controls: &[f64]) -> Result<Rollout> {
        rollout(x0, controls, &self.encoder, &self.operator)
    }

    /// Rollout from a physical initial state under physical leader
    /// accelerations. Returns `controls.len() + 1` rows, row 0 being `x0`.
    pub fn predict_physical(&self, x0: &[f64], controls: &[f64]) -> Result<DMatrix<f64>> {
        let xn = DVector::from_vec(self.norm.apply_state(x0));
        let un: Vec<f64> = controls.iter().map(|&u| self.norm.apply_control(u)).collect();
        let r = self.rollout(&xn, &un)?;
        let n_x = self.state_dim();
        let mut out = DMatrix::zeros(controls.len() + 1, n_x);
        out.row_mut(0).copy_from_slice(x0);
        for (k, x) in r.states.iter().enumerate() {
            out.row_mut(k + 1)
                .copy_from_slice(&self.norm.invert_state(x.as_slice()));
        }
        Ok(out)
    }

    /// Operator expressed with the physical block in physical units and a
    /// physical control input: `D A D^-1`, `D B / c` with
    /// `D = diag(scales, 1, ..., 1)`. The spectrum is unchanged.
    pub fn physical_operator(&self) -> KoopmanOperator {
        let m = self.lifted_dim();
        let scale = |i: usize| {
            if i < self.state_dim() {
                self.norm.state[i]
            } else {
                1.0
            }
        };
        let a = DMatrix::from_fn(m, m, |i, j| self.operator.a[(i, j)] * scale(i) / scale(j));
        let b = DVector::from_fn(m, |i, _| self.operator.b[i] * scale(i) / self.norm.control);
        KoopmanOperator { a, b }
    }
}
