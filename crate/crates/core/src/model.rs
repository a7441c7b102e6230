//! Declarative five-dimensional field theories and the quadratic phase-space
//! normal form they are reduced to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactla::{dot, int, rat, serde_rat, Mat, Rat};
use num_traits::{Signed, Zero};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("orbifold radius must be positive, got {0}")]
    NonPositiveRadius(String),
    #[error("mass parameter must be nonnegative, got {0}")]
    NegativeMass(String),
    #[error("duplicate field name `{0}`")]
    DuplicateField(String),
    #[error("term references undeclared field `{0}`")]
    UnknownField(String),
    #[error("term {term} requires field `{field}` to be {expected}")]
    WrongRank {
        term: &'static str,
        field: String,
        expected: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LorentzRank {
    Scalar,
    Vector,
    Antisym2,
}

/// Behaviour under `y -> -y`. For a vector (antisymmetric 2-form) field the
/// parity refers to the components without (with one) index along the
/// compact direction; the mixed components carry the opposite parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub lorentz_rank: LorentzRank,
    pub parity: Parity,
}

/// The fixed term vocabulary. `MassSq` is multiplied by `m²` from the
/// theory parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermSpec {
    /// `coeff · F_MN F^MN`
    FieldStrengthSq {
        field: String,
        #[serde(with = "serde_rat")]
        coeff: Rat,
    },
    /// `coeff · m² · A_M A^M`
    MassSq {
        field: String,
        #[serde(with = "serde_rat")]
        coeff: Rat,
    },
    /// `coeff · B^MN F_MN`
    BfCoupling {
        bfield: String,
        afield: String,
        #[serde(with = "serde_rat")]
        coeff: Rat,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    #[serde(with = "serde_rat")]
    pub m: Rat,
    #[serde(with = "serde_rat")]
    pub radius: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheorySpec5D {
    pub name: String,
    pub fields: Vec<FieldSpec>,
    pub terms: Vec<TermSpec>,
    pub params: Params,
}

fn check_params(m: &Rat, radius: &Rat) -> Result<(), ModelError> {
    if !radius.is_positive() {
        return Err(ModelError::NonPositiveRadius(radius.to_string()));
    }
    if m.is_negative() {
        return Err(ModelError::NegativeMass(m.to_string()));
    }
    Ok(())
}

/// `-1/4 F_MN F^MN + (m²/2) A_M A^M` with `A_μ` even and `A_5` odd.
pub fn builtin_proca5d(m: Rat, radius: Rat) -> Result<TheorySpec5D, ModelError> {
    check_params(&m, &radius)?;
    let spec = TheorySpec5D {
        name: "proca5d".into(),
        fields: vec![FieldSpec {
            name: "A".into(),
            lorentz_rank: LorentzRank::Vector,
            parity: Parity::Even,
        }],
        terms: vec![
            TermSpec::FieldStrengthSq {
                field: "A".into(),
                coeff: rat(-1, 4),
            },
            TermSpec::MassSq {
                field: "A".into(),
                coeff: rat(1, 2),
            },
        ],
        params: Params { m, radius },
    };
    spec.validate()?;
    Ok(spec)
}

/// The Proca builder at `m = 0`; the mass term is kept with a vanishing prefactor.
pub fn builtin_maxwell5d(radius: Rat) -> Result<TheorySpec5D, ModelError> {
    let mut spec = builtin_proca5d(Rat::zero(), radius)?;
    spec.name = "maxwell5d".into();
    Ok(spec)
}

/// `B^MN F_MN - (m²/4) A_M A^M` with `B^μν`, `A_μ` even and `B^μ5`, `A_5` odd,
/// the parity assignment under which `∫ B^MN F_MN dy` survives.
pub fn builtin_bfproca5d(m: Rat, radius: Rat) -> Result<TheorySpec5D, ModelError> {
    check_params(&m, &radius)?;
    let spec = TheorySpec5D {
        name: "bfproca5d".into(),
        fields: vec![
            FieldSpec {
                name: "B".into(),
                lorentz_rank: LorentzRank::Antisym2,
                parity: Parity::Even,
            },
            FieldSpec {
                name: "A".into(),
                lorentz_rank: LorentzRank::Vector,
                parity: Parity::Even,
            },
        ],
        terms: vec![
            TermSpec::BfCoupling {
                bfield: "B".into(),
                afield: "A".into(),
                coeff: int(1),
            },
            TermSpec::MassSq {
                field: "A".into(),
                coeff: rat(-1, 4),
            },
        ],
        params: Params { m, radius },
    };
    spec.validate()?;
    Ok(spec)
}

impl TheorySpec5D {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_params(&self.params.m, &self.params.radius)?;
        for (i, f) in self.fields.iter().enumerate() {
            if self.fields[..i].iter().any(|g| g.name == f.name) {
                return Err(ModelError::DuplicateField(f.name.clone()));
            }
        }
        let need = |term: &'static str,
                    name: &str,
                    rank: LorentzRank,
                    expected: &'static str|
         -> Result<(), ModelError> {
            let f = self
                .field(name)
                .ok_or_else(|| ModelError::UnknownField(name.to_string()))?;
            if f.lorentz_rank != rank {
                return Err(ModelError::WrongRank {
                    term,
                    field: name.to_string(),
                    expected,
                });
            }
            Ok(())
        };
        for t in &self.terms {
            match t {
                TermSpec::FieldStrengthSq { field, .. } => {
                    need("field_strength_sq", field, LorentzRank::Vector, "a vector")?
                }
                TermSpec::MassSq { field, .. } => {
                    need("mass_sq", field, LorentzRank::Vector, "a vector")?
                }
                TermSpec::BfCoupling { bfield, afield, .. } => {
                    need(
                        "bf_coupling",
                        bfield,
                        LorentzRank::Antisym2,
                        "an antisymmetric 2-form",
                    )?;
                    need("bf_coupling", afield, LorentzRank::Vector, "a vector")?;
                }
            }
        }
        Ok(())
    }
}

/// One configuration variable: a 4D component of a KK mode evaluated in one
/// slot of the spatial channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Var {
    pub level: u32,
    pub field: String,
    /// Component label such as `A_0`, `A_5`, `B^01`, `B^35`.
    pub component: String,
    /// Index-class of the component, e.g. `A_i` or `B^i5`; constraint
    /// families are keyed on it.
    pub group: String,
    pub slot: usize,
}

impl Var {
    pub fn label(&self) -> String {
        format!("{}({})#{}", self.component, self.level, self.slot)
    }
}

/// `L = ½ q̇ᵀ W q̇ + q̇ᵀ N q − ½ qᵀ V q` over a variable registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticPhaseModel {
    pub level: u32,
    pub vars: Vec<Var>,
    pub w: Mat,
    pub n: Mat,
    pub v: Mat,
    /// Channel multiplicity `d`: number of slots per 4D component.
    pub multiplicity: usize,
}

/// The linear map `(q̇, q) -> p = W q̇ + N q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentumMap {
    pub velocity: Mat,
    pub coordinate: Mat,
}

impl MomentumMap {
    pub fn apply(&self, qdot: &[Rat], q: &[Rat]) -> Vec<Rat> {
        let a = self.velocity.mul_vec(qdot);
        let b = self.coordinate.mul_vec(q);
        a.into_iter().zip(b).map(|(x, y)| x + y).collect()
    }
}

impl QuadraticPhaseModel {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.vars.len()
    }

    pub fn is_well_formed(&self) -> bool {
        let n = self.dim();
        self.w.rows() == n
            && self.w.cols() == n
            && self.n.rows() == n
            && self.n.cols() == n
            && self.v.rows() == n
            && self.v.cols() == n
            && self.w.is_symmetric()
            && self.v.is_symmetric()
            && self.multiplicity > 0
            && n.is_multiple_of(self.multiplicity)
    }

    pub fn var_index(&self, component: &str, slot: usize) -> Option<usize> {
        self.vars
            .iter()
            .position(|v| v.component == component && v.slot == slot)
    }

    pub fn lagrangian(&self, qdot: &[Rat], q: &[Rat]) -> Rat {
        let half = rat(1, 2);
        &half * self.w.bilinear(qdot, qdot) + dot(qdot, &self.n.mul_vec(q))
            - &half * self.v.bilinear(q, q)
    }
}

pub fn legendre_data(model: &QuadraticPhaseModel) -> MomentumMap {
    MomentumMap {
        velocity: model.w.clone(),
        coordinate: model.n.clone(),
    }
}
