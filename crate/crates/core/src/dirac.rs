//! Dirac's constraint algorithm for quadratic phase models.
//!
//! Phase vectors are ordered `z = (q, p)` and brackets are
//! `{f, g} = ∇fᵀ Ω ∇g` with `Ω = [[0, I], [−I, 0]]`. Because the Hamiltonian
//! is quadratic and every constraint is linear, brackets of constraints are
//! numbers and `{φ, H}` is again a linear functional, so the whole procedure
//! stays inside exact linear algebra.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::exactla::{axpy, dot, is_zero_vec, rat, zero_vec, LinalgError, Mat, Rat, SpanBasis};
use crate::model::QuadraticPhaseModel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiracError {
    #[error("{0} first-class multipliers are unfixed and no gauge choice was supplied")]
    UnfixedFirstClass(usize),
    #[error("gauge choice has {got} functionals, expected {expected}")]
    GaugeArity { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A homogeneous linear functional `φ(z) = gradᵀ z` on phase space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub grad: Vec<Rat>,
    /// 1 for primary, 2 for secondary, ...
    pub generation: u32,
    /// Component group of the primary constraint this one descends from.
    pub family: String,
    pub label: String,
    pub level: u32,
}

impl LinearConstraint {
    pub fn eval(&self, z: &[Rat]) -> Rat {
        dot(&self.grad, z)
    }
}

/// `Ω = [[0, I], [−I, 0]]` on a phase space of `2n` coordinates.
pub fn omega(n: usize) -> Mat {
    let mut o = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        o.set(i, n + i, Rat::one());
        o.set(n + i, i, -Rat::one());
    }
    o
}

/// `{f, g}` for linear functionals with gradients `a`, `b`.
pub fn bracket(omega: &Mat, a: &[Rat], b: &[Rat]) -> Rat {
    omega.bilinear(a, b)
}

/// Gradient of the linear functional `{φ, H}` where `H = ½ zᵀ form z`.
pub fn bracket_with_form(omega: &Mat, grad: &[Rat], form: &Mat) -> Vec<Rat> {
    form.vec_mul(&omega.vec_mul(grad))
}

/// `H_c = ½ zᵀ form z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalHamiltonian {
    pub form: Mat,
    /// Moore-Penrose inverse of the velocity Hessian.
    pub w_pinv: Mat,
    /// Kernel of `W`: the components of `p − Nq` projected out of `H_c`.
    pub complement: Vec<Vec<Rat>>,
}

impl CanonicalHamiltonian {
    pub fn value(&self, z: &[Rat]) -> Rat {
        rat(1, 2) * self.form.bilinear(z, z)
    }
}

pub fn primary_constraints(model: &QuadraticPhaseModel) -> Vec<LinearConstraint> {
    let n = model.dim();
    model
        .w
        .rref()
        .null_basis()
        .into_iter()
        .map(|(owner, v)| {
            let mut grad: Vec<Rat> = model.n.vec_mul(&v).into_iter().map(|x| -x).collect();
            grad.extend(v);
            debug_assert_eq!(grad.len(), 2 * n);
            let var = &model.vars[owner];
            LinearConstraint {
                grad,
                generation: 1,
                family: var.group.clone(),
                label: format!("p[{}]", var.label()),
                level: model.level,
            }
        })
        .collect()
}

/// Symmetric pseudo-inverse `B (BᵀWB)⁻¹ Bᵀ` with `B` spanning the image of `W`.
fn symmetric_pinv(w: &Mat) -> Mat {
    let cols = w.transpose().independent_rows();
    let n = w.rows();
    if cols.is_empty() {
        return Mat::zeros(n, n);
    }
    let all: Vec<usize> = (0..n).collect();
    let b = w.select(&all, &cols);
    let core = &(&b.transpose() * w) * &b;
    let inv = core.inverse().expect("W is invertible on its image");
    &(&b * &inv) * &b.transpose()
}

pub fn canonical_hamiltonian(model: &QuadraticPhaseModel) -> CanonicalHamiltonian {
    let n = model.dim();
    let wp = symmetric_pinv(&model.w);
    let nt = model.n.transpose();
    let qq = &(&(&nt * &wp) * &model.n) + &model.v;
    let qp = -&(&nt * &wp);
    let pq = -&(&wp * &model.n);
    let mut form = Mat::zeros(2 * n, 2 * n);
    form.set_block(0, 0, &qq);
    form.set_block(0, n, &qp);
    form.set_block(n, 0, &pq);
    form.set_block(n, n, &wp);
    CanonicalHamiltonian {
        form,
        w_pinv: wp,
        complement: model.w.null_space(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainStep {
    pub generation: u32,
    /// Constraints of this generation.
    pub constraints: usize,
    /// Of those, how many had their consistency condition fix a multiplier.
    pub multipliers_fixed: usize,
    /// Independent new constraints their consistency produced.
    pub new_constraints: usize,
}

#[derive(Debug, Clone)]
pub struct ConstraintTower {
    pub level: u32,
    pub multiplicity: usize,
    pub constraints: Vec<LinearConstraint>,
    pub omega: Mat,
    pub chain_log: Vec<ChainStep>,
    /// Every nonzero constraint as generated, before independence pruning.
    pub raw: Vec<LinearConstraint>,
    /// Labels of consistency conditions that vanished identically.
    pub dropped_trivial: Vec<String>,
}

impl ConstraintTower {
    pub fn dim(&self) -> usize {
        self.omega.rows()
    }

    pub fn gradients(&self) -> Mat {
        let rows: Vec<Vec<Rat>> = self.constraints.iter().map(|c| c.grad.clone()).collect();
        Mat::from_row_slices(&rows, self.dim())
    }

    pub fn generations(&self) -> u32 {
        self.constraints
            .iter()
            .map(|c| c.generation)
            .max()
            .unwrap_or(0)
    }

    /// Full bracket matrix `C_ab = {φ_a, φ_b}` of the stored constraints.
    pub fn bracket_matrix(&self) -> Mat {
        let g = self.gradients();
        &(&g * &self.omega) * &g.transpose()
    }
}

/// Consistency iteration. Each stored constraint is visited once: if its
/// row of brackets with the primaries is independent of earlier rows its
/// consistency fixes a multiplier; otherwise the combination in the left
/// nullspace it owns yields a candidate `Σ uₐ {φₐ, H_c}`, which is stored
/// whenever it leaves the current span.
pub fn consistency_chain(
    model: &QuadraticPhaseModel,
    primaries: Vec<LinearConstraint>,
    hc: &CanonicalHamiltonian,
) -> ConstraintTower {
    let dim = model.phase_dim();
    let om = omega(model.dim());
    let np = primaries.len();

    let mut span = SpanBasis::new();
    let mut constraints = Vec::new();
    for p in primaries {
        let grew = span.insert(&p.grad);
        assert!(grew, "primary constraints must be independent");
        constraints.push(p);
    }
    let mut raw = constraints.clone();
    let mut dropped = Vec::new();
    let mut seen_dropped = BTreeSet::new();

    // rows of brackets with the primaries for constraints that fixed a multiplier
    let mut pivot_rows: Vec<Vec<Rat>> = Vec::new();
    let mut pivot_ids: Vec<usize> = Vec::new();
    let mut h: Vec<Vec<Rat>> = Vec::new();
    let mut log: Vec<ChainStep> = Vec::new();

    let mut a = 0;
    while a < constraints.len() {
        let ca = constraints[a].clone();
        let gen = ca.generation as usize;
        if log.len() < gen {
            log.resize_with(gen, ChainStep::default);
        }
        log[gen - 1].generation = ca.generation;
        log[gen - 1].constraints += 1;

        h.push(bracket_with_form(&om, &ca.grad, &hc.form));
        let row: Vec<Rat> = (0..np)
            .map(|p| bracket(&om, &ca.grad, &constraints[p].grad))
            .collect();

        let coeffs = if is_zero_vec(&row) {
            Some(vec![])
        } else if pivot_rows.is_empty() {
            None
        } else {
            let m = Mat::from_row_slices(&pivot_rows, np).transpose();
            m.solve(&row).ok().map(|(x, _)| x)
        };
        match coeffs {
            None => {
                pivot_rows.push(row);
                pivot_ids.push(a);
                log[gen - 1].multipliers_fixed += 1;
            }
            Some(c) => {
                let mut cand = h[a].clone();
                for (ci, &b) in c.iter().zip(&pivot_ids) {
                    axpy(&mut cand, &-ci.clone(), &h[b]);
                }
                let label = format!("{{{}, H}}", ca.label);
                if is_zero_vec(&cand) {
                    if seen_dropped.insert(label.clone()) {
                        dropped.push(label);
                    }
                } else {
                    let next = LinearConstraint {
                        grad: cand,
                        generation: ca.generation + 1,
                        family: ca.family.clone(),
                        label,
                        level: ca.level,
                    };
                    raw.push(next.clone());
                    if span.insert(&next.grad) {
                        log[gen - 1].new_constraints += 1;
                        constraints.push(next);
                    }
                }
            }
        }
        a += 1;
    }
    debug_assert_eq!(span.dim(), constraints.len());

    ConstraintTower {
        level: model.level,
        multiplicity: model.multiplicity,
        constraints,
        omega: om,
        chain_log: log,
        raw,
        dropped_trivial: dropped,
    }
    .with_dim_check(dim)
}

impl ConstraintTower {
    fn with_dim_check(self, dim: usize) -> Self {
        debug_assert_eq!(self.omega.rows(), dim);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    /// Full bracket matrix over the stored constraints.
    pub c_full: Mat,
    /// Indices (into the tower) of the selected second-class constraints.
    pub second_class: Vec<usize>,
    /// Invertible bracket block of the second-class set.
    pub c_second: Mat,
    /// Gradients of a basis of first-class combinations.
    pub first_class: Vec<Vec<Rat>>,
}

pub fn classify(tower: &ConstraintTower) -> Classification {
    let c = tower.bracket_matrix();
    let second = c.independent_rows();
    let c_second = c.select(&second, &second);
    let first_class = c
        .null_space()
        .into_iter()
        .map(|v| {
            let mut g = zero_vec(tower.dim());
            for (va, ca) in v.iter().zip(&tower.constraints) {
                axpy(&mut g, va, &ca.grad);
            }
            g
        })
        .collect();
    Classification {
        c_full: c,
        second_class: second,
        c_second,
        first_class,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multiplier {
    /// Label of the constraint the multiplier enforces.
    pub label: String,
    pub functional: Vec<Rat>,
}

/// `λ = −C⁻¹ h` over the second-class constraints, `h_a = {φ_a, H_c}`.
pub fn solve_multipliers(
    tower: &ConstraintTower,
    cls: &Classification,
    hc: &CanonicalHamiltonian,
) -> Vec<Multiplier> {
    if cls.second_class.is_empty() {
        return Vec::new();
    }
    let inv = cls
        .c_second
        .inverse()
        .expect("second-class bracket block is invertible");
    let h: Vec<Vec<Rat>> = cls
        .second_class
        .iter()
        .map(|&a| bracket_with_form(&tower.omega, &tower.constraints[a].grad, &hc.form))
        .collect();
    cls.second_class
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut f = zero_vec(tower.dim());
            for (j, hj) in h.iter().enumerate() {
                axpy(&mut f, &-inv.get(i, j).clone(), hj);
            }
            Multiplier {
                label: tower.constraints[a].label.clone(),
                functional: f,
            }
        })
        .collect()
}

/// `D = Ω − Ω G (GᵀΩG)⁻¹ GᵀΩ` with `G` the second-class gradients as columns.
pub fn dirac_matrix(tower: &ConstraintTower, cls: &Classification) -> Mat {
    let om = &tower.omega;
    if cls.second_class.is_empty() {
        return om.clone();
    }
    let rows: Vec<Vec<Rat>> = cls
        .second_class
        .iter()
        .map(|&a| tower.constraints[a].grad.clone())
        .collect();
    let gt = Mat::from_row_slices(&rows, tower.dim());
    let g = gt.transpose();
    let inv = cls
        .c_second
        .inverse()
        .expect("invertible second-class block");
    let og = om * &g;
    let gto = &gt * om;
    om - &(&(&og * &inv) * &gto)
}

/// Listed versus independent constraints for one family or a coupled union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducibilityEntry {
    pub families: Vec<String>,
    pub listed: usize,
    pub rank: usize,
    pub deficiency: usize,
}

fn span_rank(grads: &[&Vec<Rat>]) -> usize {
    let mut s = SpanBasis::new();
    for g in grads {
        s.insert(g);
    }
    s.dim()
}

/// Per family (first-appearance order), then every union of families whose
/// spans intersect.
pub fn reducibility_report(tower: &ConstraintTower) -> Vec<ReducibilityEntry> {
    let mut families: Vec<String> = Vec::new();
    for c in &tower.raw {
        if !families.contains(&c.family) {
            families.push(c.family.clone());
        }
    }
    let members = |fs: &[usize]| -> Vec<&Vec<Rat>> {
        tower
            .raw
            .iter()
            .filter(|c| fs.iter().any(|&f| families[f] == c.family))
            .map(|c| &c.grad)
            .collect()
    };
    let ranks: Vec<usize> = (0..families.len())
        .map(|f| span_rank(&members(&[f])))
        .collect();

    let mut out: Vec<ReducibilityEntry> = families
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let listed = members(&[f]).len();
            ReducibilityEntry {
                families: vec![name.clone()],
                listed,
                rank: ranks[f],
                deficiency: listed - ranks[f],
            }
        })
        .collect();

    // union-find over families whose spans intersect
    let mut parent: Vec<usize> = (0..families.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for a in 0..families.len() {
        for b in (a + 1)..families.len() {
            if span_rank(&members(&[a, b])) < ranks[a] + ranks[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb.max(ra)] = ra.min(rb);
                }
            }
        }
    }
    for root in 0..families.len() {
        let cluster: Vec<usize> = (0..families.len())
            .filter(|&f| find(&mut parent, f) == root)
            .collect();
        if cluster.len() < 2 {
            continue;
        }
        let grads = members(&cluster);
        let rank = span_rank(&grads);
        out.push(ReducibilityEntry {
            families: cluster.iter().map(|&f| families[f].clone()).collect(),
            listed: grads.len(),
            rank,
            deficiency: grads.len() - rank,
        });
    }
    out
}

/// Outcome of the full analysis of one level on one channel. Raw counts are
/// per channel; `*_per_point` divide by the multiplicity.
#[derive(Debug, Clone)]
pub struct DiracReport {
    pub level: u32,
    pub multiplicity: usize,
    pub n_phase: usize,
    pub first_class: usize,
    pub second_class: usize,
    pub primary: usize,
    pub generations: u32,
    pub c: Mat,
    pub c_second: Mat,
    pub multipliers: Vec<Multiplier>,
    pub dirac_matrix: Mat,
    pub reducibility: Vec<ReducibilityEntry>,
    pub dropped_trivial: Vec<String>,
    pub dof_per_point: Rat,
    /// False when the per-point count is not an integer, which signals a
    /// degenerate parameter choice or a modelling error.
    pub dof_is_integral: bool,
}

impl DiracReport {
    fn per_point(&self, x: usize) -> Rat {
        Rat::new(x.into(), self.multiplicity.into())
    }

    pub fn phase_per_point(&self) -> Rat {
        self.per_point(self.n_phase)
    }

    pub fn first_per_point(&self) -> Rat {
        self.per_point(self.first_class)
    }

    pub fn second_per_point(&self) -> Rat {
        self.per_point(self.second_class)
    }

    pub fn dof_raw_doubled(&self) -> i64 {
        self.n_phase as i64 - 2 * self.first_class as i64 - self.second_class as i64
    }
}

pub fn dof_count(
    tower: &ConstraintTower,
    cls: &Classification,
    multipliers: Vec<Multiplier>,
    dirac: Mat,
    reducibility: Vec<ReducibilityEntry>,
) -> DiracReport {
    let n_phase = tower.dim();
    let second = cls.second_class.len();
    let first = tower.constraints.len() - second;
    let doubled = n_phase as i64 - 2 * first as i64 - second as i64;
    let dof = Rat::new(doubled.into(), (2 * tower.multiplicity as i64).into());
    DiracReport {
        level: tower.level,
        multiplicity: tower.multiplicity,
        n_phase,
        first_class: first,
        second_class: second,
        primary: tower
            .constraints
            .iter()
            .filter(|c| c.generation == 1)
            .count(),
        generations: tower.generations(),
        c: cls.c_full.clone(),
        c_second: cls.c_second.clone(),
        multipliers,
        dirac_matrix: dirac,
        reducibility,
        dropped_trivial: tower.dropped_trivial.clone(),
        dof_is_integral: dof.is_integer(),
        dof_per_point: dof,
    }
}

/// `H_E = H_c + Σ λₐ φₐ` as a symmetric form (`H_E = ½ zᵀ form z`).
/// First-class constraints need a gauge choice: one multiplier functional
/// per first-class basis combination.
pub fn extended_hamiltonian(
    tower: &ConstraintTower,
    cls: &Classification,
    hc: &CanonicalHamiltonian,
    multipliers: &[Multiplier],
    gauge: Option<&[Vec<Rat>]>,
) -> Result<Mat, DiracError> {
    let nf = cls.first_class.len();
    let gauge = match (nf, gauge) {
        (0, _) => &[][..],
        (_, None) => return Err(DiracError::UnfixedFirstClass(nf)),
        (_, Some(g)) if g.len() != nf => {
            return Err(DiracError::GaugeArity {
                expected: nf,
                got: g.len(),
            })
        }
        (_, Some(g)) => g,
    };
    let mut form = hc.form.clone();
    let mut add_product = |l: &[Rat], g: &[Rat]| {
        for (i, li) in l.iter().enumerate() {
            if li.is_zero() {
                continue;
            }
            for (j, gj) in g.iter().enumerate() {
                if gj.is_zero() {
                    continue;
                }
                let x = li * gj;
                form.add_at(i, j, &x);
                form.add_at(j, i, &x);
            }
        }
    };
    for (m, &a) in multipliers.iter().zip(&cls.second_class) {
        add_product(&m.functional, &tower.constraints[a].grad);
    }
    for (l, g) in gauge.iter().zip(&cls.first_class) {
        add_product(l, g);
    }
    Ok(form)
}

/// Everything produced for one level.
#[derive(Debug, Clone)]
pub struct DiracAnalysis {
    pub hc: CanonicalHamiltonian,
    pub tower: ConstraintTower,
    pub classification: Classification,
    pub report: DiracReport,
}

pub fn analyze(model: &QuadraticPhaseModel) -> DiracAnalysis {
    let hc = canonical_hamiltonian(model);
    let prim = primary_constraints(model);
    let tower = consistency_chain(model, prim, &hc);
    let cls = classify(&tower);
    let mults = solve_multipliers(&tower, &cls, &hc);
    let dm = dirac_matrix(&tower, &cls);
    let red = reducibility_report(&tower);
    let report = dof_count(&tower, &cls, mults, dm, red);
    DiracAnalysis {
        hc,
        tower,
        classification: cls,
        report,
    }
}

impl DiracAnalysis {
    /// Extended Hamiltonian with zero multipliers for any first-class direction.
    pub fn extended_form(&self) -> Mat {
        let zero_gauge: Vec<Vec<Rat>> = self
            .classification
            .first_class
            .iter()
            .map(|_| zero_vec(self.tower.dim()))
            .collect();
        extended_hamiltonian(
            &self.tower,
            &self.classification,
            &self.hc,
            &self.report.multipliers,
            Some(&zero_gauge),
        )
        .expect("gauge arity matches")
    }
}

/// Model with a single degree of freedom `L = ½ q̇² − ½ ω² q²`.
pub fn oscillator(omega_sq: Rat) -> QuadraticPhaseModel {
    QuadraticPhaseModel {
        level: 0,
        vars: vec![crate::model::Var {
            level: 0,
            field: "x".into(),
            component: "x".into(),
            group: "x".into(),
            slot: 0,
        }],
        w: Mat::identity(1),
        n: Mat::zeros(1, 1),
        v: Mat::diag(&[omega_sq]),
        multiplicity: 1,
    }
}
