//! Exact Cayley integration of the linear flow `ż = D H z`.

use std::io::Write;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dirac::{ConstraintTower, DiracAnalysis};
use crate::exactla::{dot, fmt_decimal, rat, LinalgError, Mat, Rat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("Cayley factor is singular at dt = {0}; halve the step")]
    SingularCayley(String),
    #[error("flow dimensions disagree: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub d: Mat,
    pub h: Mat,
    pub z0: Vec<Rat>,
    pub dt: Rat,
    pub steps: usize,
    /// Gradients of the constraints being monitored.
    pub constraints: Vec<Vec<Rat>>,
    /// Energy is evaluated every `sample_every` steps and at the last step.
    pub sample_every: usize,
}

impl FlowSpec {
    /// Builds a flow and projects `z0` onto the constraint surface.
    pub fn new(
        d: Mat,
        h: Mat,
        z0: &[Rat],
        dt: Rat,
        steps: usize,
        constraints: Vec<Vec<Rat>>,
    ) -> Result<Self, DynamicsError> {
        let n = z0.len();
        if d.rows() != n || d.cols() != n || h.rows() != n || h.cols() != n {
            return Err(DynamicsError::Dimension(format!(
                "D {}x{}, H {}x{}, z0 {}",
                d.rows(),
                d.cols(),
                h.rows(),
                h.cols(),
                n
            )));
        }
        if constraints.iter().any(|g| g.len() != n) {
            return Err(DynamicsError::Dimension(
                "constraint gradient length".into(),
            ));
        }
        let z0 = project_onto(z0, &constraints);
        Ok(FlowSpec {
            d,
            h,
            z0,
            dt,
            steps,
            constraints,
            sample_every: 100,
        })
    }

    pub fn generator(&self) -> Mat {
        &self.d * &self.h
    }

    pub fn energy(&self, z: &[Rat]) -> Rat {
        rat(1, 2) * self.h.bilinear(z, z)
    }
}

/// `z − Gᵀ (G Gᵀ)⁻¹ G z`; dependent gradients are dropped first.
pub fn project_onto(z: &[Rat], grads: &[Vec<Rat>]) -> Vec<Rat> {
    if grads.is_empty() {
        return z.to_vec();
    }
    let g = Mat::from_row_slices(grads, z.len());
    let keep = g.independent_rows();
    let all: Vec<usize> = (0..z.len()).collect();
    let g = g.select(&keep, &all);
    let gram = &g * &g.transpose();
    let inv = gram.inverse().expect("Gram matrix of independent rows");
    let coeff = inv.mul_vec(&g.mul_vec(z));
    let shift = g.vec_mul(&coeff);
    z.iter().zip(shift).map(|(a, b)| a - b).collect()
}

pub fn project_to_surface(z: &[Rat], tower: &ConstraintTower) -> Vec<Rat> {
    let grads: Vec<Vec<Rat>> = tower.constraints.iter().map(|c| c.grad.clone()).collect();
    project_onto(z, &grads)
}

/// `(I − (dt/2) A)⁻¹ (I + (dt/2) A)`.
pub fn cayley(a: &Mat, dt: &Rat) -> Result<Mat, DynamicsError> {
    let n = a.rows();
    let half = a.scale(&(dt * rat(1, 2)));
    let id = Mat::identity(n);
    let minus = &id - &half;
    let plus = &id + &half;
    let inv = minus.inverse().map_err(|e| match e {
        LinalgError::Singular => DynamicsError::SingularCayley(crate::exactla::fmt_rat(dt)),
        other => DynamicsError::Linalg(other),
    })?;
    Ok(&inv * &plus)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub step: usize,
    pub constraint_max: Rat,
    pub energy: Rat,
}

/// State kept as integer numerators over per-coordinate denominators that
/// are never normalised during stepping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalState {
    num: Vec<BigInt>,
    den: Vec<BigInt>,
}

impl FinalState {
    pub fn len(&self) -> usize {
        self.num.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num.is_empty()
    }

    /// Exact comparison by cross-multiplication.
    pub fn equals(&self, z: &[Rat]) -> bool {
        z.len() == self.len()
            && self
                .num
                .iter()
                .zip(&self.den)
                .zip(z)
                .all(|((n, d), r)| n * r.denom() == r.numer() * d)
    }

    pub fn to_rats(&self) -> Vec<Rat> {
        self.num
            .iter()
            .zip(&self.den)
            .map(|(n, d)| Rat::new(n.clone(), d.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub dt: Rat,
    pub dim: usize,
    pub energy0: Rat,
    /// Max over every step of the largest `|φ(z_t)|`.
    pub max_constraint_drift: Rat,
    /// Max over sampled steps of `|H(z_t) − H(z0)|`.
    pub max_energy_drift: Rat,
    /// `Tᵀ H T = H` holds as a matrix identity.
    pub energy_identity: bool,
    /// `gᵀ T = gᵀ` for every monitored gradient.
    pub constraint_identity: bool,
    pub samples: Vec<Sample>,
    pub final_state: FinalState,
}

/// One diagonal block of `T` in integer form: `T_b = P / q`.
#[derive(Debug, Clone)]
struct IntBlock {
    idx: Vec<usize>,
    p: Vec<Vec<(usize, BigInt)>>,
    q: BigInt,
}

/// Connected components of the joint nonzero pattern of `mats`.
fn blocks(mats: &[&Mat]) -> Vec<Vec<usize>> {
    let n = mats[0].rows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in mats {
        for i in 0..n {
            for j in 0..n {
                if i != j && !t.get(i, j).is_zero() {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut root_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = out.len();
            out.push(Vec::new());
        }
        out[root_of[r]].push(i);
    }
    out
}

fn int_block(t: &Mat, idx: &[usize]) -> IntBlock {
    let mut q = BigInt::one();
    for &i in idx {
        for &j in idx {
            q = q.lcm(t.get(i, j).denom());
        }
    }
    let p = idx
        .iter()
        .map(|&i| {
            idx.iter()
                .enumerate()
                .filter(|(_, &j)| !t.get(i, j).is_zero())
                .map(|(c, &j)| {
                    let x = t.get(i, j);
                    (c, x.numer() * (&q / x.denom()))
                })
                .collect()
        })
        .collect();
    IntBlock {
        idx: idx.to_vec(),
        p,
        q,
    }
}

/// State of one block: `z_b = num / den` with `den = d · q^t`.
#[derive(Debug, Clone)]
struct BlockState {
    num: Vec<BigInt>,
    den: BigInt,
}

impl BlockState {
    fn from_rats(z: &[Rat], idx: &[usize]) -> Self {
        let mut den = BigInt::one();
        for &i in idx {
            den = den.lcm(z[i].denom());
        }
        let num = idx
            .iter()
            .map(|&i| z[i].numer() * (&den / z[i].denom()))
            .collect();
        BlockState { num, den }
    }

    fn step(&mut self, b: &IntBlock) {
        let num =
            b.p.iter()
                .map(|row| {
                    let mut acc = BigInt::zero();
                    for (c, x) in row {
                        acc += x * &self.num[*c];
                    }
                    acc
                })
                .collect();
        self.num = num;
        self.den *= &b.q;
    }
}

fn final_state(states: &[BlockState], blocks: &[IntBlock], n: usize) -> FinalState {
    let mut num = vec![BigInt::zero(); n];
    let mut den = vec![BigInt::one(); n];
    for (s, b) in states.iter().zip(blocks) {
        for (k, &i) in b.idx.iter().enumerate() {
            num[i] = s.num[k].clone();
            den[i] = s.den.clone();
        }
    }
    FinalState { num, den }
}

/// Block index, sparse integer coefficients, denominator.
type IntPart = (usize, Vec<(usize, BigInt)>, BigInt);

/// Constraint gradient split per block with integer coefficients.
struct IntConstraint {
    parts: Vec<IntPart>,
}

impl IntConstraint {
    fn new(g: &[Rat], blocks: &[IntBlock]) -> Self {
        let mut parts = Vec::new();
        for (bi, b) in blocks.iter().enumerate() {
            let mut s = BigInt::one();
            for &i in &b.idx {
                s = s.lcm(g[i].denom());
            }
            let coeffs: Vec<(usize, BigInt)> = b
                .idx
                .iter()
                .enumerate()
                .filter(|(_, &i)| !g[i].is_zero())
                .map(|(c, &i)| (c, g[i].numer() * (&s / g[i].denom())))
                .collect();
            if !coeffs.is_empty() {
                parts.push((bi, coeffs, s));
            }
        }
        IntConstraint { parts }
    }

    fn value(&self, states: &[BlockState]) -> Rat {
        let mut total = Rat::zero();
        for (bi, coeffs, s) in &self.parts {
            let mut acc = BigInt::zero();
            for (c, x) in coeffs {
                acc += x * &states[*bi].num[*c];
            }
            if !acc.is_zero() {
                total += Rat::new(acc, s * &states[*bi].den);
            }
        }
        total
    }
}

/// `½ zᵀ H z` on block states, `H = K / k`. Returns numerator and
/// denominator without normalising.
struct IntForm {
    entries: Vec<(usize, usize, BigInt)>,
    k: BigInt,
    /// `lcm_b d_b`, `lcm_b q_b` and per block `(lcm d / d_b, lcm q / q_b)`.
    dl: BigInt,
    ql: BigInt,
    factors: Vec<(BigInt, BigInt)>,
}

impl IntForm {
    fn new(h: &Mat, states: &[BlockState], blocks: &[IntBlock]) -> Self {
        let mut k = BigInt::one();
        for i in 0..h.rows() {
            for j in 0..h.cols() {
                k = k.lcm(h.get(i, j).denom());
            }
        }
        let mut entries = Vec::new();
        for i in 0..h.rows() {
            for j in 0..h.cols() {
                let x = h.get(i, j);
                if !x.is_zero() {
                    entries.push((i, j, x.numer() * (&k / x.denom())));
                }
            }
        }
        let dl = states.iter().fold(BigInt::one(), |a, s| a.lcm(&s.den));
        let ql = blocks.iter().fold(BigInt::one(), |a, b| a.lcm(&b.q));
        let factors = states
            .iter()
            .zip(blocks)
            .map(|(s, b)| (&dl / &s.den, &ql / &b.q))
            .collect();
        IntForm {
            entries,
            k,
            dl,
            ql,
            factors,
        }
    }

    /// Valid after exactly `t` forward steps from the states used in `new`.
    fn value(
        &self,
        states: &[BlockState],
        blocks: &[IntBlock],
        n: usize,
        t: u32,
    ) -> (BigInt, BigInt) {
        let mut z = vec![BigInt::zero(); n];
        for ((s, b), (fd, fq)) in states.iter().zip(blocks).zip(&self.factors) {
            let f = if fq.is_one() {
                fd.clone()
            } else {
                fd * fq.pow(t)
            };
            for (k, &i) in b.idx.iter().enumerate() {
                z[i] = if f.is_one() {
                    s.num[k].clone()
                } else {
                    &s.num[k] * &f
                };
            }
        }
        let mut acc = BigInt::zero();
        for (i, j, x) in &self.entries {
            if !z[*i].is_zero() && !z[*j].is_zero() {
                acc += x * &z[*i] * &z[*j];
            }
        }
        let c = &self.dl * self.ql.pow(t);
        (acc, BigInt::from(2) * &self.k * &c * &c)
    }
}

fn max_abs(v: impl Iterator<Item = Rat>) -> Rat {
    v.map(|x| x.abs())
        .fold(Rat::zero(), |a, b| if b > a { b } else { a })
}

pub fn evolve(flow: &FlowSpec) -> Result<TrajectorySummary, DynamicsError> {
    let n = flow.z0.len();
    let t = cayley(&flow.generator(), &flow.dt)?;
    let energy_identity = &(&t.transpose() * &flow.h) * &t == flow.h;
    let constraint_identity = flow.constraints.iter().all(|g| &t.vec_mul(g) == g);

    let iblocks: Vec<IntBlock> = blocks(&[&t]).iter().map(|idx| int_block(&t, idx)).collect();
    let mut states: Vec<BlockState> = iblocks
        .iter()
        .map(|b| BlockState::from_rats(&flow.z0, &b.idx))
        .collect();
    let form = IntForm::new(&flow.h, &states, &iblocks);
    let icons: Vec<IntConstraint> = flow
        .constraints
        .iter()
        .map(|g| IntConstraint::new(g, &iblocks))
        .collect();

    let energy0 = flow.energy(&flow.z0);
    let c0 = max_abs(icons.iter().map(|c| c.value(&states)));
    let mut samples = vec![Sample {
        step: 0,
        constraint_max: c0.clone(),
        energy: energy0.clone(),
    }];
    let mut max_c = c0;
    let mut max_e = Rat::zero();
    let every = flow.sample_every.max(1);

    for step in 1..=flow.steps {
        for (s, b) in states.iter_mut().zip(&iblocks) {
            s.step(b);
        }
        let c = max_abs(icons.iter().map(|c| c.value(&states)));
        if c > max_c {
            max_c = c.clone();
        }
        if step % every == 0 || step == flow.steps {
            let (num, den) = form.value(&states, &iblocks, n, step as u32);
            let e = if &num * energy0.denom() == energy0.numer() * &den {
                energy0.clone()
            } else {
                Rat::new(num, den)
            };
            let drift = (&e - &energy0).abs();
            if drift > max_e {
                max_e = drift;
            }
            samples.push(Sample {
                step,
                constraint_max: c,
                energy: e,
            });
        }
    }
    Ok(TrajectorySummary {
        steps: flow.steps,
        dt: flow.dt.clone(),
        dim: n,
        energy0,
        max_constraint_drift: max_c,
        max_energy_drift: max_e,
        energy_identity,
        constraint_identity,
        samples,
        final_state: final_state(&states, &iblocks, n),
    })
}

/// Retries with `dt/2` up to `max_halvings` times on a singular Cayley factor.
pub fn evolve_with_halving(
    flow: &FlowSpec,
    max_halvings: u32,
) -> Result<TrajectorySummary, DynamicsError> {
    let mut f = flow.clone();
    let mut left = max_halvings;
    loop {
        match evolve(&f) {
            Err(DynamicsError::SingularCayley(_)) if left > 0 => {
                f.dt = &f.dt * rat(1, 2);
                left -= 1;
            }
            other => return other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reversibility {
    /// `T(dt) T(−dt) = I` as a matrix identity.
    pub inverse_identity: bool,
    /// Forward `steps` then backward `steps` returns `z0` exactly.
    pub returns_to_start: bool,
}

pub fn reversibility(flow: &FlowSpec, steps: usize) -> Result<Reversibility, DynamicsError> {
    let a = flow.generator();
    let fwd = cayley(&a, &flow.dt)?;
    let bwd = cayley(&a, &-flow.dt.clone())?;
    let inverse_identity = &fwd * &bwd == Mat::identity(a.rows());

    let idx = blocks(&[&fwd, &bwd]);
    let fb: Vec<IntBlock> = idx.iter().map(|i| int_block(&fwd, i)).collect();
    let bb: Vec<IntBlock> = idx.iter().map(|i| int_block(&bwd, i)).collect();
    let mut states: Vec<BlockState> = fb
        .iter()
        .map(|b| BlockState::from_rats(&flow.z0, &b.idx))
        .collect();
    for blocks in [&fb, &bb] {
        for _ in 0..steps {
            for (s, b) in states.iter_mut().zip(blocks.iter()) {
                s.step(b);
            }
        }
    }
    let end = final_state(&states, &fb, flow.z0.len());
    Ok(Reversibility {
        inverse_identity,
        returns_to_start: end.equals(&flow.z0),
    })
}

/// Seeded random rational vector with small entries.
pub fn random_state(n: usize, seed: u64) -> Vec<Rat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rat(rng.gen_range(-5..=5), rng.gen_range(1..=4)))
        .collect()
}

/// Block-diagonal flow over all analysed levels with a seeded start on the
/// constraint surface. First-class directions carry zero multipliers.
pub fn flow_from_levels(
    levels: &[DiracAnalysis],
    dt: Rat,
    steps: usize,
    seed: u64,
) -> Result<FlowSpec, DynamicsError> {
    let d = Mat::block_diag(
        &levels
            .iter()
            .map(|a| a.report.dirac_matrix.clone())
            .collect::<Vec<_>>(),
    );
    let h = Mat::block_diag(&levels.iter().map(|a| a.extended_form()).collect::<Vec<_>>());
    let n = d.rows();
    let mut grads = Vec::new();
    let mut off = 0;
    for a in levels {
        let dim = a.tower.dim();
        for c in &a.tower.constraints {
            let mut g = vec![Rat::zero(); n];
            g[off..off + dim].clone_from_slice(&c.grad);
            grads.push(g);
        }
        off += dim;
    }
    FlowSpec::new(d, h, &random_state(n, seed), dt, steps, grads)
}

pub fn write_csv<W: Write>(summary: &TrajectorySummary, mut w: W) -> std::io::Result<()> {
    writeln!(w, "step,constraint_max,energy")?;
    for s in &summary.samples {
        writeln!(
            w,
            "{},{},{}",
            s.step,
            fmt_decimal(&s.constraint_max, 12),
            fmt_decimal(&s.energy, 12)
        )?;
    }
    Ok(())
}

/// `φ(z)` for each gradient.
pub fn constraint_values(z: &[Rat], grads: &[Vec<Rat>]) -> Vec<Rat> {
    grads.iter().map(|g| dot(g, z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::{analyze, omega};
    use crate::exactla::{int, unit_vec};

    #[test]
    fn projection_examples() {
        let g = vec![vec![int(1), int(1), int(0)]];
        let on = vec![int(2), int(-2), int(5)];
        assert_eq!(project_onto(&on, &g), on);
        assert_eq!(project_onto(&g[0], &g), vec![int(0); 3]);
    }

    #[test]
    fn oscillator_energy_is_exact() {
        let h = Mat::diag(&[int(1), int(1)]);
        let z0 = vec![int(1), int(0)];
        let mut f = FlowSpec::new(omega(1), h, &z0, rat(1, 10), 63, vec![]).unwrap();
        f.sample_every = 1;
        let s = evolve(&f).unwrap();
        assert_eq!(s.max_energy_drift, int(0));
        assert!(s.energy_identity);
        // one period of 2π at dt = 1/10 lands close to the start
        let x = &s.final_state.to_rats()[0];
        assert!((x - int(1)).abs() < rat(1, 100));
    }

    #[test]
    fn singular_factor_is_reported() {
        // A = diag(2) makes I − A singular at dt = 1
        let a_half = Mat::diag(&[int(2)]);
        assert!(matches!(
            cayley(&a_half, &int(1)),
            Err(DynamicsError::SingularCayley(_))
        ));
        let f = FlowSpec::new(
            Mat::diag(&[int(2)]),
            Mat::identity(1),
            &[int(1)],
            int(1),
            2,
            vec![],
        )
        .unwrap();
        let s = evolve_with_halving(&f, 2).unwrap();
        assert_eq!(s.dt, rat(1, 2));
    }

    #[test]
    fn proca_flow_preserves_constraints() {
        let spec = crate::model::builtin_proca5d(int(1), int(1)).unwrap();
        let tower = crate::kaluza::compactify(&spec, 2, &crate::kaluza::channel_zero()).unwrap();
        let levels: Vec<_> = tower.levels.iter().map(analyze).collect();
        let f = flow_from_levels(&levels, rat(1, 100), 200, 7).unwrap();
        assert!(constraint_values(&f.z0, &f.constraints)
            .iter()
            .all(|x| x.is_zero()));
        let s = evolve(&f).unwrap();
        assert_eq!(s.max_constraint_drift, int(0));
        assert_eq!(s.max_energy_drift, int(0));
        assert!(s.constraint_identity && s.energy_identity);
        let r = reversibility(&f, 20).unwrap();
        assert!(r.inverse_identity && r.returns_to_start);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = FlowSpec::new(
            omega(1),
            Mat::identity(2),
            &unit_vec(2, 0),
            rat(1, 4),
            3,
            vec![],
        )
        .unwrap();
        let mut f = f;
        f.sample_every = 1;
        let s = evolve(&f).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("step,constraint_max,energy\n0,"));
    }
}
