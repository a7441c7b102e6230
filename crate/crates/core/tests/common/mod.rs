//! Hand-written component formulas used as independent oracles.
#![allow(dead_code)]

use kkdirac::exactla::{dot, rat, Mat, Rat};
use kkdirac::kaluza::SpatialChannel;
use kkdirac::model::QuadraticPhaseModel;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rats(n: usize, r: &mut ChaCha8Rng) -> Vec<Rat> {
    (0..n)
        .map(|_| rat(r.gen_range(-9..=9), r.gen_range(1..=7)))
        .collect()
}

/// Field values of one level, read off a phase vector `z = (q, p)` or a
/// velocity vector, per channel slot.
pub struct View<'a> {
    pub model: &'a QuadraticPhaseModel,
    pub ch: &'a SpatialChannel,
}

impl<'a> View<'a> {
    pub fn new(model: &'a QuadraticPhaseModel, ch: &'a SpatialChannel) -> Self {
        View { model, ch }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn slots(&self) -> usize {
        self.ch.dim
    }

    pub fn has(&self, comp: &str) -> bool {
        self.model.var_index(comp, 0).is_some()
    }

    /// Values of `comp` in a vector over the variables.
    pub fn get(&self, v: &[Rat], comp: &str) -> Vec<Rat> {
        (0..self.slots())
            .map(|s| match self.model.var_index(comp, s) {
                Some(i) => v[i].clone(),
                None => Rat::zero(),
            })
            .collect()
    }

    pub fn q(&self, z: &[Rat], comp: &str) -> Vec<Rat> {
        self.get(&z[..self.dim()], comp)
    }

    pub fn p(&self, z: &[Rat], comp: &str) -> Vec<Rat> {
        self.get(&z[self.dim()..], comp)
    }

    /// `∂ᵢ` on slot vectors.
    pub fn d(&self, i: usize, v: &[Rat]) -> Vec<Rat> {
        self.ch.d[i].mul_vec(v)
    }

    /// `Σᵢ ∂ᵢ vᵢ`.
    pub fn div(&self, v: [&[Rat]; 3]) -> Vec<Rat> {
        let mut out = vec![Rat::zero(); self.slots()];
        for (i, vi) in v.iter().enumerate() {
            add(&mut out, &self.d(i, vi), &Rat::from_integer(1.into()));
        }
        out
    }
}

pub fn add(acc: &mut [Rat], v: &[Rat], c: &Rat) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += c * b;
    }
}

pub fn lin(terms: &[(&Rat, &[Rat])], n: usize) -> Vec<Rat> {
    let mut out = vec![Rat::zero(); n];
    for (c, v) in terms {
        add(&mut out, v, c);
    }
    out
}

pub fn sq(v: &[Rat]) -> Rat {
    dot(v, v)
}

const SPACE: [&str; 3] = ["1", "2", "3"];

fn a_name(i: &str) -> String {
    format!("A_{i}")
}

/// Velocity-level pieces for the vector field `A` at level `n`.
struct VectorPieces {
    /// `F_{0i}`
    f0: [Vec<Rat>; 3],
    /// `F_{ij}` for `(i, j) = (1,2), (1,3), (2,3)`
    fij: [Vec<Rat>; 3],
    /// `∂_μ A₅ + (n/R) A_μ` for `μ = 0..3`
    g: [Vec<Rat>; 4],
}

fn vector_pieces(v: &View, qdot: &[Rat], q: &[Rat], n: u32, radius: &Rat) -> VectorPieces {
    let d = v.slots();
    let one = Rat::from_integer(1.into());
    let minus = -one.clone();
    let a0 = v.get(q, "A_0");
    let a: Vec<Vec<Rat>> = SPACE.iter().map(|i| v.get(q, &a_name(i))).collect();
    let adot: Vec<Vec<Rat>> = SPACE.iter().map(|i| v.get(qdot, &a_name(i))).collect();
    let f0 = [0, 1, 2].map(|i| lin(&[(&one, &adot[i]), (&minus, &v.d(i, &a0))], d));
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let fij = pairs.map(|(i, j)| lin(&[(&one, &v.d(i, &a[j])), (&minus, &v.d(j, &a[i]))], d));
    let kn = Rat::new(n.into(), 1.into()) / radius;
    let a5 = v.get(q, "A_5");
    let a5dot = v.get(qdot, "A_5");
    let g = [
        lin(&[(&one, &a5dot), (&kn, &a0)], d),
        lin(&[(&one, &v.d(0, &a5)), (&kn, &a[0])], d),
        lin(&[(&one, &v.d(1, &a5)), (&kn, &a[1])], d),
        lin(&[(&one, &v.d(2, &a5)), (&kn, &a[2])], d),
    ];
    VectorPieces { f0, fij, g }
}

/// `A_μ A^μ` summed over slots (mostly-plus metric).
fn a_sq(v: &View, q: &[Rat]) -> Rat {
    let mut s = -sq(&v.get(q, "A_0"));
    for i in SPACE {
        s += sq(&v.get(q, &a_name(i)));
    }
    s
}

/// Effective level-`n` Proca Lagrangian
/// `−¼FF + (m²/2)AA + (m²/2)A₅A⁵ − ½ G_μ G^μ`, `G_μ = ∂_μA₅ + (n/R)A_μ`.
pub fn proca_lagrangian(v: &View, n: u32, m: &Rat, radius: &Rat, qdot: &[Rat], q: &[Rat]) -> Rat {
    let p = vector_pieces(v, qdot, q, n, radius);
    let half = rat(1, 2);
    let m2 = m * m;
    // −¼ F_{μν}F^{μν} = ½ ΣF_{0i}² − ½ Σ_{i<j} F_{ij}²
    let mut l = Rat::zero();
    for f in &p.f0 {
        l += &half * sq(f);
    }
    for f in &p.fij {
        l -= &half * sq(f);
    }
    l += &half * &m2 * a_sq(v, q);
    if n > 0 {
        l += &half * &m2 * sq(&v.get(q, "A_5"));
        // −½ G_μG^μ = ½ G₀² − ½ ΣGᵢ²
        l += &half * sq(&p.g[0]);
        for g in &p.g[1..] {
            l -= &half * sq(g);
        }
    }
    l
}

/// `Σ_{i} π^i π_i` and friends for one level of the Proca tower.
struct Momenta {
    a0: Vec<Rat>,
    a: [Vec<Rat>; 3],
    a5: Vec<Rat>,
    pi: [Vec<Rat>; 3],
    pi5: Vec<Rat>,
    fij: [Vec<Rat>; 3],
    g: [Vec<Rat>; 3],
}

fn momenta(v: &View, z: &[Rat], n: u32, radius: &Rat) -> Momenta {
    let d = v.slots();
    let one = Rat::from_integer(1.into());
    let minus = -one.clone();
    let q = &z[..v.dim()];
    let a0 = v.get(q, "A_0");
    let a = [0, 1, 2].map(|i| v.get(q, &a_name(SPACE[i])));
    let a5 = v.get(q, "A_5");
    let pi = [0, 1, 2].map(|i| v.p(z, &a_name(SPACE[i])));
    let pi5 = v.p(z, "A_5");
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let fij = pairs.map(|(i, j)| lin(&[(&one, &v.d(i, &a[j])), (&minus, &v.d(j, &a[i]))], d));
    let kn = Rat::new(n.into(), 1.into()) / radius;
    let g = [0, 1, 2].map(|i| lin(&[(&one, &v.d(i, &a5)), (&kn, &a[i])], d));
    Momenta {
        a0,
        a,
        a5,
        pi,
        pi5,
        fij,
        g,
    }
}

/// Canonical Hamiltonian of one Proca level in closed form:
/// `−A₀∂ᵢπⁱ + ½ππ + ¼FF − (m²/2)AA + ½π₅² − (n/R)π₅A₀ + ½GG − (m²/2)A₅²`.
pub fn proca_hc(v: &View, n: u32, m: &Rat, radius: &Rat, z: &[Rat]) -> Rat {
    let p = momenta(v, z, n, radius);
    let half = rat(1, 2);
    let m2 = m * m;
    let div_pi = v.div([&p.pi[0], &p.pi[1], &p.pi[2]]);
    let mut h = -dot(&p.a0, &div_pi);
    for pi in &p.pi {
        h += &half * sq(pi);
    }
    for f in &p.fij {
        h += &half * sq(f);
    }
    h -= &half * &m2 * a_sq(v, &z[..v.dim()]);
    if n > 0 {
        let kn = Rat::new(n.into(), 1.into()) / radius;
        h += &half * sq(&p.pi5);
        h -= kn * dot(&p.pi5, &p.a0);
        for g in &p.g {
            h += &half * sq(g);
        }
        h -= &half * &m2 * sq(&p.a5);
    }
    h
}

/// Reference closed form of the extended Hamiltonian of one level.
pub fn proca_extended_reference(v: &View, n: u32, m: &Rat, radius: &Rat, z: &[Rat]) -> Rat {
    let p = momenta(v, z, n, radius);
    let half = rat(1, 2);
    let m2 = m * m;
    let div_pi = v.div([&p.pi[0], &p.pi[1], &p.pi[2]]);
    let mut h = dot(&p.a0, &div_pi);
    for pi in &p.pi {
        h -= &half * sq(pi);
    }
    for f in &p.fij {
        h -= &half * sq(f);
    }
    h += &half * &m2 * a_sq(v, &z[..v.dim()]);
    if n > 0 {
        let kn = Rat::new(n.into(), 1.into()) / radius;
        h -= &half * sq(&p.pi5);
        h += kn * dot(&p.pi5, &p.a0);
        h += &half * &m2 * sq(&p.a5);
        for g in &p.g {
            h -= &half * sq(g);
        }
    }
    h
}

/// Primary `π⁰` at slot `s`.
pub fn proca_primary(v: &View, z: &[Rat], s: usize) -> Rat {
    v.p(z, "A_0")[s].clone()
}

/// Secondary `∂ᵢπⁱ + (n/R)π⁵ + m²A⁰` at slot `s`, with `A⁰ = −A₀`.
pub fn proca_secondary(v: &View, n: u32, m: &Rat, radius: &Rat, z: &[Rat], s: usize) -> Rat {
    let p = momenta(v, z, n, radius);
    let div_pi = v.div([&p.pi[0], &p.pi[1], &p.pi[2]]);
    let kn = Rat::new(n.into(), 1.into()) / radius;
    &div_pi[s] + kn * &p.pi5[s] - m * m * &p.a0[s]
}

/// `λ₁⁽⁰⁾ = ∂ᵢAⁱ`
pub fn lambda1_zero(v: &View, z: &[Rat], s: usize) -> Rat {
    let p = momenta(v, z, 0, &Rat::from_integer(1.into()));
    v.div([&p.a[0], &p.a[1], &p.a[2]])[s].clone()
}

/// `λ₂⁽⁰⁾ = −(1/m²)∂ᵢπⁱ − A⁰`
pub fn lambda2_zero(v: &View, m: &Rat, z: &[Rat], s: usize) -> Rat {
    let p = momenta(v, z, 0, &Rat::from_integer(1.into()));
    let div_pi = v.div([&p.pi[0], &p.pi[1], &p.pi[2]]);
    -(&div_pi[s] / (m * m)) + &p.a0[s]
}

/// Reference `λ₁⁽ⁿ⁾`:
/// `∂ᵢAⁱ − (2n/(m²R)) ∂ᵢ(∂ⁱA⁵ + (n/R)Aⁱ) + (n/R)A⁵`.
pub fn lambda1_excited_reference(
    v: &View,
    n: u32,
    m: &Rat,
    radius: &Rat,
    z: &[Rat],
    s: usize,
) -> Rat {
    let p = momenta(v, z, n, radius);
    let kn = Rat::new(n.into(), 1.into()) / radius;
    let div_a = v.div([&p.a[0], &p.a[1], &p.a[2]]);
    let div_g = v.div([&p.g[0], &p.g[1], &p.g[2]]);
    let c = Rat::new((2 * n).into(), 1.into()) / (m * m * radius);
    &div_a[s] - c * &div_g[s] + kn * &p.a5[s]
}

/// `λ₁⁽ⁿ⁾ = ∂ᵢAⁱ + (n/R)A⁵`, the value obtained when the `G`-terms of
/// `{φ², H_c}` cancel.
pub fn lambda1_excited_corrected(v: &View, n: u32, radius: &Rat, z: &[Rat], s: usize) -> Rat {
    let p = momenta(v, z, n, radius);
    let kn = Rat::new(n.into(), 1.into()) / radius;
    let div_a = v.div([&p.a[0], &p.a[1], &p.a[2]]);
    &div_a[s] + kn * &p.a5[s]
}

/// `λ₂⁽ⁿ⁾ = −(1/m²)∂ᵢπⁱ + A₀ − (n/(m²R))π⁵`
pub fn lambda2_excited(v: &View, n: u32, m: &Rat, radius: &Rat, z: &[Rat], s: usize) -> Rat {
    let p = momenta(v, z, n, radius);
    let m2 = m * m;
    let div_pi = v.div([&p.pi[0], &p.pi[1], &p.pi[2]]);
    let c = Rat::new(n.into(), 1.into()) / (&m2 * radius);
    -(&div_pi[s] / &m2) + &p.a0[s] - c * &p.pi5[s]
}

/// Level-`n` BF + mass Lagrangian:
/// `B^{μν}F_{μν} − (m²/4)A_μA^μ + 2B^{μ5}(∂_μA₅ + (n/R)A_μ)`, plus
/// `−(m²/4)A₅A⁵` when `a5_mass` is set.
pub fn bf_lagrangian(
    v: &View,
    n: u32,
    m: &Rat,
    radius: &Rat,
    qdot: &[Rat],
    q: &[Rat],
    a5_mass: bool,
) -> Rat {
    let p = vector_pieces(v, qdot, q, n, radius);
    let quarter = rat(1, 4);
    let two = Rat::from_integer(2.into());
    let m2 = m * m;
    let b = |c: &str| v.get(q, &format!("B^{c}"));
    let mut l = Rat::zero();
    // B^{μν}F_{μν} = 2 Σ_{μ<ν}
    for (i, c) in ["01", "02", "03"].iter().enumerate() {
        l += &two * dot(&b(c), &p.f0[i]);
    }
    for (k, c) in ["12", "13", "23"].iter().enumerate() {
        l += &two * dot(&b(c), &p.fij[k]);
    }
    l -= &quarter * &m2 * a_sq(v, q);
    if n > 0 {
        for (mu, c) in ["05", "15", "25", "35"].iter().enumerate() {
            l += &two * dot(&b(c), &p.g[mu]);
        }
        if a5_mass {
            l -= &quarter * &m2 * sq(&v.get(q, "A_5"));
        }
    }
    l
}

/// Gradient of a linear functional `f` on `n` coordinates, by probing unit vectors.
pub fn gradient(n: usize, f: impl Fn(&[Rat]) -> Rat) -> Vec<Rat> {
    (0..n)
        .map(|i| {
            let mut e = vec![Rat::zero(); n];
            e[i] = Rat::from_integer(1.into());
            f(&e)
        })
        .collect()
}

pub fn mat_is(m: &Mat, f: impl Fn(usize, usize) -> Rat) -> bool {
    (0..m.rows()).all(|i| (0..m.cols()).all(|j| *m.get(i, j) == f(i, j)))
}
