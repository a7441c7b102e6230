//! Orbifold compactification and spatial-channel reduction.
//!
//! Every 5D component is expanded in its parity-allowed Fourier modes
//! (`cos(ny/R)` for even components, including the zero mode, and
//! `sin(ny/R)` for odd ones), the compact coordinate is integrated out by
//! orthogonality, and the spatial derivatives are realised by the channel
//! matrices. The result is one quadratic phase model per KK level.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::exactla::{int, Mat, Rat};
use crate::model::{
    FieldSpec, LorentzRank, ModelError, Parity, QuadraticPhaseModel, TermSpec, TheorySpec5D, Var,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KaluzaError {
    #[error("at least one KK level is required")]
    NoLevels,
    #[error("plane channel needs a nonzero wavevector; use the zero channel instead")]
    ZeroWavevector,
    #[error("malformed spec: {0}")]
    Spec(#[from] ModelError),
    #[error("levels {0} and {1} are coupled in the reduced Lagrangian")]
    LevelCoupling(u32, u32),
}

/// Finite-dimensional stand-in for `∂_1, ∂_2, ∂_3`: commuting antisymmetric
/// `d x d` matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialChannel {
    pub dim: usize,
    pub d: [Mat; 3],
    /// Wavevector for plane channels, `None` for the zero channel.
    pub wavevector: Option<[Rat; 3]>,
}

impl SpatialChannel {
    pub fn is_zero(&self) -> bool {
        self.wavevector.is_none()
    }

    /// `ΣᵢDᵢDᵢ`.
    pub fn laplacian(&self) -> Mat {
        let mut l = Mat::zeros(self.dim, self.dim);
        for di in &self.d {
            l = &l + &(di * di);
        }
        l
    }

    pub fn describe(&self) -> String {
        match &self.wavevector {
            None => "zero".into(),
            Some(k) => format!(
                "plane:{},{},{}",
                crate::exactla::fmt_rat(&k[0]),
                crate::exactla::fmt_rat(&k[1]),
                crate::exactla::fmt_rat(&k[2])
            ),
        }
    }

    pub fn invariants_hold(&self) -> bool {
        self.d.iter().all(Mat::is_antisymmetric)
            && (0..3).all(|i| (0..3).all(|j| &self.d[i] * &self.d[j] == &self.d[j] * &self.d[i]))
    }
}

pub fn channel_zero() -> SpatialChannel {
    SpatialChannel {
        dim: 1,
        d: [Mat::zeros(1, 1), Mat::zeros(1, 1), Mat::zeros(1, 1)],
        wavevector: None,
    }
}

/// Real plane-wave doublet `(cos k·x, sin k·x)` with `Dᵢ = kᵢ·[[0,1],[−1,0]]`.
pub fn channel_plane(k1: Rat, k2: Rat, k3: Rat) -> Result<SpatialChannel, KaluzaError> {
    if k1.is_zero() && k2.is_zero() && k3.is_zero() {
        return Err(KaluzaError::ZeroWavevector);
    }
    let j = Mat::from_i64(&[&[0, 1], &[-1, 0]]);
    Ok(SpatialChannel {
        dim: 2,
        d: [j.scale(&k1), j.scale(&k2), j.scale(&k3)],
        wavevector: Some([k1, k2, k3]),
    })
}

/// 5D index, with `5` the compact direction.
const INDICES: [usize; 5] = [0, 1, 2, 3, 5];

fn eta(idx: usize) -> Rat {
    if idx == 0 {
        int(-1)
    } else {
        int(1)
    }
}

fn index_group(idx: usize) -> &'static str {
    match idx {
        0 => "0",
        5 => "5",
        _ => "i",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Cos,
    Sin,
}

impl Mode {
    fn of(p: Parity) -> Self {
        match p {
            Parity::Even => Mode::Cos,
            Parity::Odd => Mode::Sin,
        }
    }

    fn exists_at(self, level: u32) -> bool {
        self == Mode::Cos || level > 0
    }
}

/// Normalised `∫₀^{2πR} f_a f_b dy` for the mode functions
/// `1/√(2πR)`, `cos(ny/R)/√(πR)`, `sin(ny/R)/√(πR)`.
fn overlap(a: (Mode, u32), b: (Mode, u32)) -> Rat {
    if a == b && a.0.exists_at(a.1) {
        Rat::one()
    } else {
        Rat::zero()
    }
}

#[derive(Debug, Clone)]
struct Component {
    field: String,
    /// Index tuple: empty for scalars, `[M]` for vectors, `[M, N]` (M<N) for 2-forms.
    idx: Vec<usize>,
    label: String,
    group: String,
    mode: Mode,
}

fn components(f: &FieldSpec) -> Vec<Component> {
    let base = f.parity;
    match f.lorentz_rank {
        LorentzRank::Scalar => vec![Component {
            field: f.name.clone(),
            idx: vec![],
            label: f.name.clone(),
            group: f.name.clone(),
            mode: Mode::of(base),
        }],
        LorentzRank::Vector => INDICES
            .iter()
            .map(|&m| Component {
                field: f.name.clone(),
                idx: vec![m],
                label: format!("{}_{}", f.name, m),
                group: format!("{}_{}", f.name, index_group(m)),
                mode: Mode::of(if m == 5 { base.flip() } else { base }),
            })
            .collect(),
        LorentzRank::Antisym2 => {
            let mut out = Vec::new();
            for (a, &m) in INDICES.iter().enumerate() {
                for &n in &INDICES[a + 1..] {
                    let group = match (m, n) {
                        (0, 5) => "05".to_string(),
                        (0, _) => "0i".to_string(),
                        (_, 5) => "i5".to_string(),
                        _ => "ij".to_string(),
                    };
                    out.push(Component {
                        field: f.name.clone(),
                        idx: vec![m, n],
                        label: format!("{}^{}{}", f.name, m, n),
                        group: format!("{}^{}", f.name, group),
                        mode: Mode::of(if n == 5 { base.flip() } else { base }),
                    });
                }
            }
            out
        }
    }
}

/// Per slot, a sparse linear form over `(q̇, q)`; column `j < nv` is a
/// velocity, `nv + j` a coordinate.
type Lin = Vec<Vec<(usize, Rat)>>;

/// A d-vector of linear forms, resolved into Fourier modes.
#[derive(Debug, Clone, Default)]
struct Expr {
    parts: BTreeMap<(Mode, u32), Lin>,
}

impl Expr {
    fn add_scaled(&mut self, other: &Expr, c: &Rat, d: usize) {
        if c.is_zero() {
            return;
        }
        for (key, lin) in &other.parts {
            let dst = self
                .parts
                .entry(*key)
                .or_insert_with(|| vec![Vec::new(); d]);
            for (slot, terms) in lin.iter().enumerate() {
                for (j, a) in terms {
                    dst[slot].push((*j, a * c));
                }
            }
        }
    }

    fn scaled(&self, c: &Rat, d: usize) -> Expr {
        let mut e = Expr::default();
        e.add_scaled(self, c, d);
        e
    }
}

struct Reducer<'a> {
    spec: &'a TheorySpec5D,
    channel: &'a SpatialChannel,
    levels: u32,
    comps: Vec<Component>,
    /// (level, component index) -> first variable index (slots follow).
    offsets: BTreeMap<(u32, usize), usize>,
    vars: Vec<Var>,
}

impl<'a> Reducer<'a> {
    fn new(spec: &'a TheorySpec5D, channel: &'a SpatialChannel, levels: u32) -> Self {
        let comps: Vec<Component> = spec.fields.iter().flat_map(components).collect();
        let mut offsets = BTreeMap::new();
        let mut vars = Vec::new();
        for n in 0..levels {
            for (ci, c) in comps.iter().enumerate() {
                if !c.mode.exists_at(n) {
                    continue;
                }
                offsets.insert((n, ci), vars.len());
                for slot in 0..channel.dim {
                    vars.push(Var {
                        level: n,
                        field: c.field.clone(),
                        component: c.label.clone(),
                        group: c.group.clone(),
                        slot,
                    });
                }
            }
        }
        Self {
            spec,
            channel,
            levels,
            comps,
            offsets,
            vars,
        }
    }

    fn nv(&self) -> usize {
        self.vars.len()
    }

    fn d(&self) -> usize {
        self.channel.dim
    }

    fn comp_index(&self, field: &str, idx: &[usize]) -> (usize, Rat) {
        // antisymmetric components are stored with ascending indices
        let (key, sign) = if idx.len() == 2 && idx[0] > idx[1] {
            (vec![idx[1], idx[0]], int(-1))
        } else {
            (idx.to_vec(), int(1))
        };
        let ci = self
            .comps
            .iter()
            .position(|c| c.field == field && c.idx == key)
            .expect("component exists");
        (ci, sign)
    }

    /// The component itself (`velocity = false`) or its time derivative.
    fn value(&self, ci: usize, velocity: bool) -> Expr {
        let c = &self.comps[ci];
        let mut e = Expr::default();
        for n in 0..self.levels {
            if let Some(&off) = self.offsets.get(&(n, ci)) {
                let base = if velocity { 0 } else { self.nv() };
                let lin: Lin = (0..self.d())
                    .map(|s| vec![(base + off + s, Rat::one())])
                    .collect();
                e.parts.insert((c.mode, n), lin);
            }
        }
        e
    }

    fn spatial(&self, i: usize, e: &Expr) -> Expr {
        let dm = &self.channel.d[i - 1];
        let mut out = Expr::default();
        for (key, lin) in &e.parts {
            let mut new: Lin = vec![Vec::new(); self.d()];
            for (a, row) in new.iter_mut().enumerate() {
                for (b, terms) in lin.iter().enumerate() {
                    let c = dm.get(a, b);
                    if c.is_zero() {
                        continue;
                    }
                    for (j, x) in terms {
                        row.push((*j, x * c));
                    }
                }
            }
            out.parts.insert(*key, new);
        }
        out
    }

    /// `∂_5`: `cos(ny/R) -> -(n/R) sin(ny/R)`, `sin(ny/R) -> (n/R) cos(ny/R)`.
    fn compact(&self, e: &Expr) -> Expr {
        let mut out = Expr::default();
        for ((mode, n), lin) in &e.parts {
            if *n == 0 {
                continue;
            }
            let k = Rat::from_integer((*n).into()) / &self.spec.params.radius;
            let (target, c) = match mode {
                Mode::Cos => (Mode::Sin, -k),
                Mode::Sin => (Mode::Cos, k),
            };
            let mut single = Expr::default();
            single.parts.insert((target, *n), lin.clone());
            out.add_scaled(&single, &c, self.d());
        }
        out
    }

    /// `∂_M` of a field component.
    fn deriv(&self, m: usize, field: &str, idx: &[usize]) -> Expr {
        let (ci, sign) = self.comp_index(field, idx);
        let d = self.d();
        match m {
            0 => self.value(ci, true).scaled(&sign, d),
            5 => self.compact(&self.value(ci, false)).scaled(&sign, d),
            i => self.spatial(i, &self.value(ci, false)).scaled(&sign, d),
        }
    }

    fn component(&self, field: &str, idx: &[usize]) -> Expr {
        let (ci, sign) = self.comp_index(field, idx);
        self.value(ci, false).scaled(&sign, self.d())
    }

    /// `F_MN = ∂_M A_N − ∂_N A_M`.
    fn field_strength(&self, field: &str, m: usize, n: usize) -> Expr {
        let mut f = self.deriv(m, field, &[n]);
        f.add_scaled(&self.deriv(n, field, &[m]), &int(-1), self.d());
        f
    }

    /// Accumulates `c · ∫ dy Σ_slots X·Y` into the full (q̇, q) bilinear matrix.
    fn bilinear(&self, acc: &mut Mat, c: &Rat, x: &Expr, y: &Expr) {
        for (kx, lx) in &x.parts {
            for (ky, ly) in &y.parts {
                let w = overlap(*kx, *ky);
                if w.is_zero() {
                    continue;
                }
                let cw = c * &w;
                for (tx, ty) in lx.iter().zip(ly) {
                    for (i, a) in tx {
                        let ca = &cw * a;
                        for (j, b) in ty {
                            acc.add_at(*i, *j, &(&ca * b));
                        }
                    }
                }
            }
        }
    }

    fn lagrangian_matrix(&self) -> Mat {
        let size = 2 * self.nv();
        let mut acc = Mat::zeros(size, size);
        let m2 = &self.spec.params.m * &self.spec.params.m;
        for term in &self.spec.terms {
            match term {
                TermSpec::FieldStrengthSq { field, coeff } => {
                    for (a, &m) in INDICES.iter().enumerate() {
                        for &n in &INDICES[a + 1..] {
                            let f = self.field_strength(field, m, n);
                            let c = int(2) * coeff * eta(m) * eta(n);
                            self.bilinear(&mut acc, &c, &f, &f);
                        }
                    }
                }
                TermSpec::MassSq { field, coeff } => {
                    for &m in &INDICES {
                        let a = self.component(field, &[m]);
                        let c = coeff * &m2 * eta(m);
                        self.bilinear(&mut acc, &c, &a, &a);
                    }
                }
                TermSpec::BfCoupling {
                    bfield,
                    afield,
                    coeff,
                } => {
                    for (a, &m) in INDICES.iter().enumerate() {
                        for &n in &INDICES[a + 1..] {
                            let b = self.component(bfield, &[m, n]);
                            let f = self.field_strength(afield, m, n);
                            self.bilinear(&mut acc, &(int(2) * coeff), &b, &f);
                        }
                    }
                }
            }
        }
        acc
    }
}

/// All KK levels `0..truncation` of a compactified theory on one channel.
#[derive(Debug, Clone)]
pub struct KKTower {
    pub truncation: u32,
    pub levels: Vec<QuadraticPhaseModel>,
    pub channel: SpatialChannel,
}

impl KKTower {
    pub fn level(&self, n: u32) -> Option<&QuadraticPhaseModel> {
        self.levels.iter().find(|m| m.level == n)
    }

    /// Block-diagonal model over all levels.
    pub fn combined(&self) -> QuadraticPhaseModel {
        let vars = self.levels.iter().flat_map(|m| m.vars.clone()).collect();
        let blocks = |f: fn(&QuadraticPhaseModel) -> &Mat| {
            Mat::block_diag(&self.levels.iter().map(|m| f(m).clone()).collect::<Vec<_>>())
        };
        QuadraticPhaseModel {
            level: 0,
            vars,
            w: blocks(|m| &m.w),
            n: blocks(|m| &m.n),
            v: blocks(|m| &m.v),
            multiplicity: self.channel.dim,
        }
    }
}

pub fn compactify(
    spec: &TheorySpec5D,
    k_levels: u32,
    channel: &SpatialChannel,
) -> Result<KKTower, KaluzaError> {
    if k_levels == 0 {
        return Err(KaluzaError::NoLevels);
    }
    spec.validate()?;
    let red = Reducer::new(spec, channel, k_levels);
    let nv = red.nv();
    let m = red.lagrangian_matrix();
    let s = (&m + &m.transpose()).scale(&Rat::new(1.into(), 2.into()));
    let two = int(2);
    let w_full = s.block(0, 0, nv, nv).scale(&two);
    let n_full = s.block(0, nv, nv, nv).scale(&two);
    let v_full = s.block(nv, nv, nv, nv).scale(&int(-2));

    let mut levels = Vec::new();
    let by_level: Vec<Vec<usize>> = (0..k_levels)
        .map(|n| (0..nv).filter(|&i| red.vars[i].level == n).collect())
        .collect();
    for (a, ia) in by_level.iter().enumerate() {
        for (b, ib) in by_level.iter().enumerate() {
            if a == b {
                continue;
            }
            for mat in [&w_full, &n_full, &v_full] {
                if !mat.select(ia, ib).is_zero() {
                    return Err(KaluzaError::LevelCoupling(a as u32, b as u32));
                }
            }
        }
    }
    for (n, idx) in by_level.iter().enumerate() {
        levels.push(QuadraticPhaseModel {
            level: n as u32,
            vars: idx.iter().map(|&i| red.vars[i].clone()).collect(),
            w: w_full.select(idx, idx),
            n: n_full.select(idx, idx),
            v: v_full.select(idx, idx),
            multiplicity: channel.dim,
        });
    }
    Ok(KKTower {
        truncation: k_levels,
        levels,
        channel: channel.clone(),
    })
}

/// Phase-space dimension per spatial point.
pub fn phase_dim(tower: &KKTower) -> usize {
    let vars: usize = tower.levels.iter().map(|m| m.dim()).sum();
    2 * vars / tower.channel.dim
}

/// Coefficient matrix `K` of the mass term `½ K^{MN} A_M A_N` written with
/// the metric pulled out, i.e. `L ⊃ ½ Σ K_MN A_M A^N`, on a zero channel.
/// `components` lists component labels such as `A_0`.
pub fn mass_block(model: &QuadraticPhaseModel, components: &[&str]) -> Option<Mat> {
    if model.multiplicity != 1 {
        return None;
    }
    let idx: Vec<usize> = components
        .iter()
        .map(|c| model.var_index(c, 0))
        .collect::<Option<_>>()?;
    let signs: Vec<Rat> = idx
        .iter()
        .map(|&i| {
            if model.vars[i].component.ends_with("_0") {
                int(-1)
            } else {
                int(1)
            }
        })
        .collect();
    Some(&(-&model.v.select(&idx, &idx)) * &Mat::diag(&signs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactla::rat;
    use crate::model::{builtin_bfproca5d, builtin_proca5d};

    #[test]
    fn zero_channel() {
        let c = channel_zero();
        assert_eq!(c.dim, 1);
        assert_eq!(c.d[0], Mat::zeros(1, 1));
        assert!(c.invariants_hold());
    }

    #[test]
    fn plane_channel_algebra() {
        let c = channel_plane(rat(1, 2), rat(1, 3), rat(1, 5)).unwrap();
        assert!(c.invariants_hold());
        let p12 = &c.d[0] * &c.d[1];
        assert_eq!(p12, Mat::identity(2).scale(&rat(-1, 6)));
        assert_eq!(p12, &c.d[1] * &c.d[0]);
        let k2 = rat(1, 4) + rat(1, 9) + rat(1, 25);
        assert_eq!(c.laplacian(), Mat::identity(2).scale(&-k2));
        assert_eq!(
            channel_plane(int(0), int(0), int(0)),
            Err(KaluzaError::ZeroWavevector)
        );
    }

    #[test]
    fn proca_hessians() {
        let spec = builtin_proca5d(rat(3, 7), rat(2, 5)).unwrap();
        let t = compactify(&spec, 3, &channel_zero()).unwrap();
        assert_eq!(t.levels[0].w, Mat::diag(&[int(0), int(1), int(1), int(1)]));
        for lvl in &t.levels[1..] {
            assert_eq!(lvl.w, Mat::diag(&[int(0), int(1), int(1), int(1), int(1)]));
        }
        let v0 = t.levels[0].v.select(&[1, 2, 3], &[1, 2, 3]);
        let m2 = rat(9, 49);
        assert_eq!(v0, Mat::identity(3).scale(&-m2));
    }

    #[test]
    fn odd_components_have_no_zero_mode() {
        let spec = builtin_bfproca5d(rat(3, 7), rat(2, 5)).unwrap();
        let t = compactify(&spec, 2, &channel_zero()).unwrap();
        assert!(t.levels[0].vars.iter().all(|v| !v.component.contains('5')));
        assert_eq!(t.levels[0].dim(), 10);
        assert_eq!(t.levels[1].dim(), 15);
    }

    #[test]
    fn phase_dims() {
        let c = channel_plane(int(1), rat(1, 2), int(0)).unwrap();
        for k in 1..=4u32 {
            let p = compactify(&builtin_proca5d(rat(3, 7), rat(2, 5)).unwrap(), k, &c).unwrap();
            assert_eq!(phase_dim(&p), (10 * k - 2) as usize);
            let b = compactify(&builtin_bfproca5d(rat(3, 7), rat(2, 5)).unwrap(), k, &c).unwrap();
            assert_eq!(phase_dim(&b), (20 + 30 * (k - 1)) as usize);
        }
    }

    #[test]
    fn rejects_zero_levels() {
        let spec = builtin_proca5d(int(1), int(1)).unwrap();
        assert_eq!(
            compactify(&spec, 0, &channel_zero()).unwrap_err(),
            KaluzaError::NoLevels
        );
    }
}
