mod common;

use common::*;
use kkdirac::dirac::{analyze, bracket, bracket_with_form, DiracAnalysis};
use kkdirac::dynamics::{project_onto, project_to_surface};
use kkdirac::exactla::{dot, int, is_zero_vec, rat, Mat, Rat};
use kkdirac::kaluza::{channel_plane, channel_zero, compactify, mass_block, SpatialChannel};
use kkdirac::model::{builtin_bfproca5d, builtin_maxwell5d, builtin_proca5d};
use num_traits::Zero;

fn plane() -> SpatialChannel {
    channel_plane(rat(1, 2), int(2), int(-1)).unwrap()
}

fn proca(m: &Rat, r: &Rat, k: u32, ch: &SpatialChannel) -> Vec<DiracAnalysis> {
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    compactify(&spec, k, ch)
        .unwrap()
        .levels
        .iter()
        .map(analyze)
        .collect()
}

#[test]
fn proca_lagrangian_matches_component_form() {
    let (m, r) = (rat(3, 2), rat(2, 3));
    let ch = plane();
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    let mut g = rng(1);
    for model in &tower.levels {
        let v = View::new(model, &ch);
        for _ in 0..20 {
            let qd = random_rats(model.dim(), &mut g);
            let q = random_rats(model.dim(), &mut g);
            assert_eq!(
                model.lagrangian(&qd, &q),
                proca_lagrangian(&v, model.level, &m, &r, &qd, &q)
            );
        }
    }
}

#[test]
fn bf_lagrangian_matches_component_form_with_a5_mass() {
    let (m, r) = (rat(5, 4), rat(3, 2));
    let ch = plane();
    let spec = builtin_bfproca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    let mut g = rng(2);
    for model in &tower.levels {
        let v = View::new(model, &ch);
        for _ in 0..20 {
            let qd = random_rats(model.dim(), &mut g);
            let q = random_rats(model.dim(), &mut g);
            let engine = model.lagrangian(&qd, &q);
            assert_eq!(
                engine,
                bf_lagrangian(&v, model.level, &m, &r, &qd, &q, true)
            );
            if model.level > 0 {
                let without = bf_lagrangian(&v, model.level, &m, &r, &qd, &q, false);
                let a5 = v.get(&q, "A_5");
                assert_eq!(&without - &engine, rat(1, 4) * &m * &m * sq(&a5));
            }
        }
    }
}

#[test]
fn bf_counts_do_not_depend_on_a5_mass() {
    let (m, r) = (rat(5, 4), rat(3, 2));
    let ch = plane();
    let spec = builtin_bfproca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 2, &ch).unwrap();
    for model in &tower.levels[1..] {
        let mut stripped = model.clone();
        for s in 0..ch.dim {
            let i = model.var_index("A_5", s).unwrap();
            // L ⊃ −(m²/4)A₅² contributes m²/2 to V
            stripped.v.add_at(i, i, &-(rat(1, 2) * &m * &m));
        }
        let a = analyze(model).report;
        let b = analyze(&stripped).report;
        assert_eq!(a.first_class, b.first_class);
        assert_eq!(a.second_class, b.second_class);
        assert_eq!(a.dof_per_point, b.dof_per_point);
    }
}

fn on_primary_surface(v: &View, z: &mut [Rat]) {
    for s in 0..v.slots() {
        let i = v.model.var_index("A_0", s).unwrap();
        z[v.dim() + i] = Rat::zero();
    }
}

#[test]
fn proca_canonical_hamiltonian_matches_component_form() {
    let (m, r) = (rat(3, 2), rat(2, 3));
    let ch = plane();
    let levels = proca(&m, &r, 3, &ch);
    let mut g = rng(3);
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    for (model, a) in tower.levels.iter().zip(&levels) {
        let v = View::new(model, &ch);
        for _ in 0..20 {
            let mut z = random_rats(model.phase_dim(), &mut g);
            on_primary_surface(&v, &mut z);
            assert_eq!(a.hc.value(&z), proca_hc(&v, model.level, &m, &r, &z));
        }
    }
}

#[test]
fn hamiltonian_is_independent_of_velocity_choice() {
    let ch = plane();
    let spec = builtin_bfproca5d(rat(2, 3), rat(5, 2)).unwrap();
    let tower = compactify(&spec, 2, &ch).unwrap();
    let mut g = rng(4);
    for model in &tower.levels {
        let a = analyze(model);
        let n = model.dim();
        let kernel = model.w.null_space();
        for _ in 0..10 {
            // a point on the primary surface: p = W u + N q
            let q = random_rats(n, &mut g);
            let u = random_rats(n, &mut g);
            let mut p = model.w.mul_vec(&u);
            for (pi, x) in p.iter_mut().zip(model.n.mul_vec(&q)) {
                *pi += x;
            }
            let mut z = q.clone();
            z.extend(p);
            // any other solution of W u* = p − N q
            let mut u2 = u.clone();
            for kv in &kernel {
                let c = random_rats(1, &mut g).remove(0);
                for (x, y) in u2.iter_mut().zip(kv) {
                    *x += &c * y;
                }
            }
            let h = rat(1, 2) * model.w.bilinear(&u2, &u2) + rat(1, 2) * model.v.bilinear(&q, &q);
            assert_eq!(a.hc.value(&z), h);
        }
    }
}

/// Slot whose secondary matches the engine's constraint `c`, if any.
fn matching_secondary(v: &View, n: u32, m: &Rat, r: &Rat, grad: &[Rat]) -> Option<usize> {
    (0..v.slots()).find(|&s| {
        let g = gradient(v.model.phase_dim(), |z| proca_secondary(v, n, m, r, z, s));
        g == grad
    })
}

#[test]
fn proca_constraints_have_the_closed_form() {
    let (m, r) = (rat(7, 3), rat(3, 4));
    let ch = plane();
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    for model in &tower.levels {
        let v = View::new(model, &ch);
        let a = analyze(model);
        let prim: Vec<_> = a
            .tower
            .constraints
            .iter()
            .filter(|c| c.generation == 1)
            .collect();
        let sec: Vec<_> = a
            .tower
            .constraints
            .iter()
            .filter(|c| c.generation == 2)
            .collect();
        assert_eq!(prim.len(), ch.dim);
        assert_eq!(sec.len(), ch.dim);
        for (s, c) in prim.iter().enumerate() {
            assert_eq!(
                c.grad,
                gradient(model.phase_dim(), |z| proca_primary(&v, z, s))
            );
        }
        for c in sec {
            assert!(matching_secondary(&v, model.level, &m, &r, &c.grad).is_some());
        }
    }
}

#[test]
fn corrected_excited_multiplier_matches_engine() {
    let (m, r) = (rat(7, 3), rat(3, 4));
    let ch = plane();
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    let mut g = rng(5);
    for model in &tower.levels[1..] {
        let v = View::new(model, &ch);
        let a = analyze(model);
        for (mult, &i) in a
            .report
            .multipliers
            .iter()
            .zip(&a.classification.second_class)
        {
            let c = &a.tower.constraints[i];
            if c.generation != 1 {
                continue;
            }
            let s = (0..ch.dim)
                .find(|&s| c.grad == gradient(model.phase_dim(), |z| proca_primary(&v, z, s)))
                .unwrap();
            for _ in 0..20 {
                let z = random_rats(model.phase_dim(), &mut g);
                assert_eq!(
                    dot(&mult.functional, &z),
                    lambda1_excited_corrected(&v, model.level, &r, &z, s)
                );
            }
        }
    }
}

#[test]
fn reference_extended_hamiltonian_is_minus_canonical_on_surface() {
    let (m, r) = (rat(3, 2), rat(2, 3));
    let ch = plane();
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    let mut g = rng(6);
    let mut differs_off_surface = false;
    for model in &tower.levels {
        let v = View::new(model, &ch);
        let a = analyze(model);
        let he = a.extended_form();
        for _ in 0..10 {
            let raw = random_rats(model.phase_dim(), &mut g);
            let z = project_to_surface(&raw, &a.tower);
            let hc = a.hc.value(&z);
            assert_eq!(rat(1, 2) * he.bilinear(&z, &z), hc);
            assert_eq!(proca_extended_reference(&v, model.level, &m, &r, &z), -hc);
            if rat(1, 2) * he.bilinear(&raw, &raw) != a.hc.value(&raw) {
                differs_off_surface = true;
            }
        }
    }
    assert!(differs_off_surface);
}

#[test]
fn second_class_brackets_with_extended_hamiltonian_vanish_weakly() {
    let ch = plane();
    let levels = proca(&rat(3, 2), &rat(2, 3), 2, &ch);
    let mut g = rng(7);
    for a in &levels {
        let he = a.extended_form();
        let grads: Vec<Vec<Rat>> = a.tower.constraints.iter().map(|c| c.grad.clone()).collect();
        for &i in &a.classification.second_class {
            let f = bracket_with_form(&a.tower.omega, &grads[i], &he);
            for _ in 0..10 {
                let z = project_onto(&random_rats(a.tower.dim(), &mut g), &grads);
                assert!(dot(&f, &z).is_zero());
            }
        }
    }
}

#[test]
fn multipliers_make_every_second_class_constraint_stationary() {
    let ch = plane();
    for a in proca(&rat(5, 3), &rat(4, 3), 3, &ch) {
        let om = &a.tower.omega;
        for &i in &a.classification.second_class {
            let gi = &a.tower.constraints[i].grad;
            let mut f = bracket_with_form(om, gi, &a.hc.form);
            for (mu, &j) in a
                .report
                .multipliers
                .iter()
                .zip(&a.classification.second_class)
            {
                let c = bracket(om, gi, &a.tower.constraints[j].grad);
                kkdirac::exactla::axpy(&mut f, &c, &mu.functional);
            }
            assert!(is_zero_vec(&f));
        }
    }
}

#[test]
fn maxwell_gauss_law_is_first_class() {
    let ch = plane();
    let spec = builtin_maxwell5d(rat(3, 2)).unwrap();
    let tower = compactify(&spec, 1, &ch).unwrap();
    let model = &tower.levels[0];
    let v = View::new(model, &ch);
    let a = analyze(model);
    assert!(a.classification.second_class.is_empty());
    assert_eq!(a.report.dirac_matrix, a.tower.omega);
    let mut expected: Vec<Vec<Rat>> = (0..ch.dim)
        .map(|s| gradient(model.phase_dim(), |z| proca_primary(&v, z, s)))
        .collect();
    expected.extend((0..ch.dim).map(|s| {
        gradient(model.phase_dim(), |z| {
            let pi: Vec<Vec<Rat>> = ["A_1", "A_2", "A_3"].iter().map(|c| v.p(z, c)).collect();
            v.div([&pi[0], &pi[1], &pi[2]])[s].clone()
        })
    }));
    let got: Vec<Vec<Rat>> = a.tower.constraints.iter().map(|c| c.grad.clone()).collect();
    assert_eq!(
        Mat::from_row_slices(&got, model.phase_dim()).rank(),
        2 * ch.dim
    );
    let both = Mat::from_row_slices(&[got, expected].concat(), model.phase_dim());
    assert_eq!(both.rank(), 2 * ch.dim);
}

#[test]
fn bf_zero_channel_drops_trivial_candidates() {
    let spec = builtin_bfproca5d(rat(3, 2), int(1)).unwrap();
    let tower = compactify(&spec, 1, &channel_zero()).unwrap();
    let a = analyze(&tower.levels[0]);
    assert!(!a.report.dropped_trivial.is_empty());
    assert!(a
        .report
        .dropped_trivial
        .iter()
        .any(|l| l.contains("B^12") || l.contains("B^13") || l.contains("B^23")));
    for c in &a.tower.constraints {
        assert!(!is_zero_vec(&c.grad));
    }
}

#[test]
fn proca_mass_block_from_component_lagrangian() {
    let (m, r) = (rat(3, 2), rat(2, 5));
    let ch = channel_zero();
    let spec = builtin_proca5d(m.clone(), r.clone()).unwrap();
    let tower = compactify(&spec, 3, &ch).unwrap();
    let eta = |c: &str| if c == "A_0" { int(-1) } else { int(1) };
    for model in &tower.levels {
        let v = View::new(model, &ch);
        let comps: Vec<&str> = ["A_0", "A_1", "A_2", "A_3", "A_5"]
            .into_iter()
            .filter(|c| v.has(c))
            .collect();
        let k = mass_block(model, &comps).unwrap();
        let zero = vec![Rat::zero(); model.dim()];
        for (a, ca) in comps.iter().enumerate() {
            let mut q = zero.clone();
            q[model.var_index(ca, 0).unwrap()] = int(1);
            // L(q = e_M) = ½ K_MM η_MM
            let l = proca_lagrangian(&v, model.level, &m, &r, &zero, &q);
            assert_eq!(k.get(a, a), &(int(2) * l * eta(ca)));
            for b in (a + 1)..comps.len() {
                assert!(k.get(a, b).is_zero());
            }
        }
    }
}
