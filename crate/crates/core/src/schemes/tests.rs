use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fields::{init_field, HopfParams, InitialField};
use crate::mesh::{CuboidDomain, StructuredHexMesh};
use crate::scalar::norm_inf;

fn hopf_ops(n: [usize; 3]) -> OperatorSet<f64> {
    OperatorSet::new(StructuredHexMesh::new(CuboidDomain::centered(4.0, 10.0).unwrap(), n[0], n[1], n[2]).unwrap())
}

fn hopf_state(ops: &OperatorSet<f64>, kind: SchemeKind) -> SchemeState<f64> {
    let b = init_field(ops, &InitialField::Hopf(HopfParams::default()), 5).unwrap();
    SchemeState::new(&Diagnostics::new(ops), kind, b).unwrap()
}

fn seeded(n: usize, seed: u64, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

fn fd_check(kind: SchemeKind, mode: Option<LagrangeMode>) {
    let ops = hopf_ops([3, 3, 4]);
    let state = hopf_state(&ops, kind);
    let stepper = Stepper::new(&ops, kind);
    let mut sys = stepper.system(&state, 0.7, 0.9, mode).unwrap();
    let x0 = sys.initial_guess(&state).unwrap();
    let scale = norm_inf(&x0).max(1.0);
    let pert = seeded(x0.len(), 11, 0.1 * scale);
    let mut x: Vec<f64> = x0.iter().zip(&pert).map(|(a, b)| a + b).collect();
    let n = sys.field_dim();
    // nonzero multipliers exercise their couplings
    for (k, v) in x[n..].iter_mut().enumerate() {
        *v = 0.3 - 0.2 * k as f64;
    }
    for seed in 0..3 {
        let v = seeded(x.len(), 100 + seed, 1.0);
        let jv = sys.jacobian_apply(&x, &v).unwrap();
        let eps = 1e-5 * scale;
        let shift = |s: f64| x.iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
        let rp = sys.residual(&shift(eps)).unwrap();
        let rm = sys.residual(&shift(-eps)).unwrap();
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let err = norm2(&fd.iter().zip(&jv).map(|(a, b)| a - b).collect::<Vec<f64>>()) / norm2(&jv);
        assert!(err <= 1e-6, "{kind} {mode:?}: relative Jacobian error {err:e}");
    }
}

#[test]
fn jacobian_nonconservative() {
    fd_check(SchemeKind::NonConservative, None);
}

#[test]
fn jacobian_projection() {
    fd_check(SchemeKind::Projection, None);
}

#[test]
fn jacobian_lagrange_full() {
    fd_check(SchemeKind::LagrangeMultiplier, Some(LagrangeMode::Full));
}

#[test]
fn jacobian_lagrange_reduced() {
    fd_check(SchemeKind::LagrangeMultiplier, Some(LagrangeMode::Reduced));
}

#[test]
fn zero_field_is_fixed_point() {
    let ops = hopf_ops([2, 2, 3]);
    let diag = Diagnostics::new(&ops);
    for kind in SchemeKind::ALL {
        let mut st = SchemeState::new(&diag, kind, FieldCoefficients::zeros(&ops.hdiv)).unwrap();
        let rep = Stepper::new(&ops, kind).step(&mut st, 1.0, 1.0).unwrap();
        assert_eq!(rep.newton_iters, 0, "{kind}");
        assert!(st.b.values.iter().chain(&st.e.values).chain(&st.j.values).all(|&v| v == 0.0));
        assert_eq!((st.lambda_e, st.lambda_h), (0.0, 0.0));
        assert_eq!(st.t, 1.0);
    }
}

#[test]
fn short_runs_preserve_structure() {
    let ops = hopf_ops([3, 3, 4]);
    let diag = Diagnostics::new(&ops);
    for kind in SchemeKind::ALL {
        let mut st = hopf_state(&ops, kind);
        let stepper = Stepper::new(&ops, kind);
        let h0 = match &st.a {
            Some(a) => crate::diagnostics::helicity(&ops, a, &st.b).unwrap(),
            None => diag.helicity_of(&st.b).unwrap(),
        };
        let mut e_prev = st.energy(&ops);
        for _ in 0..4 {
            let rep = stepper.step(&mut st, 1.0, 1.0).unwrap();
            assert!(rep.max_newton_iters <= 10, "{kind}: {rep:?}");
            let e = st.energy(&ops);
            assert!(e <= e_prev + 1e-9 * e_prev.max(1.0), "{kind}: energy {e_prev} -> {e}");
            e_prev = e;
            let div = norm_inf(&ops.apply_div(&st.b.values));
            assert!(div <= 1e-11 * norm2(&st.b.values).max(1.0), "{kind}: div {div:e}");
            if kind == SchemeKind::Projection {
                assert!(rep.orthogonality.unwrap() <= 1e-12, "{rep:?}");
            }
            if kind == SchemeKind::LagrangeMultiplier {
                assert!(rep.helicity_residual.unwrap() <= 1e-9, "{rep:?}");
                if let Some(r) = rep.energy_residual {
                    assert!(r <= 1e-9, "{rep:?}");
                }
                let b = ops.apply_curl(&st.a.as_ref().unwrap().values);
                assert_eq!(b, st.b.values);
            }
        }
        if kind.conserves_helicity() {
            let h = diag.helicity_of(&st.b).unwrap();
            assert!((h - h0).abs() <= 1e-9 * h0.abs().max(1.0), "{kind}: helicity {h0} -> {h}");
        }
    }
}

#[test]
fn block_and_dense_saddle_solves_agree() {
    let ops = hopf_ops([3, 3, 4]);
    let mut a = hopf_state(&ops, SchemeKind::LagrangeMultiplier);
    let mut b = a.clone();
    let mut s1 = Stepper::new(&ops, SchemeKind::LagrangeMultiplier);
    s1.lagrange.verify_monolithic = true;
    let mut s2 = Stepper::new(&ops, SchemeKind::LagrangeMultiplier);
    s2.lagrange.solver = SaddleSolver::Dense;
    let rep = s1.step(&mut a, 1.0, 1.0).unwrap();
    s2.step(&mut b, 1.0, 1.0).unwrap();
    assert!(rep.monolithic_error.unwrap() <= 1e-9, "{rep:?}");
    assert!(rep.max_schur_iters <= 2);
    let d = norm_inf(&a.b.values.iter().zip(&b.b.values).map(|(x, y)| x - y).collect::<Vec<_>>());
    assert!(d <= 1e-9 * norm_inf(&a.b.values));
}

#[test]
fn switching_rules() {
    let ops = hopf_ops([2, 2, 3]);
    let mut st = hopf_state(&ops, SchemeKind::LagrangeMultiplier);
    let mut s = Stepper::new(&ops, SchemeKind::LagrangeMultiplier);
    assert_eq!(s.select_mode(&st), LagrangeMode::Full);
    st.energy_rate = Some(-1.0);
    assert_eq!(s.select_mode(&st), LagrangeMode::Reduced);
    st.energy_rate = Some(-1e-6);
    assert_eq!(s.select_mode(&st), LagrangeMode::Full);
    s.lagrange.switch_rule = SwitchRule::Literal;
    st.energy_rate = Some(-1.0);
    assert_eq!(s.select_mode(&st), LagrangeMode::Full);
    st.energy_rate = Some(1.0);
    assert_eq!(s.select_mode(&st), LagrangeMode::Reduced);
}

#[test]
fn phases_and_parsing() {
    assert!(TimePhase::new(0.0, 1.0, 3).is_err());
    assert!(TimePhase::new(1.0, -1.0, 3).is_err());
    assert!(TimePhase::new(1.0, 1.0, 0).is_err());
    let p = TimePhase::until(100.0, 0.1, 100.0, 10000.0).unwrap();
    assert_eq!(p.n_steps, 99);
    let p = TimePhase::until(100.0, 0.1, 10.0, 10000.0).unwrap();
    assert_eq!(p.n_steps, 100);
    assert_eq!("lm".parse::<SchemeKind>().unwrap(), SchemeKind::LagrangeMultiplier);
    assert!("frobnicate".parse::<SchemeKind>().is_err());
    for k in SchemeKind::ALL {
        assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
    }
}

#[test]
fn mismatched_state_rejected() {
    let ops = hopf_ops([2, 2, 2]);
    let mut st = hopf_state(&ops, SchemeKind::Projection);
    let r = Stepper::new(&ops, SchemeKind::NonConservative).step(&mut st, 1.0, 1.0);
    assert!(matches!(r, Err(SchemeError::StateMismatch { .. })));
}
