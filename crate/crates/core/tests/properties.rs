use proptest::prelude::*;

use ppcf_core::machine::{enumerate, EnumLimits, State};
use ppcf_core::metrics::{dist_ground, glb, lub, norm_ground, GroundVec};
use ppcf_core::semantics::{deriv_series, eval_series, eval_series_scalar, prob_zero, Dual, PowerSeries1, Scalar, SemParams};
use ppcf_core::{parse, Rat};

/// A sub-probability vector of the given length.
fn ground(len: usize) -> impl Strategy<Value = GroundVec> {
    (prop::collection::vec(0.0..1.0f64, len), 0.0..=1.0f64).prop_map(|(raw, mass)| {
        let total: f64 = raw.iter().sum();
        let v = if total > 0.0 { raw.iter().map(|x| x / total * mass).collect() } else { raw };
        GroundVec::new(v).unwrap()
    })
}

fn triple() -> impl Strategy<Value = (GroundVec, GroundVec, GroundVec)> {
    (1usize..8).prop_flat_map(|n| (ground(n), ground(n), ground(n)))
}

fn series() -> impl Strategy<Value = PowerSeries1> {
    (prop::collection::vec(0.0..1.0f64, 1..12), 0.0..=1.0f64).prop_map(|(raw, mass)| {
        let total: f64 = raw.iter().sum();
        PowerSeries1::new(raw.iter().map(|c| c / total.max(1e-300) * mass).collect()).unwrap()
    })
}

fn rat_prob() -> impl Strategy<Value = Rat> {
    (0i64..=12, 1i64..=12).prop_map(|(a, b)| Rat::new(a.min(b), b))
}

/// Small closed nat terms built from a fixed shape with random coin biases.
fn coin_term() -> impl Strategy<Value = String> {
    (rat_prob(), rat_prob(), rat_prob(), 0usize..5).prop_map(|(a, b, c, shape)| match shape {
        0 => format!("ifz coin({a}) then coin({b}) else coin({c})"),
        1 => format!("let x = coin({a}) in ifz x then coin({b}) else x"),
        2 => format!("(fun x: nat => ifz x then x else coin({b})) coin({a})"),
        3 => format!("fix (fun f: nat -> nat => fun n: nat => ifz coin({a}) then n else f (pred n)) (ifz coin({b}) then 0 else 2)"),
        _ => format!("(fun g: nat -> nat => g (g 0)) (fun x: nat => ifz coin({a}) then x else succ x)"),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_is_a_metric((x, y, z) in triple()) {
        prop_assert!(dist_ground(&x, &x).abs() < 1e-12);
        prop_assert!((dist_ground(&x, &y) - dist_ground(&y, &x)).abs() < 1e-12);
        prop_assert!(dist_ground(&x, &z) <= dist_ground(&x, &y) + dist_ground(&y, &z) + 1e-12);
        prop_assert!(dist_ground(&x, &y) <= norm_ground(&x) + norm_ground(&y) + 1e-12);
    }

    #[test]
    fn lattice_identities((x, y, _z) in triple()) {
        let (m, j) = (glb(&x, &y), lub(&x, &y));
        for n in 0..x.entries().len() {
            prop_assert!((j.get(n) + m.get(n) - x.get(n) - y.get(n)).abs() < 1e-12);
            prop_assert!((glb(&x, &j).get(n) - x.get(n)).abs() < 1e-12);
            prop_assert!((lub(&x, &m).get(n) - x.get(n)).abs() < 1e-12);
            prop_assert!(m.get(n) <= x.get(n) && x.get(n) <= j.get(n));
        }
        prop_assert!(m.in_ball());
    }

    #[test]
    fn dual_tangent_is_the_series_derivative(t in series(), x in 0.0..1.0f64) {
        let d = eval_series_scalar(&t, &Dual::variable(x, 0, 1));
        prop_assert!((d.primal - eval_series(&t, x)).abs() < 1e-12);
        prop_assert!((d.tangent(0) - deriv_series(&t, x)).abs() < 1e-12);
    }

    #[test]
    fn dual_chain_rule(s in series(), t in series(), x in 0.0..1.0f64) {
        // (s ∘ t)' = s'(t(x)) · t'(x); t maps [0, 1] into [0, 1].
        let inner = eval_series_scalar(&t, &Dual::variable(x, 0, 1));
        let outer = eval_series_scalar(&s, &inner);
        let want = deriv_series(&s, eval_series(&t, x)) * deriv_series(&t, x);
        prop_assert!((outer.tangent(0) - want).abs() < 1e-10);
    }

    #[test]
    fn series_are_monotone(t in series(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(eval_series(&t, lo) <= eval_series(&t, hi) + 1e-15);
        prop_assert!(eval_series(&t, hi) <= t.mass() + 1e-12);
    }

    #[test]
    fn semantics_is_adequate(src in coin_term()) {
        let m = parse(&src).unwrap();
        let e = enumerate(&State::initial(m.clone()).unwrap(), &EnumLimits::new(100_000, 30));
        let sem = prob_zero::<f64>(&m, &SemParams::default()).unwrap().value;
        let (acc, res) = (e.accept_total.to_f64(), e.residual.to_f64());
        prop_assert!(acc <= sem + 1e-9);
        prop_assert!(sem <= acc + res + 1e-9);
        if e.residual.is_zero() {
            prop_assert!((sem - acc).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_a_branch_bias_raises_termination(a in rat_prob(), b in rat_prob()) {
        // coin(r) yields 0 with probability r, so the term is monotone in r.
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at = |r: &Rat| {
            let m = parse(&format!("fix (fun f: nat -> nat => fun n: nat => ifz coin({r}) then 0 else ifz coin(1/2) then f n else 1) 0")).unwrap();
            prob_zero::<f64>(&m, &SemParams::default()).unwrap().value
        };
        prop_assert!(at(&lo) <= at(&hi) + 1e-9);
    }

    #[test]
    fn scalar_homomorphism(a in rat_prob(), b in rat_prob()) {
        let (fa, fb) = (a.to_f64(), b.to_f64());
        prop_assert!((Scalar::mul(&a, &b).to_f64() - fa * fb).abs() < 1e-15);
        prop_assert!((Scalar::add(&a, &b).to_f64() - (fa + fb)).abs() < 1e-15);
    }
}
