//! Order-theoretic distances on ground sub-distributions, a Lipschitz
//! checker for one-variable series, and the tamed observational distance.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ast::{parse, typecheck_closed, Term, Ty};
use crate::rat::Rat;
use crate::semantics::{eval_series, interp, prob_zero, PowerSeries1, SemEnv, SemError, SemParams};
use crate::transform::{tamed, TransformError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("entry {index} is {value}, expected a finite nonnegative number")]
    Entry { index: usize, value: f64 },
    #[error("total mass {0} exceeds 1")]
    Mass(f64),
    #[error("`{term}` has type {ty}; distances are defined on nat only")]
    NotGround { term: String, ty: String },
    #[error("context `{term}` has type {ty}, expected nat -> nat")]
    BadContext { term: String, ty: String },
    #[error("taming probability must lie in [0, 1), got {0}")]
    Probability(String),
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// A nonnegative vector indexed by naturals; trailing entries are zero.
/// Vectors built by [`GroundVec::new`] lie in the unit ball; [`lub`] may
/// leave it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundVec(Vec<f64>);

impl GroundVec {
    pub fn new(v: Vec<f64>) -> Result<Self, MetricsError> {
        let g = Self::cone(v)?;
        let m = norm_ground(&g);
        if m > 1.0 + 1e-9 {
            return Err(MetricsError::Mass(m));
        }
        Ok(g)
    }

    /// Any nonnegative vector.
    pub fn cone(v: Vec<f64>) -> Result<Self, MetricsError> {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(MetricsError::Entry { index, value });
        }
        Ok(GroundVec(v))
    }

    pub fn unit(n: usize) -> Self {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        GroundVec(v)
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, n: usize) -> f64 {
        self.0.get(n).copied().unwrap_or(0.0)
    }

    pub fn in_ball(&self) -> bool {
        norm_ground(self) <= 1.0 + 1e-9
    }

    /// Random element of the unit ball with `len` entries.
    pub fn random(rng: &mut impl Rng, len: usize) -> Self {
        let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mass = rng.random::<f64>();
        GroundVec(if total > 0.0 { raw.iter().map(|x| x / total * mass).collect() } else { raw })
    }

    fn zip(&self, other: &GroundVec, f: impl Fn(f64, f64) -> f64) -> GroundVec {
        let n = self.0.len().max(other.0.len());
        GroundVec((0..n).map(|i| f(self.get(i), other.get(i))).collect())
    }
}

/// `Σ v_n`.
pub fn norm_ground(v: &GroundVec) -> f64 {
    v.0.iter().sum()
}

/// Pointwise minimum.
pub fn glb(u: &GroundVec, v: &GroundVec) -> GroundVec {
    u.zip(v, f64::min)
}

/// Pointwise maximum; equals `u + v − glb(u, v)` and may leave the unit ball.
pub fn lub(u: &GroundVec, v: &GroundVec) -> GroundVec {
    u.zip(v, f64::max)
}

/// `‖u − u∧v‖ + ‖v − u∧v‖`, which is `Σ |u_n − v_n|`.
pub fn dist_ground(u: &GroundVec, v: &GroundVec) -> f64 {
    let m = glb(u, v);
    norm_ground(&u.zip(&m, |a, b| a - b)) + norm_ground(&v.zip(&m, |a, b| a - b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub p: f64,
    /// `1 / (1 − p)`.
    pub constant: f64,
    pub max_ratio: f64,
    /// Pairs `(x, y, ratio)` breaking the bound.
    pub violations: Vec<(f64, f64, f64)>,
}

impl LipschitzReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `|t(x) − t(y)| / |x − y|`, 0 when `x = y`.
pub fn series_ratio(t: &PowerSeries1, x: f64, y: f64) -> f64 {
    if x == y {
        0.0
    } else {
        (eval_series(t, x) - eval_series(t, y)).abs() / (x - y).abs()
    }
}

/// Samples `n_pairs` pairs in `[0, p]` and checks
/// `|t(x) − t(y)| ≤ |x − y| / (1 − p) + 1e-12`.
pub fn lipschitz_check(t: &PowerSeries1, p: f64, n_pairs: usize, seed: u64) -> LipschitzReport {
    assert!((0.0..1.0).contains(&p), "radius must lie in [0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constant = 1.0 / (1.0 - p);
    let mut report = LipschitzReport { p, constant, max_ratio: 0.0, violations: Vec::new() };
    for _ in 0..n_pairs {
        let (x, y) = (rng.random::<f64>() * p, rng.random::<f64>() * p);
        let ratio = series_ratio(t, x, y);
        report.max_ratio = report.max_ratio.max(ratio);
        if (eval_series(t, x) - eval_series(t, y)).abs() > (x - y).abs() * constant + 1e-12 {
            report.violations.push((x, y, ratio));
        }
    }
    report
}

/// `fix (fun f: nat -> nat => fun x: nat => ifz x then 0 else f x)`:
/// returns 0 with probability `u₀ / (1 − Σ_{i≥1} u_i)` on input `u`, so it
/// separates `coin(0)` (probability 0) from any `coin(ε)`, ε > 0
/// (probability 1).
pub fn amplifier_context() -> Term {
    parse("fix (fun f: nat -> nat => fun x: nat => ifz x then 0 else f x)").expect("well-formed amplifier")
}

/// Named testing contexts of type `nat -> nat`.
pub fn builtin_contexts() -> Vec<(String, Term)> {
    [
        ("identity", "fun x: nat => x"),
        ("succ-then-test", "fun x: nat => ifz pred (succ x) then 1 else 0"),
        ("duplication", "fun x: nat => ifz x then x else 1"),
        ("let-duplication", "fun x: nat => let y = x in ifz y then y else 1"),
    ]
    .into_iter()
    .map(|(n, s)| (n.to_string(), parse(s).expect("well-formed context")))
    .chain(std::iter::once(("amplifier".to_string(), amplifier_context())))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextRow {
    pub context: String,
    pub prob1: f64,
    pub prob2: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TamedReport {
    pub rows: Vec<ContextRow>,
    /// Largest gap over the contexts; a lower bound on the tamed distance.
    pub empirical: f64,
    /// `p / (1 − p) · d(⟦m1⟧, ⟦m2⟧)`.
    pub bound: f64,
    pub denotational_distance: f64,
}

impl TamedReport {
    pub fn within_bound(&self, tol: f64) -> bool {
        self.empirical <= self.bound + tol
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("context,prob1,prob2,gap\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.11e},{:.11e},{:.11e}", r.context, r.prob1, r.prob2, r.gap);
        }
        out
    }
}

fn ground_denotation(m: &Term, params: &SemParams) -> Result<GroundVec, MetricsError> {
    let ty = typecheck_closed(m).map_err(SemError::from)?;
    if !ty.is_nat() {
        return Err(MetricsError::NotGround { term: m.to_string(), ty: ty.to_string() });
    }
    let v = interp::<f64>(m, &SemEnv::new(), params)?.value.to_vec(params.k);
    GroundVec::cone(v)
}

/// Gaps `|P(tamed(C,p) m1 →* 0) − P(tamed(C,p) m2 →* 0)|` over the given
/// contexts, against the denotational bound. `p = None` applies the
/// contexts untamed.
pub fn tamed_distance_estimate(
    m1: &Term,
    m2: &Term,
    p: Option<&Rat>,
    contexts: &[(String, Term)],
    params: &SemParams,
) -> Result<TamedReport, MetricsError> {
    let (d1, d2) = (ground_denotation(m1, params)?, ground_denotation(m2, params)?);
    let dist = dist_ground(&d1, &d2);
    let pf = match p {
        Some(p) if p.is_negative() || p >= &Rat::one() => return Err(MetricsError::Probability(p.to_string())),
        Some(p) => p.to_f64(),
        None => 1.0,
    };
    let want = Ty::arrow(Ty::Nat, Ty::Nat);
    for (_, c) in contexts {
        let ty = typecheck_closed(c).map_err(SemError::from)?;
        if ty != want {
            return Err(MetricsError::BadContext { term: c.to_string(), ty: ty.to_string() });
        }
    }
    let rows = contexts
        .par_iter()
        .map(|(name, c)| -> Result<ContextRow, MetricsError> {
            let ctx = match p {
                Some(p) => tamed(c, p, &Ty::Nat)?,
                None => c.clone(),
            };
            let prob1 = prob_zero::<f64>(&Term::app(ctx.clone(), m1.clone()), params)?.value;
            let prob2 = prob_zero::<f64>(&Term::app(ctx, m2.clone()), params)?.value;
            Ok(ContextRow { context: name.clone(), prob1, prob2, gap: (prob1 - prob2).abs() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let empirical = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let bound = if pf < 1.0 { pf / (1.0 - pf) * dist } else { f64::INFINITY };
    Ok(TamedReport { rows, empirical, bound, denotational_distance: dist })
}
