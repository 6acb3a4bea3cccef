//! Denotational semantics: terms as (truncated) sub-probability
//! distributions on the naturals and closures between them, expected label
//! counts as derivatives, and one-variable power series.

mod interp;
mod scalar;
mod series;

use std::collections::BTreeMap;
use std::rc::Rc;
use std::sync::Arc;

pub use interp::SemVal;
pub use scalar::{Dual, Scalar};
pub use series::{deriv_series, eval_series, eval_series_scalar, phi_half_prefix, PowerSeries1, SeriesError};

use crate::ast::{typecheck, Label, Name, Term, Ty, TyCtx, TypeError};
use crate::machine::{enumerate, EnumLimits, MachineError, State};
use crate::rat::Rat;
use crate::transform::{spy, spy_vars, TransformError};
use interp::Ev;

#[derive(Clone, Debug, PartialEq)]
pub struct SemParams {
    /// Naturals are represented by indices `0..k`.
    pub k: usize,
    pub fix_tol: f64,
    pub fix_max_iters: u64,
    pub tangent_tol: f64,
}

impl Default for SemParams {
    fn default() -> Self {
        SemParams { k: 64, fix_tol: 1e-12, fix_max_iters: 100_000, tangent_tol: 1e-9 }
    }
}

impl SemParams {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<(), SemError> {
        if self.k == 0 {
            return Err(SemError::Params("truncation bound must be at least 1".into()));
        }
        if !(self.fix_tol > 0.0 && self.tangent_tol > 0.0) {
            return Err(SemError::Params("tolerances must be positive".into()));
        }
        if self.fix_max_iters == 0 {
            return Err(SemError::Params("fixpoint iteration bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("the evaluator accepts neither marks nor labeled coins: {0}")]
    NotCore(String),
    #[error(transparent)]
    IllTyped(#[from] TypeError),
    #[error("environment: {0}")]
    Env(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degree {0} is too small: the interpolant misses the probe point")]
    DegreeTooSmall(usize),
}

/// What happened inside fixpoint iterations during one evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Fixpoints stopped by the iteration bound.
    pub fix_nonconverged: u64,
    /// Some tangent sequence was judged not Cauchy.
    pub tangent_diverged: bool,
    /// Largest total mass of any ground vector built.
    pub max_mass: f64,
    /// Largest number of iterations used by one fixpoint.
    pub fix_iterations: u64,
    pub newton_steps: u64,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.fix_nonconverged == 0 && !self.tangent_diverged
    }
}

/// Bindings for the free variables of a term.
#[derive(Clone, Debug)]
pub struct SemEnv<S: Scalar> {
    binds: Vec<(Name, Ty, SemVal<S>)>,
}

impl<S: Scalar> Default for SemEnv<S> {
    fn default() -> Self {
        SemEnv { binds: Vec::new() }
    }
}

impl<S: Scalar> SemEnv<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, x: &str, ty: Ty, val: SemVal<S>) -> Self {
        self.binds.retain(|(y, _, _)| &**y != x);
        self.binds.push((Arc::from(x), ty, val));
        self
    }

    pub fn ctx(&self) -> TyCtx {
        self.binds.iter().map(|(x, t, _)| (x.clone(), t.clone())).collect()
    }
}

/// An evaluated term. Diagnostics keep accumulating while a functional
/// value is applied.
pub struct Interp<S: Scalar> {
    pub value: SemVal<S>,
    ev: Rc<Ev>,
}

impl<S: Scalar> Interp<S> {
    pub fn diagnostics(&self) -> Diagnostics {
        self.ev.diag.borrow().clone()
    }
}

/// A scalar result together with the diagnostics of its evaluation.
#[derive(Clone, Debug)]
pub struct Evaluated<S> {
    pub value: S,
    pub diagnostics: Diagnostics,
}

pub fn interp<S: Scalar>(term: &Term, env: &SemEnv<S>, params: &SemParams) -> Result<Interp<S>, SemError> {
    params.validate()?;
    if !term.is_core() {
        return Err(SemError::NotCore(term.to_string()));
    }
    typecheck(&env.ctx(), term)?;
    for (x, ty, v) in &env.binds {
        let ok = match (ty.is_nat(), v) {
            (true, SemVal::Ground(g)) => g.len() == params.k,
            (true, SemVal::Zero) | (false, SemVal::Func(_)) | (false, SemVal::Zero) => true,
            _ => false,
        };
        if !ok {
            return Err(SemError::Env(format!("value bound to `{x}` does not have the shape of {ty} (with K = {})", params.k)));
        }
    }
    let ev = Rc::new(Ev { params: params.clone(), diag: Default::default(), probing: Default::default() });
    let value = interp::eval_in(&ev, &env.binds, term);
    Ok(Interp { value, ev })
}

fn closed_nat(term: &Term) -> Result<(), SemError> {
    let ty = typecheck(&TyCtx::new(), term)?;
    if !ty.is_nat() {
        return Err(SemError::Precondition(format!("expected a closed term of type nat, found {ty}")));
    }
    Ok(())
}

/// `⟦term⟧₀`, the probability of terminating at 0.
pub fn prob_zero<S: Scalar>(term: &Term, params: &SemParams) -> Result<Evaluated<S>, SemError> {
    closed_nat(term)?;
    let r = interp::<S>(term, &SemEnv::new(), params)?;
    Ok(Evaluated { value: r.value.entry(0), diagnostics: r.diagnostics() })
}

/// Result of a semantic expectation query.
#[derive(Clone, Debug, PartialEq)]
pub enum Expectation {
    Finite(f64),
    Diverged(Divergence),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    /// The derivative does not stabilize across fixpoint iterations.
    Tangent,
    /// The term converges with probability 0, so the conditional
    /// expectation is undefined.
    ZeroProbability,
}

impl Expectation {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Expectation::Finite(v) => Some(*v),
            Expectation::Diverged(_) => None,
        }
    }
}

/// Value and gradient of `⟦spy(term)⟧₀` at `x_l := r_l·e₀`.
#[derive(Clone, Debug)]
pub struct SpyGradient {
    pub primal: f64,
    pub tangents: BTreeMap<Label, f64>,
    pub diagnostics: Diagnostics,
}

fn spy_closed(term: &Term) -> Result<(Term, BTreeMap<Label, Name>), SemError> {
    if !term.is_lab() {
        return Err(SemError::Precondition("expected a term without labeled coins".into()));
    }
    closed_nat(term)?;
    let vars = spy_vars(term);
    Ok((spy(term, &vars, &TyCtx::new())?, vars))
}

/// Labels missing from `r` are evaluated at 1.
pub fn spy_gradient(term: &Term, r: &BTreeMap<Label, f64>, params: &SemParams) -> Result<SpyGradient, SemError> {
    let (spied, vars) = spy_closed(term)?;
    let slots = vars.len();
    let mut env = SemEnv::<Dual>::new();
    for (i, (l, x)) in vars.iter().enumerate() {
        let at = r.get(l).copied().unwrap_or(1.0);
        let mut v = vec![Dual::constant(0.0); params.k];
        v[0] = Dual::variable(at, i, slots);
        env = env.bind(x, Ty::Nat, SemVal::ground(v));
    }
    let res = interp(&spied, &env, params)?;
    let out = res.value.entry(0);
    let tangents = vars.keys().enumerate().map(|(i, l)| (l.clone(), out.tangent(i))).collect();
    Ok(SpyGradient { primal: out.primal, tangents, diagnostics: res.diagnostics() })
}

/// `⟦spy(term)⟧₀` at `x_l := r_l·e₀` over floats; labels missing from `r`
/// are evaluated at 1.
pub fn spy_prob(term: &Term, r: &BTreeMap<Label, f64>, params: &SemParams) -> Result<Evaluated<f64>, SemError> {
    let (spied, vars) = spy_closed(term)?;
    let mut env = SemEnv::<f64>::new();
    for (l, x) in &vars {
        let mut v = vec![0.0; params.k];
        v[0] = r.get(l).copied().unwrap_or(1.0);
        env = env.bind(x, Ty::Nat, SemVal::ground(v));
    }
    let res = interp(&spied, &env, params)?;
    Ok(Evaluated { value: res.value.entry(0), diagnostics: res.diagnostics() })
}

/// Expected number of uses of every label, conditioned on termination at 0,
/// from one forward-mode pass with a tangent slot per label.
pub fn expect_labels_semantic(term: &Term, params: &SemParams) -> Result<BTreeMap<Label, Expectation>, SemError> {
    let g = spy_gradient(term, &BTreeMap::new(), params)?;
    let verdict = |t: f64| {
        if g.primal == 0.0 {
            Expectation::Diverged(Divergence::ZeroProbability)
        } else if g.diagnostics.tangent_diverged || !t.is_finite() {
            Expectation::Diverged(Divergence::Tangent)
        } else {
            Expectation::Finite(t / g.primal)
        }
    };
    Ok(g.tangents.iter().map(|(l, t)| (l.clone(), verdict(*t))).collect())
}

/// A label absent from the term is used 0 times.
pub fn expect_label_semantic(term: &Term, l: &Label, params: &SemParams) -> Result<Expectation, SemError> {
    let all = expect_labels_semantic(term, params)?;
    if let Some(e) = all.get(l) {
        return Ok(e.clone());
    }
    let p = spy_prob(term, &BTreeMap::new(), params)?.value;
    Ok(if p == 0.0 { Expectation::Diverged(Divergence::ZeroProbability) } else { Expectation::Finite(0.0) })
}

/// Coefficients of `r ↦ ⟦spy(term)⟧(r·e₀)₀` for a term with the single
/// label `l`: coefficient k is the probability of terminating at 0 after
/// exactly k uses of `l`. Requires the enumeration under `limits` to
/// resolve every path.
pub fn label_polynomial(
    term: &Term,
    l: &Label,
    degree: usize,
    params: &SemParams,
    limits: &EnumLimits,
) -> Result<Vec<Rat>, SemError> {
    if term.labels().iter().any(|m| m != l) {
        return Err(SemError::Precondition(format!("expected `{l}` to be the only label")));
    }
    let (spied, vars) = spy_closed(term)?;
    let e = enumerate(&State::initial(term.clone())?, limits);
    if !e.residual.is_zero() || !e.pruned.is_zero() {
        return Err(SemError::Precondition(format!("enumeration leaves residual mass {}", e.residual)));
    }
    let at = |r: &Rat| -> Result<Rat, SemError> {
        let mut env = SemEnv::<Rat>::new();
        if let Some(x) = vars.get(l) {
            let mut v = vec![Rat::zero(); params.k];
            v[0] = r.clone();
            env = env.bind(x, Ty::Nat, SemVal::ground(v));
        }
        let res = interp(&spied, &env, params)?;
        if res.diagnostics().fix_nonconverged > 0 {
            return Err(SemError::Precondition("a fixpoint did not stabilize exactly".into()));
        }
        Ok(res.value.entry(0))
    };
    let d1 = degree as i64 + 1;
    let xs: Vec<Rat> = (0..d1).map(|j| Rat::new(j, d1)).collect();
    let ys = xs.iter().map(at).collect::<Result<Vec<_>, _>>()?;
    let coeffs = interpolate(&xs, &ys);
    let probe = Rat::one();
    let predicted = coeffs.iter().rev().fold(Rat::zero(), |acc, c| &(&acc * &probe) + c);
    if predicted != at(&probe)? {
        return Err(SemError::DegreeTooSmall(degree));
    }
    Ok(coeffs)
}

/// Monomial coefficients of the polynomial through the points, via divided
/// differences.
fn interpolate(xs: &[Rat], ys: &[Rat]) -> Vec<Rat> {
    let n = xs.len();
    let mut dd = ys.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            dd[i] = &(&dd[i] - &dd[i - 1]) / &(&xs[i] - &xs[i - j]);
        }
    }
    let mut poly = vec![Rat::zero(); n];
    for i in (0..n).rev() {
        // poly ← poly·(x − x_i) + dd[i]
        let mut next = vec![Rat::zero(); n];
        for (p, c) in poly.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if p + 1 < n {
                next[p + 1] = &next[p + 1] + c;
            }
            next[p] = &next[p] - &(c * &xs[i]);
        }
        next[0] = &next[0] + &dd[i];
        poly = next;
    }
    poly
}
