//! The evaluator over truncated sub-distributions.
//!
//! Ground values are vectors of length K; index n holds the mass of the
//! numeral n. Functions are closures. `fix` at ground type is Kleene
//! iteration on vectors; at arrow types it is unrolled lazily, one memoized
//! closure per iterate, and each fully applied call iterates until the
//! ground result stabilizes.

use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::fmt;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};
use rustc_hash::FxHashMap;

use super::scalar::Scalar;
use super::{Diagnostics, SemParams};
use crate::ast::{typecheck, Name, Term, TermKind, Ty, TyCtx};

/// A denotation: a ground sub-distribution, a function, or the zero of any
/// type (the bottom element, used as the first Kleene iterate).
pub enum SemVal<S: Scalar> {
    Zero,
    Ground(Rc<[S]>),
    Func(Rc<dyn Fn(SemVal<S>) -> SemVal<S>>),
}

impl<S: Scalar> Clone for SemVal<S> {
    fn clone(&self) -> Self {
        match self {
            SemVal::Zero => SemVal::Zero,
            SemVal::Ground(v) => SemVal::Ground(v.clone()),
            SemVal::Func(f) => SemVal::Func(f.clone()),
        }
    }
}

impl<S: Scalar> fmt::Debug for SemVal<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemVal::Zero => f.write_str("Zero"),
            SemVal::Ground(v) => f.debug_tuple("Ground").field(v).finish(),
            SemVal::Func(_) => f.write_str("Func(..)"),
        }
    }
}

impl<S: Scalar> SemVal<S> {
    pub fn ground(v: Vec<S>) -> Self {
        SemVal::Ground(v.into())
    }

    pub fn func(f: impl Fn(SemVal<S>) -> SemVal<S> + 'static) -> Self {
        SemVal::Func(Rc::new(f))
    }

    /// `e_n` truncated to length `k`.
    pub fn numeral(n: u64, k: usize) -> Self {
        SemVal::ground(unit(k, n))
    }

    /// Panics on a ground value; interp rejects ill-typed inputs beforehand.
    pub fn apply(&self, arg: SemVal<S>) -> SemVal<S> {
        match self {
            SemVal::Func(f) => f(arg),
            SemVal::Zero => SemVal::Zero,
            SemVal::Ground(_) => panic!("applied a ground value"),
        }
    }

    /// The ground vector, zero-filled to length `k`. Panics on functions.
    pub fn to_vec(&self, k: usize) -> Vec<S> {
        match self {
            SemVal::Zero => vec![S::zero(); k],
            SemVal::Ground(v) => {
                let mut out = v.to_vec();
                out.resize(k, S::zero());
                out
            }
            SemVal::Func(_) => panic!("expected a ground value"),
        }
    }

    /// Entry `n` of a ground value.
    pub fn entry(&self, n: usize) -> S {
        match self {
            SemVal::Ground(v) => v.get(n).cloned().unwrap_or_else(S::zero),
            SemVal::Zero => S::zero(),
            SemVal::Func(_) => panic!("expected a ground value"),
        }
    }

    pub fn is_ground(&self) -> bool {
        !matches!(self, SemVal::Func(_))
    }
}

fn unit<S: Scalar>(k: usize, n: u64) -> Vec<S> {
    let mut v = vec![S::zero(); k];
    if let Some(slot) = usize::try_from(n).ok().filter(|i| *i < k) {
        v[slot] = S::one();
    }
    v
}

pub(super) struct Ev {
    pub params: SemParams,
    pub diag: RefCell<Diagnostics>,
    /// Set while Newton probes points off the iteration path.
    pub probing: Cell<bool>,
}

impl Ev {
    fn note_mass<S: Scalar>(&self, v: &[S]) {
        if self.probing.get() {
            return;
        }
        let m: f64 = v.iter().map(|s| s.primal()).sum();
        let mut d = self.diag.borrow_mut();
        if m > d.max_mass {
            d.max_mass = m;
        }
    }
}

struct Bind<S: Scalar> {
    name: Name,
    ty: Ty,
    val: SemVal<S>,
    next: Env<S>,
}

type Env<S> = Option<Rc<Bind<S>>>;

fn bind<S: Scalar>(env: &Env<S>, name: Name, ty: Ty, val: SemVal<S>) -> Env<S> {
    Some(Rc::new(Bind { name, ty, val, next: env.clone() }))
}

fn lookup<'a, S: Scalar>(mut env: &'a Env<S>, x: &str) -> &'a SemVal<S> {
    while let Some(b) = env {
        if &*b.name == x {
            return &b.val;
        }
        env = &b.next;
    }
    panic!("unbound variable `{x}` after typechecking")
}

fn ctx_of<S: Scalar>(env: &Env<S>) -> TyCtx {
    let mut binds = Vec::new();
    let mut cur = env;
    while let Some(b) = cur {
        binds.push((b.name.clone(), b.ty.clone()));
        cur = &b.next;
    }
    binds.into_iter().rev().collect()
}

/// Evaluates a term that already typechecks under the environment.
pub(super) fn eval_in<S: Scalar>(ev: &Rc<Ev>, binds: &[(Name, Ty, SemVal<S>)], term: &Term) -> SemVal<S> {
    let env = binds.iter().fold(None, |e, (x, t, v)| bind(&e, x.clone(), t.clone(), v.clone()));
    eval(ev, &env, term)
}

fn eval<S: Scalar>(ev: &Rc<Ev>, env: &Env<S>, t: &Term) -> SemVal<S> {
    let k = ev.params.k;
    match t.kind() {
        TermKind::Num(n) => SemVal::numeral(*n, k),
        TermKind::Var(x) => lookup(env, x).clone(),
        TermKind::Dice(r) | TermKind::DiceLab(_, r) => {
            let mut v = vec![S::zero(); k];
            v[0] = S::from_rat(r);
            if k > 1 {
                v[1] = S::from_rat(&r.complement());
            }
            SemVal::ground(v)
        }
        TermKind::Succ(m) => {
            let SemVal::Ground(v) = eval(ev, env, m) else { return SemVal::Zero };
            let mut out = vec![S::zero(); k];
            out[1..].clone_from_slice(&v[..k - 1]);
            SemVal::ground(out)
        }
        TermKind::Pred(m) => {
            let SemVal::Ground(v) = eval(ev, env, m) else { return SemVal::Zero };
            let mut out = vec![S::zero(); k];
            if k > 1 {
                out[0] = v[0].add(&v[1]);
                out[1..k - 1].clone_from_slice(&v[2..]);
            } else {
                out[0] = v[0].clone();
            }
            SemVal::ground(out)
        }
        TermKind::Mark(m, _) => eval(ev, env, m),
        TermKind::Let(x, m, n) => {
            let SemVal::Ground(v) = eval(ev, env, m) else { return SemVal::Zero };
            let mut parts = Vec::new();
            for (i, w) in v.iter().enumerate() {
                if !w.is_zero() {
                    let inner = bind(env, x.clone(), Ty::Nat, SemVal::numeral(i as u64, k));
                    parts.push((w.clone(), eval(ev, &inner, n)));
                }
            }
            lincomb(ev, parts)
        }
        TermKind::If(m, a, b) => {
            let SemVal::Ground(v) = eval(ev, env, m) else { return SemVal::Zero };
            let w0 = v[0].clone();
            let w1 = v[1..].iter().fold(S::zero(), |acc, x| acc.add(x));
            let mut parts = Vec::with_capacity(2);
            if !w0.is_zero() {
                parts.push((w0, eval(ev, env, a)));
            }
            if !w1.is_zero() {
                parts.push((w1, eval(ev, env, b)));
            }
            lincomb(ev, parts)
        }
        TermKind::App(f, a) => match eval(ev, env, f) {
            SemVal::Zero => SemVal::Zero,
            fv => fv.apply(eval(ev, env, a)),
        },
        TermKind::Abs(x, ty, body) => {
            let (ev, env, x, ty, body) = (ev.clone(), env.clone(), x.clone(), ty.clone(), body.clone());
            SemVal::func(move |v| eval(&ev, &bind(&env, x.clone(), ty.clone(), v), &body))
        }
        TermKind::Fix(m) => {
            let sigma = match m.kind() {
                TermKind::Abs(_, s, _) => s.clone(),
                _ => typecheck(&ctx_of(env), t).expect("fix typechecked before evaluation"),
            };
            let functional = eval(ev, env, m);
            if sigma.is_nat() {
                ground_fix(ev, &functional)
            } else {
                ArrowFix::value(ev.clone(), functional, sigma)
            }
        }
    }
}

/// `Σ w_i · v_i` at any type; zero weights and zero values drop out.
fn lincomb<S: Scalar>(ev: &Rc<Ev>, parts: Vec<(S, SemVal<S>)>) -> SemVal<S> {
    let parts: Vec<(S, SemVal<S>)> = parts.into_iter().filter(|(w, v)| !w.is_zero() && !matches!(v, SemVal::Zero)).collect();
    match parts.first() {
        None => SemVal::Zero,
        Some((_, SemVal::Func(_))) => {
            let ev = ev.clone();
            SemVal::func(move |a| lincomb(&ev, parts.iter().map(|(w, f)| (w.clone(), f.apply(a.clone()))).collect()))
        }
        Some(_) => {
            let k = ev.params.k;
            let mut acc = vec![S::zero(); k];
            for (w, v) in &parts {
                if let SemVal::Ground(g) = v {
                    for (slot, x) in acc.iter_mut().zip(g.iter()) {
                        if !x.is_zero() {
                            *slot = slot.add(&w.mul(x));
                        }
                    }
                }
            }
            ev.note_mass(&acc);
            SemVal::ground(acc)
        }
    }
}

enum Step {
    Continue,
    Converged,
    Diverged,
}

const WINDOW: usize = 10;
const WARMUP: u64 = 200;
const NEWTON_AT: [u64; 4] = [64, 256, 1024, 4096];

/// Convergence bookkeeping for one fixpoint iteration.
struct Tracker {
    tol: f64,
    tangent_tol: f64,
    max_iters: u64,
    tangent_deltas: VecDeque<f64>,
    min_streak: u32,
    streak: u32,
}

impl Tracker {
    /// `min_streak` successive small deltas are required before stopping.
    fn new(p: &SemParams, min_streak: u32) -> Self {
        Tracker {
            tol: p.fix_tol,
            tangent_tol: p.tangent_tol,
            max_iters: p.fix_max_iters,
            tangent_deltas: VecDeque::new(),
            min_streak,
            streak: 0,
        }
    }

    fn step<S: Scalar>(&mut self, iter: u64, prev: &[S], next: &[S]) -> Step {
        let (mut dp, mut dt) = (0.0f64, 0.0f64);
        for (a, b) in prev.iter().zip(next) {
            let (p, t) = a.delta(b);
            dp = dp.max(p);
            dt = dt.max(t);
        }
        let primal_ok = if S::EXACT { dp == 0.0 } else { dp < self.tol };
        if primal_ok && dt < self.tangent_tol {
            self.streak += 1;
            return if self.streak >= self.min_streak { Step::Converged } else { Step::Continue };
        }
        self.streak = 0;
        if dt < self.tangent_tol {
            self.tangent_deltas.clear();
            return Step::Continue;
        }
        self.tangent_deltas.push_back(dt);
        if self.tangent_deltas.len() > WINDOW {
            self.tangent_deltas.pop_front();
        }
        if iter < WARMUP || self.tangent_deltas.len() < WINDOW {
            return Step::Continue;
        }
        let first = self.tangent_deltas[0];
        if !first.is_finite() || !dt.is_finite() {
            return Step::Diverged;
        }
        // Geometric decay must reach tangent_tol within the iteration budget.
        let rho = (dt / first).powf(1.0 / (WINDOW - 1) as f64);
        if rho >= 1.0 {
            return Step::Diverged;
        }
        let needed = (self.tangent_tol / dt).ln() / rho.ln();
        if iter as f64 + needed > self.max_iters as f64 {
            Step::Diverged
        } else {
            Step::Continue
        }
    }
}

fn finish(ev: &Ev, outcome: Option<Step>, iters: u64) {
    let mut d = ev.diag.borrow_mut();
    d.fix_iterations = d.fix_iterations.max(iters);
    match outcome {
        Some(Step::Converged) => {}
        Some(Step::Diverged) => d.tangent_diverged = true,
        _ => d.fix_nonconverged += 1,
    }
}

fn ground_fix<S: Scalar>(ev: &Rc<Ev>, functional: &SemVal<S>) -> SemVal<S> {
    let k = ev.params.k;
    let mut x = vec![S::zero(); k];
    let mut tracker = Tracker::new(&ev.params, 1);
    for i in 1..=ev.params.fix_max_iters {
        let next = functional.apply(SemVal::ground(x.clone())).to_vec(k);
        let step = tracker.step(i, &x, &next);
        x = next;
        if !matches!(step, Step::Continue) {
            finish(ev, Some(step), i);
            return SemVal::ground(x);
        }
        if S::NEWTON && NEWTON_AT.contains(&i) {
            let t = |y: &[f64]| {
                let arg = SemVal::ground(y.iter().map(|v| S::from_f64(*v)).collect());
                Some(functional.apply(arg).to_vec(k).iter().map(S::primal).collect())
            };
            let y0: Vec<f64> = x.iter().map(S::primal).collect();
            if let Some(y) = newton(ev, &t, y0, k) {
                x = y.into_iter().map(S::from_f64).collect();
            }
        }
    }
    finish(ev, None, ev.params.fix_max_iters);
    SemVal::ground(x)
}

/// Newton steps for `y = T(y)` from a Kleene iterate below the least
/// fixpoint. A step is kept only if it moves every coordinate up and keeps
/// each block of length `k` inside the unit ball.
fn newton(ev: &Ev, t: &dyn Fn(&[f64]) -> Option<Vec<f64>>, mut y: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    const H: f64 = 1e-6;
    let n = y.len();
    let mut ty = t(&y)?;
    let mut moved = false;
    for _ in 0..64 {
        let r: Vec<f64> = ty.iter().zip(&y).map(|(a, b)| a - b).collect();
        // Near a double root the residual is quadratic in the error.
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) < ev.params.fix_tol * 1e-4 {
            break;
        }
        let mut a = DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            let mut hi = y.clone();
            let mut lo = y.clone();
            hi[j] += H;
            lo[j] -= H;
            ev.probing.set(true);
            let probes = (t(&hi), t(&lo));
            ev.probing.set(false);
            let (Some(fh), Some(fl)) = probes else { return None };
            for i in 0..n {
                a[(i, j)] -= (fh[i] - fl[i]) / (2.0 * H);
            }
        }
        let Some(delta) = a.lu().solve(&DVector::from_vec(r)) else { break };
        if delta.amax() < 1e-16 {
            break;
        }
        let next: Vec<f64> = y.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
        let upward = next.iter().zip(&y).all(|(a, b)| a.is_finite() && *a >= b - 1e-12);
        let bounded = next.chunks(k).all(|c| c.iter().map(|v| v.max(0.0)).sum::<f64>() <= 1.0 + 1e-9);
        if !upward || !bounded {
            break;
        }
        let next: Vec<f64> = next.into_iter().map(|v| v.max(0.0)).collect();
        let Some(tn) = t(&next) else { break };
        y = next;
        ty = tn;
        moved = true;
        ev.diag.borrow_mut().newton_steps += 1;
    }
    moved.then_some(y)
}

fn arg_key<S: Scalar>(v: &SemVal<S>, k: usize, out: &mut Vec<u64>) {
    match v {
        SemVal::Ground(g) => {
            g.iter().for_each(|s| s.key(out));
            (g.len()..k).for_each(|_| S::zero().key(out));
        }
        SemVal::Zero => (0..k).for_each(|_| S::zero().key(out)),
        SemVal::Func(_) => panic!("function arguments have no key"),
    }
}

fn tuple_key<S: Scalar>(args: &[SemVal<S>], k: usize) -> Vec<u64> {
    let mut key = Vec::new();
    for a in args {
        arg_key(a, k, &mut key);
    }
    key
}

/// Caches applications to ground arguments, at every curried position.
fn memoize<S: Scalar>(v: SemVal<S>, ty: &Ty, k: usize) -> SemVal<S> {
    let (SemVal::Func(f), Ty::Arrow(dom, cod)) = (&v, ty) else { return v };
    let (f, cod) = (f.clone(), (**cod).clone());
    if !dom.is_nat() {
        return SemVal::func(move |a| memoize(f(a), &cod, k));
    }
    let memo: RefCell<FxHashMap<Vec<u64>, SemVal<S>>> = RefCell::default();
    SemVal::func(move |a| {
        let mut key = Vec::with_capacity(k);
        arg_key(&a, k, &mut key);
        if let Some(hit) = memo.borrow().get(&key) {
            return hit.clone();
        }
        let r = memoize(f(a), &cod, k);
        memo.borrow_mut().insert(key, r.clone());
        r
    })
}

type Uncurried<S> = Rc<dyn Fn(&[SemVal<S>]) -> SemVal<S>>;

fn curry<S: Scalar>(arity: usize, prefix: Vec<SemVal<S>>, f: Uncurried<S>) -> SemVal<S> {
    SemVal::func(move |a| {
        let mut args = prefix.clone();
        args.push(a);
        if args.len() == arity {
            f(&args)
        } else {
            curry(arity, args, f.clone())
        }
    })
}

fn apply_all<S: Scalar>(f: &SemVal<S>, args: &[SemVal<S>]) -> SemVal<S> {
    args.iter().fold(f.clone(), |g, a| g.apply(a.clone()))
}

/// The iterates `F^n(0)` of a functional at an arrow type.
struct ArrowFix<S: Scalar> {
    ev: Rc<Ev>,
    functional: SemVal<S>,
    sigma: Ty,
    arity: usize,
    first_order: bool,
    levels: RefCell<Vec<SemVal<S>>>,
}

impl<S: Scalar> ArrowFix<S> {
    fn value(ev: Rc<Ev>, functional: SemVal<S>, sigma: Ty) -> SemVal<S> {
        let (doms, _) = sigma.uncurry();
        let arity = doms.len();
        let first_order = doms.iter().all(|d| d.is_nat());
        let fix = Rc::new(ArrowFix { ev, functional, sigma, arity, first_order, levels: RefCell::new(vec![SemVal::Zero]) });
        curry(arity, Vec::new(), Rc::new(move |args: &[SemVal<S>]| fix.query(args)))
    }

    fn level(&self, n: usize) -> SemVal<S> {
        loop {
            let prev = {
                let levels = self.levels.borrow();
                if let Some(l) = levels.get(n) {
                    return l.clone();
                }
                levels.last().cloned().expect("level 0 is always present")
            };
            let next = memoize(self.functional.apply(prev), &self.sigma, self.ev.params.k);
            self.levels.borrow_mut().push(next);
        }
    }

    fn query(&self, args: &[SemVal<S>]) -> SemVal<S> {
        let k = self.ev.params.k;
        let mut prev = vec![S::zero(); k];
        // The value at one argument may stall while the recursion has not
        // yet reached the depth where mass appears.
        let streak = (2 * k + 2).max(WINDOW) as u32;
        let mut tracker = Tracker::new(&self.ev.params, streak);
        for n in 1..=self.ev.params.fix_max_iters {
            let next = apply_all(&self.level(n as usize), args).to_vec(k);
            let step = tracker.step(n, &prev, &next);
            prev = next;
            if !matches!(step, Step::Continue) {
                finish(&self.ev, Some(step), n);
                return SemVal::ground(prev);
            }
            if S::NEWTON && self.first_order && NEWTON_AT.contains(&n) {
                if let Some((seeded, y)) = self.accelerate(args, n as usize) {
                    let mut levels = self.levels.borrow_mut();
                    levels.truncate(n as usize);
                    levels.push(seeded);
                    prev = y;
                }
            }
        }
        finish(&self.ev, None, self.ev.params.fix_max_iters);
        SemVal::ground(prev)
    }

    /// Newton on the values of the fixpoint over a finite table of argument
    /// tuples closed under recursive calls. Returns a replacement for level
    /// `n` and its value at `args`.
    fn accelerate(&self, args: &[SemVal<S>], n: usize) -> Option<(SemVal<S>, Vec<S>)> {
        const MAX_TABLE: usize = 32;
        let k = self.ev.params.k;
        let base = self.level(n);
        let primal = |v: &SemVal<S>| -> Vec<f64> { v.to_vec(k).iter().map(S::primal).collect() };
        let mut table: Vec<(Vec<u64>, Vec<SemVal<S>>)> = vec![(tuple_key(args, k), args.to_vec())];
        let mut y0 = primal(&apply_all(&base, args));

        // T(y): apply F to the table function; misses go to `base`.
        let run = |table: &[(Vec<u64>, Vec<SemVal<S>>)], y: &[f64]| -> (Vec<f64>, Vec<Vec<SemVal<S>>>) {
            let index: FxHashMap<Vec<u64>, usize> = table.iter().enumerate().map(|(i, (key, _))| (key.clone(), i)).collect();
            let vals: Vec<SemVal<S>> =
                y.chunks(k).map(|c| SemVal::ground(c.iter().map(|v| S::from_f64(*v)).collect())).collect();
            let misses: Rc<RefCell<Vec<Vec<SemVal<S>>>>> = Rc::default();
            let (base, sink) = (base.clone(), misses.clone());
            let h = curry(
                self.arity,
                Vec::new(),
                Rc::new(move |a: &[SemVal<S>]| match index.get(&tuple_key(a, k)) {
                    Some(i) => vals[*i].clone(),
                    None => {
                        sink.borrow_mut().push(a.to_vec());
                        apply_all(&base, a)
                    }
                }),
            );
            let fh = self.functional.apply(h);
            let out = table.iter().flat_map(|(_, a)| primal(&apply_all(&fh, a))).collect();
            let found = misses.borrow().clone();
            (out, found)
        };

        loop {
            let (_, misses) = run(&table, &y0);
            if misses.is_empty() {
                break;
            }
            for m in misses {
                let key = tuple_key(&m, k);
                if table.iter().all(|(t, _)| *t != key) {
                    if table.len() >= MAX_TABLE {
                        return None;
                    }
                    y0.extend(primal(&apply_all(&base, &m)));
                    table.push((key, m));
                }
            }
        }
        let t = |y: &[f64]| {
            let (out, misses) = run(&table, y);
            misses.is_empty().then_some(out)
        };
        let y = newton(&self.ev, &t, y0, k)?;

        let index: FxHashMap<Vec<u64>, usize> = table.iter().enumerate().map(|(i, (key, _))| (key.clone(), i)).collect();
        let vals: Vec<SemVal<S>> = y.chunks(k).map(|c| SemVal::ground(c.iter().map(|v| S::from_f64(*v)).collect())).collect();
        let here = vals[0].to_vec(k);
        let seeded = curry(
            self.arity,
            Vec::new(),
            Rc::new(move |a: &[SemVal<S>]| match index.get(&tuple_key(a, k)) {
                Some(i) => vals[*i].clone(),
                None => apply_all(&base, a),
            }),
        );
        Some((memoize(seeded, &self.sigma, k), here))
    }
}
