//! Syntax of probabilistic PCF and its two extensions: marked subterms
//! (`#l{M}`) and labeled coins (`coin[l](r)`).
//!
//! Terms are immutable and hash-consed: structurally equal terms share one
//! node, so equality is a pointer comparison. Every node caches its hash and
//! its free variables, letting substitution skip subtrees that do not
//! mention the variable.

mod parse;
mod print;
mod typing;

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock, Mutex, Weak};

use rustc_hash::{FxHashMap, FxHasher as DefaultHasher};

use crate::rat::Rat;

pub use parse::{parse, parse_type, ParseError};
pub use typing::{typecheck, typecheck_closed, typecheck_stack, TyCtx, TypeError};

/// Variable names.
pub type Name = Arc<str>;

/// Simple types: `nat` and arrows.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Ty {
    Nat,
    Arrow(Box<Ty>, Box<Ty>),
}

impl Ty {
    pub fn arrow(dom: Ty, cod: Ty) -> Ty {
        Ty::Arrow(Box::new(dom), Box::new(cod))
    }

    pub fn is_nat(&self) -> bool {
        matches!(self, Ty::Nat)
    }

    /// Argument types and final result of a curried type.
    pub fn uncurry(&self) -> (Vec<&Ty>, &Ty) {
        let mut args = Vec::new();
        let mut t = self;
        while let Ty::Arrow(d, c) = t {
            args.push(d.as_ref());
            t = c;
        }
        (args, t)
    }

    /// `nat -> ... -> nat` with at least one argument.
    pub fn is_first_order_function(&self) -> bool {
        let (args, res) = self.uncurry();
        !args.is_empty() && res.is_nat() && args.iter().all(|a| a.is_nat())
    }
}

/// A label used by marks and labeled coins. Labels compare by name.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Arc<str>);

impl Label {
    /// Panics on an empty name.
    pub fn new(name: &str) -> Self {
        assert!(!name.is_empty(), "labels must be nonempty");
        Label(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TermKind {
    Num(u64),
    Var(Name),
    Succ(Term),
    Pred(Term),
    /// Yields 0 with probability r and 1 with probability 1 - r.
    Dice(Rat),
    DiceLab(Label, Rat),
    Let(Name, Term, Term),
    /// `ifz scrut then zero else nonzero`
    If(Term, Term, Term),
    App(Term, Term),
    Abs(Name, Ty, Term),
    Fix(Term),
    Mark(Term, Label),
}

struct Node {
    hash: u64,
    free: Arc<[Name]>,
    kind: TermKind,
}

#[derive(Clone)]
pub struct Term(Arc<Node>);

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        // Terms are hash-consed, so structural equality is identity.
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn hash_kind(kind: &TermKind) -> u64 {
    let mut h = DefaultHasher::default();
    std::mem::discriminant(kind).hash(&mut h);
    match kind {
        TermKind::Num(n) => n.hash(&mut h),
        TermKind::Var(x) => x.hash(&mut h),
        TermKind::Succ(t) | TermKind::Pred(t) | TermKind::Fix(t) => t.0.hash.hash(&mut h),
        TermKind::Dice(r) => r.hash(&mut h),
        TermKind::DiceLab(l, r) => {
            l.hash(&mut h);
            r.hash(&mut h);
        }
        TermKind::Let(x, a, b) => {
            x.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        TermKind::If(a, b, c) => {
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
            c.0.hash.hash(&mut h);
        }
        TermKind::App(a, b) => {
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        TermKind::Abs(x, ty, b) => {
            x.hash(&mut h);
            ty.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        TermKind::Mark(t, l) => {
            t.0.hash.hash(&mut h);
            l.hash(&mut h);
        }
    }
    mix(h.finish())
}

/// 64-bit finalizer; spreads the weak multiplicative hash over all bits.
fn mix(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

/// Global hash-consing table. Entries are weak, so dead terms are reclaimed;
/// stale entries are purged once the table doubles.
struct Interner {
    buckets: FxHashMap<u64, Vec<Weak<Node>>>,
    entries: usize,
    purge_at: usize,
}

static INTERNER: LazyLock<Mutex<Interner>> =
    LazyLock::new(|| Mutex::new(Interner { buckets: FxHashMap::default(), entries: 0, purge_at: 1 << 16 }));

impl Interner {
    fn intern(&mut self, hash: u64, kind: TermKind) -> Term {
        let bucket = self.buckets.entry(hash).or_default();
        let before = bucket.len();
        bucket.retain(|w| w.strong_count() > 0);
        self.entries -= before - bucket.len();
        for w in bucket.iter() {
            if let Some(n) = w.upgrade() {
                // Children are interned, so this comparison is shallow.
                if n.kind == kind {
                    return Term(n);
                }
            }
        }
        let free = free_of(&kind);
        let node = Arc::new(Node { hash, free, kind });
        bucket.push(Arc::downgrade(&node));
        self.entries += 1;
        if self.entries >= self.purge_at {
            self.purge();
        }
        Term(node)
    }

    fn purge(&mut self) {
        self.buckets.retain(|_, b| {
            b.retain(|w| w.strong_count() > 0);
            !b.is_empty()
        });
        self.entries = self.buckets.values().map(Vec::len).sum();
        self.purge_at = (2 * self.entries).max(1 << 16);
    }
}

static NO_FREE: LazyLock<Arc<[Name]>> = LazyLock::new(|| Arc::from(Vec::new()));

/// Sorted union of sorted name sets, minus `bound`; shares an input set
/// when possible.
fn union_free(parts: &[&Arc<[Name]>], bound: Option<&Name>) -> Arc<[Name]> {
    let nonempty: Vec<&Arc<[Name]>> = parts.iter().copied().filter(|p| !p.is_empty()).collect();
    let drops = |p: &Arc<[Name]>| bound.is_some_and(|x| p.binary_search(x).is_ok());
    match nonempty.as_slice() {
        [] => NO_FREE.clone(),
        [one] if !drops(one) => (*one).clone(),
        [a, b] if a == b && !drops(a) => (*a).clone(),
        _ => {
            let mut all: Vec<Name> = nonempty.iter().flat_map(|p| p.iter().cloned()).collect();
            all.sort_unstable();
            all.dedup();
            if let Some(x) = bound {
                all.retain(|y| y != x);
            }
            if all.is_empty() {
                NO_FREE.clone()
            } else {
                all.into()
            }
        }
    }
}

fn free_of(kind: &TermKind) -> Arc<[Name]> {
    match kind {
        TermKind::Num(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => NO_FREE.clone(),
        TermKind::Var(x) => Arc::from(vec![x.clone()]),
        TermKind::Succ(t) | TermKind::Pred(t) | TermKind::Fix(t) | TermKind::Mark(t, _) => t.0.free.clone(),
        TermKind::Let(x, a, b) => {
            let body = union_free(&[&b.0.free], Some(x));
            union_free(&[&a.0.free, &body], None)
        }
        TermKind::If(a, b, c) => union_free(&[&a.0.free, &b.0.free, &c.0.free], None),
        TermKind::App(a, b) => union_free(&[&a.0.free, &b.0.free], None),
        TermKind::Abs(x, _, b) => union_free(&[&b.0.free], Some(x)),
    }
}

impl Term {
    pub fn new(kind: TermKind) -> Term {
        let hash = hash_kind(&kind);
        INTERNER.lock().unwrap_or_else(|e| e.into_inner()).intern(hash, kind)
    }

    pub fn kind(&self) -> &TermKind {
        &self.0.kind
    }

    /// Stable address of the shared node, usable as a memo key while the
    /// term is alive.
    pub fn node_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    pub fn num(n: u64) -> Term {
        Term::new(TermKind::Num(n))
    }

    pub fn var(x: &str) -> Term {
        Term::new(TermKind::Var(Arc::from(x)))
    }

    pub fn var_named(x: Name) -> Term {
        Term::new(TermKind::Var(x))
    }

    pub fn succ(t: Term) -> Term {
        Term::new(TermKind::Succ(t))
    }

    pub fn pred(t: Term) -> Term {
        Term::new(TermKind::Pred(t))
    }

    pub fn dice(r: Rat) -> Term {
        Term::new(TermKind::Dice(r))
    }

    pub fn dice_lab(l: Label, r: Rat) -> Term {
        Term::new(TermKind::DiceLab(l, r))
    }

    pub fn let_(x: &str, bound: Term, body: Term) -> Term {
        Term::new(TermKind::Let(Arc::from(x), bound, body))
    }

    pub fn ifz(scrut: Term, zero: Term, nonzero: Term) -> Term {
        Term::new(TermKind::If(scrut, zero, nonzero))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::new(TermKind::App(f, a))
    }

    pub fn abs(x: &str, ty: Ty, body: Term) -> Term {
        Term::new(TermKind::Abs(Arc::from(x), ty, body))
    }

    pub fn fix(t: Term) -> Term {
        Term::new(TermKind::Fix(t))
    }

    pub fn mark(t: Term, l: Label) -> Term {
        Term::new(TermKind::Mark(t, l))
    }

    pub fn free_vars(&self) -> &[Name] {
        &self.0.free
    }

    pub fn is_closed(&self) -> bool {
        self.0.free.is_empty()
    }

    pub fn has_free(&self, x: &str) -> bool {
        self.0.free.iter().any(|y| &**y == x)
    }

    pub fn children(&self) -> Vec<&Term> {
        match self.kind() {
            TermKind::Num(_) | TermKind::Var(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => vec![],
            TermKind::Succ(t) | TermKind::Pred(t) | TermKind::Fix(t) | TermKind::Mark(t, _) => vec![t],
            TermKind::Abs(_, _, b) => vec![b],
            TermKind::Let(_, a, b) | TermKind::App(a, b) => vec![a, b],
            TermKind::If(a, b, c) => vec![a, b, c],
        }
    }

    /// Pre-order traversal predicate.
    pub fn any(&self, pred: &mut impl FnMut(&Term) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        self.children().into_iter().any(|c| c.any(pred))
    }

    /// No marks and no labeled coins.
    pub fn is_core(&self) -> bool {
        !self.any(&mut |t| matches!(t.kind(), TermKind::Mark(..) | TermKind::DiceLab(..)))
    }

    /// No labeled coins (marks allowed).
    pub fn is_lab(&self) -> bool {
        !self.any(&mut |t| matches!(t.kind(), TermKind::DiceLab(..)))
    }

    /// No marks (labeled coins allowed).
    pub fn is_lc(&self) -> bool {
        !self.any(&mut |t| matches!(t.kind(), TermKind::Mark(..)))
    }

    pub fn has_dice(&self) -> bool {
        self.any(&mut |t| matches!(t.kind(), TermKind::Dice(_) | TermKind::DiceLab(..)))
    }

    /// The finite set of labels occurring in marks or labeled coins.
    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        self.any(&mut |t| {
            match t.kind() {
                TermKind::Mark(_, l) | TermKind::DiceLab(l, _) => {
                    out.insert(l.clone());
                }
                _ => {}
            }
            false
        });
        out
    }

    /// Every variable name occurring in the term, bound or free.
    pub fn all_var_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.any(&mut |t| {
            match t.kind() {
                TermKind::Var(x) | TermKind::Let(x, ..) | TermKind::Abs(x, ..) => {
                    out.insert(x.clone());
                }
                _ => {}
            }
            false
        });
        out
    }

    /// Capture-avoiding substitution `self[replacement / x]`.
    pub fn subst(&self, x: &str, replacement: &Term) -> Term {
        if !self.has_free(x) {
            return self.clone();
        }
        // Machine runs repeat the same beta steps; memoize whole substitutions.
        let key = (self.clone(), Name::from(x), replacement.clone());
        if let Some(hit) = SUBST_MEMO.with(|m| m.borrow().get(&key).cloned()) {
            return hit;
        }
        let out = self.subst_rec(x, replacement);
        SUBST_MEMO.with(|m| {
            let mut m = m.borrow_mut();
            if m.len() >= SUBST_MEMO_CAP {
                m.clear();
            }
            m.insert(key, out.clone());
        });
        out
    }

    fn subst_rec(&self, x: &str, replacement: &Term) -> Term {
        if !self.has_free(x) {
            return self.clone();
        }
        match self.kind() {
            TermKind::Var(_) => replacement.clone(),
            TermKind::Num(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => self.clone(),
            TermKind::Succ(t) => Term::succ(t.subst_rec(x, replacement)),
            TermKind::Pred(t) => Term::pred(t.subst_rec(x, replacement)),
            TermKind::Fix(t) => Term::fix(t.subst_rec(x, replacement)),
            TermKind::Mark(t, l) => Term::mark(t.subst_rec(x, replacement), l.clone()),
            TermKind::If(a, b, c) => Term::ifz(a.subst_rec(x, replacement), b.subst_rec(x, replacement), c.subst_rec(x, replacement)),
            TermKind::App(a, b) => Term::app(a.subst_rec(x, replacement), b.subst_rec(x, replacement)),
            TermKind::Let(y, a, b) => {
                let a2 = a.subst_rec(x, replacement);
                let (y2, b2) = subst_under_binder(y, b, x, replacement);
                Term::new(TermKind::Let(y2, a2, b2))
            }
            TermKind::Abs(y, ty, b) => {
                let (y2, b2) = subst_under_binder(y, b, x, replacement);
                Term::new(TermKind::Abs(y2, ty.clone(), b2))
            }
        }
    }
}

/// Substitutes under a binder `y`, renaming it when it would capture a free
/// variable of the replacement. `x` is known to be free in the whole term.
fn subst_under_binder(y: &Name, body: &Term, x: &str, replacement: &Term) -> (Name, Term) {
    if &**y == x {
        return (y.clone(), body.clone());
    }
    if replacement.has_free(y) && body.has_free(x) {
        let fresh = fresh_name(y, |c| replacement.has_free(c) || body.has_free(c) || c == x);
        let renamed = body.subst_rec(y, &Term::var_named(fresh.clone()));
        (fresh, renamed.subst_rec(x, replacement))
    } else {
        (y.clone(), body.subst_rec(x, replacement))
    }
}

const SUBST_MEMO_CAP: usize = 1 << 15;

thread_local! {
    static SUBST_MEMO: RefCell<FxHashMap<(Term, Name, Term), Term>> = RefCell::new(FxHashMap::default());
}

static FRESH: AtomicUsize = AtomicUsize::new(0);

/// A name of the form `base'k` for which `taken` is false.
pub fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> Name {
    let stem = base.split('\'').next().unwrap_or(base);
    loop {
        let k = FRESH.fetch_add(1, Ordering::Relaxed);
        let cand = format!("{stem}'{k}");
        if !taken(&cand) {
            return Arc::from(cand);
        }
    }
}

/// One evaluation-context frame of the Krivine machine.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Frame {
    /// Pending argument.
    Arg(Term),
    Succ,
    Pred,
    /// `ifz [] then zero else nonzero`
    If(Term, Term),
    /// `let x = [] in body`
    Let(Name, Term),
}

struct StackNode {
    frame: Frame,
    rest: Stack,
    hash: u64,
    len: usize,
}

/// A persistent stack of frames; pushing shares the tail.
#[derive(Clone, Default)]
pub struct Stack(Option<Arc<StackNode>>);

impl Stack {
    pub fn empty() -> Stack {
        Stack(None)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.len)
    }

    pub fn push(&self, frame: Frame) -> Stack {
        let mut h = DefaultHasher::default();
        frame.hash(&mut h);
        self.hash_value().hash(&mut h);
        Stack(Some(Arc::new(StackNode { frame, rest: self.clone(), hash: h.finish(), len: self.len() + 1 })))
    }

    pub fn top(&self) -> Option<(&Frame, &Stack)> {
        self.0.as_ref().map(|n| (&n.frame, &n.rest))
    }

    fn hash_value(&self) -> u64 {
        self.0.as_ref().map_or(0x9e37_79b9_7f4a_7c15, |n| n.hash)
    }

    /// Frames from the top down.
    pub fn frames(&self) -> Vec<&Frame> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self;
        while let Some((f, rest)) = cur.top() {
            out.push(f);
            cur = rest;
        }
        out
    }

    pub fn from_frames(frames_top_first: Vec<Frame>) -> Stack {
        frames_top_first.into_iter().rev().fold(Stack::empty(), |s, f| s.push(f))
    }

    /// Applies `f` to every term embedded in the stack.
    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Term) -> Stack {
        let frames = self
            .frames()
            .into_iter()
            .map(|fr| match fr {
                Frame::Arg(m) => Frame::Arg(f(m)),
                Frame::Succ => Frame::Succ,
                Frame::Pred => Frame::Pred,
                Frame::If(a, b) => Frame::If(f(a), f(b)),
                Frame::Let(x, b) => Frame::Let(x.clone(), f(b)),
            })
            .collect();
        Stack::from_frames(frames)
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        for fr in self.frames() {
            match fr {
                Frame::Arg(m) | Frame::Let(_, m) => out.extend(m.labels()),
                Frame::If(a, b) => {
                    out.extend(a.labels());
                    out.extend(b.labels());
                }
                Frame::Succ | Frame::Pred => {}
            }
        }
        out
    }
}

impl PartialEq for Stack {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                Arc::ptr_eq(a, b) || (a.hash == b.hash && a.len == b.len && a.frame == b.frame && a.rest == b.rest)
            }
            _ => false,
        }
    }
}

impl Eq for Stack {}

impl Hash for Stack {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash_value());
    }
}

impl fmt::Debug for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subst_examples() {
        let r = Term::succ(Term::var("x")).subst("x", &Term::num(3));
        assert_eq!(r, Term::succ(Term::num(3)));

        let id = Term::abs("x", Ty::Nat, Term::var("x"));
        assert_eq!(id.subst("x", &Term::num(1)), id);

        let l = Term::let_("y", Term::var("x"), Term::var("y"));
        assert_eq!(l.subst("x", &Term::num(0)), Term::let_("y", Term::num(0), Term::var("y")));
    }

    #[test]
    fn subst_avoids_capture() {
        // (fun y => x)[y/x] must not become fun y => y
        let t = Term::abs("y", Ty::Nat, Term::var("x"));
        let r = t.subst("x", &Term::var("y"));
        match r.kind() {
            TermKind::Abs(b, _, body) => {
                assert_ne!(&**b, "y");
                assert_eq!(body, &Term::var("y"));
            }
            _ => panic!("expected abstraction"),
        }
    }

    #[test]
    fn variant_predicates() {
        let l = Label::new("l");
        let marked = Term::mark(Term::num(0), l.clone());
        let lc = Term::dice_lab(l.clone(), Rat::new(1, 2));
        assert!(!marked.is_core() && marked.is_lab() && !marked.is_lc());
        assert!(!lc.is_core() && !lc.is_lab() && lc.is_lc());
        assert!(Term::dice(Rat::new(1, 2)).is_core());
        assert_eq!(marked.labels().into_iter().collect::<Vec<_>>(), vec![l]);
    }

    #[test]
    fn structurally_equal_terms_hash_equal() {
        let a = Term::app(Term::var("f"), Term::num(2));
        let b = Term::app(Term::var("f"), Term::num(2));
        assert_eq!(a, b);
        assert_eq!(a.structural_hash(), b.structural_hash());
        assert_ne!(a, Term::app(Term::var("f"), Term::num(3)));
    }

    #[test]
    fn free_vars_track_binders() {
        let t = Term::abs("x", Ty::Nat, Term::app(Term::var("f"), Term::var("x")));
        assert_eq!(t.free_vars().iter().map(|n| n.to_string()).collect::<Vec<_>>(), vec!["f"]);
        let l = Term::let_("x", Term::var("x"), Term::var("x"));
        assert_eq!(l.free_vars().len(), 1);
    }
}
