//! Points of the relational model, computed as derivable judgments
//! `Φ ⊢ M : a` of an intersection typing system, within explicit bounds.
//!
//! Judgments are built bottom-up over the term. `fix` is unrolled by depth:
//! round d combines the body's judgments with those of round d − 1, until
//! nothing new appears or the depth bound is reached.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use rustc_hash::FxHashMap;

use crate::ast::{typecheck, Label, Name, Term, TermKind, Ty, TyCtx, TypeError};
use crate::machine::{enumerate, Config, EnumLimits, Halt, LabelMultiset, MachineError, State};
use crate::rat::Rat;
use crate::transform::{spy, spy_vars, TransformError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelError {
    #[error(transparent)]
    IllTyped(#[from] TypeError),
    #[error("`{term}` has type {found}, not {expected}")]
    Goal { term: String, expected: String, found: String },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// A point of the web of a type: a numeral, or a finite multiset of
/// argument points with a result point.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Point {
    Nat(u64),
    /// The multiset is kept sorted.
    Fun(Vec<Point>, Box<Point>),
}

impl Point {
    pub fn fun(mut mu: Vec<Point>, b: Point) -> Point {
        mu.sort();
        Point::Fun(mu, Box::new(b))
    }
}

fn write_multiset(f: &mut fmt::Formatter<'_>, mu: &[Point]) -> fmt::Result {
    f.write_str("[")?;
    for (i, p) in mu.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{p}")?;
    }
    f.write_str("]")
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Nat(n) => write!(f, "{n}"),
            Point::Fun(mu, b) => {
                f.write_str("(")?;
                write_multiset(f, mu)?;
                write!(f, ", {b})")
            }
        }
    }
}

/// A semantic context: a multiset of points per variable. Variables with
/// an empty multiset are omitted, so `0·Γ` is the empty map.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct SemCtx(BTreeMap<Name, Vec<Point>>);

impl SemCtx {
    pub fn empty() -> Self {
        SemCtx::default()
    }

    pub fn singleton(x: &Name, a: Point) -> Self {
        SemCtx(BTreeMap::from([(x.clone(), vec![a])]))
    }

    pub fn multiset(&self, x: &str) -> &[Point] {
        self.0.get(x).map_or(&[], |v| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &[Point])> {
        self.0.iter().map(|(x, mu)| (x, mu.as_slice()))
    }

    /// `Φ₀ + Φ₁`, or None when a multiset grows beyond `max`.
    fn sum(&self, other: &SemCtx, max: usize) -> Option<SemCtx> {
        let mut out = self.0.clone();
        for (x, mu) in &other.0 {
            let e = out.entry(x.clone()).or_default();
            if e.len() + mu.len() > max {
                return None;
            }
            e.extend(mu.iter().cloned());
            e.sort();
        }
        Some(SemCtx(out))
    }

    fn without(&self, x: &str) -> (SemCtx, Vec<Point>) {
        let mut m = self.0.clone();
        let mu = m.remove(x).unwrap_or_default();
        (SemCtx(m), mu)
    }
}

impl fmt::Display for SemCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for (i, (x, mu)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x}:")?;
            write_multiset(f, mu)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBounds {
    /// Largest multiset anywhere: in contexts and inside points.
    pub max_multiset_size: usize,
    pub max_numeral: u64,
    /// Rounds of `fix` unrolling.
    pub max_depth: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { max_multiset_size: 3, max_numeral: 8, max_depth: 16 }
    }
}

pub type Judgment = (SemCtx, Point);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    pub judgments: BTreeSet<Judgment>,
    /// Some derivation was cut by a bound, so judgments may be missing.
    pub truncated: bool,
}

impl PointSet {
    /// Lines `Φ ⊢ M : a`, sorted.
    pub fn render(&self, term: &Term) -> Vec<String> {
        let mut lines: Vec<String> = self.judgments.iter().map(|(c, a)| format!("{c} ⊢ {term} : {a}")).collect();
        lines.sort();
        lines
    }
}

const MAX_UNIVERSE: usize = 100_000;

type JSet = Rc<BTreeSet<Judgment>>;

struct Search<'a> {
    bounds: SearchBounds,
    /// Points allowed for particular variables instead of their whole web.
    restrict: &'a BTreeMap<Name, Vec<Point>>,
    memo: FxHashMap<(Term, Vec<(Name, Ty)>), JSet>,
    universes: FxHashMap<Ty, Rc<Vec<Point>>>,
    truncated: bool,
}

/// All sorted multisets of size at most `max` over `elems`.
fn multisets(elems: &[Point], max: usize) -> Vec<Vec<Point>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(Vec<Point>, usize)> = vec![(Vec::new(), 0)];
    for _ in 0..max {
        let mut next = Vec::new();
        for (mu, from) in &frontier {
            for (i, e) in elems.iter().enumerate().skip(*from) {
                let mut m = mu.clone();
                m.push(e.clone());
                out.push(m.clone());
                next.push((m, i));
            }
        }
        frontier = next;
    }
    out
}

impl Search<'_> {
    fn universe(&mut self, ty: &Ty) -> Rc<Vec<Point>> {
        if let Some(u) = self.universes.get(ty) {
            return u.clone();
        }
        let u: Vec<Point> = match ty {
            Ty::Nat => (0..=self.bounds.max_numeral).map(Point::Nat).collect(),
            Ty::Arrow(a, b) => {
                let (ua, ub) = (self.universe(a), self.universe(b));
                let mut out = Vec::new();
                'outer: for mu in multisets(&ua, self.bounds.max_multiset_size) {
                    for p in ub.iter() {
                        if out.len() >= MAX_UNIVERSE {
                            self.truncated = true;
                            break 'outer;
                        }
                        out.push(Point::Fun(mu.clone(), Box::new(p.clone())));
                    }
                }
                out
            }
        };
        let u = Rc::new(u);
        self.universes.insert(ty.clone(), u.clone());
        u
    }

    fn nat(&mut self, n: u64) -> Option<Point> {
        if n > self.bounds.max_numeral {
            self.truncated = true;
            None
        } else {
            Some(Point::Nat(n))
        }
    }

    fn sum(&mut self, a: &SemCtx, b: &SemCtx) -> Option<SemCtx> {
        let s = a.sum(b, self.bounds.max_multiset_size);
        if s.is_none() {
            self.truncated = true;
        }
        s
    }

    fn judgments(&mut self, ctx: &TyCtx, t: &Term) -> JSet {
        let key_ctx: Vec<(Name, Ty)> =
            t.free_vars().iter().map(|x| (x.clone(), ctx.lookup(x).cloned().expect("typechecked"))).collect();
        let key = (t.clone(), key_ctx);
        if let Some(j) = self.memo.get(&key) {
            return j.clone();
        }
        let j = Rc::new(self.compute(ctx, t));
        self.memo.insert(key, j.clone());
        j
    }

    fn compute(&mut self, ctx: &TyCtx, t: &Term) -> BTreeSet<Judgment> {
        let mut out = BTreeSet::new();
        match t.kind() {
            TermKind::Num(n) => {
                if let Some(p) = self.nat(*n) {
                    out.insert((SemCtx::empty(), p));
                }
            }
            TermKind::Var(x) => {
                let points = match self.restrict.get(x) {
                    Some(ps) => Rc::new(ps.clone()),
                    None => self.universe(ctx.lookup(x).expect("typechecked")),
                };
                for a in points.iter() {
                    out.insert((SemCtx::singleton(x, a.clone()), a.clone()));
                }
            }
            TermKind::Dice(r) | TermKind::DiceLab(_, r) => {
                if !r.is_zero() {
                    out.insert((SemCtx::empty(), Point::Nat(0)));
                }
                if !r.is_one() {
                    out.insert((SemCtx::empty(), Point::Nat(1)));
                }
            }
            TermKind::Mark(m, _) => return (*self.judgments(ctx, m)).clone(),
            TermKind::Succ(m) => {
                for (c, a) in self.judgments(ctx, m).iter() {
                    if let Point::Nat(n) = a {
                        if let Some(p) = self.nat(n + 1) {
                            out.insert((c.clone(), p));
                        }
                    }
                }
            }
            TermKind::Pred(m) => {
                for (c, a) in self.judgments(ctx, m).iter() {
                    if let Point::Nat(n) = a {
                        out.insert((c.clone(), Point::Nat(n.saturating_sub(1))));
                    }
                }
            }
            TermKind::If(m, p, q) => {
                let jm = self.judgments(ctx, m);
                let (jp, jq) = (self.judgments(ctx, p), self.judgments(ctx, q));
                for (c0, a) in jm.iter() {
                    let branch = if *a == Point::Nat(0) { &jp } else { &jq };
                    for (c1, b) in branch.iter() {
                        if let Some(c) = self.sum(c0, c1) {
                            out.insert((c, b.clone()));
                        }
                    }
                }
            }
            TermKind::Let(x, m, n) => {
                let jm = self.judgments(ctx, m);
                let jn = self.judgments(&ctx.extended(x, Ty::Nat), n);
                for (c1, b) in jn.iter() {
                    let (rest, mu) = c1.without(x);
                    let Some(first) = mu.first() else {
                        for (c0, _) in jm.iter() {
                            if let Some(c) = self.sum(c0, &rest) {
                                out.insert((c, b.clone()));
                            }
                        }
                        continue;
                    };
                    if mu.iter().any(|p| p != first) {
                        continue;
                    }
                    for (c0, a) in jm.iter() {
                        if a == first {
                            if let Some(c) = self.sum(c0, &rest) {
                                out.insert((c, b.clone()));
                            }
                        }
                    }
                }
            }
            TermKind::Abs(x, ty, body) => {
                for (c, b) in self.judgments(&ctx.extended(x, ty.clone()), body).iter() {
                    let (rest, mu) = c.without(x);
                    out.insert((rest, Point::Fun(mu, Box::new(b.clone()))));
                }
            }
            TermKind::App(m, p) => {
                let jm = self.judgments(ctx, m);
                let jp = self.judgments(ctx, p);
                out = self.apply_rule(&jm, &jp);
            }
            TermKind::Fix(m) => {
                let jm = self.judgments(ctx, m);
                let mut cur: BTreeSet<Judgment> = BTreeSet::new();
                let mut stable = false;
                for _ in 0..self.bounds.max_depth {
                    let next = self.apply_rule(&jm, &cur);
                    if next == cur {
                        stable = true;
                        break;
                    }
                    cur = next;
                }
                if !stable {
                    self.truncated = true;
                }
                out = cur;
            }
        }
        out
    }

    /// `Φ₀ ⊢ M : ([a₁…aₙ], b)` and `Φᵢ ⊢ P : aᵢ` give `ΣΦᵢ ⊢ M P : b`.
    fn apply_rule(&mut self, jm: &BTreeSet<Judgment>, jp: &BTreeSet<Judgment>) -> BTreeSet<Judgment> {
        let mut by_point: FxHashMap<&Point, Vec<&SemCtx>> = FxHashMap::default();
        for (c, a) in jp {
            by_point.entry(a).or_default().push(c);
        }
        let mut out = BTreeSet::new();
        for (c0, f) in jm {
            let Point::Fun(mu, b) = f else { continue };
            let mut partial = vec![c0.clone()];
            for a in mu {
                let Some(choices) = by_point.get(a) else {
                    partial.clear();
                    break;
                };
                let mut next = Vec::new();
                for c in &partial {
                    for ci in choices {
                        if let Some(s) = self.sum(c, ci) {
                            next.push(s);
                        }
                    }
                }
                next.sort();
                next.dedup();
                partial = next;
            }
            for c in partial {
                out.insert((c, (**b).clone()));
            }
        }
        out
    }
}

fn search(ctx: &TyCtx, term: &Term, goal: &Ty, bounds: SearchBounds, restrict: &BTreeMap<Name, Vec<Point>>) -> Result<PointSet, RelError> {
    let found = typecheck(ctx, term)?;
    if &found != goal {
        return Err(RelError::Goal { term: term.to_string(), expected: goal.to_string(), found: found.to_string() });
    }
    let mut s = Search { bounds, restrict, memo: FxHashMap::default(), universes: FxHashMap::default(), truncated: false };
    let j = s.judgments(ctx, term);
    Ok(PointSet { judgments: (*j).clone(), truncated: s.truncated })
}

/// All judgments `Φ ⊢ term : a` at type `goal` whose derivations stay
/// within the bounds.
pub fn infer_points(ctx: &TyCtx, term: &Term, goal: &Ty, bounds: SearchBounds) -> Result<PointSet, RelError> {
    search(ctx, term, goal, bounds, &BTreeMap::new())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportReport {
    /// Numerals `n` with `⊢ term : n` derivable.
    pub relational: BTreeSet<u64>,
    /// Numerals reached with positive probability.
    pub operational: BTreeSet<u64>,
    /// Operational numerals above the numeral bound, left out of the comparison.
    pub skipped: BTreeSet<u64>,
    pub truncated: bool,
    /// Unresolved enumeration mass; when positive the operational side may
    /// miss numerals.
    pub residual: Rat,
}

impl SupportReport {
    pub fn matches(&self) -> bool {
        self.relational == self.operational.iter().copied().filter(|n| !self.skipped.contains(n)).collect()
    }
}

/// Compares the relational points of a closed `nat` term with the numerals
/// its executions reach. Coins must have probabilities strictly between 0
/// and 1.
pub fn support_match(term: &Term, bounds: SearchBounds, limits: &EnumLimits) -> Result<SupportReport, RelError> {
    let mut degenerate = false;
    term.any(&mut |t| {
        if let TermKind::Dice(r) | TermKind::DiceLab(_, r) = t.kind() {
            degenerate |= r.is_zero() || r.is_one();
        }
        false
    });
    if degenerate {
        return Err(RelError::Precondition("coin probabilities must lie strictly between 0 and 1".into()));
    }
    let rel = infer_points(&TyCtx::new(), term, &Ty::Nat, bounds)?;
    let e = enumerate(&State::initial(term.clone())?, limits);
    let operational: BTreeSet<u64> = e.terminals.iter().filter(|(_, w)| !w.is_zero()).map(|(n, _)| *n).collect();
    let skipped = operational.iter().copied().filter(|n| *n > bounds.max_numeral).collect();
    let relational = rel
        .judgments
        .iter()
        .filter_map(|(c, a)| match a {
            Point::Nat(n) if c.is_empty() => Some(*n),
            _ => None,
        })
        .collect();
    Ok(SupportReport { relational, operational, skipped, truncated: rel.truncated, residual: e.residual })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueReport {
    pub spied: Term,
    pub vars: BTreeMap<Label, Name>,
    /// Judgments with every `x_l` used only at 0.
    pub points: Vec<Judgment>,
    /// Final numeral and label counts of the machine run, if it halts.
    pub machine: Option<(u64, LabelMultiset)>,
    pub truncated: bool,
}

impl CliqueReport {
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// At most one point, and it agrees with the machine run.
    pub fn consistent(&self) -> bool {
        match (self.points.as_slice(), &self.machine) {
            ([], _) => true,
            ([(c, a)], Some((n, labels))) => {
                *a == Point::Nat(*n) && self.vars.iter().all(|(l, x)| c.multiset(x).len() as u64 == labels.count(l))
            }
            _ => false,
        }
    }
}

/// For a closed, coin-free labeled term: the relational points of its spy
/// translation with label variables restricted to the point 0, next to the
/// machine's deterministic run.
pub fn clique_check(term: &Term, bounds: SearchBounds, fuel: u64) -> Result<CliqueReport, RelError> {
    if !term.is_lab() || term.has_dice() {
        return Err(RelError::Precondition("expected a labeled term without coins".into()));
    }
    let vars = spy_vars(term);
    let spied = spy(term, &vars, &TyCtx::new())?;
    let ctx: TyCtx = vars.values().map(|x| (x.clone(), Ty::Nat)).collect();
    let restrict: BTreeMap<Name, Vec<Point>> = vars.values().map(|x| (x.clone(), vec![Point::Nat(0)])).collect();
    let rel = search(&ctx, &spied, &Ty::Nat, bounds, &restrict)?;
    let mut cfg = Config::start(&State::initial(term.clone())?);
    let machine = match cfg.advance(fuel) {
        Halt::Terminal(n) => Some((n, cfg.labels.clone())),
        _ => None,
    };
    Ok(CliqueReport { spied, vars, points: rel.judgments.into_iter().collect(), machine, truncated: rel.truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;

    fn closed(src: &str) -> PointSet {
        infer_points(&TyCtx::new(), &parse(src).unwrap(), &Ty::Nat, SearchBounds::default()).unwrap()
    }

    fn nats(p: &PointSet) -> Vec<u64> {
        p.judgments
            .iter()
            .map(|(c, a)| {
                assert!(c.is_empty());
                match a {
                    Point::Nat(n) => *n,
                    _ => panic!("not a numeral"),
                }
            })
            .collect()
    }

    #[test]
    fn closed_examples() {
        assert_eq!(nats(&closed("2")), vec![2]);
        assert_eq!(nats(&closed("(fun x: nat => succ x) 2")), vec![3]);
        assert_eq!(nats(&closed("coin(1/2)")), vec![0, 1]);
        assert_eq!(nats(&closed("coin(1)")), vec![0]);
        assert_eq!(nats(&closed("fix (fun x: nat => x)")), Vec::<u64>::new());
        assert_eq!(nats(&closed("let x = coin(1/3) in ifz x then 5 else x")), vec![1, 5]);
        assert_eq!(nats(&closed("fix (fun f: nat -> nat => fun x: nat => ifz x then 0 else f (pred x)) 2")), vec![0]);
    }

    #[test]
    fn open_terms_and_rendering() {
        let ctx = TyCtx::new().with("y", Ty::Nat);
        let b = SearchBounds { max_numeral: 2, ..SearchBounds::default() };
        let t = parse("succ y").unwrap();
        let p = infer_points(&ctx, &t, &Ty::Nat, b).unwrap();
        assert_eq!(p.render(&t), vec!["y:[0] ⊢ succ y : 1", "y:[1] ⊢ succ y : 2"]);
        assert!(p.truncated);
        let f = parse("fun x: nat => x").unwrap();
        let p = infer_points(&TyCtx::new(), &f, &Ty::arrow(Ty::Nat, Ty::Nat), b).unwrap();
        assert_eq!(p.judgments.len(), 3);
        assert!(infer_points(&TyCtx::new(), &f, &Ty::Nat, b).is_err());
    }

    #[test]
    fn multiset_enumeration() {
        let e = [Point::Nat(0), Point::Nat(1)];
        assert_eq!(multisets(&e, 2).len(), 1 + 2 + 3);
    }

    #[test]
    fn support_examples() {
        let lim = EnumLimits::new(1000, 12);
        let b = SearchBounds::default();
        for (src, want) in [("ifz coin(1/2) then 0 else 1", vec![0, 1]), ("5", vec![5]), ("fix (fun x: nat => x)", vec![])] {
            let r = support_match(&parse(src).unwrap(), b, &lim).unwrap();
            assert!(r.matches(), "{src}: {r:?}");
            assert_eq!(r.relational.into_iter().collect::<Vec<_>>(), want);
        }
        assert!(support_match(&parse("coin(0)").unwrap(), b, &lim).is_err());
    }

    #[test]
    fn clique_examples() {
        let b = SearchBounds::default();
        let r = clique_check(&parse("#l{0}").unwrap(), b, 1000).unwrap();
        assert_eq!(r.size(), 1);
        assert!(r.consistent());
        assert_eq!(r.points[0].0.multiset("x_l"), &[Point::Nat(0)]);
        let r = clique_check(&parse("#l{#l{2}}").unwrap(), b, 1000).unwrap();
        assert_eq!(r.points, vec![(r.points[0].0.clone(), Point::Nat(2))]);
        assert_eq!(r.points[0].0.multiset("x_l").len(), 2);
        assert!(r.consistent());
        let r = clique_check(&parse("#l{fix (fun x: nat => x)}").unwrap(), b, 1000).unwrap();
        assert_eq!(r.size(), 0);
        assert!(r.machine.is_none());
    }
}
