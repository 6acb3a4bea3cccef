//! Tape-driven Krivine machines: deterministic replay against a tape,
//! the per-label tape variant, seeded sampling, and exhaustive enumeration
//! with exact weights.
//!
//! Every rule application costs one unit of fuel, including the final
//! `<0, ε>` rule, coin resolution, `fix` unfolding and passing a mark.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::ast::{typecheck_closed, typecheck_stack, Frame, Label, Stack, Term, TermKind, TypeError};
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("term is not closed (free: {0})")]
    NotClosed(String),
    #[error(transparent)]
    IllTyped(#[from] TypeError),
    #[error("term of type {term} cannot be placed on a stack expecting {stack}")]
    StateMismatch { term: String, stack: String },
    #[error("{0}")]
    Variant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A finite random tape of bits (each 0 or 1).
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Tape(pub Vec<u8>);

impl Tape {
    pub fn empty() -> Tape {
        Tape(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every tape of length exactly `n`, in lexicographic order.
    pub fn all_of_length(n: usize) -> impl Iterator<Item = Tape> {
        (0u64..(1u64 << n)).map(move |code| Tape((0..n).rev().map(|i| ((code >> i) & 1) as u8).collect()))
    }

    /// Every tape of length at most `n`, shortest first.
    pub fn all_up_to(n: usize) -> impl Iterator<Item = Tape> {
        (0..=n).flat_map(Tape::all_of_length)
    }
}

impl fmt::Display for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid tape `{0}`")]
pub struct TapeParseError(pub String);

impl FromStr for Tape {
    type Err = TapeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(TapeParseError(s.to_string())),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(Tape)
    }
}

/// One tape per label.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct MultiTape(pub BTreeMap<Label, Tape>);

impl MultiTape {
    pub fn new() -> Self {
        MultiTape(BTreeMap::new())
    }

    pub fn with(mut self, l: &Label, t: Tape) -> Self {
        self.0.insert(l.clone(), t);
        self
    }

    pub fn total_len(&self) -> usize {
        self.0.values().map(Tape::len).sum()
    }
}

impl fmt::Display for MultiTape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, t)| format!("{l}:{t}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for MultiTape {
    type Err = TapeParseError;

    /// `label:bits` pairs separated by commas; the empty string is the empty family.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = MultiTape::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (l, bits) = part.split_once(':').ok_or_else(|| TapeParseError(s.to_string()))?;
            let l = l.trim();
            if l.is_empty() {
                return Err(TapeParseError(s.to_string()));
            }
            out.0.insert(Label::new(l), bits.parse()?);
        }
        Ok(out)
    }
}

/// Finite multiset of labels.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct LabelMultiset(BTreeMap<Label, u64>);

impl LabelMultiset {
    pub fn new() -> Self {
        LabelMultiset(BTreeMap::new())
    }

    pub fn add(&mut self, l: &Label) {
        *self.0.entry(l.clone()).or_insert(0) += 1;
    }

    pub fn count(&self, l: &Label) -> u64 {
        self.0.get(l).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self, other: &LabelMultiset) -> LabelMultiset {
        let mut out = self.clone();
        for (l, n) in &other.0 {
            *out.0.entry(l.clone()).or_insert(0) += n;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, u64)> {
        self.0.iter().map(|(l, n)| (l, *n))
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (Label, u64)>) -> Self {
        LabelMultiset(counts.into_iter().filter(|(_, n)| *n > 0).collect())
    }
}

impl fmt::Display for LabelMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, n)| format!("{l}:{n}")).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// A closed, well-typed machine state `<M, π>`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct State {
    term: Term,
    stack: Stack,
}

impl State {
    pub fn new(term: Term, stack: Stack) -> Result<State, MachineError> {
        if !term.is_closed() {
            return Err(MachineError::NotClosed(term.free_vars().join(", ")));
        }
        let tt = typecheck_closed(&term)?;
        let st = typecheck_stack(&stack)?;
        if tt != st {
            return Err(MachineError::StateMismatch { term: tt.to_string(), stack: st.to_string() });
        }
        Ok(State { term, stack })
    }

    /// `<M, ε>` for a closed term of type nat.
    pub fn initial(term: Term) -> Result<State, MachineError> {
        State::new(term, Stack::empty())
    }

    pub fn term(&self) -> &Term {
        &self.term
    }

    pub fn stack(&self) -> &Stack {
        &self.stack
    }

    pub fn is_core(&self) -> bool {
        self.term.is_core() && self.frame_terms().iter().all(|t| t.is_core())
    }

    pub fn is_lab(&self) -> bool {
        self.term.is_lab() && self.frame_terms().iter().all(|t| t.is_lab())
    }

    pub fn is_lc(&self) -> bool {
        self.term.is_lc() && self.frame_terms().iter().all(|t| t.is_lc())
    }

    pub fn labels(&self) -> std::collections::BTreeSet<Label> {
        let mut out = self.term.labels();
        out.extend(self.stack.labels());
        out
    }

    /// Applies a term translation to the head term and every frame.
    pub fn map_terms(&self, mut f: impl FnMut(&Term) -> Term) -> State {
        State { term: f(&self.term), stack: self.stack.map_terms(&mut f) }
    }

    fn frame_terms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        for fr in self.stack.frames() {
            match fr {
                Frame::Arg(m) | Frame::Let(_, m) => out.push(m.clone()),
                Frame::If(a, b) => {
                    out.push(a.clone());
                    out.push(b.clone());
                }
                Frame::Succ | Frame::Pred => {}
            }
        }
        out
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}>", self.term, self.stack)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum RejectReason {
    /// Reached `<n+1, ε>`.
    TerminalNonzero,
    /// Reached `<0, ε>` with unread bits.
    LeftoverTape,
    /// A coin found the main tape empty.
    TapeExhausted,
    /// A labeled coin found its label tape empty.
    EmptyLabelTape,
    /// No rule applies (ill-typed or open configuration).
    Stuck,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::TerminalNonzero => "terminal-nonzero",
            RejectReason::LeftoverTape => "leftover-tape",
            RejectReason::TapeExhausted => "tape-exhausted",
            RejectReason::EmptyLabelTape => "empty-label-tape",
            RejectReason::Stuck => "stuck",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RunOutcome {
    AcceptZero { weight: Rat, labels: LabelMultiset, steps: u64 },
    Reject { reason: RejectReason, steps: u64 },
    OutOfFuel,
}

impl RunOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, RunOutcome::AcceptZero { .. })
    }

    pub fn weight(&self) -> Option<&Rat> {
        match self {
            RunOutcome::AcceptZero { weight, .. } => Some(weight),
            _ => None,
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOutcome::AcceptZero { weight, labels, .. } => write!(f, "accept {weight} {labels}"),
            RunOutcome::Reject { reason, .. } => write!(f, "reject {reason}"),
            RunOutcome::OutOfFuel => f.write_str("out-of-fuel"),
        }
    }
}

/// `Pneg(bit, r)`: weight of reading `bit` at a coin of bias `r`.
pub fn pneg(bit: u8, r: &Rat) -> Rat {
    if bit == 0 {
        r.clone()
    } else {
        r.complement()
    }
}

/// Why deterministic execution paused.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Halt {
    /// `<n, ε>`; for n = 0 the final rule has already been charged.
    Terminal(u64),
    /// Head is a coin; fuel for resolving it is available.
    Coin(Option<Label>, Rat),
    Stuck,
    OutOfFuel,
}

/// A machine configuration together with its run bookkeeping.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Config {
    pub term: Term,
    pub stack: Stack,
    pub labels: LabelMultiset,
    pub steps: u64,
}

impl Config {
    pub fn start(state: &State) -> Config {
        Config { term: state.term.clone(), stack: state.stack.clone(), labels: LabelMultiset::new(), steps: 0 }
    }

    /// Applies deterministic rules until a coin, a terminal, a stuck
    /// configuration or fuel exhaustion.
    pub fn advance(&mut self, fuel: u64) -> Halt {
        loop {
            match self.term.kind() {
                TermKind::Num(n) if self.stack.is_empty() => {
                    if *n == 0 {
                        if self.steps >= fuel {
                            return Halt::OutOfFuel;
                        }
                        self.steps += 1;
                    }
                    return Halt::Terminal(*n);
                }
                TermKind::Dice(r) => {
                    if self.steps >= fuel {
                        return Halt::OutOfFuel;
                    }
                    return Halt::Coin(None, r.clone());
                }
                TermKind::DiceLab(l, r) => {
                    if self.steps >= fuel {
                        return Halt::OutOfFuel;
                    }
                    return Halt::Coin(Some(l.clone()), r.clone());
                }
                _ => {}
            }
            let Some((term, stack)) = self.rule() else {
                return Halt::Stuck;
            };
            if self.steps >= fuel {
                return Halt::OutOfFuel;
            }
            self.steps += 1;
            self.term = term;
            self.stack = stack;
        }
    }

    /// Replaces the head coin by the bit read from a tape.
    pub fn resolve_coin(&mut self, bit: u8) {
        self.term = Term::num(bit as u64);
        self.steps += 1;
    }

    fn rule(&mut self) -> Option<(Term, Stack)> {
        let s = &self.stack;
        Some(match self.term.kind() {
            TermKind::Let(x, m, n) => (m.clone(), s.push(Frame::Let(x.clone(), n.clone()))),
            TermKind::App(m, n) => (m.clone(), s.push(Frame::Arg(n.clone()))),
            TermKind::If(m, n, p) => (m.clone(), s.push(Frame::If(n.clone(), p.clone()))),
            TermKind::Succ(m) => (m.clone(), s.push(Frame::Succ)),
            TermKind::Pred(m) => (m.clone(), s.push(Frame::Pred)),
            TermKind::Fix(m) => (m.clone(), s.push(Frame::Arg(self.term.clone()))),
            TermKind::Mark(m, l) => {
                self.labels.add(l);
                (m.clone(), s.clone())
            }
            TermKind::Abs(x, _, body) => match s.top()? {
                (Frame::Arg(n), rest) => (body.subst(x, n), rest.clone()),
                _ => return None,
            },
            TermKind::Num(n) => {
                let n = *n;
                let (frame, rest) = s.top()?;
                match frame {
                    Frame::Succ => (Term::num(n + 1), rest.clone()),
                    Frame::Pred => (Term::num(n.saturating_sub(1)), rest.clone()),
                    Frame::If(z, nz) => (if n == 0 { z.clone() } else { nz.clone() }, rest.clone()),
                    Frame::Let(x, body) => (body.subst(x, &Term::num(n)), rest.clone()),
                    Frame::Arg(_) => return None,
                }
            }
            TermKind::Var(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => return None,
        })
    }
}

/// Where coin bits come from during a replay.
trait BitSource {
    fn next(&mut self, label: Option<&Label>) -> Result<u8, RejectReason>;
    fn exhausted(&self) -> bool;
}

struct MainTape<'a> {
    tape: &'a [u8],
    pos: usize,
}

impl BitSource for MainTape<'_> {
    fn next(&mut self, _label: Option<&Label>) -> Result<u8, RejectReason> {
        let b = *self.tape.get(self.pos).ok_or(RejectReason::TapeExhausted)?;
        self.pos += 1;
        Ok(b)
    }

    fn exhausted(&self) -> bool {
        self.pos == self.tape.len()
    }
}

struct LcTapes<'a> {
    main: MainTape<'a>,
    labels: BTreeMap<Label, MainTape<'a>>,
    shuffle: Vec<u8>,
}

impl BitSource for LcTapes<'_> {
    fn next(&mut self, label: Option<&Label>) -> Result<u8, RejectReason> {
        let b = match label {
            None => self.main.next(None)?,
            Some(l) => match self.labels.get_mut(l) {
                Some(t) => t.next(None).map_err(|_| RejectReason::EmptyLabelTape)?,
                None => return Err(RejectReason::EmptyLabelTape),
            },
        };
        self.shuffle.push(b);
        Ok(b)
    }

    fn exhausted(&self) -> bool {
        self.main.exhausted() && self.labels.values().all(|t| t.exhausted())
    }
}

fn replay(state: &State, fuel: u64, src: &mut impl BitSource) -> RunOutcome {
    let mut cfg = Config::start(state);
    let mut weight = Rat::one();
    loop {
        match cfg.advance(fuel) {
            Halt::Terminal(0) => {
                return if src.exhausted() {
                    RunOutcome::AcceptZero { weight, labels: cfg.labels, steps: cfg.steps }
                } else {
                    RunOutcome::Reject { reason: RejectReason::LeftoverTape, steps: cfg.steps }
                };
            }
            Halt::Terminal(_) => return RunOutcome::Reject { reason: RejectReason::TerminalNonzero, steps: cfg.steps },
            Halt::Stuck => return RunOutcome::Reject { reason: RejectReason::Stuck, steps: cfg.steps },
            Halt::OutOfFuel => return RunOutcome::OutOfFuel,
            Halt::Coin(label, r) => match src.next(label.as_ref()) {
                Ok(bit) => {
                    weight = weight * pneg(bit, &r);
                    cfg.resolve_coin(bit);
                }
                Err(reason) => return RunOutcome::Reject { reason, steps: cfg.steps },
            },
        }
    }
}

/// Replays `tape` against the state. Labeled coins, if any, read the main
/// tape as plain coins do.
pub fn run_tape(state: &State, tape: &Tape, fuel: u64) -> RunOutcome {
    replay(state, fuel, &mut MainTape { tape: &tape.0, pos: 0 })
}

fn lc_source<'a>(tape: &'a Tape, mtapes: &'a MultiTape) -> LcTapes<'a> {
    LcTapes {
        main: MainTape { tape: &tape.0, pos: 0 },
        labels: mtapes.0.iter().map(|(l, t)| (l.clone(), MainTape { tape: &t.0, pos: 0 })).collect(),
        shuffle: Vec::new(),
    }
}

/// Labeled coins read their own label tape; acceptance requires every tape
/// to be consumed exactly.
pub fn run_lc(state: &State, tape: &Tape, mtapes: &MultiTape, fuel: u64) -> RunOutcome {
    replay(state, fuel, &mut lc_source(tape, mtapes))
}

/// The bits read by an accepting `run_lc`, in reading order.
pub fn run_lc_shuffle(state: &State, tape: &Tape, mtapes: &MultiTape, fuel: u64) -> Option<Tape> {
    let mut src = lc_source(tape, mtapes);
    match replay(state, fuel, &mut src) {
        RunOutcome::AcceptZero { .. } => Some(Tape(src.shuffle)),
        _ => None,
    }
}

/// Bounds for exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct EnumLimits {
    pub fuel: u64,
    pub max_tape: usize,
    /// Paths whose weight drops below this are abandoned into the residual.
    pub min_weight: Option<Rat>,
}

impl EnumLimits {
    pub fn new(fuel: u64, max_tape: usize) -> Self {
        EnumLimits { fuel, max_tape, min_weight: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumResult {
    /// Acceptance mass by label multiset.
    pub table: BTreeMap<LabelMultiset, Rat>,
    pub accept_total: Rat,
    /// Unresolved mass: out of fuel, over the tape bound, or pruned.
    pub residual: Rat,
    pub reject_total: Rat,
    /// The part of `residual` dropped by `min_weight`.
    pub pruned: Rat,
    /// Mass reaching `<n, ε>` for each numeral n (n = 0 included).
    pub terminals: BTreeMap<u64, Rat>,
}

impl EnumResult {
    /// CSV with columns `multiset,numerator,denominator`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("multiset,numerator,denominator\n");
        for (mu, w) in &self.table {
            out.push_str(&format!("\"{mu}\",{},{}\n", w.numer(), w.denom()));
        }
        out
    }

    /// Σ_μ μ(l) · P(μ).
    pub fn label_mass(&self, l: &Label) -> Rat {
        self.table.iter().map(|(mu, w)| Rat::from_integer(mu.count(l)) * w).sum()
    }

    /// Acceptance probability of each count of `l`.
    pub fn count_distribution(&self, l: &Label) -> BTreeMap<u64, Rat> {
        let mut out: BTreeMap<u64, Rat> = BTreeMap::new();
        for (mu, w) in &self.table {
            *out.entry(mu.count(l)).or_insert_with(Rat::zero) += w;
        }
        out
    }
}

/// Unreduced nonnegative rational used while enumerating. Denominators stay
/// products of coin denominators, so merging paths rarely needs a gcd.
#[derive(Clone, Debug)]
struct Mass {
    num: BigInt,
    den: BigInt,
}

impl Mass {
    fn zero() -> Mass {
        Mass { num: BigInt::zero(), den: BigInt::one() }
    }

    fn one() -> Mass {
        Mass { num: BigInt::one(), den: BigInt::one() }
    }

    fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn scaled(&self, r: &Rat) -> Mass {
        Mass { num: &self.num * r.numer(), den: &self.den * r.denom() }
    }

    fn add(&mut self, o: &Mass) {
        if o.num.is_zero() {
            return;
        }
        if self.num.is_zero() {
            *self = o.clone();
        } else if self.den == o.den {
            self.num += &o.num;
        } else if (&self.den % &o.den).is_zero() {
            self.num += &o.num * (&self.den / &o.den);
        } else if (&o.den % &self.den).is_zero() {
            self.num = &self.num * (&o.den / &self.den) + &o.num;
            self.den = o.den.clone();
        } else {
            let l = self.den.lcm(&o.den);
            self.num = &self.num * (&l / &self.den) + &o.num * (&l / &o.den);
            self.den = l;
        }
    }

    fn less_than(&self, r: &Rat) -> bool {
        &self.num * r.denom() < r.numer() * &self.den
    }

    fn to_rat(&self) -> Rat {
        Rat::from_big(self.num.clone(), self.den.clone())
    }
}

enum Leaf {
    Accept(LabelMultiset, Mass),
    Terminal(u64, Mass),
    Reject(Mass),
    Residual(Mass),
    Branch(Vec<(Config, Mass)>),
}

fn explore(mut cfg: Config, w: Mass, limits: &EnumLimits, depth: usize) -> Leaf {
    match cfg.advance(limits.fuel) {
        Halt::Terminal(0) => Leaf::Accept(cfg.labels, w),
        Halt::Terminal(n) => Leaf::Terminal(n, w),
        Halt::Stuck => Leaf::Reject(w),
        Halt::OutOfFuel => Leaf::Residual(w),
        Halt::Coin(_, r) => {
            if depth >= limits.max_tape {
                return Leaf::Residual(w);
            }
            let mut next = Vec::with_capacity(2);
            for bit in [0u8, 1] {
                let wb = w.scaled(&pneg(bit, &r));
                if wb.is_zero() {
                    continue;
                }
                let mut c = cfg.clone();
                c.resolve_coin(bit);
                next.push((c, wb));
            }
            Leaf::Branch(next)
        }
    }
}

/// Explores every tape up to the bounds, layer by layer in tape length,
/// merging identical configurations. Labeled coins branch like plain coins.
pub fn enumerate(state: &State, limits: &EnumLimits) -> EnumResult {
    let (mut accept, mut residual, mut reject, mut pruned) = (Mass::zero(), Mass::zero(), Mass::zero(), Mass::zero());
    let mut table: BTreeMap<LabelMultiset, Mass> = BTreeMap::new();
    let mut terminals: BTreeMap<u64, Mass> = BTreeMap::new();
    let mut layer: Vec<(Config, Mass)> = vec![(Config::start(state), Mass::one())];
    let mut depth = 0usize;
    while !layer.is_empty() {
        let leaves: Vec<Leaf> = if layer.len() > 64 {
            layer.into_par_iter().map(|(c, w)| explore(c, w, limits, depth)).collect()
        } else {
            layer.into_iter().map(|(c, w)| explore(c, w, limits, depth)).collect()
        };
        let mut next: FxHashMap<Config, Mass> = FxHashMap::default();
        for leaf in leaves {
            match leaf {
                Leaf::Accept(mu, w) => {
                    accept.add(&w);
                    terminals.entry(0).or_insert_with(Mass::zero).add(&w);
                    table.entry(mu).or_insert_with(Mass::zero).add(&w);
                }
                Leaf::Terminal(n, w) => {
                    reject.add(&w);
                    terminals.entry(n).or_insert_with(Mass::zero).add(&w);
                }
                Leaf::Reject(w) => reject.add(&w),
                Leaf::Residual(w) => residual.add(&w),
                Leaf::Branch(children) => {
                    for (c, w) in children {
                        next.entry(c).or_insert_with(Mass::zero).add(&w);
                    }
                }
            }
        }
        layer = Vec::with_capacity(next.len());
        for (c, w) in next {
            match &limits.min_weight {
                Some(min) if w.less_than(min) => {
                    residual.add(&w);
                    pruned.add(&w);
                }
                _ => layer.push((c, w)),
            }
        }
        depth += 1;
    }
    EnumResult {
        table: table.into_iter().map(|(k, v)| (k, v.to_rat())).collect(),
        accept_total: accept.to_rat(),
        residual: residual.to_rat(),
        reject_total: reject.to_rat(),
        pruned: pruned.to_rat(),
        terminals: terminals.into_iter().map(|(k, v)| (k, v.to_rat())).collect(),
    }
}

/// A ChaCha stream keyed by `(seed, index)`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw(rng: &mut ChaCha8Rng, r: &Rat) -> u8 {
    let hit = match (r.numer().to_u64(), r.denom().to_u64()) {
        (Some(n), Some(d)) => rng.random_range(0..d) < n,
        _ => rng.random::<f64>() < r.to_f64(),
    };
    if hit {
        0
    } else {
        1
    }
}

/// One run with coin bits drawn from `rng`; returns the outcome and the
/// tape that was drawn.
pub fn sample_with(state: &State, rng: &mut ChaCha8Rng, fuel: u64) -> (RunOutcome, Tape) {
    let mut cfg = Config::start(state);
    let mut weight = Rat::one();
    let mut tape = Vec::new();
    loop {
        match cfg.advance(fuel) {
            Halt::Terminal(0) => {
                return (RunOutcome::AcceptZero { weight, labels: cfg.labels, steps: cfg.steps }, Tape(tape));
            }
            Halt::Terminal(_) => {
                return (RunOutcome::Reject { reason: RejectReason::TerminalNonzero, steps: cfg.steps }, Tape(tape));
            }
            Halt::Stuck => return (RunOutcome::Reject { reason: RejectReason::Stuck, steps: cfg.steps }, Tape(tape)),
            Halt::OutOfFuel => return (RunOutcome::OutOfFuel, Tape(tape)),
            Halt::Coin(_, r) => {
                let bit = draw(rng, &r);
                weight = weight * pneg(bit, &r);
                tape.push(bit);
                cfg.resolve_coin(bit);
            }
        }
    }
}

/// Deterministic in `(state, seed, fuel)`.
pub fn sample(state: &State, seed: u64, fuel: u64) -> RunOutcome {
    sample_with(state, &mut sample_rng(seed, 0), fuel).0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub timeout_fraction: f64,
}

/// Monte Carlo acceptance frequency over `n` runs; run i uses stream i of
/// `seed`, so the result does not depend on the thread count.
pub fn estimate_prob(term: &Term, n: u64, seed: u64, fuel: u64) -> Result<Estimate, MachineError> {
    if n == 0 {
        return Err(MachineError::Config("sample count must be positive".into()));
    }
    let state = State::initial(term.clone())?;
    let (acc, oof) = (0..n)
        .into_par_iter()
        .map(|i| match sample_with(&state, &mut sample_rng(seed, i), fuel).0 {
            RunOutcome::AcceptZero { .. } => (1u64, 0u64),
            RunOutcome::OutOfFuel => (0, 1),
            RunOutcome::Reject { .. } => (0, 0),
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let p = acc as f64 / nf;
    Ok(Estimate { estimate: p, stderr: (p * (1.0 - p) / nf).sqrt(), timeout_fraction: oof as f64 / nf })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationalExpectation {
    /// Σ_μ μ(l)·P(μ) over resolved paths; a lower bound.
    pub lower: Rat,
    pub accept_mass: Rat,
    pub residual: Rat,
}

impl OperationalExpectation {
    /// `lower / accept_mass`, or None when nothing was accepted.
    pub fn conditional(&self) -> Option<f64> {
        if self.accept_mass.is_zero() {
            None
        } else {
            Some((&self.lower / &self.accept_mass).to_f64())
        }
    }
}

pub fn expect_label_operational(term: &Term, l: &Label, limits: &EnumLimits) -> Result<OperationalExpectation, MachineError> {
    if !term.is_lab() {
        return Err(MachineError::Variant("expected a term without labeled coins".into()));
    }
    let state = State::initial(term.clone())?;
    let r = enumerate(&state, limits);
    Ok(OperationalExpectation { lower: r.label_mass(l), accept_mass: r.accept_total, residual: r.residual })
}
