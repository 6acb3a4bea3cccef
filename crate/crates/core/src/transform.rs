//! Source-to-source translations between the language variants.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ast::{fresh_name, typecheck, Label, Name, Term, TermKind, Ty, TyCtx, TypeError};
use crate::machine::State;
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("no probability given for label `{0}`")]
    MissingProbability(Label),
    #[error("no variable given for label `{0}`")]
    MissingVariable(Label),
    #[error("variable `{0}` clashes with a variable of the term or another label")]
    VariableClash(String),
    #[error("probability {0} outside [0, 1)")]
    TamingProbability(Rat),
    #[error("{0}")]
    Variant(String),
    #[error(transparent)]
    IllTyped(#[from] TypeError),
}

/// `fix (fun x: σ => x)`.
pub fn loop_term(sigma: &Ty) -> Term {
    Term::fix(Term::abs("x", sigma.clone(), Term::var("x")))
}

/// Removes marks and turns labeled coins into plain coins.
pub fn strip(term: &Term) -> Term {
    if term.is_core() {
        return term.clone();
    }
    rebuild(term, &mut |t, _| match t.kind() {
        TermKind::Mark(m, _) => Some(strip(m)),
        TermKind::DiceLab(_, r) => Some(Term::dice(r.clone())),
        _ => None,
    })
}

pub fn strip_state(state: &State) -> State {
    state.map_terms(strip)
}

/// Wraps every subterm occurrence, the root included, in a mark `l`.
pub fn mark_all(term: &Term, l: &Label) -> Term {
    let inner = match term.kind() {
        TermKind::Num(_) | TermKind::Var(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => term.clone(),
        TermKind::Succ(t) => Term::succ(mark_all(t, l)),
        TermKind::Pred(t) => Term::pred(mark_all(t, l)),
        TermKind::Fix(t) => Term::fix(mark_all(t, l)),
        TermKind::Mark(t, k) => Term::mark(mark_all(t, l), k.clone()),
        TermKind::Let(x, a, b) => Term::new(TermKind::Let(x.clone(), mark_all(a, l), mark_all(b, l))),
        TermKind::If(a, b, c) => Term::ifz(mark_all(a, l), mark_all(b, l), mark_all(c, l)),
        TermKind::App(a, b) => Term::app(mark_all(a, l), mark_all(b, l)),
        TermKind::Abs(x, ty, b) => Term::new(TermKind::Abs(x.clone(), ty.clone(), mark_all(b, l))),
    };
    Term::mark(inner, l.clone())
}

/// Structural rebuild; `hook` may replace a node (given its typing context).
fn rebuild(term: &Term, hook: &mut impl FnMut(&Term, &TyCtx) -> Option<Term>) -> Term {
    rebuild_in(term, &TyCtx::new(), &mut |t, c| Ok::<_, TransformError>(hook(t, c))).expect("infallible")
}

fn rebuild_in<E>(
    term: &Term,
    ctx: &TyCtx,
    hook: &mut impl FnMut(&Term, &TyCtx) -> Result<Option<Term>, E>,
) -> Result<Term, E> {
    if let Some(t) = hook(term, ctx)? {
        return Ok(t);
    }
    Ok(match term.kind() {
        TermKind::Num(_) | TermKind::Var(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => term.clone(),
        TermKind::Succ(t) => Term::succ(rebuild_in(t, ctx, hook)?),
        TermKind::Pred(t) => Term::pred(rebuild_in(t, ctx, hook)?),
        TermKind::Fix(t) => Term::fix(rebuild_in(t, ctx, hook)?),
        TermKind::Mark(t, l) => Term::mark(rebuild_in(t, ctx, hook)?, l.clone()),
        TermKind::Let(x, a, b) => {
            let a2 = rebuild_in(a, ctx, hook)?;
            let b2 = rebuild_in(b, &ctx.extended(x, Ty::Nat), hook)?;
            Term::new(TermKind::Let(x.clone(), a2, b2))
        }
        TermKind::If(a, b, c) => Term::ifz(rebuild_in(a, ctx, hook)?, rebuild_in(b, ctx, hook)?, rebuild_in(c, ctx, hook)?),
        TermKind::App(a, b) => Term::app(rebuild_in(a, ctx, hook)?, rebuild_in(b, ctx, hook)?),
        TermKind::Abs(x, ty, b) => {
            let b2 = rebuild_in(b, &ctx.extended(x, ty.clone()), hook)?;
            Term::new(TermKind::Abs(x.clone(), ty.clone(), b2))
        }
    })
}

/// Replaces each `#l{N}` (N of type σ) by `ifz coin[l](r_l) then N' else Ω^σ`.
pub fn lcof(term: &Term, r: &BTreeMap<Label, Rat>, ctx: &TyCtx) -> Result<Term, TransformError> {
    if !term.is_lab() {
        return Err(TransformError::Variant("lcof expects a term without labeled coins".into()));
    }
    typecheck(ctx, term)?;
    for l in term.labels() {
        if !r.contains_key(&l) {
            return Err(TransformError::MissingProbability(l));
        }
    }
    lcof_unchecked(term, r, ctx)
}

fn lcof_unchecked(term: &Term, r: &BTreeMap<Label, Rat>, ctx: &TyCtx) -> Result<Term, TransformError> {
    rebuild_in(term, ctx, &mut |t, c| match t.kind() {
        TermKind::Mark(n, l) => {
            let sigma = typecheck(c, n)?;
            let inner = lcof_unchecked(n, r, c)?;
            Ok(Some(Term::ifz(Term::dice_lab(l.clone(), r[l].clone()), inner, loop_term(&sigma))))
        }
        _ => Ok(None),
    })
}

/// Fresh, pairwise distinct variables `x_l` for every label of the term.
pub fn spy_vars(term: &Term) -> BTreeMap<Label, Name> {
    let used = term.all_var_names();
    let mut out: BTreeMap<Label, Name> = BTreeMap::new();
    for l in term.labels() {
        let base = format!("x_{}", l.name());
        let taken = |c: &str| used.iter().any(|u| &**u == c) || out.values().any(|v| &**v == c);
        let name: Name = if taken(&base) { fresh_name(&base, taken) } else { Arc::from(base) };
        out.insert(l, name);
    }
    out
}

/// Replaces each `#l{N}` (N of type σ) by `ifz x_l then N' else Ω^σ`. The
/// result is typed under `ctx` extended with `x_l : nat`.
pub fn spy(term: &Term, vars: &BTreeMap<Label, Name>, ctx: &TyCtx) -> Result<Term, TransformError> {
    if !term.is_lab() {
        return Err(TransformError::Variant("spy expects a term without labeled coins".into()));
    }
    typecheck(ctx, term)?;
    let names = term.all_var_names();
    let mut seen = std::collections::BTreeSet::new();
    for l in term.labels() {
        let x = vars.get(&l).ok_or_else(|| TransformError::MissingVariable(l.clone()))?;
        if names.contains(x) || ctx.contains(x) || !seen.insert(x.clone()) {
            return Err(TransformError::VariableClash(x.to_string()));
        }
    }
    spy_unchecked(term, vars, ctx)
}

fn spy_unchecked(term: &Term, vars: &BTreeMap<Label, Name>, ctx: &TyCtx) -> Result<Term, TransformError> {
    rebuild_in(term, ctx, &mut |t, c| match t.kind() {
        TermKind::Mark(n, l) => {
            let sigma = typecheck(c, n)?;
            let inner = spy_unchecked(n, vars, c)?;
            Ok(Some(Term::ifz(Term::var_named(vars[l].clone()), inner, loop_term(&sigma))))
        }
        _ => Ok(None),
    })
}

/// `fun z: σ => C (ifz coin(p) then z else Ω^σ)`.
pub fn tamed(context: &Term, p: &Rat, sigma: &Ty) -> Result<Term, TransformError> {
    if p.is_negative() || p >= &Rat::one() {
        return Err(TransformError::TamingProbability(p.clone()));
    }
    let want = Ty::arrow(sigma.clone(), Ty::Nat);
    let got = typecheck(&TyCtx::new(), context)?;
    if got != want {
        return Err(TypeError::Mismatch { term: context.to_string(), expected: want.to_string(), found: got.to_string() }.into());
    }
    let z: Name = if context.has_free("z") { fresh_name("z", |c| context.has_free(c)) } else { Arc::from("z") };
    let guard = Term::ifz(Term::dice(p.clone()), Term::var_named(z.clone()), loop_term(sigma));
    Ok(Term::new(TermKind::Abs(z, sigma.clone(), Term::app(context.clone(), guard))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse, typecheck_closed};

    fn l() -> Label {
        Label::new("l")
    }

    #[test]
    fn loop_is_typed_at_any_type() {
        assert_eq!(loop_term(&Ty::Nat).to_string(), "fix (fun x: nat => x)");
        let arrow = Ty::arrow(Ty::Nat, Ty::Nat);
        assert_eq!(typecheck_closed(&loop_term(&arrow)).unwrap(), arrow);
    }

    #[test]
    fn strip_examples() {
        assert_eq!(strip(&parse("#l{0}").unwrap()), Term::num(0));
        assert_eq!(strip(&parse("coin[l](1/2)").unwrap()), parse("coin(1/2)").unwrap());
        let core = parse("fun x: nat => succ x").unwrap();
        assert_eq!(strip(&core), core);
    }

    #[test]
    fn mark_all_examples() {
        assert_eq!(mark_all(&Term::num(0), &l()), parse("#l{0}").unwrap());
        assert_eq!(mark_all(&parse("succ 0").unwrap(), &l()), parse("#l{succ #l{0}}").unwrap());
    }

    #[test]
    fn lcof_examples() {
        let r: BTreeMap<_, _> = [(l(), Rat::new(1, 2))].into_iter().collect();
        assert_eq!(
            lcof(&parse("#l{0}").unwrap(), &r, &TyCtx::new()).unwrap(),
            parse("ifz coin[l](1/2) then 0 else fix (fun x: nat => x)").unwrap()
        );
        let plain = parse("ifz coin(1/3) then 0 else 1").unwrap();
        assert_eq!(lcof(&plain, &r, &TyCtx::new()).unwrap(), plain);
        assert!(matches!(lcof(&parse("#k{0}").unwrap(), &r, &TyCtx::new()), Err(TransformError::MissingProbability(_))));
    }

    #[test]
    fn lcof_uses_the_marked_subterm_type() {
        let r: BTreeMap<_, _> = [(l(), Rat::one())].into_iter().collect();
        let t = parse("#l{fun y: nat => y} 3").unwrap();
        let out = lcof(&t, &r, &TyCtx::new()).unwrap();
        assert_eq!(typecheck_closed(&out).unwrap(), Ty::Nat);
        assert!(out.to_string().contains("fix (fun x: nat -> nat => x)"));
    }

    #[test]
    fn spy_examples() {
        let t = parse("#l{0}").unwrap();
        let vars = spy_vars(&t);
        assert_eq!(&*vars[&l()], "x_l");
        assert_eq!(spy(&t, &vars, &TyCtx::new()).unwrap(), parse("ifz x_l then 0 else fix (fun x: nat => x)").unwrap());
        let abs = parse("fun y: nat => #l{y}").unwrap();
        assert_eq!(spy(&abs, &vars, &TyCtx::new()).unwrap(), parse("fun y: nat => ifz x_l then y else fix (fun x: nat => x)").unwrap());
        let clash = parse("fun x_l: nat => #l{x_l}").unwrap();
        assert!(matches!(spy(&clash, &vars, &TyCtx::new()), Err(TransformError::VariableClash(_))));
        assert_ne!(&*spy_vars(&clash)[&l()], "x_l");
    }

    #[test]
    fn tamed_examples() {
        let id = parse("fun y: nat => y").unwrap();
        let t = tamed(&id, &Rat::new(1, 2), &Ty::Nat).unwrap();
        assert_eq!(t, parse("fun z: nat => (fun y: nat => y) (ifz coin(1/2) then z else fix (fun x: nat => x))").unwrap());
        assert!(tamed(&id, &Rat::one(), &Ty::Nat).is_err());
        assert!(tamed(&Term::num(0), &Rat::new(1, 2), &Ty::Nat).is_err());
    }
}
