//! Simple typing for terms and stacks. Marks are transparent and labeled
//! coins are typed like plain coins.

use std::sync::Arc;

use super::{Frame, Name, Stack, Term, TermKind, Ty};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("in `{term}`: expected {expected}, found {found}")]
    Mismatch { term: String, expected: String, found: String },
    #[error("in `{term}`: `{func}` has type {found}, which is not a function type")]
    NotAFunction { term: String, func: String, found: String },
    #[error("ill-typed stack frame `{frame}`: {reason}")]
    Stack { frame: String, reason: String },
}

/// Typing context with distinct variables; extending with a bound name
/// replaces its previous binding.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TyCtx(Vec<(Name, Ty)>);

impl TyCtx {
    pub fn new() -> Self {
        TyCtx(Vec::new())
    }

    pub fn lookup(&self, x: &str) -> Option<&Ty> {
        self.0.iter().rev().find(|(y, _)| &**y == x).map(|(_, t)| t)
    }

    pub fn extended(&self, x: &Name, ty: Ty) -> TyCtx {
        let mut v: Vec<(Name, Ty)> = self.0.iter().filter(|(y, _)| y != x).cloned().collect();
        v.push((x.clone(), ty));
        TyCtx(v)
    }

    pub fn with(mut self, x: &str, ty: Ty) -> TyCtx {
        self.0.retain(|(y, _)| &**y != x);
        self.0.push((Arc::from(x), ty));
        self
    }

    pub fn entries(&self) -> &[(Name, Ty)] {
        &self.0
    }

    pub fn contains(&self, x: &str) -> bool {
        self.lookup(x).is_some()
    }
}

impl FromIterator<(Name, Ty)> for TyCtx {
    fn from_iter<I: IntoIterator<Item = (Name, Ty)>>(iter: I) -> Self {
        iter.into_iter().fold(TyCtx::new(), |c, (x, t)| c.extended(&x, t))
    }
}

fn mismatch(term: &Term, expected: &Ty, found: &Ty) -> TypeError {
    TypeError::Mismatch { term: term.to_string(), expected: expected.to_string(), found: found.to_string() }
}

fn expect(ctx: &TyCtx, term: &Term, want: &Ty) -> Result<(), TypeError> {
    let got = typecheck(ctx, term)?;
    if &got == want {
        Ok(())
    } else {
        Err(mismatch(term, want, &got))
    }
}

/// The unique type of `term` under `ctx`.
pub fn typecheck(ctx: &TyCtx, term: &Term) -> Result<Ty, TypeError> {
    match term.kind() {
        TermKind::Num(_) | TermKind::Dice(_) | TermKind::DiceLab(..) => Ok(Ty::Nat),
        TermKind::Var(x) => ctx.lookup(x).cloned().ok_or_else(|| TypeError::Unbound(x.to_string())),
        TermKind::Succ(t) | TermKind::Pred(t) => {
            expect(ctx, t, &Ty::Nat)?;
            Ok(Ty::Nat)
        }
        TermKind::Mark(t, _) => typecheck(ctx, t),
        TermKind::Let(x, a, b) => {
            expect(ctx, a, &Ty::Nat)?;
            typecheck(&ctx.extended(x, Ty::Nat), b)
        }
        TermKind::If(a, b, c) => {
            expect(ctx, a, &Ty::Nat)?;
            let tb = typecheck(ctx, b)?;
            expect(ctx, c, &tb)?;
            Ok(tb)
        }
        TermKind::Abs(x, ty, b) => Ok(Ty::arrow(ty.clone(), typecheck(&ctx.extended(x, ty.clone()), b)?)),
        TermKind::App(f, a) => match typecheck(ctx, f)? {
            Ty::Arrow(dom, cod) => {
                expect(ctx, a, &dom)?;
                Ok(*cod)
            }
            other => Err(TypeError::NotAFunction { term: term.to_string(), func: f.to_string(), found: other.to_string() }),
        },
        TermKind::Fix(t) => match typecheck(ctx, t)? {
            Ty::Arrow(dom, cod) if dom == cod => Ok(*cod),
            other => Err(TypeError::Mismatch {
                term: term.to_string(),
                expected: "a type of the form s -> s".into(),
                found: other.to_string(),
            }),
        },
    }
}

pub fn typecheck_closed(term: &Term) -> Result<Ty, TypeError> {
    typecheck(&TyCtx::new(), term)
}

/// The type `s` such that the stack consumes an `s` and produces `nat`.
pub fn typecheck_stack(stack: &Stack) -> Result<Ty, TypeError> {
    let Some((frame, rest)) = stack.top() else {
        return Ok(Ty::Nat);
    };
    let out = typecheck_stack(rest)?;
    let bad = |reason: String| TypeError::Stack { frame: frame.to_string(), reason };
    let empty = TyCtx::new();
    match frame {
        Frame::Arg(n) => Ok(Ty::arrow(typecheck(&empty, n)?, out)),
        Frame::Succ | Frame::Pred => {
            if out.is_nat() {
                Ok(Ty::Nat)
            } else {
                Err(bad(format!("the rest of the stack expects {out}, not nat")))
            }
        }
        Frame::If(a, b) => {
            expect(&empty, a, &out)?;
            expect(&empty, b, &out)?;
            Ok(Ty::Nat)
        }
        Frame::Let(x, b) => {
            expect(&empty.extended(x, Ty::Nat), b, &out)?;
            Ok(Ty::Nat)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;

    fn ty(src: &str) -> Result<Ty, TypeError> {
        typecheck_closed(&parse(src).unwrap())
    }

    #[test]
    fn typing_examples() {
        assert_eq!(ty("fun x: nat => succ x").unwrap(), Ty::arrow(Ty::Nat, Ty::Nat));
        assert!(ty("let x = (fun y: nat => y) in x").is_err());
        assert_eq!(ty("fix (fun x: nat => x)").unwrap(), Ty::Nat);
        assert!(matches!(ty("y"), Err(TypeError::Unbound(_))));
        assert!(ty("0 1").is_err());
        assert_eq!(ty("#l{fun x: nat => x}").unwrap(), Ty::arrow(Ty::Nat, Ty::Nat));
    }

    #[test]
    fn stack_examples() {
        assert_eq!(typecheck_stack(&Stack::empty()).unwrap(), Ty::Nat);
        assert_eq!(typecheck_stack(&Stack::empty().push(Frame::Succ)).unwrap(), Ty::Nat);
        assert_eq!(typecheck_stack(&Stack::empty().push(Frame::Arg(Term::num(2)))).unwrap(), Ty::arrow(Ty::Nat, Ty::Nat));
        let bad = Stack::empty().push(Frame::Arg(Term::num(2))).push(Frame::Succ);
        assert!(typecheck_stack(&bad).is_err());
    }

    #[test]
    fn shadowing_replaces_binding() {
        let ctx = TyCtx::new().with("x", Ty::arrow(Ty::Nat, Ty::Nat)).with("x", Ty::Nat);
        assert_eq!(ctx.entries().len(), 1);
        assert_eq!(ctx.lookup("x"), Some(&Ty::Nat));
    }
}
