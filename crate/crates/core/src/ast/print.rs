//! Pretty printing in the surface syntax; output parses back to the same AST.

use std::fmt;

use super::{Frame, Stack, Term, TermKind, Ty};

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Nat => f.write_str("nat"),
            Ty::Arrow(d, c) if matches!(**d, Ty::Arrow(..)) => write!(f, "({d}) -> {c}"),
            Ty::Arrow(d, c) => write!(f, "{d} -> {c}"),
        }
    }
}

fn is_atomic(t: &Term) -> bool {
    matches!(t.kind(), TermKind::Num(_) | TermKind::Var(_) | TermKind::Dice(_) | TermKind::DiceLab(..) | TermKind::Mark(..))
}

fn atom(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if is_atomic(t) {
        write!(f, "{t}")
    } else {
        write!(f, "({t})")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            TermKind::Num(n) => write!(f, "{n}"),
            TermKind::Var(x) => f.write_str(x),
            TermKind::Succ(t) => {
                f.write_str("succ ")?;
                atom(t, f)
            }
            TermKind::Pred(t) => {
                f.write_str("pred ")?;
                atom(t, f)
            }
            TermKind::Fix(t) => {
                f.write_str("fix ")?;
                atom(t, f)
            }
            TermKind::Dice(r) => write!(f, "coin({r})"),
            TermKind::DiceLab(l, r) => write!(f, "coin[{l}]({r})"),
            TermKind::Mark(t, l) => write!(f, "#{l}{{{t}}}"),
            TermKind::Let(x, a, b) => write!(f, "let {x} = {a} in {b}"),
            TermKind::If(a, b, c) => write!(f, "ifz {a} then {b} else {c}"),
            TermKind::Abs(x, ty, b) => write!(f, "fun {x}: {ty} => {b}"),
            TermKind::App(a, b) => {
                if matches!(a.kind(), TermKind::App(..)) || is_atomic(a) {
                    write!(f, "{a} ")?;
                } else {
                    write!(f, "({a}) ")?;
                }
                atom(b, f)
            }
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Arg(m) => write!(f, "arg({m})"),
            Frame::Succ => f.write_str("succ[]"),
            Frame::Pred => f.write_str("pred[]"),
            Frame::If(a, b) => write!(f, "ifz [] then {a} else {b}"),
            Frame::Let(x, b) => write!(f, "let {x} = [] in {b}"),
        }
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("ε");
        }
        for (i, fr) in self.frames().into_iter().enumerate() {
            if i > 0 {
                f.write_str(" :: ")?;
            }
            write!(f, "{fr}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::ast::parse;

    #[test]
    fn round_trips_representative_terms() {
        for src in [
            "fun f: nat -> nat => fun x: nat => f (f x)",
            "fix (fun f: nat -> nat => fun x: nat => ifz x then 0 else f (pred x))",
            "let x = coin(1/3) in ifz x then #l{succ x} else coin[k](1/1)",
            "(fun x: nat => x) (ifz 0 then 1 else 2)",
            "fun g: (nat -> nat) -> nat => g (fun y: nat => y)",
            "succ (succ (pred 4))",
        ] {
            let t = parse(src).unwrap();
            let printed = t.to_string();
            assert_eq!(parse(&printed).unwrap(), t, "{printed}");
        }
    }
}
