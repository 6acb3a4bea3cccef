//! Coefficient carriers for the semantics: exact rationals, floats, and
//! forward-mode dual numbers over floats.

use std::fmt;
use std::ops::{Add, Mul};

use crate::rat::Rat;

/// A commutative semiring with an embedding of the rationals and a float
/// "magnitude" (the primal part) used for convergence tests.
pub trait Scalar: Clone + fmt::Debug + 'static {
    /// Convergence of exact scalars means equality, not closeness.
    const EXACT: bool;
    /// Whether fixpoints may be accelerated by Newton steps on `f64` images.
    const NEWTON: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rat(r: &Rat) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn primal(&self) -> f64;

    /// Largest tangent component, 0 for scalars without tangents.
    fn tangent_norm(&self) -> f64 {
        0.0
    }

    /// Primal and tangent distances between two scalars.
    fn delta(&self, other: &Self) -> (f64, f64);

    /// Bit pattern identifying the value, for memo tables.
    fn key(&self, out: &mut Vec<u64>);

    /// Embeds a float constant (exactly, for rationals).
    fn from_f64(x: f64) -> Self;
}

impl Scalar for Rat {
    const EXACT: bool = true;
    const NEWTON: bool = false;

    fn zero() -> Self {
        Rat::zero()
    }

    fn one() -> Self {
        Rat::one()
    }

    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn mul(&self, other: &Self) -> Self {
        self * other
    }

    fn is_zero(&self) -> bool {
        Rat::is_zero(self)
    }

    fn primal(&self) -> f64 {
        self.to_f64()
    }

    fn delta(&self, other: &Self) -> (f64, f64) {
        if self == other {
            (0.0, 0.0)
        } else {
            ((self - other).abs().to_f64().max(f64::MIN_POSITIVE), 0.0)
        }
    }

    fn from_f64(x: f64) -> Self {
        Rat::from_f64(x).expect("finite float")
    }

    fn key(&self, out: &mut Vec<u64>) {
        use std::hash::{Hash, Hasher};
        let mut h = rustc_hash::FxHasher::default();
        self.hash(&mut h);
        out.push(h.finish());
        out.push(self.to_f64().to_bits());
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const NEWTON: bool = true;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_rat(r: &Rat) -> Self {
        r.to_f64()
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn mul(&self, other: &Self) -> Self {
        self * other
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }

    fn primal(&self) -> f64 {
        *self
    }

    fn delta(&self, other: &Self) -> (f64, f64) {
        ((self - other).abs(), 0.0)
    }

    fn key(&self, out: &mut Vec<u64>) {
        out.push(self.to_bits());
    }

    fn from_f64(x: f64) -> Self {
        x
    }
}

/// `primal + Σ tangents[i]·ε_i` with `ε_i ε_j = 0`. Missing trailing
/// tangent slots are zero, so constants carry an empty vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dual {
    pub primal: f64,
    pub tangents: Vec<f64>,
}

impl Dual {
    pub fn constant(x: f64) -> Dual {
        Dual { primal: x, tangents: Vec::new() }
    }

    /// `x + ε_slot` in a space of `slots` directions.
    pub fn variable(x: f64, slot: usize, slots: usize) -> Dual {
        let mut tangents = vec![0.0; slots];
        tangents[slot] = 1.0;
        Dual { primal: x, tangents }
    }

    pub fn tangent(&self, slot: usize) -> f64 {
        self.tangents.get(slot).copied().unwrap_or(0.0)
    }
}

fn zip_tangents(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n).map(|i| f(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0))).collect()
}

impl Add for &Dual {
    type Output = Dual;
    fn add(self, o: &Dual) -> Dual {
        Dual { primal: self.primal + o.primal, tangents: zip_tangents(&self.tangents, &o.tangents, |x, y| x + y) }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)] // product rule
impl Mul for &Dual {
    type Output = Dual;
    fn mul(self, o: &Dual) -> Dual {
        let (a, b) = (self.primal, o.primal);
        Dual { primal: a * b, tangents: zip_tangents(&self.tangents, &o.tangents, |x, y| a * y + x * b) }
    }
}

impl Scalar for Dual {
    const EXACT: bool = false;
    const NEWTON: bool = false;

    fn zero() -> Self {
        Dual::constant(0.0)
    }

    fn one() -> Self {
        Dual::constant(1.0)
    }

    fn from_rat(r: &Rat) -> Self {
        Dual::constant(r.to_f64())
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn mul(&self, other: &Self) -> Self {
        self * other
    }

    fn is_zero(&self) -> bool {
        self.primal == 0.0 && self.tangents.iter().all(|t| *t == 0.0)
    }

    fn primal(&self) -> f64 {
        self.primal
    }

    fn tangent_norm(&self) -> f64 {
        self.tangents.iter().fold(0.0, |m, t| m.max(t.abs()))
    }

    fn delta(&self, other: &Self) -> (f64, f64) {
        let t = zip_tangents(&self.tangents, &other.tangents, |x, y| (x - y).abs());
        ((self.primal - other.primal).abs(), t.into_iter().fold(0.0, f64::max))
    }

    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }

    fn key(&self, out: &mut Vec<u64>) {
        out.push(self.primal.to_bits());
        let last = self.tangents.iter().rposition(|t| *t != 0.0).map_or(0, |i| i + 1);
        out.push(last as u64);
        out.extend(self.tangents[..last].iter().map(|t| t.to_bits()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::variable(3.0, 0, 2);
        let y = Dual::variable(5.0, 1, 2);
        let p = Scalar::mul(&x, &y);
        assert_eq!(p.primal, 15.0);
        assert_eq!(p.tangents, vec![5.0, 3.0]);
        let s = Scalar::add(&p, &Dual::constant(1.0));
        assert_eq!(s.tangents, vec![5.0, 3.0]);
    }

    #[test]
    fn embedding_is_a_homomorphism() {
        let (a, b) = (Rat::new(1, 3), Rat::new(2, 7));
        assert_eq!(<f64 as Scalar>::from_rat(&(&a * &b)), <f64 as Scalar>::from_rat(&a) * <f64 as Scalar>::from_rat(&b));
        assert_eq!(<Rat as Scalar>::from_rat(&(&a + &b)), Scalar::add(&a, &b));
    }

    #[test]
    fn exact_delta_only_vanishes_on_equality() {
        let a = Rat::new(1, 3);
        assert_eq!(a.delta(&a), (0.0, 0.0));
        assert!(a.delta(&Rat::new(1, 2)).0 > 0.0);
    }
}
