//! Multivariate polynomials with exact rational coefficients, plus symbolic
//! summation of polynomial summands over affine ranges (Faulhaber).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type Rat = BigRational;

fn rat_int(n: i128) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exponent vector; zero exponents are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Monomial(pub BTreeMap<String, u32>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(BTreeMap::new())
    }

    pub fn var(name: &str) -> Monomial {
        Monomial([(name.to_string(), 1)].into_iter().collect())
    }

    pub fn total_degree(&self) -> u32 {
        self.0.values().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (v, e) in &other.0 {
            *out.entry(v.clone()).or_insert(0) += e;
        }
        Monomial(out)
    }

    fn without(&self, var: &str) -> (u32, Monomial) {
        let mut rest = self.0.clone();
        let k = rest.remove(var).unwrap_or(0);
        (k, Monomial(rest))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    /// Monomial → coefficient; zero coefficients are never stored.
    pub terms: BTreeMap<Monomial, Rat>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(c: Rat) -> Poly {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn from_int(n: i128) -> Poly {
        Poly::constant(rat_int(n))
    }

    pub fn from_energy(e: crate::energy::Energy) -> Poly {
        Poly::constant(Rat::from_integer(BigInt::from(e.fj())))
    }

    pub fn var(name: &str) -> Poly {
        let mut p = Poly::zero();
        p.terms.insert(Monomial::var(name), Rat::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(Monomial::total_degree)
            .max()
            .unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for m in self.terms.keys() {
            out.extend(m.0.keys().cloned());
        }
        out
    }

    fn add_term(&mut self, mono: Monomial, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + coeff;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn scale(&self, k: &Rat) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.clone() * k.clone());
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::constant(Rat::one());
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Replaces every occurrence of `var` by the given polynomial.
    pub fn substitute(&self, var: &str, with: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let (k, rest) = m.without(var);
            let mut piece = Poly::zero();
            piece.add_term(rest, c.clone());
            if k > 0 {
                piece = piece.mul(&with.pow(k));
            }
            out = out.add(&piece);
        }
        out
    }

    pub fn eval(&self, bindings: &BTreeMap<String, i128>) -> Result<Rat, String> {
        let mut total = Rat::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (v, &e) in &m.0 {
                let value = bindings
                    .get(v)
                    .ok_or_else(|| format!("unbound parameter '{v}'"))?;
                let base = rat_int(*value);
                for _ in 0..e {
                    term *= base.clone();
                }
            }
            total += term;
        }
        Ok(total)
    }

    /// Coefficient-wise upper/lower envelope: sound max/min bound for
    /// evaluation at non-negative points.
    pub fn envelope(&self, other: &Poly, upper: bool) -> Poly {
        let mut out = Poly::zero();
        let keys: BTreeSet<&Monomial> = self.terms.keys().chain(other.terms.keys()).collect();
        for m in keys {
            let a = self.terms.get(m).cloned().unwrap_or_else(Rat::zero);
            let b = other.terms.get(m).cloned().unwrap_or_else(Rat::zero);
            let c = if upper { a.max(b) } else { a.min(b) };
            out.add_term(m.clone(), c);
        }
        out
    }
}

/// Bernoulli numbers, B_1 = −1/2 convention.
fn bernoulli(n: usize) -> Vec<Rat> {
    let mut b: Vec<Rat> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m == 0 {
            b.push(Rat::one());
            continue;
        }
        // B_m = −1/(m+1) · Σ_{j<m} C(m+1, j) B_j
        let mut acc = Rat::zero();
        for (j, bj) in b.iter().enumerate() {
            acc += Rat::from_integer(binom(m as u64 + 1, j as u64)) * bj.clone();
        }
        b.push(-acc / rat_int(m as i128 + 1));
    }
    b
}

fn binom(n: u64, k: u64) -> BigInt {
    let mut out = BigInt::one();
    for i in 0..k {
        out = out * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    out
}

/// Power sum Σ_{i=0}^{T−1} i^k as a polynomial in T:
///   (1/(k+1)) Σ_{j=0}^{k} C(k+1, j) B_j T^{k+1−j}
fn power_sum(k: u32, trip: &Poly) -> Poly {
    let b = bernoulli(k as usize);
    let mut out = Poly::zero();
    let mut trip_pow: Vec<Poly> = vec![Poly::constant(Rat::one())];
    for e in 1..=(k + 1) {
        let prev = trip_pow[(e - 1) as usize].clone();
        trip_pow.push(prev.mul(trip));
    }
    for (j, bj) in b.iter().enumerate() {
        let coeff =
            Rat::from_integer(binom(k as u64 + 1, j as u64)) * bj.clone() / rat_int(k as i128 + 1);
        out = out.add(&trip_pow[(k + 1 - j as u32) as usize].scale(&coeff));
    }
    out
}

/// Σ_{index=from}^{to−1} body, as a polynomial without `index`. The summand
/// may mention `index` and any outer variables; `from`/`to` may mention outer
/// variables (and `to − from` is assumed non-negative wherever evaluated).
pub fn sum_over_range(body: &Poly, index: &str, from: &Poly, to: &Poly) -> Poly {
    let trip = to.sub(from);
    // Normalize: index = from + j, j in 0..trip.
    let j = "$j";
    let shifted = body.substitute(index, &from.add(&Poly::var(j)));
    let mut out = Poly::zero();
    for (m, c) in &shifted.terms {
        let (k, rest) = m.without(j);
        let mut piece = Poly::zero();
        piece.add_term(rest, c.clone());
        out = out.add(&piece.mul(&power_sum(k, &trip)));
    }
    out
}

/// Graded-lexicographic term order: total degree descending, then the
/// exponent vector lexicographically descending.
pub fn graded_lex_terms(poly: &Poly) -> Vec<(Monomial, Rat)> {
    let mut terms: Vec<(Monomial, Rat)> = poly
        .terms
        .iter()
        .map(|(m, c)| (m.clone(), c.clone()))
        .collect();
    terms.sort_by(|(a, _), (b, _)| {
        b.total_degree()
            .cmp(&a.total_degree())
            .then_with(|| b.0.cmp(&a.0))
    });
    terms
}

fn fmt_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in graded_lex_terms(self) {
            let neg = c.is_negative();
            let abs = if neg { -c.clone() } else { c.clone() };
            if first {
                if neg {
                    f.write_str("-")?;
                }
                first = false;
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let coeff = fmt_rat(&abs);
            if m.0.is_empty() {
                write!(f, "{coeff}")?;
            } else {
                if coeff != "1" {
                    write!(f, "{coeff}*")?;
                }
                let vars: Vec<String> =
                    m.0.iter()
                        .map(|(v, &e)| {
                            if e == 1 {
                                v.clone()
                            } else {
                                format!("{v}^{e}")
                            }
                        })
                        .collect();
                write!(f, "{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval1(p: &Poly, n: i128) -> Rat {
        p.eval(&[("n".to_string(), n)].into_iter().collect())
            .unwrap()
    }

    #[test]
    fn constant_summand() {
        // Σ_{i=0}^{n−1} c = c·n
        let c = Poly::from_int(7);
        let s = sum_over_range(&c, "i", &Poly::from_int(0), &Poly::var("n"));
        for n in 0..50 {
            assert_eq!(eval1(&s, n), rat_int(7 * n));
        }
    }

    #[test]
    fn affine_summand_matches_hand_formula() {
        // Σ_{i=0}^{n−1} (a·i + b) = a·n(n−1)/2 + b·n  with a=3, b=5
        let body = Poly::var("i").scale(&rat_int(3)).add(&Poly::from_int(5));
        let s = sum_over_range(&body, "i", &Poly::from_int(0), &Poly::var("n"));
        for n in 0..=50i128 {
            let want = rat_int(3 * n * (n - 1) / 2 + 5 * n);
            assert_eq!(eval1(&s, n), want, "n={n}");
        }
    }

    #[test]
    fn triangular_sum_via_outer_variable() {
        // Σ_{j=0}^{i−1} j = i(i−1)/2, then Σ over i gives the tetrahedral sum.
        let inner = sum_over_range(&Poly::var("j"), "j", &Poly::from_int(0), &Poly::var("i"));
        let outer = sum_over_range(&inner, "i", &Poly::from_int(0), &Poly::var("n"));
        for n in 0..=30i128 {
            let brute: i128 = (0..n).map(|i| (0..i).sum::<i128>()).sum();
            assert_eq!(eval1(&outer, n), rat_int(brute), "n={n}");
        }
    }

    #[test]
    fn display_uses_graded_lex() {
        let p = Poly::var("n")
            .mul(&Poly::var("n"))
            .add(&Poly::var("m").scale(&rat_int(2)))
            .add(&Poly::from_int(1));
        assert_eq!(p.to_string(), "n^2 + 2*m + 1");
    }

    #[test]
    fn envelope_bounds_pointwise_on_nonnegatives() {
        let a = Poly::var("n").scale(&rat_int(3));
        let b = Poly::var("n").mul(&Poly::var("n")).sub(&Poly::var("n"));
        let up = a.envelope(&b, true);
        let lo = a.envelope(&b, false);
        for n in 0..20 {
            let (va, vb) = (eval1(&a, n), eval1(&b, n));
            assert!(eval1(&up, n) >= va.clone().max(vb.clone()));
            assert!(eval1(&lo, n) <= va.min(vb));
        }
    }

    proptest! {
        /// Faulhaber against brute force for degrees 0..=6.
        #[test]
        fn power_sums_match_brute_force(k in 0u32..=6, n in 0i128..40) {
            let s = sum_over_range(&Poly::var("i").pow(k), "i", &Poly::from_int(0), &Poly::var("n"));
            let brute: i128 = (0..n).map(|i| i.pow(k)).sum();
            prop_assert_eq!(eval1(&s, n), rat_int(brute));
        }

        /// Shifted ranges: Σ_{i=a}^{a+m−1} (i² + i).
        #[test]
        fn shifted_ranges_match_brute_force(a in 0i128..20, m in 0i128..30) {
            let body = Poly::var("i").pow(2).add(&Poly::var("i"));
            let s = sum_over_range(
                &body,
                "i",
                &Poly::from_int(a),
                &Poly::from_int(a + m),
            );
            let brute: i128 = (a..a + m).map(|i| i * i + i).sum();
            prop_assert_eq!(s.eval(&BTreeMap::new()).unwrap(), rat_int(brute));
        }
    }
}
