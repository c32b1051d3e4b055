//! The LULU smoothers `U_n`, `L_n` and `P_n = L_n U_n`.
//!
//! Two forms are provided. The oracle form evaluates the min-max definition
//! directly:
//!
//! ```text
//! U_n f(x) = min over connected (n+1)-sets V containing x of max_{V} f
//! L_n f(x) = max over connected (n+1)-sets V containing x of min_{V} f
//! ```
//!
//! which is exponential in `n` and only usable on tiny windows. The fast
//! form works on flat zones: for `k = 1..=n` it raises every local minimum
//! zone of exactly `k` cells to the smallest value adjacent to it (lowers
//! maximum zones to the largest adjacent value for `L_n`).

use std::fmt;
use std::str::FromStr;

use crate::engine::ZoneGraph;
use crate::error::{Error, Result};
use crate::field::{Polarity, ScalarField, Witness};

/// Oracle window limit in cells.
pub const ORACLE_MAX_CELLS: usize = 16;
/// Oracle scale limit.
pub const ORACLE_MAX_SCALE: usize = 5;

fn oracle(f: &ScalarField, n: usize, polarity: Polarity) -> Result<ScalarField> {
    let lat = f.lattice();
    if lat.len() > ORACLE_MAX_CELLS || n > ORACLE_MAX_SCALE {
        return Err(Error::ResourceGuard(format!(
            "min-max oracle limited to {ORACLE_MAX_CELLS} cells and n <= {ORACLE_MAX_SCALE} (got {} cells, n = {n})",
            lat.len()
        )));
    }
    // a domain-only window smaller than n + 1 cells only offers itself
    let size = if lat.is_zero_padded() { n + 1 } else { (n + 1).min(lat.len()) };
    let mut out = f.clone();
    for x in 0..lat.len() {
        let coords: Vec<isize> = lat.coords(x).into_iter().map(|c| c as isize).collect();
        let sets = lat.connected_supersets(&coords, size)?;
        let value_of = |p: &Vec<isize>| lat.index_of(p).map_or(0, |i| f.get(i));
        let pick = sets.iter().map(|set| {
            let vals = set.iter().map(value_of);
            match polarity {
                Polarity::Min => vals.max().unwrap(),
                Polarity::Max => vals.min().unwrap(),
            }
        });
        let v = match polarity {
            Polarity::Min => pick.min(),
            Polarity::Max => pick.max(),
        };
        out.set(x, v.expect("every cell lies in some connected set"));
    }
    Ok(out)
}

/// `U_n` by exhaustive enumeration of connected sets.
pub fn u_n_oracle(f: &ScalarField, n: usize) -> Result<ScalarField> {
    oracle(f, n, Polarity::Min)
}

/// `L_n` by exhaustive enumeration of connected sets.
pub fn l_n_oracle(f: &ScalarField, n: usize) -> Result<ScalarField> {
    oracle(f, n, Polarity::Max)
}

fn staged(f: &ScalarField, n: usize, polarity: Polarity, shuffle: Option<u64>) -> ScalarField {
    let mut graph = ZoneGraph::new(f, false).with_shuffle(shuffle);
    let mut k = 1;
    while k <= n && !graph.is_settled() {
        match graph.next_scale(k) {
            Some(next) if next <= n => {
                graph.flatten(next, polarity);
                graph.retire(next);
                k = next + 1;
            }
            _ => break,
        }
    }
    graph.current_field()
}

/// `U_n` via staged flat-zone raising. `U_0` is the identity.
pub fn u_n_fast(f: &ScalarField, n: usize) -> ScalarField {
    staged(f, n, Polarity::Min, None)
}

/// `L_n` via staged flat-zone lowering. `L_0` is the identity.
pub fn l_n_fast(f: &ScalarField, n: usize) -> ScalarField {
    staged(f, n, Polarity::Max, None)
}

/// [`u_n_fast`] / [`l_n_fast`] with candidates processed in a shuffled
/// order inside each stage. Output must not depend on the seed.
pub fn smooth_shuffled(f: &ScalarField, n: usize, polarity: Polarity, seed: u64) -> ScalarField {
    staged(f, n, polarity, Some(seed))
}

/// `P_n = L_n ∘ U_n`.
pub fn p_n(f: &ScalarField, n: usize) -> ScalarField {
    l_n_fast(&u_n_fast(f, n), n)
}

/// `P_n ∘ … ∘ P_1` (identity for `n = 0`).
pub fn p_cascade(f: &ScalarField, n: usize) -> ScalarField {
    (1..=n).fold(f.clone(), |acc, k| p_n(&acc, k))
}

/// Composition tree over `id`, `U(m)` and `L(m)` with formal differences.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OperatorExpr {
    Identity,
    Upper(usize),
    Lower(usize),
    /// `outer ∘ inner`.
    Compose(Box<OperatorExpr>, Box<OperatorExpr>),
    /// Pointwise `left − right`.
    Diff(Box<OperatorExpr>, Box<OperatorExpr>),
}

impl OperatorExpr {
    pub fn compose(outer: OperatorExpr, inner: OperatorExpr) -> Self {
        Self::Compose(Box::new(outer), Box::new(inner))
    }

    pub fn diff(left: OperatorExpr, right: OperatorExpr) -> Self {
        Self::Diff(Box::new(left), Box::new(right))
    }

    /// `id − self`.
    pub fn complement(&self) -> Self {
        Self::diff(Self::Identity, self.clone())
    }

    /// `P_m = L(m) ∘ U(m)`.
    pub fn p(m: usize) -> Self {
        Self::compose(Self::Lower(m), Self::Upper(m))
    }

    /// `f ↦ −f`, written as `(id − id) − id`. Reverses every trend, so it
    /// is never neighbour trend preserving on a non-constant field.
    pub fn negation() -> Self {
        Self::diff(Self::diff(Self::Identity, Self::Identity), Self::Identity)
    }

    /// Composes a chain, outermost first.
    pub fn chain(ops: impl IntoIterator<Item = OperatorExpr>) -> Self {
        let ops: Vec<_> = ops.into_iter().collect();
        ops.into_iter().rev().reduce(|inner, outer| Self::compose(outer, inner)).unwrap_or(Self::Identity)
    }

    /// Number of primitive smoothers along the longest composition path.
    pub fn depth(&self) -> usize {
        match self {
            OperatorExpr::Identity => 0,
            OperatorExpr::Upper(_) | OperatorExpr::Lower(_) => 1,
            OperatorExpr::Compose(a, b) => a.depth() + b.depth(),
            OperatorExpr::Diff(a, b) => a.depth().max(b.depth()),
        }
    }

    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        match self {
            OperatorExpr::Identity => f.clone(),
            OperatorExpr::Upper(m) => u_n_fast(f, *m),
            OperatorExpr::Lower(m) => l_n_fast(f, *m),
            OperatorExpr::Compose(outer, inner) => outer.apply(&inner.apply(f)),
            OperatorExpr::Diff(a, b) => &a.apply(f) - &b.apply(f),
        }
    }
}

/// Evaluates `expr` on `f`.
pub fn apply(expr: &OperatorExpr, f: &ScalarField) -> ScalarField {
    expr.apply(f)
}

impl fmt::Display for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorExpr::Identity => f.write_str("id"),
            OperatorExpr::Upper(m) => write!(f, "U{m}"),
            OperatorExpr::Lower(m) => write!(f, "L{m}"),
            OperatorExpr::Compose(a, b) => write!(f, "{a}.{b}"),
            OperatorExpr::Diff(a, b) => write!(f, "({a}-{b})"),
        }
    }
}

impl FromStr for OperatorExpr {
    type Err = String;

    /// Parses the [`Display`](fmt::Display) syntax: `id`, `U2`, `L3`, `neg`,
    /// composition with `.` and parenthesised differences `(a-b)`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parser = ExprParser { src: s.as_bytes(), pos: 0 };
        let expr = parser.composition()?;
        if parser.pos != parser.src.len() {
            return Err(format!("unexpected input at offset {} in {s:?}", parser.pos));
        }
        Ok(expr)
    }
}

struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn composition(&mut self) -> std::result::Result<OperatorExpr, String> {
        let mut terms = vec![self.term()?];
        while self.eat(b'.') {
            terms.push(self.term()?);
        }
        Ok(OperatorExpr::chain(terms))
    }

    fn term(&mut self) -> std::result::Result<OperatorExpr, String> {
        if self.eat(b'(') {
            let left = self.composition()?;
            if !self.eat(b'-') {
                return Err(format!("expected '-' at offset {}", self.pos));
            }
            let right = self.composition()?;
            if !self.eat(b')') {
                return Err(format!("expected ')' at offset {}", self.pos));
            }
            return Ok(OperatorExpr::diff(left, right));
        }
        let rest = &self.src[self.pos..];
        for (word, expr) in [(&b"id"[..], OperatorExpr::Identity), (&b"neg"[..], OperatorExpr::negation())] {
            if rest.starts_with(word) {
                self.pos += word.len();
                return Ok(expr);
            }
        }
        let kind = self.peek().ok_or("unexpected end of expression")?;
        if kind != b'U' && kind != b'L' {
            return Err(format!("unknown operator at offset {}", self.pos));
        }
        self.pos += 1;
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let m: usize = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format!("expected a scale after '{}' at offset {start}", kind as char))?;
        Ok(if kind == b'U' { OperatorExpr::Upper(m) } else { OperatorExpr::Lower(m) })
    }
}

/// Identity plus every composition of one to `max_depth` smoothers drawn
/// from `U(m)`, `L(m)` with `1 <= m <= max_scale`.
pub fn operator_library(max_scale: usize, max_depth: usize) -> Vec<OperatorExpr> {
    let primitives: Vec<OperatorExpr> =
        (1..=max_scale).flat_map(|m| [OperatorExpr::Upper(m), OperatorExpr::Lower(m)]).collect();
    let mut out = vec![OperatorExpr::Identity];
    let mut chains: Vec<Vec<OperatorExpr>> = vec![Vec::new()];
    for _ in 0..max_depth {
        chains = chains
            .iter()
            .flat_map(|c| {
                primitives.iter().map(move |p| {
                    let mut next = c.clone();
                    next.push(p.clone());
                    next
                })
            })
            .collect();
        out.extend(chains.iter().cloned().map(OperatorExpr::chain));
    }
    out
}

/// An adjacent pair `(x, y)` with `f(x) >= f(y)` but `Af(x) < Af(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrendViolation {
    pub x: Witness,
    pub y: Witness,
}

/// Checks that `expr` is neighbour trend preserving on `f`: for every
/// adjacent pair with `f(x) >= f(y)`, `(expr f)(x) >= (expr f)(y)`.
/// Pairs with OUTSIDE (value 0 in both fields) are included when zero-padded.
pub fn is_ntp_on(expr: &OperatorExpr, f: &ScalarField) -> std::result::Result<(), TrendViolation> {
    trend_check(f, &expr.apply(f))
}

/// Neighbour trend preservation of the map `f ↦ image`.
pub fn trend_check(f: &ScalarField, image: &ScalarField) -> std::result::Result<(), TrendViolation> {
    let lat = f.lattice();
    let at = |field: &ScalarField, w: Witness| field.value_at(w);
    let violates = |x: Witness, y: Witness| at(f, x) >= at(f, y) && at(image, x) < at(image, y);
    for c in 0..lat.len() {
        let mut found = None;
        let outside = lat.for_each_neighbor(c, |j| {
            if found.is_none() && j > c {
                let (x, y) = (Witness::Cell(c), Witness::Cell(j));
                if violates(x, y) {
                    found = Some(TrendViolation { x, y });
                } else if violates(y, x) {
                    found = Some(TrendViolation { x: y, y: x });
                }
            }
        });
        if let Some(v) = found {
            return Err(v);
        }
        if outside {
            let (x, y) = (Witness::Cell(c), Witness::Outside);
            if violates(x, y) {
                return Err(TrendViolation { x, y });
            }
            if violates(y, x) {
                return Err(TrendViolation { x: y, y: x });
            }
        }
    }
    Ok(())
}

/// Fully trend preserving on `f`: both `expr` and `id − expr` are ntp.
pub fn is_ftp_on(expr: &OperatorExpr, f: &ScalarField) -> std::result::Result<(), TrendViolation> {
    let image = expr.apply(f);
    trend_check(f, &image)?;
    trend_check(f, &(f - &image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Lattice};

    fn line(values: &[i64], b: Boundary) -> ScalarField {
        ScalarField::new(Lattice::line(values.len(), b).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let f = line(&[3, 1, 3], Boundary::DomainOnly);
        assert_eq!(u_n_oracle(&f, 1).unwrap().values(), &[3, 3, 3]);
        assert_eq!(l_n_oracle(&f, 1).unwrap().values(), &[1, 1, 1]);
    }

    #[test]
    fn oracle_reaches_beyond_one_cell_of_padding() {
        // The set {-2, -1, 0} only exists with two cells of padding.
        let f = line(&[-3, 7], Boundary::ZeroPadded);
        assert_eq!(u_n_oracle(&f, 2).unwrap().values(), &[0, 7]);
        assert_eq!(u_n_fast(&f, 2).values(), &[0, 7]);
    }

    #[test]
    fn oracle_guard() {
        let lat = Lattice::line(20, Boundary::DomainOnly).unwrap();
        assert!(matches!(u_n_oracle(&ScalarField::zeros(lat), 1), Err(Error::ResourceGuard(_))));
    }

    #[test]
    fn fast_examples() {
        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        assert_eq!(u_n_fast(&f, 1).values(), &[0, 0, 5]);
        assert_eq!(p_n(&f, 1).values(), &[0, 0, 0]);

        // The border zeros are size-1 min sets in domain-only mode, so they
        // are raised as well.
        let f = line(&[0, 3, 1, 2, 4, 0], Boundary::DomainOnly);
        assert_eq!(u_n_oracle(&f, 2).unwrap().values(), &[3, 3, 3, 3, 4, 4]);
        assert_eq!(u_n_fast(&f, 2).values(), &[3, 3, 3, 3, 4, 4]);
        let padded = line(&[0, 3, 1, 2, 4, 0], Boundary::ZeroPadded);
        assert_eq!(u_n_oracle(&padded, 2).unwrap().values(), &[0, 3, 3, 3, 4, 0]);
        assert_eq!(u_n_fast(&padded, 2).values(), &[0, 3, 3, 3, 4, 0]);

        // No local min sets of size <= 2: fixed point.
        let f = line(&[1, 2, 3, 4], Boundary::ZeroPadded);
        assert_eq!(u_n_fast(&f, 2), f);
    }

    #[test]
    fn p_n_keeps_large_constant_zone() {
        let lat = Lattice::grid(2, 2, crate::lattice::Connectivity::Facet, Boundary::ZeroPadded).unwrap();
        let f = ScalarField::constant(lat, 7);
        for n in 1..4 {
            assert_eq!(p_n(&f, n), f);
        }
        assert!(p_n(&f, 4).is_zero());
    }

    #[test]
    fn zero_scale_is_identity() {
        let f = line(&[2, -1, 4], Boundary::ZeroPadded);
        assert_eq!(u_n_fast(&f, 0), f);
        assert_eq!(l_n_fast(&f, 0), f);
    }

    #[test]
    fn apply_examples() {
        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        assert_eq!(apply(&OperatorExpr::Identity, &f), f);
        let high_pass = OperatorExpr::Upper(1).complement();
        assert_eq!(apply(&high_pass, &f).values(), &[-3, 0, 0]);
        assert_eq!(apply(&OperatorExpr::p(1), &f).values(), &[0, 0, 0]);
        assert_eq!(apply(&OperatorExpr::negation(), &f).values(), &[3, 0, -5]);
    }

    #[test]
    fn trend_examples() {
        let f = line(&[0, 1], Boundary::DomainOnly);
        assert!(is_ntp_on(&OperatorExpr::Identity, &f).is_ok());
        let v = is_ntp_on(&OperatorExpr::negation(), &f).unwrap_err();
        assert_eq!(v, TrendViolation { x: Witness::Cell(1), y: Witness::Cell(0) });
        assert!(is_ftp_on(&OperatorExpr::negation(), &f).is_err());
        assert!(is_ftp_on(&OperatorExpr::Upper(1), &line(&[3, 1, 4, 1, 5], Boundary::ZeroPadded)).is_ok());
    }

    #[test]
    fn library_size_and_depth() {
        let lib = operator_library(3, 3);
        assert_eq!(lib.len(), 1 + 6 + 36 + 216);
        assert!(lib.iter().all(|e| e.depth() <= 3));
        assert!(lib.contains(&OperatorExpr::p(2)));
        assert!(lib.contains(&OperatorExpr::compose(OperatorExpr::Upper(2), OperatorExpr::Lower(2))));
    }

    #[test]
    fn expr_text_round_trip() {
        for e in
            operator_library(2, 2).into_iter().chain([OperatorExpr::negation(), OperatorExpr::Upper(3).complement()])
        {
            assert_eq!(e.to_string().parse::<OperatorExpr>().unwrap(), e, "{e}");
        }
        assert_eq!("L2.U2".parse::<OperatorExpr>().unwrap(), OperatorExpr::p(2));
        assert!("X1".parse::<OperatorExpr>().is_err());
        assert!("U".parse::<OperatorExpr>().is_err());
    }
}
