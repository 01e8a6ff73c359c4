//! Exact feasibility of joint distributions over the 16 sign atoms
//! `(a_x, a_z, b_x, b_z) ∈ {±1}⁴`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::Sign;

use super::simplex::{solve, LpOutcome, Row};

pub const ATOMS: usize = 16;
const VARIABLES: [&str; 4] = ["ax", "az", "bx", "bz"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }
}

/// Values of the four track variables for atom `index` (bit set = −1,
/// `a_x` in the highest bit).
pub fn atom_values(index: usize) -> [Sign; 4] {
    std::array::from_fn(|v| if index >> (3 - v) & 1 == 1 { Sign::Minus } else { Sign::Plus })
}

/// A partial assignment of the track variables; it selects every atom that agrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AtomPattern(pub [Option<Sign>; 4]);

impl AtomPattern {
    pub const ALL: AtomPattern = AtomPattern([None; 4]);

    pub fn matches(&self, atom: usize) -> bool {
        let values = atom_values(atom);
        self.0.iter().zip(values).all(|(p, v)| p.is_none_or(|p| p == v))
    }

    fn indicator(&self) -> Vec<BigRational> {
        (0..ATOMS).map(|a| if self.matches(a) { BigRational::one() } else { BigRational::zero() }).collect()
    }
}

impl fmt::Display for AtomPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(Option::is_none) {
            return f.write_str("*");
        }
        let parts: Vec<String> = VARIABLES
            .iter()
            .zip(self.0)
            .filter_map(|(name, s)| s.map(|s| format!("{name}={}1", s.symbol())))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for AtomPattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "*" {
            return Ok(AtomPattern::ALL);
        }
        let mut out = [None; 4];
        for part in s.split(',') {
            let (name, value) = part.split_once('=').ok_or_else(|| format!("expected var=±1 in {part:?}"))?;
            let v = VARIABLES.iter().position(|n| *n == name).ok_or_else(|| format!("unknown variable {name:?}"))?;
            let sign = match value {
                "+1" | "1" => Sign::Plus,
                "-1" => Sign::Minus,
                _ => return Err(format!("value must be +1 or -1, got {value:?}")),
            };
            if out[v].replace(sign).is_some() {
                return Err(format!("variable {name} repeated"));
            }
        }
        Ok(AtomPattern(out))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub coeff: BigRational,
    pub pattern: AtomPattern,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub relation: Relation,
    pub rhs: BigRational,
    pub terms: Vec<Term>,
}

impl Constraint {
    pub fn new(relation: Relation, rhs: BigRational, terms: Vec<(BigRational, AtomPattern)>) -> Self {
        Constraint { relation, rhs, terms: terms.into_iter().map(|(coeff, pattern)| Term { coeff, pattern }).collect() }
    }

    /// Coefficient of each atom.
    pub fn row(&self) -> Vec<BigRational> {
        let mut row = vec![BigRational::zero(); ATOMS];
        for term in &self.terms {
            for (r, ind) in row.iter_mut().zip(term.pattern.indicator()) {
                *r += &term.coeff * ind;
            }
        }
        row
    }

    pub fn holds(&self, x: &[BigRational]) -> bool {
        let lhs = dot(&self.row(), x);
        match self.relation {
            Relation::Eq => lhs == self.rhs,
            Relation::Le => lhs <= self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

fn dot(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
}

fn format_rational(r: &BigRational, force_denominator: bool) -> String {
    if r.denom().is_one() && !force_denominator {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Rational written as `p/q` (always with a denominator).
pub fn rational_string(r: &BigRational) -> String {
    format_rational(r, true)
}

fn parse_rational(s: &str) -> std::result::Result<BigRational, String> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n = BigInt::from_str(n.trim_start_matches('+')).map_err(|e| format!("bad numerator {n:?}: {e}"))?;
    let d = BigInt::from_str(d).map_err(|e| format!("bad denominator {d:?}: {e}"))?;
    if d.is_zero() {
        return Err("zero denominator".into());
    }
    Ok(BigRational::new(n, d))
}

/// Linear constraints on the atom probabilities; nonnegativity is implicit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeasibilityProblem {
    pub constraints: Vec<Constraint>,
}

impl FeasibilityProblem {
    /// Parses the line format `<rel> <num>/<den> : <coef> <pattern> ...`;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut constraints = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::MalformedConstraint { line: n + 1, reason };
            let (head, body) = line.split_once(':').ok_or_else(|| bad("missing ':'".into()))?;
            let mut head = head.split_whitespace();
            let relation = match head.next() {
                Some("=") => Relation::Eq,
                Some("<=") => Relation::Le,
                Some(">=") => Relation::Ge,
                other => return Err(bad(format!("unknown relation {other:?}"))),
            };
            let rhs = parse_rational(head.next().ok_or_else(|| bad("missing right-hand side".into()))?).map_err(bad)?;
            if head.next().is_some() {
                return Err(bad("unexpected token before ':'".into()));
            }
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if tokens.is_empty() || !tokens.len().is_multiple_of(2) {
                return Err(bad("terms must be <coef> <pattern> pairs".into()));
            }
            let terms = tokens
                .chunks(2)
                .map(|pair| {
                    Ok(Term {
                        coeff: parse_rational(pair[0]).map_err(bad)?,
                        pattern: pair[1].parse().map_err(bad)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            constraints.push(Constraint { relation, rhs, terms });
        }
        Ok(FeasibilityProblem { constraints })
    }

    pub fn without(&self, index: usize) -> FeasibilityProblem {
        let mut out = self.clone();
        out.constraints.remove(index);
        out
    }

    fn rows(&self) -> Vec<Vec<BigRational>> {
        self.constraints.iter().map(Constraint::row).collect()
    }

    /// Minimizes `Σ objective` over distributions satisfying the constraints;
    /// `None` when the constraints are infeasible.
    pub fn lower_bound(&self, objective: &AtomPattern) -> Result<Option<BoundCertificate>> {
        let c = objective.indicator();
        match self.run(&c)? {
            LpOutcome::Optimal { multipliers, value, .. } => {
                Ok(Some(BoundCertificate { objective: *objective, multipliers, bound: value }))
            }
            LpOutcome::Infeasible { .. } => Ok(None),
            LpOutcome::Unbounded => Err(Error::InvalidArgument("objective unbounded below".into())),
        }
    }

    fn run(&self, objective: &[BigRational]) -> Result<LpOutcome> {
        let matrix = self.rows();
        let rows: Vec<Row<'_>> = self
            .constraints
            .iter()
            .zip(&matrix)
            .map(|(c, coeffs)| Row { coeffs, relation: c.relation, rhs: &c.rhs })
            .collect();
        Ok(solve(&rows, objective))
    }
}

impl fmt::Display for FeasibilityProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.constraints {
            write!(f, "{} {} :", c.relation.symbol(), rational_string(&c.rhs))?;
            for t in &c.terms {
                write!(f, " {} {}", format_rational(&t.coeff, false), t.pattern)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn sign_rule_holds(relation: Relation, y: &BigRational) -> bool {
    match relation {
        Relation::Eq => true,
        Relation::Le => !y.is_positive(),
        Relation::Ge => !y.is_negative(),
    }
}

/// Row multipliers `y` with `Σ y_i a_i ≤ 0` atomwise and `Σ y_i b_i > 0`.
/// Signs: `y_i ≥ 0` on `>=` rows, `y_i ≤ 0` on `<=` rows, free on `=` rows.
/// Any distribution would then satisfy `0 ≥ Σ y_i a_i·x ≥ Σ y_i b_i > 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FarkasCertificate {
    pub multipliers: Vec<BigRational>,
}

impl FarkasCertificate {
    /// The contradiction margin `Σ y_i b_i` if the certificate is valid.
    pub fn verify(&self, problem: &FeasibilityProblem) -> Option<BigRational> {
        if self.multipliers.len() != problem.constraints.len() {
            return None;
        }
        let mut combined = vec![BigRational::zero(); ATOMS];
        let mut margin = BigRational::zero();
        for (c, y) in problem.constraints.iter().zip(&self.multipliers) {
            if !sign_rule_holds(c.relation, y) {
                return None;
            }
            for (acc, a) in combined.iter_mut().zip(c.row()) {
                *acc += y * a;
            }
            margin += y * &c.rhs;
        }
        (combined.iter().all(|v| !v.is_positive()) && margin.is_positive()).then_some(margin)
    }

    /// Lower bound on the left-hand side of constraint `index` implied by the
    /// remaining constraints: `(Σ_{i≠j} y_i b_i)/(−y_j)` when `y_j < 0`.
    pub fn implied_lower_bound(&self, problem: &FeasibilityProblem, index: usize) -> Option<BigRational> {
        self.verify(problem)?;
        let yj = &self.multipliers[index];
        if !yj.is_negative() {
            return None;
        }
        let rest = problem
            .constraints
            .iter()
            .zip(&self.multipliers)
            .enumerate()
            .filter(|(i, _)| *i != index)
            .fold(BigRational::zero(), |acc, (_, (c, y))| acc + y * &c.rhs);
        Some(rest / -yj)
    }
}

/// Multipliers proving `objective·x ≥ bound` for every feasible distribution:
/// `Σ y_i a_i ≤ objective` atomwise with the sign rules of [`FarkasCertificate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundCertificate {
    pub objective: AtomPattern,
    pub multipliers: Vec<BigRational>,
    pub bound: BigRational,
}

impl BoundCertificate {
    pub fn verify(&self, problem: &FeasibilityProblem) -> bool {
        if self.multipliers.len() != problem.constraints.len() {
            return false;
        }
        let mut combined = vec![BigRational::zero(); ATOMS];
        let mut value = BigRational::zero();
        for (c, y) in problem.constraints.iter().zip(&self.multipliers) {
            if !sign_rule_holds(c.relation, y) {
                return false;
            }
            for (acc, a) in combined.iter_mut().zip(c.row()) {
                *acc += y * a;
            }
            value += y * &c.rhs;
        }
        let objective = self.objective.indicator();
        value == self.bound && combined.iter().zip(&objective).all(|(l, o)| l <= o)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Feasible { witness: Vec<BigRational> },
    Infeasible { certificate: FarkasCertificate },
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible { .. })
    }
}

/// Exact decision whether some probability distribution on the atoms
/// satisfies every constraint.
pub fn certify_no_measure(problem: &FeasibilityProblem) -> Result<Verdict> {
    let zero = vec![BigRational::zero(); ATOMS];
    match problem.run(&zero)? {
        LpOutcome::Optimal { x, .. } => Ok(Verdict::Feasible { witness: x }),
        LpOutcome::Infeasible { multipliers } => Ok(Verdict::Infeasible { certificate: FarkasCertificate { multipliers } }),
        LpOutcome::Unbounded => unreachable!("zero objective is bounded"),
    }
}

/// Whether `witness` is a distribution satisfying every constraint.
pub fn verify_witness(problem: &FeasibilityProblem, witness: &[BigRational]) -> bool {
    witness.len() == ATOMS
        && witness.iter().all(|x| !x.is_negative())
        && problem.constraints.iter().all(|c| c.holds(witness))
}

fn pattern(spec: &str) -> AtomPattern {
    spec.parse().expect("static pattern")
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Index of the `P(a_z = −1, b_z = −1) = 0` row in [`hardy_constraints`].
pub const HARDY_BOTH_MINUS_Z: usize = 3;

/// Normalization plus the four Hardy conditions:
/// `P(a_x=+1, b_z=+1) = 0`, `P(b_x=+1, a_z=+1) = 0`,
/// `P(a_z=−1, b_z=−1) = 0`, `P(a_x=+1, b_x=+1) = 1/12`.
pub fn hardy_constraints() -> FeasibilityProblem {
    let one = || ratio(1, 1);
    let eq = |rhs: BigRational, p: &str| Constraint::new(Relation::Eq, rhs, vec![(one(), pattern(p))]);
    FeasibilityProblem {
        constraints: vec![
            eq(one(), "*"),
            eq(ratio(0, 1), "ax=+1,bz=+1"),
            eq(ratio(0, 1), "az=+1,bx=+1"),
            eq(ratio(0, 1), "az=-1,bz=-1"),
            eq(ratio(1, 12), "ax=+1,bx=+1"),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_is_infeasible_with_a_valid_certificate() {
        let p = hardy_constraints();
        let Verdict::Infeasible { certificate } = certify_no_measure(&p).unwrap() else {
            panic!("Hardy constraints must be infeasible");
        };
        assert!(certificate.verify(&p).is_some());
        let bound = certificate.implied_lower_bound(&p, HARDY_BOTH_MINUS_Z).unwrap();
        assert!(bound >= ratio(1, 12), "{bound}");
    }

    #[test]
    fn dropping_the_zz_condition_is_feasible() {
        let p = hardy_constraints().without(HARDY_BOTH_MINUS_Z);
        let Verdict::Feasible { witness } = certify_no_measure(&p).unwrap() else { panic!() };
        assert!(verify_witness(&p, &witness));
        let cert = p.lower_bound(&pattern("az=-1,bz=-1")).unwrap().unwrap();
        assert_eq!(cert.bound, ratio(1, 12));
        assert!(cert.verify(&p));
    }

    #[test]
    fn text_round_trip() {
        let p = hardy_constraints();
        let text = p.to_string();
        let back = FeasibilityProblem::parse(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_string(), text);
        assert!(text.contains("= 1/12 : 1 ax=+1,bx=+1"));
    }

    #[test]
    fn hardy_denominators_are_small() {
        for c in hardy_constraints().constraints {
            assert!(c.rhs.denom() <= &BigInt::from(12));
            assert!(c.terms.iter().all(|t| t.coeff.denom() <= &BigInt::from(12)));
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = FeasibilityProblem::parse("# header\n= 1/1 : 1 *\n<= 1/2 : 1 cx=+1\n").unwrap_err();
        assert!(matches!(err, Error::MalformedConstraint { line: 3, .. }), "{err}");
        assert!(FeasibilityProblem::parse("= 1/0 : 1 *").is_err());
        assert!(FeasibilityProblem::parse("= 1 : 1").is_err());
    }

    #[test]
    fn product_marginals_are_feasible() {
        // independent fair coins for every variable
        let mut constraints = vec![Constraint::new(Relation::Eq, ratio(1, 1), vec![(ratio(1, 1), AtomPattern::ALL)])];
        for v in ["ax=+1", "az=+1", "bx=+1", "bz=+1"] {
            constraints.push(Constraint::new(Relation::Eq, ratio(1, 2), vec![(ratio(1, 1), pattern(v))]));
        }
        constraints.push(Constraint::new(Relation::Eq, ratio(1, 4), vec![(ratio(1, 1), pattern("ax=+1,bx=+1"))]));
        let p = FeasibilityProblem { constraints };
        let Verdict::Feasible { witness } = certify_no_measure(&p).unwrap() else { panic!() };
        assert!(verify_witness(&p, &witness));
        let product = vec![ratio(1, 16); ATOMS];
        assert!(verify_witness(&p, &product));
    }
}
