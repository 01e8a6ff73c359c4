//! Exact two-phase simplex over rationals with Bland's rule.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::feasibility::Relation;

/// One linear row over the structural variables.
pub(crate) struct Row<'a> {
    pub coeffs: &'a [BigRational],
    pub relation: Relation,
    pub rhs: &'a BigRational,
}

pub(crate) enum LpOutcome {
    /// Phase I optimum is positive. Row multipliers `y` satisfy
    /// `Σ y_i a_i ≤ 0` and `Σ y_i b_i > 0`.
    Infeasible { multipliers: Vec<BigRational> },
    /// Optimal point and row multipliers with `Σ y_i a_i ≤ c` and
    /// `Σ y_i b_i = c·x`.
    Optimal { x: Vec<BigRational>, multipliers: Vec<BigRational>, value: BigRational },
    Unbounded,
}

struct Tableau {
    /// `B⁻¹ [A | I | b]` with slack and artificial columns.
    t: Vec<Vec<BigRational>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_slack: usize,
    m: usize,
    /// ±1 per row: the sign applied to make the right-hand side nonnegative.
    flips: Vec<BigRational>,
}

impl Tableau {
    fn new(rows: &[Row<'_>], n_struct: usize) -> Tableau {
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let width = n_struct + n_slack + m + 1;
        let mut t = Vec::with_capacity(m);
        let mut flips = Vec::with_capacity(m);
        let mut slack = n_struct;
        for (i, r) in rows.iter().enumerate() {
            let mut row = vec![BigRational::zero(); width];
            row[..n_struct].clone_from_slice(r.coeffs);
            match r.relation {
                Relation::Le => {
                    row[slack] = BigRational::one();
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -BigRational::one();
                    slack += 1;
                }
                Relation::Eq => {}
            }
            row[width - 1] = r.rhs.clone();
            let flip = if r.rhs.is_negative() { -BigRational::one() } else { BigRational::one() };
            if flip.is_negative() {
                row.iter_mut().for_each(|v| *v = -&*v);
            }
            row[n_struct + n_slack + i] = BigRational::one();
            t.push(row);
            flips.push(flip);
        }
        Tableau { t, basis: (0..m).map(|i| n_struct + n_slack + i).collect(), n_struct, n_slack, m, flips }
    }

    fn cols(&self) -> usize {
        self.n_struct + self.n_slack + self.m
    }

    fn first_art(&self) -> usize {
        self.n_struct + self.n_slack
    }

    fn rhs(&self, i: usize) -> &BigRational {
        &self.t[i][self.cols()]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c].clone();
        for v in self.t[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    fn reduced_cost(&self, cost: &[BigRational], j: usize) -> BigRational {
        (0..self.m).fold(cost[j].clone(), |acc, k| acc - &cost[self.basis[k]] * &self.t[k][j])
    }

    /// Original-row multipliers `y_i = f_i (c_B^T B⁻¹)_i`.
    fn multipliers(&self, cost: &[BigRational]) -> Vec<BigRational> {
        (0..self.m)
            .map(|i| {
                let col = self.first_art() + i;
                let y = (0..self.m).fold(BigRational::zero(), |acc, k| acc + &cost[self.basis[k]] * &self.t[k][col]);
                y * &self.flips[i]
            })
            .collect()
    }

    fn value(&self, cost: &[BigRational]) -> BigRational {
        (0..self.m).fold(BigRational::zero(), |acc, k| acc + &cost[self.basis[k]] * self.rhs(k))
    }

    /// Minimizes `cost·x` letting only columns below `allowed` enter; false
    /// when unbounded.
    fn optimize(&mut self, cost: &[BigRational], allowed: usize) -> bool {
        loop {
            let entering =
                (0..allowed).find(|&j| !self.basis.contains(&j) && self.reduced_cost(cost, j).is_negative());
            let Some(j) = entering else { return true };
            let mut best: Option<(usize, BigRational)> = None;
            for i in 0..self.m {
                let a = &self.t[i][j];
                if a.is_positive() {
                    let ratio = self.rhs(i) / a;
                    let better = match &best {
                        None => true,
                        Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, j),
                None => return false,
            }
        }
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.first_art() {
                continue;
            }
            if let Some(c) = (0..self.first_art()).find(|&c| !self.t[r][c].is_zero()) {
                self.pivot(r, c);
            }
        }
    }

    fn structural_solution(&self) -> Vec<BigRational> {
        let mut x = vec![BigRational::zero(); self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.rhs(i).clone();
            }
        }
        x
    }
}

/// Minimizes `objective·x` subject to `rows` and `x ≥ 0`.
pub(crate) fn solve(rows: &[Row<'_>], objective: &[BigRational]) -> LpOutcome {
    let n_struct = objective.len();
    let mut tab = Tableau::new(rows, n_struct);
    let cols = tab.cols();
    let mut phase1 = vec![BigRational::zero(); cols];
    phase1[tab.first_art()..].iter_mut().for_each(|c| *c = BigRational::one());
    tab.optimize(&phase1, cols);
    if tab.value(&phase1).is_positive() {
        return LpOutcome::Infeasible { multipliers: tab.multipliers(&phase1) };
    }
    tab.expel_artificials();
    let mut phase2 = vec![BigRational::zero(); cols];
    phase2[..n_struct].clone_from_slice(objective);
    let allowed = tab.first_art();
    if !tab.optimize(&phase2, allowed) {
        return LpOutcome::Unbounded;
    }
    LpOutcome::Optimal { x: tab.structural_solution(), multipliers: tab.multipliers(&phase2), value: tab.value(&phase2) }
}
