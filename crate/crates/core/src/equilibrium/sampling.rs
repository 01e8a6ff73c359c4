use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::parallel::{map_indexed, stream_rng, Execution};
use crate::state::TwoTimeState;

use super::SliceSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub points: Vec<(f64, f64)>,
    pub proposals: u64,
    pub acceptance_rate: f64,
    /// Set when fewer than 1% of proposals were accepted.
    pub warning: Option<String>,
}

/// Rejection sampler for `|ψ|²` with a `|c|²`-weighted mixture of branch
/// Gaussians as proposal.
///
/// The envelope uses `|ψ|² = v†Sv ≤ λ_max(S)‖v‖²` with `v_i = c_i φ_i` and `S`
/// the branch spin-overlap matrix; `λ_max` is bounded by the largest absolute
/// row sum.
#[derive(Clone, Debug)]
pub struct EquilibriumSampler<'a> {
    state: &'a TwoTimeState,
    cumulative: Vec<f64>,
    envelope: f64,
}

impl<'a> EquilibriumSampler<'a> {
    pub fn new(state: &'a TwoTimeState) -> Result<Self> {
        let branches = state.branches();
        if branches.is_empty() {
            return Err(Error::ZeroProbability);
        }
        let weights: Vec<f64> = branches.iter().map(|b| b.coeff.norm_sqr()).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        let lambda = branches
            .iter()
            .map(|bi| {
                branches
                    .iter()
                    .map(|bj| (bi.spin_a.inner(&bj.spin_a) * bi.spin_b.inner(&bj.spin_b)).norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(EquilibriumSampler { state, cumulative, envelope: lambda * total * (1.0 + 1e-12) })
    }

    fn proposal_density(&self, q_a: f64, q_b: f64) -> f64 {
        let total: f64 = self.state.branches().iter().map(|b| b.coeff.norm_sqr()).sum();
        self.state
            .branches()
            .iter()
            .map(|b| {
                let pa = b.packet_a.value(q_a).norm_sqr();
                let pb = b.packet_b.value(q_b).norm_sqr();
                b.coeff.norm_sqr() / total * pa * pb
            })
            .sum()
    }

    /// One accepted point and the number of proposals it took.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> ((f64, f64), u64) {
        let branches = self.state.branches();
        let mut tries = 0;
        loop {
            tries += 1;
            let u: f64 = rng.random();
            let i = self.cumulative.partition_point(|&c| c < u).min(branches.len() - 1);
            let b = &branches[i];
            let za: f64 = rng.sample(StandardNormal);
            let zb: f64 = rng.sample(StandardNormal);
            let q_a = b.packet_a.center + b.packet_a.width() * za;
            let q_b = b.packet_b.center + b.packet_b.width() * zb;
            let target = self.state.density(q_a, q_b);
            let bound = self.envelope * self.proposal_density(q_a, q_b);
            let accept: f64 = rng.random();
            if accept * bound <= target {
                return ((q_a, q_b), tries);
            }
        }
    }

    /// `n` points, point `i` drawn from its own stream of `seed`.
    pub fn sample(&self, n: usize, seed: u64, mode: Execution) -> SampleSet {
        let draws = map_indexed(n, mode, |i| self.draw(&mut stream_rng(seed, i as u64)));
        let proposals: u64 = draws.iter().map(|d| d.1).sum();
        let acceptance_rate = n as f64 / proposals as f64;
        let warning = (acceptance_rate < 0.01)
            .then(|| format!("acceptance rate {acceptance_rate:.4} below 1%; check the geometry"));
        SampleSet { points: draws.into_iter().map(|d| d.0).collect(), proposals, acceptance_rate, warning }
    }
}

/// `n` samples of `|ψ|²` on the slice `(t_a*, t_b*)`.
pub fn sample_equilibrium(state: &TwoTimeState, slice: &SliceSpec, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidCount(n));
    }
    let at_slice = state.evolve_to(slice.t_a, slice.t_b);
    Ok(EquilibriumSampler::new(&at_slice)?.sample(n, seed, Execution::Parallel))
}
