use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::guidance::SynchronizedPath;
use crate::state::{Interval, Subsystem, TwoTimeState};

use super::SliceSpec;

/// A labeled spatial window for one particle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRegion {
    pub label: String,
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingCell {
    pub region_a: String,
    pub region_b: String,
    pub count: u64,
    pub fraction: f64,
    pub sigma: f64,
}

/// Counts of crossing points per product of regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingTable {
    pub slice: SliceSpec,
    pub total: u64,
    pub cells: Vec<CrossingCell>,
}

impl CrossingTable {
    /// Tabulates points; a point outside every region product is not counted.
    pub fn from_points<'p>(
        slice: &SliceSpec,
        points: impl IntoIterator<Item = &'p (f64, f64)>,
        total: u64,
        regions_a: &[TrackRegion],
        regions_b: &[TrackRegion],
    ) -> Self {
        let mut counts = vec![0u64; regions_a.len() * regions_b.len()];
        for &(qa, qb) in points {
            let ia = regions_a.iter().position(|r| r.interval.contains(qa));
            let ib = regions_b.iter().position(|r| r.interval.contains(qb));
            if let (Some(ia), Some(ib)) = (ia, ib) {
                counts[ia * regions_b.len() + ib] += 1;
            }
        }
        let n = total.max(1) as f64;
        let cells = regions_a
            .iter()
            .flat_map(|ra| regions_b.iter().map(move |rb| (ra, rb)))
            .zip(counts)
            .map(|((ra, rb), count)| {
                let p = count as f64 / n;
                CrossingCell {
                    region_a: ra.label.clone(),
                    region_b: rb.label.clone(),
                    count,
                    fraction: p,
                    sigma: (p * (1.0 - p) / n).sqrt(),
                }
            })
            .collect();
        CrossingTable { slice: slice.clone(), total, cells }
    }

    pub fn cell(&self, region_a: &str, region_b: &str) -> Option<&CrossingCell> {
        self.cells.iter().find(|c| c.region_a == region_a && c.region_b == region_b)
    }
}

/// Fraction of paths whose crossing of `slice` lands in each region product.
pub fn crossing_statistics(
    paths: &[SynchronizedPath],
    slice: &SliceSpec,
    regions_a: &[TrackRegion],
    regions_b: &[TrackRegion],
) -> Result<CrossingTable> {
    let points = paths.iter().map(|p| crossing(p, slice)).collect::<Result<Vec<_>>>()?;
    Ok(CrossingTable::from_points(slice, &points, paths.len() as u64, regions_a, regions_b))
}

/// Where the path meets the slice: `Q_a` when `T_a = t_a*` and `Q_b` when `T_b = t_b*`.
pub fn crossing(path: &SynchronizedPath, slice: &SliceSpec) -> Result<(f64, f64)> {
    Ok((path.position_at_time(Subsystem::A, slice.t_a)?, path.position_at_time(Subsystem::B, slice.t_b)?))
}

/// A product partition of configuration space used for distribution tests.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPartition {
    pub edges_a: Vec<f64>,
    pub edges_b: Vec<f64>,
}

impl RegionPartition {
    /// Cuts each particle's line at Gaussian quantiles of every distinct
    /// packet the state carries (`bins_*` cells per packet) and halfway
    /// between neighboring packets.
    pub fn from_state(state: &TwoTimeState, bins_a: usize, bins_b: usize) -> Self {
        RegionPartition {
            edges_a: Self::edges(state, Subsystem::A, bins_a),
            edges_b: Self::edges(state, Subsystem::B, bins_b),
        }
    }

    /// `cells_a × cells_b` cells cut at equal-probability quantiles of each
    /// marginal of `|ψ|²`.
    pub fn marginal_quantiles(state: &TwoTimeState, cells_a: usize, cells_b: usize) -> Self {
        RegionPartition {
            edges_a: Self::quantile_edges(state, Subsystem::A, cells_a),
            edges_b: Self::quantile_edges(state, Subsystem::B, cells_b),
        }
    }

    fn quantile_edges(state: &TwoTimeState, sub: Subsystem, cells: usize) -> Vec<f64> {
        let packets = state.branches().iter().map(|b| b.packet(sub));
        let lo = packets.clone().map(|p| p.center - 12.0 * p.width()).fold(f64::INFINITY, f64::min);
        let hi = packets.map(|p| p.center + 12.0 * p.width()).fold(f64::NEG_INFINITY, f64::max);
        let total = state.norm_sqr();
        let below = |x: f64| {
            let cut = Interval { lo: f64::NEG_INFINITY, hi: x };
            match sub {
                Subsystem::A => state.region_probability(cut, Interval::ALL),
                Subsystem::B => state.region_probability(Interval::ALL, cut),
            }
        };
        (1..cells)
            .map(|k| {
                let target = total * k as f64 / cells as f64;
                let (mut a, mut b) = (lo, hi);
                for _ in 0..100 {
                    let mid = 0.5 * (a + b);
                    if below(mid) < target {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }

    fn edges(state: &TwoTimeState, sub: Subsystem, bins: usize) -> Vec<f64> {
        let mut tracks: Vec<(f64, f64)> = state.branches().iter().map(|b| (b.packet(sub).center, b.packet(sub).width())).collect();
        tracks.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut distinct: Vec<(f64, f64)> = Vec::new();
        for t in tracks {
            match distinct.last() {
                Some(last) if t.0 - last.0 < 2.0 * last.1.max(t.1) => {}
                _ => distinct.push(t),
            }
        }
        let quantiles: Vec<f64> = (1..bins).map(|k| normal_quantile(k as f64 / bins as f64)).collect();
        let mut edges = Vec::new();
        for (i, &(c, w)) in distinct.iter().enumerate() {
            if i > 0 {
                edges.push(0.5 * (distinct[i - 1].0 + c));
            }
            edges.extend(quantiles.iter().map(|z| c + w * z));
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges
    }

    pub fn cells_a(&self) -> usize {
        self.edges_a.len() + 1
    }

    pub fn cells_b(&self) -> usize {
        self.edges_b.len() + 1
    }

    pub fn len(&self) -> usize {
        self.cells_a() * self.cells_b()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn interval(edges: &[f64], i: usize) -> Interval {
        let lo = if i == 0 { f64::NEG_INFINITY } else { edges[i - 1] };
        let hi = edges.get(i).copied().unwrap_or(f64::INFINITY);
        Interval { lo, hi }
    }

    pub fn cell_of(&self, q_a: f64, q_b: f64) -> usize {
        let ia = self.edges_a.partition_point(|&e| e <= q_a);
        let ib = self.edges_b.partition_point(|&e| e <= q_b);
        ia * self.cells_b() + ib
    }

    pub fn analytic(&self, state: &TwoTimeState) -> Vec<f64> {
        (0..self.cells_a())
            .flat_map(|ia| (0..self.cells_b()).map(move |ib| (ia, ib)))
            .map(|(ia, ib)| {
                state.region_probability(Self::interval(&self.edges_a, ia), Self::interval(&self.edges_b, ib))
            })
            .collect()
    }

    pub fn histogram<'p>(&self, points: impl IntoIterator<Item = &'p (f64, f64)>) -> Vec<u64> {
        let mut counts = vec![0; self.len()];
        for &(a, b) in points {
            counts[self.cell_of(a, b)] += 1;
        }
        counts
    }
}

/// `½ Σ |counts/n − p|`.
pub fn total_variation(counts: &[u64], probabilities: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(probabilities)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
}

/// Standard normal quantile by bisection on the CDF.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    let cdf = |x: f64| 0.5 * errorfunctions::RealErrorFunctions::erfc(-x / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
