//! Alignment, correlation and permutation statistics over two-robot traces.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activity::Participant;
use crate::exec::{self, Execution};
use crate::trace::{TraceError, TraceSample};

pub const DIMS: [&str; 4] = ["x1", "y1", "x2", "y2"];

/// Permutations drawn from one random stream; the unit of parallel work.
const PERM_BLOCK: u64 = 256;

/// Both robots' positions and zones on a shared uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub hz: f64,
    pub t_ms: Vec<f64>,
    pub x1: Vec<f64>,
    pub y1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y2: Vec<f64>,
    pub zone1: Vec<String>,
    pub zone2: Vec<String>,
}

impl AlignedSeries {
    pub fn len(&self) -> usize {
        self.t_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_ms.is_empty()
    }

    /// Series in [`DIMS`] order.
    pub fn dims(&self) -> [&[f64]; 4] {
        [&self.x1, &self.y1, &self.x2, &self.y2]
    }

    pub fn mean_distance_mm(&self) -> f64 {
        let n = self.len().max(1) as f64;
        (0..self.len())
            .map(|i| (self.x1[i] - self.x2[i]).hypot(self.y1[i] - self.y2[i]))
            .sum::<f64>()
            / n
    }
}

struct Track {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    zone: Vec<String>,
}

fn track(trace: &[TraceSample], robot: Participant) -> Track {
    let mut tr = Track {
        t: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        zone: Vec::new(),
    };
    for s in trace.iter().filter(|s| s.robot_id == robot) {
        let t = s.t_ms as f64;
        // Several samples stamped in the same millisecond: keep the latest.
        if tr.t.last() == Some(&t) {
            tr.t.pop();
            tr.x.pop();
            tr.y.pop();
            tr.zone.pop();
        }
        tr.t.push(t);
        tr.x.push(s.x_mm);
        tr.y.push(s.y_mm);
        tr.zone.push(s.zone_id.clone());
    }
    tr
}

/// Linear interpolation of `(t, x)` at increasing query times `grid`; the
/// zone is held from the latest sample at or before each query.
fn interpolate(tr: &Track, grid: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<String>) {
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    let mut zs = Vec::with_capacity(grid.len());
    let mut j = 0;
    for &g in grid {
        while j + 1 < tr.t.len() && tr.t[j + 1] <= g {
            j += 1;
        }
        if j + 1 < tr.t.len() && tr.t[j] < g {
            let w = (g - tr.t[j]) / (tr.t[j + 1] - tr.t[j]);
            xs.push(tr.x[j] + w * (tr.x[j + 1] - tr.x[j]));
            ys.push(tr.y[j] + w * (tr.y[j + 1] - tr.y[j]));
        } else {
            xs.push(tr.x[j]);
            ys.push(tr.y[j]);
        }
        zs.push(tr.zone[j].clone());
    }
    (xs, ys, zs)
}

/// Resamples both robots onto a uniform grid at `hz` over the span where
/// both have data.
pub fn resample(trace: &[TraceSample], hz: f64) -> Result<AlignedSeries, TraceError> {
    if !(hz.is_finite() && hz > 0.0) {
        return Err(TraceError::BadRate);
    }
    let a = track(trace, Participant::A);
    let b = track(trace, Participant::B);
    if a.t.is_empty() && b.t.is_empty() {
        return Err(TraceError::NoOverlap);
    }
    if a.t.is_empty() || b.t.is_empty() {
        return Err(TraceError::MissingRobot);
    }
    if a.t.len() < 2 || b.t.len() < 2 {
        return Err(TraceError::NoOverlap);
    }
    let start = a.t[0].max(b.t[0]);
    let end = a.t[a.t.len() - 1].min(b.t[b.t.len() - 1]);
    if end <= start {
        return Err(TraceError::NoOverlap);
    }
    let step = 1000.0 / hz;
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    if n < 2 {
        return Err(TraceError::NoOverlap);
    }
    let grid: Vec<f64> = (0..n).map(|k| start + k as f64 * step).collect();
    let (x1, y1, zone1) = interpolate(&a, &grid);
    let (x2, y2, zone2) = interpolate(&b, &grid);
    Ok(AlignedSeries {
        hz,
        t_ms: grid,
        x1,
        y1,
        x2,
        y2,
        zone1,
        zone2,
    })
}

fn centered(a: &[f64]) -> Result<(Vec<f64>, f64), TraceError> {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    let c: Vec<f64> = a.iter().map(|v| v - mean).collect();
    let ss = c.iter().map(|v| v * v).sum::<f64>();
    if ss == 0.0 || !ss.is_finite() {
        return Err(TraceError::ZeroVariance);
    }
    Ok((c, ss.sqrt()))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), TraceError> {
    if a.len() != b.len() {
        return Err(TraceError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(TraceError::TooShort);
    }
    Ok(())
}

/// Product-moment correlation coefficient (two-pass, clamped to [-1, 1]).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, TraceError> {
    check_pair(a, b)?;
    let (ca, na) = centered(a)?;
    let (cb, nb) = centered(b)?;
    let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Null distribution of |r| under random re-pairing of `b` against `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationNull {
    /// |r| of every permutation, ascending.
    abs_r: Vec<f64>,
    r_obs: f64,
}

impl PermutationNull {
    /// Permutation `k` comes from stream `k / 256` of a ChaCha8 generator
    /// seeded with `seed`, so the null is the same for any execution mode.
    pub fn new(a: &[f64], b: &[f64], n_perm: u64, seed: u64, exec: Execution) -> Result<Self, TraceError> {
        check_pair(a, b)?;
        if n_perm == 0 {
            return Err(TraceError::NoPermutations);
        }
        let (ca, na) = centered(a)?;
        let (cb, nb) = centered(b)?;
        let scale = 1.0 / (na * nb);
        let stat = |perm: &[f64]| ca.iter().zip(perm).map(|(x, y)| x * y).sum::<f64>() * scale;
        let r_obs = stat(&cb);
        let blocks = n_perm.div_ceil(PERM_BLOCK);
        let mut abs_r = exec::flat_map(exec, 0..blocks, |block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let count = PERM_BLOCK.min(n_perm - block * PERM_BLOCK);
            let mut perm = cb.clone();
            (0..count)
                .map(|_| {
                    perm.shuffle(&mut rng);
                    stat(&perm).abs()
                })
                .collect()
        });
        abs_r.sort_by(f64::total_cmp);
        Ok(Self { abs_r, r_obs })
    }

    pub fn n_perm(&self) -> u64 {
        self.abs_r.len() as u64
    }

    /// Correlation of the unpermuted pair, on the same arithmetic path as
    /// the permuted ones.
    pub fn r_obs(&self) -> f64 {
        self.r_obs
    }

    /// Two-sided p-value of a statistic `r`: (1 + #{|r_perm| ≥ |r|}) / (n + 1).
    pub fn p_value(&self, r: f64) -> f64 {
        // Ties with the observed statistic are decided with a relative
        // tolerance so a permutation reproducing the data counts as extreme.
        let threshold = r.abs() * (1.0 - 1e-12);
        let below = self.abs_r.partition_point(|&v| v < threshold);
        let extreme = self.abs_r.len() - below;
        (1 + extreme) as f64 / (self.abs_r.len() + 1) as f64
    }

    pub fn p_obs(&self) -> f64 {
        self.p_value(self.r_obs)
    }
}

/// Seeded two-sided permutation p-value for the correlation of `a` and `b`.
pub fn perm_pvalue(a: &[f64], b: &[f64], n_perm: u64, seed: u64) -> Result<f64, TraceError> {
    perm_pvalue_with(a, b, n_perm, seed, Execution::default())
}

pub fn perm_pvalue_with(a: &[f64], b: &[f64], n_perm: u64, seed: u64, exec: Execution) -> Result<f64, TraceError> {
    Ok(PermutationNull::new(a, b, n_perm, seed, exec)?.p_obs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub dims: [String; 4],
    pub r: [[f64; 4]; 4],
    /// Permutation p-values; `None` when the report was built without
    /// permutations.
    pub p: Option<[[f64; 4]; 4]>,
    pub n_samples: usize,
    pub resample_hz: f64,
    pub n_perm: u64,
}

impl CorrelationReport {
    pub fn r_of(&self, a: &str, b: &str) -> Option<f64> {
        let i = DIMS.iter().position(|d| *d == a)?;
        let j = DIMS.iter().position(|d| *d == b)?;
        Some(self.r[i][j])
    }

    /// Mean of the matched-axis correlations r(x1,x2) and r(y1,y2).
    pub fn matched_axis_mean(&self) -> f64 {
        (self.r[0][2] + self.r[1][3]) / 2.0
    }
}

/// r and permutation p for every pair among x1, y1, x2, y2. Pair `(i, j)`
/// uses seed `seed + 4i + j`. `n_perm = 0` skips the p-values.
pub fn correlation_matrix(aligned: &AlignedSeries, n_perm: u64, seed: u64, exec: Execution) -> Result<CorrelationReport, TraceError> {
    let dims = aligned.dims();
    let mut r = [[1.0; 4]; 4];
    let mut p = [[1.0 / (n_perm as f64 + 1.0); 4]; 4];
    for i in 0..4 {
        for j in (i + 1)..4 {
            let rij = pearson(dims[i], dims[j])?;
            r[i][j] = rij;
            r[j][i] = rij;
            if n_perm > 0 {
                let pair_seed = seed.wrapping_add(4 * i as u64 + j as u64);
                let null = PermutationNull::new(dims[i], dims[j], n_perm, pair_seed, exec)?;
                let pij = null.p_value(rij);
                p[i][j] = pij;
                p[j][i] = pij;
            }
        }
    }
    Ok(CorrelationReport {
        dims: DIMS.map(String::from),
        r,
        p: (n_perm > 0).then_some(p),
        n_samples: aligned.len(),
        resample_hz: aligned.hz,
        n_perm,
    })
}

/// Share of grid points where both robots occupy the same zone.
pub fn tandem_fraction(aligned: &AlignedSeries) -> f64 {
    if aligned.is_empty() {
        return 0.0;
    }
    let same = aligned.zone1.iter().zip(&aligned.zone2).filter(|(a, b)| a == b).count();
    same as f64 / aligned.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: u64, r: Participant, x: f64, y: f64, z: &str) -> TraceSample {
        TraceSample::new(t, r, x, y, 0.0, z)
    }

    #[test]
    fn pearson_fixtures() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(TraceError::ZeroVariance)));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(TraceError::TooShort)));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(TraceError::LengthMismatch(2, 1))));
    }

    #[test]
    fn midpoint_interpolation() {
        let trace = vec![
            s(0, Participant::A, 0.0, 0.0, "cytosol"),
            s(0, Participant::B, 5.0, 5.0, "cytosol"),
            s(1000, Participant::A, 10.0, 20.0, "nucleus"),
            s(1000, Participant::B, 5.0, 5.0, "cytosol"),
        ];
        let al = resample(&trace, 2.0).unwrap();
        assert_eq!(al.t_ms, vec![0.0, 500.0, 1000.0]);
        assert_eq!(al.x1, vec![0.0, 5.0, 10.0]);
        assert_eq!(al.y1, vec![0.0, 10.0, 20.0]);
        assert_eq!(al.zone1, vec!["cytosol", "cytosol", "nucleus"]);
    }

    #[test]
    fn on_grid_samples_unchanged() {
        let mut trace = Vec::new();
        for k in 0..20u64 {
            let x = (k * k) as f64 * 0.5;
            trace.push(s(k * 100, Participant::A, x, 1.0 + x, "cytosol"));
            trace.push(s(k * 100, Participant::B, -x, 2.0, "cytosol"));
        }
        let al = resample(&trace, 10.0).unwrap();
        assert_eq!(al.len(), 20);
        for k in 0..20 {
            assert_eq!(al.x1[k], (k * k) as f64 * 0.5);
        }
    }

    #[test]
    fn resample_guards() {
        let only_a = vec![s(0, Participant::A, 0.0, 0.0, "cytosol"), s(10, Participant::A, 0.0, 0.0, "cytosol")];
        assert!(matches!(resample(&only_a, 10.0), Err(TraceError::MissingRobot)));
        let disjoint = vec![
            s(0, Participant::A, 0.0, 0.0, "cytosol"),
            s(100, Participant::A, 0.0, 0.0, "cytosol"),
            s(200, Participant::B, 0.0, 0.0, "cytosol"),
            s(300, Participant::B, 0.0, 0.0, "cytosol"),
        ];
        assert!(matches!(resample(&disjoint, 10.0), Err(TraceError::NoOverlap)));
        assert!(matches!(resample(&disjoint, 0.0), Err(TraceError::BadRate)));
        assert!(matches!(resample(&[], 10.0), Err(TraceError::NoOverlap)));
    }

    #[test]
    fn duplicate_stamps_keep_latest() {
        let trace = vec![
            s(0, Participant::A, 0.0, 0.0, "cytosol"),
            s(0, Participant::A, 4.0, 0.0, "cytosol"),
            s(100, Participant::A, 8.0, 0.0, "cytosol"),
            s(0, Participant::B, 0.0, 0.0, "cytosol"),
            s(100, Participant::B, 0.0, 0.0, "cytosol"),
        ];
        let al = resample(&trace, 20.0).unwrap();
        assert_eq!(al.x1, vec![4.0, 6.0, 8.0]);
    }

    #[test]
    fn tandem_half() {
        let zones = |v: &[&str]| v.iter().map(|z| z.to_string()).collect::<Vec<_>>();
        let al = AlignedSeries {
            hz: 1.0,
            t_ms: vec![0.0, 1.0, 2.0, 3.0],
            x1: vec![0.0; 4],
            y1: vec![0.0; 4],
            x2: vec![0.0; 4],
            y2: vec![0.0; 4],
            zone1: zones(&["nucleus", "golgi", "cytosol", "cytosol"]),
            zone2: zones(&["nucleus", "cytosol", "cytosol", "golgi"]),
        };
        assert_eq!(tandem_fraction(&al), 0.5);
    }

    #[test]
    fn permutation_guards_and_identity() {
        assert!(matches!(
            perm_pvalue(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0], 0, 1),
            Err(TraceError::NoPermutations)
        ));
        let walk: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sin() + i as f64 * 0.1).collect();
        assert_eq!(perm_pvalue(&walk, &walk, 999, 5).unwrap(), 1.0 / 1000.0);
    }

    #[test]
    fn permutation_modes_agree() {
        let a: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..300).map(|i| (i as f64 * 0.11).cos()).collect();
        let seq = PermutationNull::new(&a, &b, 1000, 9, Execution::Sequential).unwrap();
        let par = PermutationNull::new(&a, &b, 1000, 9, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.n_perm(), 1000);
    }
}
