use crate::error::{check_dim, Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Minimum sample count per side accepted by [`tv_binned`].
pub const TV_MIN_SAMPLES: usize = 1000;

/// Sample counts on a regular joint grid, stored sparsely as sorted
/// `(cell, count)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedHistogram {
    edges: Vec<Vec<f64>>,
    cells: Vec<(u64, u64)>,
    total: u64,
}

impl BinnedHistogram {
    /// Bins the rows of `samples` on the grid spanned by `edges` (one strictly
    /// increasing edge vector per dimension). Values outside the grid are
    /// clamped into the outer bins.
    pub fn new(samples: &Matrix, edges: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(edges.len(), samples.cols())?;
        for e in &edges {
            if e.len() < 2 || e.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
            }
        }
        let mut ids: Vec<u64> = samples.rows_iter().map(|row| cell_index(row, &edges)).collect();
        ids.sort_unstable();
        let mut cells: Vec<(u64, u64)> = Vec::new();
        for id in ids {
            match cells.last_mut() {
                Some((c, n)) if *c == id => *n += 1,
                _ => cells.push((id, 1)),
            }
        }
        Ok(BinnedHistogram {
            edges,
            cells,
            total: samples.rows() as u64,
        })
    }

    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    /// Occupied cells in ascending order of their row-major index.
    pub fn cells(&self) -> &[(u64, u64)] {
        &self.cells
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

fn cell_index(row: &[f64], edges: &[Vec<f64>]) -> u64 {
    let mut id = 0u64;
    for (&x, e) in row.iter().zip(edges) {
        let bins = e.len() - 1;
        // partition_point counts edges ≤ x; bin k covers [e_k, e_{k+1}).
        let k = e.partition_point(|&edge| edge <= x).saturating_sub(1).min(bins - 1);
        id = id * bins as u64 + k as u64;
    }
    id
}

/// Per-dimension edges spanning the pooled min and max of both sample sets.
pub fn pooled_edges(a: &Matrix, b: &Matrix, bins_per_dim: usize) -> Vec<Vec<f64>> {
    (0..a.cols())
        .map(|c| {
            let (lo, hi) = a
                .column(c)
                .into_iter()
                .chain(b.column(c))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            // A constant coordinate gets a unit-width grid around its value.
            let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
            let w = (hi - lo) / bins_per_dim as f64;
            let mut e: Vec<f64> = (0..bins_per_dim).map(|k| lo + k as f64 * w).collect();
            e.push(hi);
            e
        })
        .collect()
}

/// Total variation between two histograms on the same grid.
pub fn tv_histograms(a: &BinnedHistogram, b: &BinnedHistogram) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::InvalidParameter("histograms use different grids".into()));
    }
    let (na, nb) = (a.total as f64, b.total as f64);
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.cells.len() || j < b.cells.len() {
        let ca = a.cells.get(i).map_or(u64::MAX, |c| c.0);
        let cb = b.cells.get(j).map_or(u64::MAX, |c| c.0);
        let (pa, pb) = if ca == cb {
            i += 1;
            j += 1;
            (a.cells[i - 1].1 as f64 / na, b.cells[j - 1].1 as f64 / nb)
        } else if ca < cb {
            i += 1;
            (a.cells[i - 1].1 as f64 / na, 0.0)
        } else {
            j += 1;
            (0.0, b.cells[j - 1].1 as f64 / nb)
        };
        acc += (pa - pb).abs();
    }
    Ok(0.5 * acc)
}

/// Binned total variation `½ Σ |p̂_a − p̂_b|` over a joint grid with
/// `bins_per_dim` bins per dimension and pooled min/max edges.
pub fn tv_binned(a: &Matrix, b: &Matrix, bins_per_dim: usize) -> Result<f64> {
    check_dim(a.cols(), b.cols())?;
    for n in [a.rows(), b.rows()] {
        if n < TV_MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                need: TV_MIN_SAMPLES,
                got: n,
            });
        }
    }
    if bins_per_dim == 0 {
        return Err(Error::InvalidParameter("bins_per_dim must be positive".into()));
    }
    let edges = pooled_edges(a, b, bins_per_dim);
    let ha = BinnedHistogram::new(a, edges.clone())?;
    let hb = BinnedHistogram::new(b, edges)?;
    tv_histograms(&ha, &hb)
}

/// Exact W₁ between two 1-D empirical distributions.
///
/// Equal sizes reduce to the mean absolute difference of order statistics;
/// unequal sizes integrate `|F_a − F_b|` exactly.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        acc += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(acc)
}

/// Sliced W₁: mean of [`wasserstein1_1d`] over `n_projections` directions
/// drawn uniformly from the unit sphere.
pub fn sliced_w1(a: &Matrix, b: &Matrix, n_projections: usize, rng: &mut SeededRng) -> Result<f64> {
    check_dim(a.cols(), b.cols())?;
    if a.cols() < 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            got: a.cols(),
        });
    }
    if n_projections == 0 {
        return Err(Error::InvalidParameter("need at least one projection".into()));
    }
    let d = a.cols();
    let mut total = 0.0;
    for _ in 0..n_projections {
        let mut u: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let pa = a.matvec(&u)?;
        let pb = b.matvec(&u)?;
        total += wasserstein1_1d(&pa, &pb)?;
    }
    Ok(total / n_projections as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::std_normal_cdf;

    fn normal_samples(n: usize, d: usize, shift: f64, rng: &mut SeededRng) -> Matrix {
        Matrix::new(n, d, (0..n * d).map(|_| rng.standard_normal() + shift).collect()).unwrap()
    }

    #[test]
    fn tv_trivial_cases() {
        let mut rng = SeededRng::new(0);
        let a = normal_samples(2000, 2, 0.0, &mut rng);
        assert_eq!(tv_binned(&a, &a, 10).unwrap(), 0.0);
        let b = a.map(|v| v + 1000.0);
        assert_eq!(tv_binned(&a, &b, 10).unwrap(), 1.0);
        assert!(matches!(
            tv_binned(&a, &Matrix::zeros(999, 2), 10),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(tv_binned(&a, &Matrix::zeros(1000, 3), 10), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn tv_symmetric_and_permutation_invariant() {
        let mut rng = SeededRng::new(1);
        let a = normal_samples(3000, 3, 0.0, &mut rng);
        let b = normal_samples(3000, 3, 0.4, &mut rng);
        let ab = tv_binned(&a, &b, 10).unwrap();
        assert_eq!(ab, tv_binned(&b, &a, 10).unwrap());
        let perm = |m: &Matrix| {
            let rows: Vec<Vec<f64>> = m.rows_iter().map(|r| vec![r[2], r[0], r[1]]).collect();
            Matrix::from_rows(&rows).unwrap()
        };
        assert!((ab - tv_binned(&perm(&a), &perm(&b), 10).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tv_matches_binned_quadrature() {
        let mut rng = SeededRng::new(2);
        let n = 1_000_000;
        let a = normal_samples(n, 1, 0.0, &mut rng);
        let b = normal_samples(n, 1, 1.0, &mut rng);
        let est = tv_binned(&a, &b, 10).unwrap();
        let edges = &pooled_edges(&a, &b, 10)[0];
        // Exact bin masses on the same edges, the outer bins taking the tails.
        let mass = |shift: f64, k: usize| {
            let lo = if k == 0 { f64::NEG_INFINITY } else { edges[k] };
            let hi = if k == edges.len() - 2 { f64::INFINITY } else { edges[k + 1] };
            std_normal_cdf(hi - shift) - std_normal_cdf(lo - shift)
        };
        let exact: f64 = 0.5 * (0..10).map(|k| (mass(0.0, k) - mass(1.0, k)).abs()).sum::<f64>();
        assert!((est - exact).abs() < 5e-3, "{est} vs {exact}");
    }

    #[test]
    fn w1_identities() {
        let a = [0.3, -1.2, 2.5, 0.0];
        assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v - 1.75).collect();
        assert!((wasserstein1_1d(&a, &shifted).unwrap() - 1.75).abs() < 1e-15);
        assert!(matches!(wasserstein1_1d(&[], &a), Err(Error::Empty)));
        // Unequal sizes: {0} vs {0, 1} moves half the mass by 1.
        assert!((wasserstein1_1d(&[0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn w1_unequal_sizes_match_replication() {
        let mut rng = SeededRng::new(3);
        let a: Vec<f64> = (0..30).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..20).map(|_| rng.standard_normal() + 0.5).collect();
        // Replicating each point to a common size 60 gives equal-size sets.
        let a3: Vec<f64> = a.iter().flat_map(|&v| [v, v]).collect();
        let b3: Vec<f64> = b.iter().flat_map(|&v| [v, v, v]).collect();
        let direct = wasserstein1_1d(&a, &b).unwrap();
        assert!((direct - wasserstein1_1d(&a3, &b3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn w1_triangle_inequality() {
        let mut rng = SeededRng::new(4);
        for _ in 0..50 {
            let sets: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..25).map(|_| rng.cauchy(0.0, 1.0)).collect())
                .collect();
            let d = |i: usize, j: usize| wasserstein1_1d(&sets[i], &sets[j]).unwrap();
            assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
        }
    }

    #[test]
    fn w1_mean_shift() {
        let mut rng = SeededRng::new(5);
        let a: Vec<f64> = (0..30_000).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..30_000).map(|_| rng.standard_normal() + 1.0).collect();
        assert!((wasserstein1_1d(&a, &b).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn sliced_translation() {
        let mut rng = SeededRng::new(6);
        let a = normal_samples(5000, 2, 0.0, &mut rng);
        assert_eq!(sliced_w1(&a, &a, 64, &mut rng).unwrap(), 0.0);
        let v = [3.0, 4.0];
        let b = Matrix::from_rows(&a.rows_iter().map(|r| vec![r[0] + v[0], r[1] + v[1]]).collect::<Vec<_>>()).unwrap();
        // In 2-D, E|cos θ| = 2/π for a uniform direction. 1024 projections keep
        // the Monte-Carlo spread of the direction average well inside 10%.
        let expected = 5.0 * 2.0 / std::f64::consts::PI;
        let est = sliced_w1(&a, &b, 1024, &mut rng).unwrap();
        assert!((est - expected).abs() < 0.1 * expected, "{est} vs {expected}");
        let wide = a.scale(2.0);
        let narrow = sliced_w1(&a, &a.scale(1.5), 64, &mut SeededRng::new(1)).unwrap();
        assert!(sliced_w1(&a, &wide, 64, &mut SeededRng::new(1)).unwrap() > narrow);
        let line = Matrix::zeros(10, 1);
        assert!(sliced_w1(&line, &line, 8, &mut rng).is_err());
    }
}
