#![allow(dead_code)]

use randquant::source::SourceModel;

pub fn unit_gaussian() -> SourceModel {
    SourceModel::truncated_gaussian(1.0, 3.0, 2001).unwrap()
}

pub fn uniform_half(n: usize) -> SourceModel {
    let pdf = randquant::grid::ScalarGrid::from_fn(-0.5, 0.5, n, |_| 1.0).unwrap();
    SourceModel::from_density(pdf).unwrap()
}

/// Prefix sums of `∫ x^k f` (k = 0, 1, 2) over the source grid, each segment
/// integrated by three-point Gauss-Legendre (exact for the piecewise-linear
/// density times a quadratic).
pub struct Prefix {
    pub xs: Vec<f64>,
    pub m: [Vec<f64>; 3],
}

impl Prefix {
    pub fn new(source: &SourceModel) -> Self {
        let pdf = source.pdf();
        let n = pdf.len();
        let xs: Vec<f64> = pdf.abscissae().collect();
        let f = pdf.values();
        let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut m = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n - 1 {
            let (a, b) = (xs[i], xs[i + 1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut seg = [0.0; 3];
            for (t, wt) in nodes.iter().zip(weights) {
                let x = mid + half * t;
                let u = (x - a) / (b - a);
                let fx = f[i] * (1.0 - u) + f[i + 1] * u;
                seg[0] += wt * half * fx;
                seg[1] += wt * half * fx * x;
                seg[2] += wt * half * fx * x * x;
            }
            for k in 0..3 {
                m[k][i + 1] = m[k][i] + seg[k];
            }
        }
        Self { xs, m }
    }

    /// `(p, ∫x f, ∫x² f)` between grid nodes `i < j`.
    pub fn cell(&self, i: usize, j: usize) -> (f64, f64, f64) {
        (self.m[0][j] - self.m[0][i], self.m[1][j] - self.m[1][i], self.m[2][j] - self.m[2][i])
    }

    /// Squared error of a cell reconstructed at its centroid.
    pub fn cell_error(&self, i: usize, j: usize) -> f64 {
        let (p, m1, m2) = self.cell(i, j);
        if p <= 0.0 {
            return m2.max(0.0);
        }
        (m2 - m1 * m1 / p).max(0.0)
    }
}

/// Least distortion of an `m`-cell partition with boundaries on every
/// `stride`-th grid node, by dynamic programming.
pub fn dp_fixed(source: &SourceModel, m: usize, stride: usize) -> f64 {
    let pre = Prefix::new(source);
    let idx: Vec<usize> = (0..pre.xs.len()).step_by(stride).chain(std::iter::once(pre.xs.len() - 1)).collect();
    let mut idx = idx;
    idx.dedup();
    let n = idx.len();
    let mut best = vec![f64::INFINITY; n];
    for j in 1..n {
        best[j] = pre.cell_error(idx[0], idx[j]);
    }
    for _ in 1..m {
        let mut next = vec![f64::INFINITY; n];
        for j in 1..n {
            for i in 1..j {
                let c = best[i] + pre.cell_error(idx[i], idx[j]);
                if c < next[j] {
                    next[j] = c;
                }
            }
        }
        best = next;
    }
    best[n - 1]
}

/// Least `D + λH` over partitions with boundaries on every `stride`-th grid
/// node and any number of cells; returns `(D, H)` of the minimizer.
pub fn dp_entropy(source: &SourceModel, lambda: f64, stride: usize) -> (f64, f64) {
    let pre = Prefix::new(source);
    let mut idx: Vec<usize> = (0..pre.xs.len()).step_by(stride).chain(std::iter::once(pre.xs.len() - 1)).collect();
    idx.dedup();
    let n = idx.len();
    let mut best = vec![(f64::INFINITY, 0.0, 0.0); n];
    best[0] = (0.0, 0.0, 0.0);
    for j in 1..n {
        for i in 0..j {
            let (p, _, _) = pre.cell(idx[i], idx[j]);
            let d = pre.cell_error(idx[i], idx[j]);
            let h = if p > 0.0 { -p * p.log2() } else { 0.0 };
            let c = best[i].0 + d + lambda * h;
            if c < best[j].0 {
                best[j] = (c, best[i].1 + d, best[i].2 + h);
            }
        }
    }
    (best[n - 1].1, best[n - 1].2)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
