use rand::seq::SliceRandom;

use super::SimError;
use crate::rng;

pub const PEACOCK_MIN_POINTS: usize = 5;
pub const PEACOCK_MIN_PERMUTATIONS: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeacockResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Pooled points on their distinct-value rank grid.
struct Pooled {
    ix: Vec<usize>,
    iy: Vec<usize>,
    nx: usize,
    ny: usize,
}

fn ranks(v: &[f64]) -> (Vec<usize>, usize) {
    let mut d = v.to_vec();
    d.sort_by(f64::total_cmp);
    d.dedup();
    let r = v
        .iter()
        .map(|x| d.binary_search_by(|y| y.total_cmp(x)).expect("value present"))
        .collect();
    (r, d.len())
}

impl Pooled {
    fn new(a: &[[f64; 2]], b: &[[f64; 2]]) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = a.iter().chain(b).map(|p| (p[0], p[1])).unzip();
        let (ix, nx) = ranks(&xs);
        let (iy, ny) = ranks(&ys);
        Self { ix, iy, nx, ny }
    }

    /// Largest ECDF gap over all corners and quadrants, as the integer
    /// `|ca * nb - cb * na|` (divide by `na * nb` for D), and the sum of the
    /// squared gaps, which ranks permutations that tie on the largest one.
    fn gap(&self, in_a: &[bool], cum: &mut Vec<i64>) -> (i64, i128) {
        let (nx, ny) = (self.nx, self.ny);
        let na = in_a.iter().filter(|v| **v).count() as i64;
        let nb = in_a.len() as i64 - na;
        // Each point contributes +nb if in A, -na if in B; the quadrant sum
        // is then ca * nb - cb * na directly.
        cum.clear();
        cum.resize(nx * ny, 0);
        for ((&i, &j), &a) in self.ix.iter().zip(&self.iy).zip(in_a) {
            cum[i * ny + j] += if a { nb } else { -na };
        }
        for i in 0..nx {
            for j in 0..ny {
                let mut v = cum[i * ny + j];
                if i > 0 {
                    v += cum[(i - 1) * ny + j];
                }
                if j > 0 {
                    v += cum[i * ny + j - 1];
                }
                if i > 0 && j > 0 {
                    v -= cum[(i - 1) * ny + j - 1];
                }
                cum[i * ny + j] = v;
            }
        }
        // Totals of the signed weights: whole plane is na*nb - nb*na = 0.
        let mut best = 0;
        let mut sumsq = 0i128;
        for i in 0..nx {
            let row_total = cum[i * ny + ny - 1];
            for j in 0..ny {
                let ll = cum[i * ny + j];
                let col_total = cum[(nx - 1) * ny + j];
                let lr = row_total - ll;
                let ul = col_total - ll;
                let ur = -(ll + lr + ul);
                best = best.max(ll.abs()).max(lr.abs()).max(ul.abs()).max(ur.abs());
                sumsq += [ll, lr, ul, ur]
                    .iter()
                    .map(|&v| (v as i128) * (v as i128))
                    .sum::<i128>();
            }
        }
        (best, sumsq)
    }
}

fn check(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<(), SimError> {
    for (name, s) in [("first", a), ("second", b)] {
        if s.len() < PEACOCK_MIN_POINTS {
            return Err(SimError::Peacock(format!(
                "{name} sample has {} points, at least {PEACOCK_MIN_POINTS} are needed",
                s.len()
            )));
        }
        if s.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SimError::Peacock(format!("{name} sample has a non-finite coordinate")));
        }
    }
    Ok(())
}

/// Peacock's two-sample statistic: the largest difference between the two
/// empirical distributions over the four quadrants at every pooled corner.
pub fn peacock_statistic(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64, SimError> {
    check(a, b)?;
    let pooled = Pooled::new(a, b);
    let labels: Vec<bool> = (0..a.len() + b.len()).map(|i| i < a.len()).collect();
    let (g, _) = pooled.gap(&labels, &mut Vec::new());
    Ok(g as f64 / (a.len() * b.len()) as f64)
}

/// Two-sample Peacock test with a seeded permutation p-value,
/// `(hits + 1) / (permutations + 1)`. A permutation is a hit when its largest
/// gap exceeds the observed one, or equals it with at least the observed sum
/// of squared gaps; without that second key the integer-valued statistic ties
/// so often that the p-values pile up near 1.
pub fn peacock_test_2d(
    a: &[[f64; 2]],
    b: &[[f64; 2]],
    permutations: usize,
    seed: u64,
) -> Result<PeacockResult, SimError> {
    check(a, b)?;
    if permutations < PEACOCK_MIN_PERMUTATIONS {
        return Err(SimError::Peacock(format!(
            "{permutations} permutations, at least {PEACOCK_MIN_PERMUTATIONS} are needed"
        )));
    }
    let pooled = Pooled::new(a, b);
    let mut labels: Vec<bool> = (0..a.len() + b.len()).map(|i| i < a.len()).collect();
    let mut cum = Vec::new();
    let observed = pooled.gap(&labels, &mut cum);
    let mut g = rng::seeded(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        labels.shuffle(&mut g);
        if pooled.gap(&labels, &mut cum) >= observed {
            hits += 1;
        }
    }
    Ok(PeacockResult {
        statistic: observed.0 as f64 / (a.len() * b.len()) as f64,
        p_value: (hits + 1) as f64 / (permutations + 1) as f64,
        permutations,
    })
}
