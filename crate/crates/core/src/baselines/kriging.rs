//! Ordinary kriging with an exponential variogram: the spatial-interpolation
//! comparison method.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Error, Result};
use crate::geom::Point2;

/// Exponential variogram `gamma(h) = nugget + (sill - nugget)(1 - e^{-3h/range})`
/// with `gamma(0) = 0`; `range` is the practical range (95% of the sill).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub nugget: f64,
    pub sill: f64,
    pub range_m: f64,
    /// Set when the field carried no usable spatial variance; predictions
    /// fall back to the observation mean.
    pub degenerate: bool,
}

impl VariogramModel {
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + (self.sill - self.nugget) * (1.0 - (-3.0 * h / self.range_m).exp())
        }
    }
}

/// Empirical semivariogram on `bins` distance bins up to half the maximum
/// pairwise distance: `(bin centre, gamma, pair count)`.
fn empirical_variogram(coords: &[Point2], values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let n = coords.len();
    let mut max_d = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_d = max_d.max(coords[i].dist(coords[j]));
        }
    }
    let cutoff = max_d * 0.5;
    if cutoff <= 0.0 {
        return Vec::new();
    }
    let width = cutoff / bins as f64;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for i in 0..n {
        for j in (i + 1)..n {
            let h = coords[i].dist(coords[j]);
            if h > cutoff {
                continue;
            }
            let b = ((h / width) as usize).min(bins - 1);
            let d = values[i] - values[j];
            sums[b] += 0.5 * d * d;
            counts[b] += 1;
        }
    }
    (0..bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| ((b as f64 + 0.5) * width, sums[b] / counts[b] as f64, counts[b]))
        .collect()
}

/// Fit an exponential model to the empirical semivariogram by weighted least
/// squares over a deterministic grid of candidate ranges.
pub fn kriging_fit(coords: &[Point2], values: &[f64]) -> Result<VariogramModel> {
    if coords.len() < 10 || coords.len() != values.len() {
        return Err(invalid_argument(
            "kriging needs at least 10 known points with matching values",
        ));
    }
    let points = empirical_variogram(coords, values, 15);
    let total: f64 = points.iter().map(|&(_, g, c)| g * c as f64).sum();
    if points.is_empty() || total < 1e-15 {
        return Ok(VariogramModel {
            nugget: 0.0,
            sill: 1e-12,
            range_m: 1.0,
            degenerate: true,
        });
    }
    let h_max = points.last().unwrap().0;
    let mut best: Option<(f64, VariogramModel)> = None;
    for step in 0..24 {
        let range = h_max * 0.02 * (1.25_f64).powi(step);
        // Weighted LS for gamma ~ c0 + c1 * f(h), weights = pair counts.
        let mut sw = 0.0;
        let mut sf = 0.0;
        let mut sff = 0.0;
        let mut sg = 0.0;
        let mut sfg = 0.0;
        for &(h, g, c) in &points {
            let w = c as f64;
            let f = 1.0 - (-3.0 * h / range).exp();
            sw += w;
            sf += w * f;
            sff += w * f * f;
            sg += w * g;
            sfg += w * f * g;
        }
        let det = sw * sff - sf * sf;
        let (mut c0, mut c1) = if det.abs() > 1e-12 {
            (
                (sg * sff - sf * sfg) / det,
                (sw * sfg - sf * sg) / det,
            )
        } else {
            (0.0, if sff > 0.0 { sfg / sff } else { 0.0 })
        };
        if c0 < 0.0 {
            c0 = 0.0;
            c1 = if sff > 0.0 { sfg / sff } else { 0.0 };
        }
        c1 = c1.max(1e-12);
        let sse: f64 = points
            .iter()
            .map(|&(h, g, c)| {
                let f = 1.0 - (-3.0 * h / range).exp();
                let e = g - c0 - c1 * f;
                c as f64 * e * e
            })
            .sum();
        let model = VariogramModel {
            nugget: c0,
            sill: c0 + c1,
            range_m: range,
            degenerate: false,
        };
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, model));
        }
    }
    Ok(best.expect("at least one candidate range").1)
}

/// Dense LU with partial pivoting.
struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

fn lu_factor(mut a: Vec<f64>, n: usize) -> Option<LuFactor> {
    let mut piv: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut max = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > max {
                max = v;
                pivot = row;
            }
        }
        if max < 1e-13 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            piv.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            a[row * n + col] = f;
            for k in (col + 1)..n {
                a[row * n + k] -= f * a[col * n + k];
            }
        }
    }
    Some(LuFactor { n, lu: a, piv })
}

impl LuFactor {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|i| b[self.piv[i]]).collect();
        for i in 1..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Prediction output of [`kriging_predict`]: values, kriging variances, and
/// the sum of the kriging weights at each query (1 up to solver precision).
#[derive(Debug, Clone)]
pub struct KrigingPrediction {
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
    pub weight_sums: Vec<f64>,
}

/// Ordinary kriging: solves the constrained system (Lagrange multiplier for
/// unbiasedness) for every query point. The system matrix is factorized once
/// and reused across queries. A singular matrix is retried once with 1e-10
/// diagonal jitter.
pub fn kriging_predict(
    model: &VariogramModel,
    coords: &[Point2],
    values: &[f64],
    queries: &[Point2],
) -> Result<KrigingPrediction> {
    let n = coords.len();
    if n == 0 || n != values.len() {
        return Err(invalid_argument("kriging needs matching coords/values"));
    }
    if model.degenerate {
        let mean = values.iter().sum::<f64>() / n as f64;
        return Ok(KrigingPrediction {
            values: vec![mean; queries.len()],
            variances: vec![0.0; queries.len()],
            weight_sums: vec![1.0; queries.len()],
        });
    }
    let dim = n + 1;
    let build = |jitter: f64| -> Vec<f64> {
        let mut a = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                a[i * dim + j] = if i == j {
                    jitter
                } else {
                    model.gamma(coords[i].dist(coords[j]))
                };
            }
            a[i * dim + n] = 1.0;
            a[n * dim + i] = 1.0;
        }
        a
    };
    let factor = match lu_factor(build(0.0), dim) {
        Some(f) => f,
        None => lu_factor(build(1e-10), dim).ok_or_else(|| {
            Error::InvalidArgument("kriging matrix is singular even after jitter".into())
        })?,
    };

    let results: Vec<(f64, f64, f64)> = queries
        .par_iter()
        .map(|q| {
            let mut rhs = vec![0.0; dim];
            for i in 0..n {
                rhs[i] = model.gamma(coords[i].dist(*q));
            }
            rhs[n] = 1.0;
            let sol = factor.solve(&rhs);
            let mut value = 0.0;
            let mut weight_sum = 0.0;
            let mut variance = sol[n]; // Lagrange multiplier
            for i in 0..n {
                value += sol[i] * values[i];
                weight_sum += sol[i];
                variance += sol[i] * rhs[i];
            }
            (value, variance.max(0.0), weight_sum)
        })
        .collect();

    Ok(KrigingPrediction {
        values: results.iter().map(|r| r.0).collect(),
        variances: results.iter().map(|r| r.1).collect(),
        weight_sums: results.iter().map(|r| r.2).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn grid_coords(n: usize, spacing: f64) -> Vec<Point2> {
        let mut coords = Vec::new();
        for j in 0..n {
            for i in 0..n {
                coords.push(Point2::new(i as f64 * spacing, j as f64 * spacing));
            }
        }
        coords
    }

    #[test]
    fn constant_field_is_degenerate_and_exact() {
        let coords = grid_coords(4, 1.0);
        let values = vec![5.5; coords.len()];
        let model = kriging_fit(&coords, &values).unwrap();
        assert!(model.degenerate);
        let queries = vec![Point2::new(0.4, 0.7), Point2::new(2.2, 1.1)];
        let pred = kriging_predict(&model, &coords, &values, &queries).unwrap();
        for v in &pred.values {
            assert!((v - 5.5).abs() < 1e-12);
        }
        for w in &pred.weight_sums {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_respects_constraints() {
        let mut rng = StdRng::seed_from_u64(4);
        let coords = grid_coords(8, 1.0);
        let values: Vec<f64> = coords
            .iter()
            .map(|c| (0.4 * c.x).sin() + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        let model = kriging_fit(&coords, &values).unwrap();
        assert!(model.nugget >= 0.0);
        assert!(model.sill >= model.nugget);
        assert!(model.range_m > 0.0);
    }

    #[test]
    fn exact_at_known_points_with_zero_nugget() {
        let coords = grid_coords(6, 2.0);
        let values: Vec<f64> = coords.iter().map(|c| 1.5 * c.x - 0.7 * c.y + 3.0).collect();
        let model = VariogramModel {
            nugget: 0.0,
            sill: 4.0,
            range_m: 8.0,
            degenerate: false,
        };
        let pred = kriging_predict(&model, &coords, &values, &coords).unwrap();
        for (p, v) in pred.values.iter().zip(&values) {
            assert!((p - v).abs() < 1e-8, "p={p} v={v}");
        }
        for w in &pred.weight_sums {
            assert!((w - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn midpoint_of_two_points_gets_equal_weights() {
        // Two known points and the query exactly between them: symmetry
        // forces weights 0.5/0.5, so the prediction is the average.
        let coords = vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)];
        let values = vec![1.0, 3.0];
        let model = VariogramModel {
            nugget: 0.0,
            sill: 2.0,
            range_m: 5.0,
            degenerate: false,
        };
        let pred =
            kriging_predict(&model, &coords, &values, &[Point2::new(1.0, 0.0)]).unwrap();
        assert!((pred.values[0] - 2.0).abs() < 1e-10);
        assert!((pred.weight_sums[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_field_interpolates_within_one_percent() {
        // f(x, y) = x on a grid, checkerboard half known: every unknown
        // interior point is surrounded by four known axis neighbours.
        let coords = grid_coords(12, 1.0);
        let known: Vec<Point2> = coords
            .iter()
            .copied()
            .filter(|c| (c.x + c.y) as usize % 2 == 0)
            .collect();
        let known_vals: Vec<f64> = known.iter().map(|c| c.x).collect();
        let model = kriging_fit(&known, &known_vals).unwrap();
        let interior: Vec<Point2> = coords
            .iter()
            .copied()
            .filter(|c| {
                (c.x + c.y) as usize % 2 == 1 && c.x > 0.5 && c.x < 10.5 && c.y > 0.5 && c.y < 10.5
            })
            .collect();
        let pred = kriging_predict(&model, &known, &known_vals, &interior).unwrap();
        let range = 11.0; // field range over the grid
        for (p, q) in pred.values.iter().zip(&interior) {
            assert!(
                (p - q.x).abs() < 0.01 * range,
                "at ({}, {}): predicted {p}, truth {}",
                q.x,
                q.y,
                q.x
            );
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let coords = grid_coords(3, 1.0);
        assert!(kriging_fit(&coords[..9], &vec![1.0; 9]).is_err());
    }
}
