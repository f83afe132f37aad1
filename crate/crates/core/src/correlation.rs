//! PLCC, SRCC and KRCC, plus the 4-parameter logistic mapping used before PLCC.

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min_len {
        return Err(Error::TooFewSamples {
            needed: min_len,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson linear correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 3)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::DegenerateVariance("first argument is constant"));
    }
    if sbb == 0.0 {
        return Err(Error::DegenerateVariance("second argument is constant"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the average of their ranks.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson of fractional ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 3)?;
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

fn order(x: f64, y: f64) -> i8 {
    if x < y {
        -1
    } else if x > y {
        1
    } else {
        0
    }
}

/// Kendall tau-b, by direct enumeration of all pairs.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let (mut concordant, mut discordant) = (0u64, 0u64);
    let (mut ties_a, mut ties_b) = (0u64, 0u64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let (da, db) = (order(a[i], a[j]), order(b[i], b[j]));
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (concordant + discordant) as f64;
    let denom = ((n0 + ties_a as f64) * (n0 + ties_b as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateVariance("all pairs tied"));
    }
    Ok(((concordant as f64 - discordant as f64) / denom).clamp(-1.0, 1.0))
}

/// Parameters of `q(s) = b1 * (1/2 - 1/(1 + exp(b2 * (s - b3)))) + b4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Logistic4 {
    pub beta: [f64; 4],
}

impl Logistic4 {
    pub fn eval(&self, s: f64) -> f64 {
        let [b1, b2, b3, b4] = self.beta;
        b1 * (0.5 - 1.0 / (1.0 + (b2 * (s - b3)).exp())) + b4
    }

    /// Gradient with respect to the four parameters.
    fn gradient(&self, s: f64) -> [f64; 4] {
        let [b1, b2, b3, _] = self.beta;
        let z = b2 * (s - b3);
        // sigma(z) = 1 / (1 + exp(-z)); q = b1 * (sigma(z) - 1/2) + b4
        let sig = 1.0 / (1.0 + (-z).exp());
        let dsig = sig * (1.0 - sig);
        [sig - 0.5, b1 * dsig * (s - b3), -b1 * dsig * b2, 1.0]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LogisticFit {
    pub params: Logistic4,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITERATIONS: usize = 500;
const REL_TOL: f64 = 1e-10;

/// Least-squares fit of [`Logistic4`] mapping `scores` onto `subjective`
/// with damped Gauss-Newton (Levenberg-Marquardt).
pub fn fit_logistic(scores: &[f64], subjective: &[f64]) -> Result<LogisticFit> {
    check_pair(scores, subjective, 4)?;
    let (ms, my) = (mean(scores), mean(subjective));
    let var_s = scores.iter().map(|s| (s - ms).powi(2)).sum::<f64>();
    if var_s == 0.0 {
        return Err(Error::DegenerateVariance("scores are constant"));
    }
    let cov: f64 = scores.iter().zip(subjective).map(|(s, y)| (s - ms) * (y - my)).sum();
    let (lo, hi) = subjective
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let range = (hi - lo).max(f64::EPSILON);
    let slope = cov / var_s;
    let sd_s = (var_s / scores.len() as f64).sqrt();
    // Start in the near-linear part of the sigmoid with the regression slope.
    let b1 = 2.0 * range * if slope < 0.0 { -1.0 } else { 1.0 };
    let b2 = (4.0 * slope / b1).abs().max(1e-3 / sd_s);
    let mut params = Logistic4 {
        beta: [b1, b2, ms, my],
    };

    let sse_of = |p: &Logistic4| -> f64 {
        scores
            .iter()
            .zip(subjective)
            .map(|(&s, &y)| (p.eval(s) - y).powi(2))
            .sum()
    };
    let mut sse = sse_of(&params);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for (&s, &y) in scores.iter().zip(subjective) {
            let g = params.gradient(s);
            let r = params.eval(s) - y;
            for i in 0..4 {
                jtr[i] += g[i] * r;
                for j in 0..4 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            let rhs = jtr.map(|v| -v);
            let Some(step) = solve4(a, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = params;
            for (b, d) in trial.beta.iter_mut().zip(step) {
                *b += d;
            }
            let trial_sse = sse_of(&trial);
            if trial_sse.is_finite() && trial_sse < sse {
                let improvement = (sse - trial_sse) / sse.max(f64::MIN_POSITIVE);
                params = trial;
                sse = trial_sse;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if improvement < REL_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping: a stationary point
            converged = true;
        }
        if converged || sse == 0.0 {
            converged = true;
            break;
        }
    }

    Ok(LogisticFit {
        params,
        sse,
        iterations,
        converged: converged && params.beta.iter().all(|b| b.is_finite()),
    })
}

/// Gaussian elimination with partial pivoting on a 4x4 system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (v, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Outcome of [`fit_logistic_then_pearson`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FittedPlcc {
    pub plcc: f64,
    /// False when the fit did not converge and `plcc` is the raw Pearson value.
    pub fit_converged: bool,
}

/// PLCC after the logistic mapping; falls back to raw Pearson if the fit fails.
pub fn fit_logistic_then_pearson(scores: &[f64], subjective: &[f64]) -> Result<FittedPlcc> {
    let raw = pearson(scores, subjective)?;
    let fit = match fit_logistic(scores, subjective) {
        Ok(fit) if fit.converged => fit,
        _ => {
            return Ok(FittedPlcc {
                plcc: raw,
                fit_converged: false,
            })
        }
    };
    let mapped: Vec<f64> = scores.iter().map(|&s| fit.params.eval(s)).collect();
    match pearson(&mapped, subjective) {
        Ok(plcc) => Ok(FittedPlcc {
            plcc,
            fit_converged: true,
        }),
        // a fit that flattens to a constant carries no information
        Err(_) => Ok(FittedPlcc {
            plcc: raw,
            fit_converged: false,
        }),
    }
}
