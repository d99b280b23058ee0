use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RbError;
use crate::rng;

/// Decay fit `p(l) = A·α^l + B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbFit {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub epl: f64,
    /// RMS of the residuals.
    pub residual: f64,
    /// Variances of (A, α, B); `None` with no spare degrees of freedom or a
    /// singular Jacobian.
    pub covariance_diag: Option<[f64; 3]>,
    /// α sits on its upper bound or is unidentifiable because A vanished.
    pub alpha_at_bound: bool,
}

const GRID: usize = 2000;

/// Optimal `(A, B) ∈ [0,1]²` for fixed decay factors `x`, with its RSS.
fn linear_part(x: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let rss = |a: f64, b: f64| x.iter().zip(p).map(|(xi, pi)| (a * xi + b - pi).powi(2)).sum::<f64>();
    let n = x.len() as f64;
    let (sx, sp) = (x.iter().sum::<f64>(), p.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxp: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
    let mut cands = Vec::with_capacity(9);
    let det = n * sxx - sx * sx;
    if det.abs() > 1e-12 * n * sxx.max(1.0) {
        let a = (n * sxp - sx * sp) / det;
        let b = (sp - a * sx) / n;
        if (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) {
            return (a, b, rss(a, b));
        }
    }
    for a in [0.0, 1.0] {
        cands.push((a, ((sp - a * sx) / n).clamp(0.0, 1.0)));
    }
    if sxx > 0.0 {
        for b in [0.0, 1.0] {
            cands.push((((sxp - b * sx) / sxx).clamp(0.0, 1.0), b));
        }
    }
    cands
        .into_iter()
        .map(|(a, b)| (a, b, rss(a, b)))
        .min_by(|u, v| u.2.total_cmp(&v.2))
        .expect("at least two candidates")
}

fn profile(alpha: f64, ls: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let x: Vec<f64> = ls.iter().map(|&l| alpha.powf(l)).collect();
    linear_part(&x, p)
}

/// Bounded least squares with A, B ∈ [0, 1] and α ∈ (0, 1]. α is found by a
/// grid scan refined with golden-section search; A and B are solved exactly
/// for each trial α.
pub fn fit_rb_decay(points: &[(f64, f64)]) -> Result<RbFit, RbError> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(RbError::TooFewPoints(distinct.len()));
    }
    if points.iter().any(|&(l, p)| !l.is_finite() || !p.is_finite() || l < 0.0) {
        return Err(RbError::FitDiverged("non-finite input".into()));
    }
    let ls: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ps: Vec<f64> = points.iter().map(|p| p.1).collect();

    // scan from α = 1 down so flat profiles keep the upper bound
    let mut best = (1.0, profile(1.0, &ls, &ps).2);
    for i in (1..GRID).rev() {
        let alpha = i as f64 / GRID as f64;
        let r = profile(alpha, &ls, &ps).2;
        if r < best.1 * (1.0 - 1e-12) {
            best = (alpha, r);
        }
    }
    let step = 1.0 / GRID as f64;
    let (mut lo, mut hi) = ((best.0 - step).max(1e-9), (best.0 + step).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |a: f64| profile(a, &ls, &ps).2;
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let alpha = if f(mid) < best.1 * (1.0 - 1e-12) { mid } else { best.0 };
    let (a, b, rss) = profile(alpha, &ls, &ps);
    if ![a, b, rss, alpha].iter().all(|v| v.is_finite()) {
        return Err(RbError::FitDiverged(format!("alpha {alpha}, A {a}, B {b}")));
    }
    let n = points.len();
    Ok(RbFit {
        a,
        alpha,
        b,
        epl: (1.0 - alpha) / 2.0,
        residual: (rss / n as f64).sqrt(),
        covariance_diag: covariance(&ls, a, alpha, rss),
        alpha_at_bound: alpha >= 1.0 - 1e-6 || a < 1e-9,
    })
}

fn covariance(ls: &[f64], a: f64, alpha: f64, rss: f64) -> Option<[f64; 3]> {
    let n = ls.len();
    if n <= 3 {
        return None;
    }
    let mut jtj = [[0.0; 3]; 3];
    for &l in ls {
        let row = [alpha.powf(l), if l == 0.0 { 0.0 } else { a * l * alpha.powf(l - 1.0) }, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert3(&jtj)?;
    let s2 = rss / (n - 3) as f64;
    Some([inv[0][0] * s2, inv[1][1] * s2, inv[2][2] * s2])
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let scale = m.iter().flatten().fold(0f64, |s, v| s.max(v.abs()));
    if det.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    Some(inv)
}

/// Fit of per-length means over a set of `(l, p̂)` circuit survivals.
pub fn fit_circuits(circuits: &[(usize, f64)]) -> Result<RbFit, RbError> {
    let mut by_l: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(l, p) in circuits {
        by_l.entry(l).or_default().push(p);
    }
    let points: Vec<(f64, f64)> =
        by_l.iter().map(|(&l, v)| (l as f64, v.iter().sum::<f64>() / v.len() as f64)).collect();
    fit_rb_decay(&points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEpl {
    pub mean: f64,
    pub sigma: f64,
    /// Resamples whose fit succeeded.
    pub n_fits: usize,
}

/// Resamples `resample_size` circuits per length with replacement, refits and
/// reports the mean and standard deviation of the EPL.
pub fn bootstrap_epl(
    circuits: &[(usize, f64)],
    n_resamples: usize,
    resample_size: usize,
    seed: u64,
) -> Result<BootstrapEpl, RbError> {
    let mut by_l: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(l, p) in circuits {
        by_l.entry(l).or_default().push(p);
    }
    let mut epls = Vec::with_capacity(n_resamples);
    for b in 0..n_resamples {
        let mut r = rng::stream(seed, "bootstrap", &[b as u64]);
        let mut sample = Vec::with_capacity(by_l.len() * resample_size);
        for (&l, ps) in &by_l {
            for _ in 0..resample_size.max(1) {
                sample.push((l, ps[r.gen_range(0..ps.len())]));
            }
        }
        if let Ok(fit) = fit_circuits(&sample) {
            epls.push(fit.epl);
        }
    }
    if epls.is_empty() {
        return Err(RbError::FitDiverged("no bootstrap resample could be fit".into()));
    }
    let n = epls.len() as f64;
    let shift = epls[0];
    let d: Vec<f64> = epls.iter().map(|e| e - shift).collect();
    let dm = d.iter().sum::<f64>() / n;
    let var = if epls.len() > 1 { d.iter().map(|x| (x - dm).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(BootstrapEpl { mean: shift + dm, sigma: var.sqrt(), n_fits: epls.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(a: f64, alpha: f64, b: f64, ls: &[usize]) -> Vec<(f64, f64)> {
        ls.iter().map(|&l| (l as f64, a * alpha.powi(l as i32) + b)).collect()
    }

    #[test]
    fn exact_points_recovered() {
        let fit = fit_rb_decay(&model(0.9, 0.88, 0.1, &[0, 1, 2, 3, 4, 5, 10, 15, 20, 35])).unwrap();
        assert!((fit.alpha - 0.88).abs() < 1e-6, "{fit:?}");
        assert!((fit.epl - 0.06).abs() < 1e-6);
        assert!((fit.a - 0.9).abs() < 1e-6 && (fit.b - 0.1).abs() < 1e-6);
        assert!(!fit.alpha_at_bound);
    }

    #[test]
    fn constant_table_flags_bound() {
        let pts: Vec<(f64, f64)> = [2.0, 4.0, 6.0, 8.0].iter().map(|&l| (l, 0.7)).collect();
        let fit = fit_rb_decay(&pts).unwrap();
        assert!(fit.alpha_at_bound);
        assert!(fit.epl.abs() < 1e-6);
    }

    #[test]
    fn too_few_lengths() {
        assert_eq!(fit_rb_decay(&[(1.0, 0.9), (2.0, 0.8), (2.0, 0.8)]), Err(RbError::TooFewPoints(2)));
    }

    #[test]
    fn bounds_respected_on_out_of_model_data() {
        let pts = vec![(0.0, 1.0), (1.0, 1.0), (2.0, 0.2), (3.0, 1.0)];
        let fit = fit_rb_decay(&pts).unwrap();
        assert!((0.0..=1.0).contains(&fit.a) && (0.0..=1.0).contains(&fit.b));
        assert!(fit.alpha > 0.0 && fit.alpha <= 1.0);
    }

    #[test]
    fn bootstrap_zero_variance_and_determinism() {
        let circuits: Vec<(usize, f64)> =
            [2, 4, 6, 8].iter().flat_map(|&l| (0..5).map(move |_| (l, 0.5 * 0.9f64.powi(l as i32) + 0.5))).collect();
        let b = bootstrap_epl(&circuits, 50, 3, 1).unwrap();
        assert_eq!(b.sigma, 0.0);
        assert!((b.mean - 0.05).abs() < 1e-6);

        let noisy: Vec<(usize, f64)> = circuits.iter().enumerate().map(|(i, &(l, p))| (l, p + 0.01 * ((i % 3) as f64 - 1.0))).collect();
        assert_eq!(bootstrap_epl(&noisy, 200, 3, 9).unwrap(), bootstrap_epl(&noisy, 200, 3, 9).unwrap());
    }

    proptest! {
        #[test]
        fn own_model_recovered(a in 0.3f64..0.9, alpha in 0.7f64..0.995, b in 0.05f64..0.1) {
            let fit = fit_rb_decay(&model(a, alpha, b, &[0, 1, 2, 3, 4, 5, 10, 15, 20, 35])).unwrap();
            prop_assert!((fit.alpha - alpha).abs() < 1e-6);
            prop_assert!((fit.a - a).abs() < 1e-6);
            prop_assert!((fit.b - b).abs() < 1e-6);
            prop_assert!(fit.residual < 1e-7);
        }
    }
}
