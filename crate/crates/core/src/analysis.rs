//! Fits and laws extracted from success curves: exponential damping of the
//! maxima, the closed-form decay-rate model, first-maximum drift, threshold
//! solving and the log-linear allowed-error law.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{estimate_success_curve, required_trajectories, McRun, SuccessCurve};
use crate::noise::NoiseParams;

/// Closed-form decay rate `λ = (c1 ε + c2 γ) n − c3 ε − c4 γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaModel {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl LambdaModel {
    pub const PUBLISHED: LambdaModel = LambdaModel {
        c1: 18.63,
        c2: 8.124,
        c3: 5.871,
        c4: 12.336,
    };

    pub fn eval(&self, epsilon: f64, gamma: f64, n: usize) -> f64 {
        let n = n as f64;
        (self.c1 * epsilon + self.c2 * gamma) * n - self.c3 * epsilon - self.c4 * gamma
    }
}

impl Default for LambdaModel {
    fn default() -> Self {
        LambdaModel::PUBLISHED
    }
}

pub fn lambda_model(epsilon: f64, gamma: f64, n: usize) -> f64 {
    LambdaModel::PUBLISHED.eval(epsilon, gamma, n)
}

/// Local maxima `(t, P)` of a curve. `P(t) ≥ P(t±1)` qualifies; on a plateau
/// only its first point is kept. `t = 0` and the last point never qualify.
pub fn find_maxima(curve: &SuccessCurve) -> Result<Vec<(usize, f64)>> {
    let p = &curve.p_success;
    if p.len() < 3 {
        return domain(format!("curve of length {} is too short for maxima", p.len()));
    }
    let last = p.len() - 1;
    let mut out = Vec::new();
    let mut i = 1;
    while i < last {
        if p[i] > p[i - 1] {
            let mut j = i;
            while j < last && p[j + 1] == p[i] {
                j += 1;
            }
            if j == last || p[j + 1] < p[i] {
                out.push((curve.t_values[i], p[i]));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// Smallest-`t` local maximum.
pub fn first_maximum(curve: &SuccessCurve) -> Result<(usize, f64)> {
    find_maxima(curve)?.first().copied().ok_or(Error::NoMaximum)
}

/// Exponential envelope `P = A e^{−λt} + 1/2^n` fitted to the maxima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingFit {
    pub n: usize,
    pub a: f64,
    pub lambda: f64,
    pub baseline: f64,
    /// RMS of the residuals of `ln(P − baseline)`.
    pub residual_rms: f64,
    pub points_used: Vec<(usize, f64)>,
    pub weighted: bool,
}

impl DampingFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.a * (-self.lambda * t).exp() + self.baseline
    }

    /// Decoherence time `1/λ`.
    pub fn tau(&self) -> f64 {
        1.0 / self.lambda
    }
}

/// Least squares of `ln(P − 1/2^n)` against `t` with the baseline held
/// fixed. Points at or below the baseline are dropped. `std_err`, if given,
/// must match `maxima` and weights each point by its propagated variance; any
/// zero error falls back to an unweighted fit.
pub fn fit_damping(maxima: &[(usize, f64)], std_err: Option<&[f64]>, n: usize) -> Result<DampingFit> {
    if let Some(se) = std_err {
        if se.len() != maxima.len() {
            return domain("std_err length differs from maxima");
        }
    }
    let baseline = 0.5f64.powi(n as i32);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut used = Vec::new();
    let mut weighted = std_err.is_some();
    for (i, &(t, p)) in maxima.iter().enumerate() {
        if p <= baseline {
            continue;
        }
        let excess = p - baseline;
        xs.push(t as f64);
        ys.push(excess.ln());
        let w = match std_err {
            Some(se) if se[i] > 0.0 => (excess / se[i]).powi(2),
            _ => {
                weighted = false;
                1.0
            }
        };
        ws.push(w);
        used.push((t, p));
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!(
            "{} maxima above baseline, need at least 3",
            xs.len()
        )));
    }
    if !weighted {
        ws.iter_mut().for_each(|w| *w = 1.0);
    }
    let line = weighted_line(&xs, &ys, &ws)?;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - line.intercept - line.slope * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(DampingFit {
        n,
        a: line.intercept.exp(),
        lambda: -line.slope,
        baseline,
        residual_rms: rms,
        points_used: used,
        weighted,
    })
}

/// Maxima of a curve fitted with its own standard errors.
pub fn fit_curve_damping(curve: &SuccessCurve) -> Result<DampingFit> {
    let maxima = find_maxima(curve)?;
    let se: Vec<f64> = maxima
        .iter()
        .map(|&(t, _)| curve.at(t).map(|(_, s)| s).unwrap_or(0.0))
        .collect();
    fit_damping(&maxima, Some(&se), curve.n)
}

#[derive(Clone, Copy, Debug)]
struct Line {
    slope: f64,
    intercept: f64,
    /// Covariance of (slope, intercept) scaled by the residual variance.
    cov: [[f64; 2]; 2],
    r_squared: f64,
}

fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<Line> {
    let m = xs.len();
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::Fit("abscissae are degenerate".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let syy: f64 = ys.iter().zip(ws).map(|(y, w)| w * (y - my).powi(2)).sum();
    let s2 = if m > 2 { ssr / (m - 2) as f64 } else { 0.0 };
    let var_slope = s2 / sxx;
    let var_int = s2 * (1.0 / sw + mx * mx / sxx);
    let cov_si = -mx * s2 / sxx;
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(Line {
        slope,
        intercept,
        cov: [[var_slope, cov_si], [cov_si, var_int]],
        r_squared,
    })
}

/// `points` geometrically spaced values from `lo` to `hi` inclusive, with
/// `per_decade` steps per factor of ten.
pub fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || per_decade == 0 {
        return domain("grid needs 0 < lo < hi and at least one point per decade");
    }
    let step = 10f64.powf(1.0 / per_decade as f64);
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let x = lo * step.powi(k);
        if x > hi * (1.0 + 1e-12) {
            break;
        }
        out.push(x);
        k += 1;
    }
    Ok(out)
}

/// Noise parameters with `γ = ε / C`; `C = ∞` means `γ = 0` exactly.
pub fn params_for_ratio(epsilon: f64, ratio: f64) -> Result<NoiseParams> {
    if ratio.is_infinite() && ratio > 0.0 {
        NoiseParams::new(epsilon, 0.0)
    } else {
        NoiseParams::from_ratio(epsilon, ratio)
    }
}

/// First local maximum of the noiseless curve.
pub fn noiseless_first_maximum(n: usize) -> Result<usize> {
    let k0 = (std::f64::consts::PI * (2f64.powi(n as i32)).sqrt() / 4.0).floor() as usize;
    let curve = estimate_success_curve(n, &NoiseParams::noiseless(), k0 + 2, &McRun::new(1, 0))?;
    Ok(first_maximum(&curve)?.0)
}

/// First maximum of one noisy curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstMaxPoint {
    pub epsilon: f64,
    pub gamma: f64,
    /// `None` when the curve has no local maximum.
    pub t1: Option<usize>,
    pub p_success: f64,
    pub std_err: f64,
    pub n_trajectories: u64,
}

/// Locates the first maximum for each `ε` of a grid at fixed ratio, all with
/// the same seed.
pub fn first_max_scan(
    n: usize,
    ratio: f64,
    epsilons: &[f64],
    t_max: usize,
    run: &McRun,
) -> Result<Vec<FirstMaxPoint>> {
    epsilons
        .iter()
        .map(|&eps| {
            let params = params_for_ratio(eps, ratio)?;
            let curve = estimate_success_curve(n, &params, t_max, run)?;
            Ok(match first_maximum(&curve) {
                Ok((t, p)) => FirstMaxPoint {
                    epsilon: eps,
                    gamma: params.gamma,
                    t1: Some(t),
                    p_success: p,
                    std_err: curve.at(t).map(|(_, s)| s).unwrap_or(0.0),
                    n_trajectories: curve.n_trajectories,
                },
                Err(Error::NoMaximum) => FirstMaxPoint {
                    epsilon: eps,
                    gamma: params.gamma,
                    t1: None,
                    p_success: f64::NAN,
                    std_err: f64::NAN,
                    n_trajectories: curve.n_trajectories,
                },
                Err(e) => return Err(e),
            })
        })
        .collect()
}

/// For every observed value of `t1`, the largest `ε` of the scan at which the
/// first maximum still sits at that value. Sorted by decreasing `t1`.
pub fn discontinuity_points(scan: &[FirstMaxPoint]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for p in scan {
        if let Some(t) = p.t1 {
            match out.iter_mut().find(|(v, _)| *v == t) {
                Some(e) => e.1 = e.1.max(p.epsilon),
                None => out.push((t, p.epsilon)),
            }
        }
    }
    out.sort_by(|a, b| b.0.cmp(&a.0));
    out
}

/// Logarithmic drift `t1 ≈ A ln ε + B` through the discontinuity points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

pub fn fit_log_drift(points: &[(usize, f64)]) -> Result<DriftFit> {
    if points.len() < 2 {
        return Err(Error::Fit("need at least 2 discontinuity points".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let line = weighted_line(&xs, &ys, &vec![1.0; xs.len()])?;
    Ok(DriftFit {
        a: line.slope,
        b: line.intercept,
        r_squared: line.r_squared,
    })
}

/// Bisection settings for [`solve_threshold`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// Stop once `hi / lo − 1` drops below this.
    pub rel_tol: f64,
    /// Lower bound on trajectories per evaluation.
    pub min_trajectories: u64,
    /// Upper bound on trajectories per evaluation, including escalation.
    pub max_trajectories: u64,
    pub max_iterations: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            eps_lo: 1e-6,
            eps_hi: 0.2,
            rel_tol: 0.02,
            min_trajectories: 2_000,
            max_trajectories: 100_000,
            max_iterations: 80,
        }
    }
}

/// One objective evaluation made by the solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEval {
    pub epsilon: f64,
    pub p_success: f64,
    pub std_err: f64,
    pub t1: Option<usize>,
    pub n_trajectories: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub epsilon_th: f64,
    pub lo: f64,
    pub hi: f64,
    pub evaluations: Vec<ThresholdEval>,
}

/// Log-space bisection for the `ε` at which `objective(ε, N)` crosses
/// `p_th`. `objective` is expected to decrease in `ε`. When an evaluation is
/// within two standard errors of `p_th`, it is repeated with twice the
/// trajectories up to the configured cap. `start_trajectories(ε)` gives the
/// first `N` tried at each `ε`.
pub fn bisect_threshold<F, S>(
    p_th: f64,
    cfg: &ThresholdConfig,
    start_trajectories: S,
    mut objective: F,
) -> Result<ThresholdResult>
where
    F: FnMut(f64, u64) -> Result<ThresholdEval>,
    S: Fn(f64) -> u64,
{
    if !(cfg.eps_lo > 0.0 && cfg.eps_hi > cfg.eps_lo && cfg.rel_tol > 0.0) {
        return domain("threshold bracket must satisfy 0 < lo < hi");
    }
    let mut evals = Vec::new();
    let mut eval = |eps: f64, evals: &mut Vec<ThresholdEval>| -> Result<ThresholdEval> {
        let mut n = start_trajectories(eps)
            .clamp(cfg.min_trajectories, cfg.max_trajectories.max(cfg.min_trajectories));
        loop {
            let e = objective(eps, n)?;
            evals.push(e);
            if (e.p_success - p_th).abs() >= 2.0 * e.std_err || n >= cfg.max_trajectories {
                return Ok(e);
            }
            n = (2 * n).min(cfg.max_trajectories);
        }
    };
    let out_of_range = || Error::ThresholdOutOfRange {
        p_th,
        lo: cfg.eps_lo,
        hi: cfg.eps_hi,
    };
    let mut lo = cfg.eps_lo;
    let mut hi = cfg.eps_hi;
    if eval(lo, &mut evals)?.p_success <= p_th {
        return Err(out_of_range());
    }
    if eval(hi, &mut evals)?.p_success >= p_th {
        return Err(out_of_range());
    }
    let mut it = 0;
    while hi / lo - 1.0 > cfg.rel_tol && it < cfg.max_iterations {
        let mid = (lo * hi).sqrt();
        if eval(mid, &mut evals)?.p_success > p_th {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    Ok(ThresholdResult {
        epsilon_th: (lo * hi).sqrt(),
        lo,
        hi,
        evaluations: evals,
    })
}

/// Threshold `ε_th(C, n)`: the `ε` at which the success probability at the
/// first maximum of the curve equals `p_th`, with `γ = ε / C`.
///
/// The first maximum is re-located at every `ε` on a curve running two
/// iterations past the noiseless one; a curve without a maximum counts as
/// below threshold. Every evaluation uses the same seed.
pub fn solve_threshold(
    n: usize,
    ratio: f64,
    p_th: f64,
    cfg: &ThresholdConfig,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<ThresholdResult> {
    let baseline = 0.5f64.powi(n as i32);
    if !(p_th > baseline && p_th < 1.0) {
        return domain(format!("p_th must lie in ({baseline}, 1)"));
    }
    if !(ratio > 0.0) {
        return domain("ratio must be positive");
    }
    let t_max = noiseless_first_maximum(n)? + 2;
    let start = |eps: f64| {
        params_for_ratio(eps, ratio)
            .map(|p| required_trajectories(&p, 0))
            .unwrap_or(cfg.max_trajectories)
    };
    bisect_threshold(p_th, cfg, start, |eps, n_traj| {
        let params = params_for_ratio(eps, ratio)?;
        let run = McRun::new(n_traj, master_seed).workers(workers);
        let curve = estimate_success_curve(n, &params, t_max, &run)?;
        Ok(match first_maximum(&curve) {
            Ok((t, p)) => ThresholdEval {
                epsilon: eps,
                p_success: p,
                std_err: curve.at(t).map(|(_, s)| s).unwrap_or(0.0),
                t1: Some(t),
                n_trajectories: n_traj,
            },
            Err(Error::NoMaximum) => ThresholdEval {
                epsilon: eps,
                p_success: baseline,
                std_err: 0.0,
                t1: None,
                n_trajectories: n_traj,
            },
            Err(e) => return Err(e),
        })
    })
}

/// `ln ε_th = −a ln N − b` over `ln N = n ln 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub ratio: f64,
    pub points: Vec<(usize, f64)>,
    pub a: f64,
    pub b: f64,
    pub covariance: [[f64; 2]; 2],
    pub r_squared: f64,
}

impl ThresholdFit {
    pub fn predict(&self, n: usize) -> f64 {
        (-self.a * n as f64 * std::f64::consts::LN_2 - self.b).exp()
    }
}

pub fn fit_threshold_law(ratio: f64, points: &[(usize, f64)]) -> Result<ThresholdFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("{} thresholds, need at least 3", points.len())));
    }
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return domain("thresholds must be positive");
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64 * std::f64::consts::LN_2).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let line = weighted_line(&xs, &ys, &vec![1.0; xs.len()])?;
    Ok(ThresholdFit {
        ratio,
        points: points.to_vec(),
        a: -line.slope,
        b: -line.intercept,
        covariance: line.cov,
        r_squared: line.r_squared,
    })
}

/// Largest `n` with `e^{−a n ln 2 − b} ≥ ε`, clamped at 0.
pub fn max_qubits(epsilon: f64, a: f64, b: f64) -> Result<u32> {
    if !(epsilon > 0.0) {
        return domain("epsilon must be positive");
    }
    let x = (-b - epsilon.ln()) / (a * std::f64::consts::LN_2);
    Ok(if x > 0.0 { (x + 1e-9).floor() as u32 } else { 0 })
}

/// `e^{−b − a ln 2}`, the largest threshold that still admits one qubit.
pub fn epsilon_max(a: f64, b_min: f64) -> f64 {
    (-b_min - a * std::f64::consts::LN_2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(p: Vec<f64>) -> SuccessCurve {
        let se = vec![0.0; p.len()];
        SuccessCurve::from_values(2, p, se)
    }

    #[test]
    fn lambda_examples() {
        assert!((lambda_model(1.0 / 3000.0, 1.0 / 5000.0, 4) - 0.0269).abs() < 5e-5);
        assert_eq!(lambda_model(0.0, 0.0, 5), 0.0);
        assert!((lambda_model(1e-3, 0.0, 2) - 0.031389).abs() < 1e-12);
    }

    #[test]
    fn lambda_nonnegative_on_grid() {
        for n in 2..=7 {
            for i in 0..=20 {
                for j in 0..=20 {
                    let (e, g) = (0.005 * i as f64, 0.005 * j as f64);
                    assert!(lambda_model(e, g, n) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn maxima_of_period_three() {
        let p: Vec<f64> = (0..12).map(|t| if t % 3 == 1 { 1.0 } else { 0.25 }).collect();
        let m = find_maxima(&curve(p)).unwrap();
        assert_eq!(m.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 4, 7, 10]);
    }

    #[test]
    fn maxima_edge_cases() {
        assert!(find_maxima(&curve(vec![0.9, 0.5, 0.3, 0.1])).unwrap().is_empty());
        assert!(find_maxima(&curve(vec![0.1, 0.2, 0.3])).unwrap().is_empty());
        assert!(find_maxima(&curve(vec![0.1, 0.2])).is_err());
        // plateau resolves to its first point
        let m = find_maxima(&curve(vec![0.1, 0.5, 0.5, 0.5, 0.2])).unwrap();
        assert_eq!(m, vec![(1, 0.5)]);
        // flat start is not a maximum
        let m = find_maxima(&curve(vec![0.5, 0.5, 0.2, 0.4, 0.1])).unwrap();
        assert_eq!(m, vec![(3, 0.4)]);
        assert!(matches!(first_maximum(&curve(vec![0.3, 0.2, 0.1])), Err(Error::NoMaximum)));
    }

    #[test]
    fn synthetic_damped_oscillation() {
        let n = 4;
        let theta = 2.0 * (0.25f64).asin();
        let p: Vec<f64> = (0..60)
            .map(|t| {
                let s = ((2 * t + 1) as f64 * theta / 2.0).sin().powi(2);
                0.9 * (-0.02 * t as f64).exp() * s + 1.0 / 16.0
            })
            .collect();
        // independent scan for strict interior maxima
        let expect: Vec<usize> = (1..59).filter(|&t| p[t] >= p[t - 1] && p[t] >= p[t + 1]).collect();
        let c = SuccessCurve::from_values(n, p, vec![0.0; 60]);
        let got: Vec<usize> = find_maxima(&c).unwrap().iter().map(|x| x.0).collect();
        assert_eq!(got, expect);
        assert_eq!(got[0], 3);
    }

    #[test]
    fn damping_round_trip() {
        let pts: Vec<(usize, f64)> = [3usize, 9, 16, 22, 28, 34]
            .iter()
            .map(|&t| (t, 0.8 * (-0.03 * t as f64).exp() + 1.0 / 16.0))
            .collect();
        let fit = fit_damping(&pts, None, 4).unwrap();
        assert!((fit.a - 0.8).abs() < 1e-10);
        assert!((fit.lambda - 0.03).abs() < 1e-10);
        assert!(fit.residual_rms < 1e-10);
        let se = vec![0.01; pts.len()];
        let fit = fit_damping(&pts, Some(&se), 4).unwrap();
        assert!(fit.weighted);
        assert!((fit.lambda - 0.03).abs() < 1e-10);
    }

    #[test]
    fn damping_needs_three_points() {
        let pts = vec![(1, 0.9), (4, 0.8)];
        assert!(matches!(fit_damping(&pts, None, 2), Err(Error::Fit(_))));
        let pts = vec![(1, 0.9), (4, 0.8), (7, 0.2), (10, 0.1)];
        assert!(matches!(fit_damping(&pts, None, 2), Err(Error::Fit(_))));
    }

    #[test]
    fn threshold_law_round_trip() {
        let pts: Vec<(usize, f64)> = (2..=7)
            .map(|n| (n, (-1.1 * n as f64 * std::f64::consts::LN_2 - 2.711).exp()))
            .collect();
        let fit = fit_threshold_law(1.0, &pts).unwrap();
        assert!((fit.a - 1.1).abs() < 1e-12);
        assert!((fit.b - 2.711).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.covariance[0][0].abs() < 1e-20);
        assert!(fit_threshold_law(1.0, &pts[..2]).is_err());
    }

    #[test]
    fn bound_examples() {
        assert!((epsilon_max(1.1, 2.3802) - 0.0432).abs() < 5e-5);
        assert_eq!(epsilon_max(0.0, 0.0), 1.0);
        assert_eq!(max_qubits(1e-5, 1.1, 2.711).unwrap(), 11);
        assert_eq!(max_qubits(epsilon_max(1.1, 2.711), 1.1, 2.711).unwrap(), 1);
        assert_eq!(max_qubits(0.05, 1.1, 2.3802).unwrap(), 0);
        let th = |n: f64| (-1.1 * n * std::f64::consts::LN_2 - 2.711).exp();
        assert!(th(11.0) >= 1e-5 && th(11.0) < 2e-5);
        assert!(th(12.0) < 1e-5);
    }

    proptest! {
        #[test]
        fn max_qubits_matches_scan(le in -14.0f64..-1.0, a in 0.5f64..2.0, b in 0.0f64..4.0) {
            let eps = le.exp();
            let scan = (1..=64u32)
                .filter(|&n| (-a * n as f64 * std::f64::consts::LN_2 - b).exp() >= eps)
                .max()
                .unwrap_or(0);
            prop_assert_eq!(max_qubits(eps, a, b).unwrap(), scan);
        }

        #[test]
        fn threshold_law_exact(a in 0.5f64..2.0, b in 0.0f64..5.0) {
            let pts: Vec<(usize, f64)> = (2..=6)
                .map(|n| (n, (-a * n as f64 * std::f64::consts::LN_2 - b).exp()))
                .collect();
            let fit = fit_threshold_law(1.0, &pts).unwrap();
            prop_assert!((fit.a - a).abs() < 1e-10);
            prop_assert!((fit.b - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bisection_on_smooth_objective() {
        let cfg = ThresholdConfig::default();
        let f = |eps: f64| 1.0 / (1.0 + eps / 3e-3);
        let r = bisect_threshold(0.5, &cfg, |_| 1, |eps, n| {
            Ok(ThresholdEval {
                epsilon: eps,
                p_success: f(eps),
                std_err: 0.0,
                t1: Some(1),
                n_trajectories: n,
            })
        })
        .unwrap();
        assert!((r.epsilon_th / 3e-3 - 1.0).abs() < 0.02);
        assert!(r.hi / r.lo - 1.0 <= cfg.rel_tol);
    }

    #[test]
    fn bisection_out_of_range() {
        let cfg = ThresholdConfig::default();
        let r = bisect_threshold(0.5, &cfg, |_| 1, |eps, n| {
            Ok(ThresholdEval {
                epsilon: eps,
                p_success: 0.9,
                std_err: 0.0,
                t1: Some(1),
                n_trajectories: n,
            })
        });
        assert!(matches!(r, Err(Error::ThresholdOutOfRange { .. })));
    }

    #[test]
    fn bisection_escalates_near_crossing() {
        let cfg = ThresholdConfig {
            min_trajectories: 100,
            max_trajectories: 800,
            ..Default::default()
        };
        let r = bisect_threshold(0.5, &cfg, |_| 100, |eps, n| {
            Ok(ThresholdEval {
                epsilon: eps,
                p_success: 1.0 / (1.0 + eps / 3e-3),
                std_err: 1.0 / (n as f64).sqrt(),
                t1: Some(1),
                n_trajectories: n,
            })
        })
        .unwrap();
        assert!(r.evaluations.iter().any(|e| e.n_trajectories == 800));
        assert!(r.evaluations.iter().all(|e| e.n_trajectories <= 800));
    }

    #[test]
    fn discontinuities_take_largest_epsilon() {
        let mk = |epsilon, t1| FirstMaxPoint {
            epsilon,
            gamma: epsilon,
            t1,
            p_success: 0.5,
            std_err: 0.0,
            n_trajectories: 1,
        };
        let scan = vec![mk(1e-4, Some(4)), mk(2e-4, Some(4)), mk(4e-4, Some(3)), mk(8e-4, None)];
        assert_eq!(discontinuity_points(&scan), vec![(4, 2e-4), (3, 4e-4)]);
        let fit = fit_log_drift(&discontinuity_points(&scan)).unwrap();
        assert!(fit.a < 0.0);
    }

    #[test]
    fn grid_spacing() {
        let g = geometric_grid(1e-4, 1e-2, 20).unwrap();
        assert_eq!(g.len(), 41);
        assert!((g[40] - 1e-2).abs() < 1e-12);
        assert!(geometric_grid(0.0, 1.0, 5).is_err());
    }

    #[test]
    fn noiseless_first_maxima() {
        assert_eq!(noiseless_first_maximum(2).unwrap(), 1);
        assert_eq!(noiseless_first_maximum(4).unwrap(), 3);
        assert_eq!(noiseless_first_maximum(5).unwrap(), 4);
    }
}
