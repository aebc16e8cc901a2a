//! Monte Carlo estimation of Grover success curves over noise trajectories.

use serde::{Deserialize, Serialize};

use crate::circuit::{build_grover_gate, build_uniform_superposition, grover_ancillas, Circuit};
use crate::error::{domain, Result};
use crate::noise::{run_layers, NoiseParams, RandomStream};
use crate::par;
use crate::qstate::StateVector;

/// Default lower bound on the number of trajectories.
pub const DEFAULT_FLOOR: u64 = 10_000;

/// Relative change allowed between `N` and `2N` trajectories for a curve to
/// count as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 0.005;

/// How many trajectories to run and where their random streams come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McRun {
    pub n_trajectories: u64,
    pub master_seed: u64,
    /// Stream index of the first trajectory; trajectory `i` uses stream
    /// `first_stream + i`.
    #[serde(default)]
    pub first_stream: u64,
    /// Thread count; `None` uses the global pool. Never affects results.
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Run `2N` trajectories and record whether the first `N` already agree
    /// with all `2N` to within [`CONVERGENCE_TOLERANCE`].
    #[serde(default)]
    pub check_convergence: bool,
}

impl McRun {
    pub fn new(n_trajectories: u64, master_seed: u64) -> McRun {
        McRun {
            n_trajectories,
            master_seed,
            first_stream: 0,
            workers: None,
            check_convergence: false,
        }
    }

    pub fn workers(mut self, workers: Option<usize>) -> McRun {
        self.workers = workers;
        self
    }

    pub fn first_stream(mut self, first: u64) -> McRun {
        self.first_stream = first;
        self
    }

    pub fn check_convergence(mut self, on: bool) -> McRun {
        self.check_convergence = on;
        self
    }
}

/// `max(floor, ceil(10 · max(1/ε, 1/γ)))`; zero rates are ignored and a
/// noiseless run returns the floor.
pub fn required_trajectories(params: &NoiseParams, floor: u64) -> u64 {
    let inv = |p: f64| if p > 0.0 { 1.0 / p } else { 0.0 };
    let rule = 10.0 * inv(params.epsilon).max(inv(params.gamma));
    // guard against 1/(1/x) landing a hair above an integer
    let rule = (rule - 1e-9).ceil().max(0.0) as u64;
    rule.max(floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub max_relative_change: f64,
    pub converged: bool,
}

/// Estimated success probability of finding `|0…0⟩` after `t` Grover
/// iterations, `t = 0..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub n: usize,
    pub params: NoiseParams,
    pub t_values: Vec<usize>,
    pub p_success: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub convergence: Option<Convergence>,
}

impl SuccessCurve {
    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }

    pub fn at(&self, t: usize) -> Option<(f64, f64)> {
        self.t_values
            .iter()
            .position(|&x| x == t)
            .map(|i| (self.p_success[i], self.std_err[i]))
    }

    /// A curve from given values, e.g. for fitting synthetic data.
    pub fn from_values(n: usize, p_success: Vec<f64>, std_err: Vec<f64>) -> SuccessCurve {
        SuccessCurve {
            n,
            params: NoiseParams::noiseless(),
            t_values: (0..p_success.len()).collect(),
            p_success,
            std_err,
            n_trajectories: 0,
            master_seed: 0,
            convergence: None,
        }
    }
}

/// The circuits of one Grover experiment on `n` data qubits.
#[derive(Clone, Debug)]
pub struct GroverNetwork {
    pub n: usize,
    pub superposition: Circuit,
    pub grover: Circuit,
}

impl GroverNetwork {
    pub fn new(n: usize) -> Result<GroverNetwork> {
        let grover = build_grover_gate(n)?;
        let superposition = build_uniform_superposition(n)?.widened(grover_ancillas(n));
        Ok(GroverNetwork {
            n,
            superposition,
            grover,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.grover.num_qubits()
    }

    /// One noisy trajectory: the noisy superposition, then `t_max` noisy
    /// Grover iterations. `record` sees the state after the superposition
    /// (`t = 0`) and after every iteration.
    pub fn trajectory(
        &self,
        params: &NoiseParams,
        rng: &mut RandomStream,
        t_max: usize,
        mut record: impl FnMut(usize, &StateVector),
    ) -> Result<()> {
        let mut s = StateVector::zero(self.num_qubits())?;
        run_layers(&self.superposition, params, rng, &mut s);
        record(0, &s);
        for t in 1..=t_max {
            run_layers(&self.grover, params, rng, &mut s);
            record(t, &s);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: u64,
}

impl Moments {
    fn new(len: usize) -> Moments {
        Moments {
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
            count: 0,
        }
    }

    fn add(&mut self, i: usize, x: f64) {
        self.sum[i] += x;
        self.sum_sq[i] += x * x;
    }

    fn merge(&mut self, other: &Moments) {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.count += other.count;
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count as f64
    }

    /// Standard error of the mean from the sample variance.
    fn std_err(&self, i: usize) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return 0.0;
        }
        let m = self.mean(i);
        let var = ((self.sum_sq[i] / n - m * m) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Runs `n` trajectories and returns the moments of `len` recorded values.
/// With `halves`, also returns the moments of the first `n/2` trajectories.
fn run_moments<F>(run: &McRun, len: usize, f: F) -> Result<(Moments, Option<Moments>)>
where
    F: Fn(&mut RandomStream, &mut Moments) -> Result<()> + Sync + Send,
{
    let total = if run.check_convergence {
        2 * run.n_trajectories
    } else {
        run.n_trajectories
    };
    let blocks = par::blocks(total, run.workers, |range| -> Result<(u64, Moments)> {
        let start = range.start;
        let mut m = Moments::new(len);
        for i in range {
            let mut rng = RandomStream::new(run.master_seed, run.first_stream + i);
            f(&mut rng, &mut m)?;
            m.count += 1;
        }
        Ok((start, m))
    });
    let mut all = Moments::new(len);
    let mut first_half = run.check_convergence.then(|| Moments::new(len));
    for b in blocks {
        let (start, m) = b?;
        all.merge(&m);
        if let Some(h) = first_half.as_mut() {
            // blocks are aligned to the half boundary only when N is a
            // multiple of the block size; split the rest by count
            if start < run.n_trajectories {
                h.merge(&m);
            }
        }
    }
    Ok((all, first_half))
}

/// Success curve `P_S(t)`, `t = 0..=t_max`, averaged over trajectories.
pub fn estimate_success_curve(
    n: usize,
    params: &NoiseParams,
    t_max: usize,
    run: &McRun,
) -> Result<SuccessCurve> {
    if t_max < 1 {
        return domain("need at least one Grover iteration");
    }
    if run.n_trajectories < 1 {
        return domain("need at least one trajectory");
    }
    let net = GroverNetwork::new(n)?;
    let mut run = *run;
    if run.check_convergence && run.n_trajectories % 64 != 0 {
        // keep the N / 2N split on a block boundary
        run.n_trajectories = run.n_trajectories.div_ceil(64) * 64;
    }
    let (m, half) = run_moments(&run, t_max + 1, |rng, acc| {
        net.trajectory(params, rng, t_max, |t, s| {
            acc.add(t, s.low_register_zero_probability(n));
        })
    })?;
    let p_success: Vec<f64> = (0..=t_max).map(|t| m.mean(t)).collect();
    let convergence = half.map(|h| {
        let max_relative_change = (0..=t_max)
            .map(|t| {
                let full = m.mean(t);
                if full > 0.0 {
                    (h.mean(t) - full).abs() / full
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        Convergence {
            max_relative_change,
            converged: max_relative_change < CONVERGENCE_TOLERANCE,
        }
    });
    Ok(SuccessCurve {
        n,
        params: *params,
        t_values: (0..=t_max).collect(),
        std_err: (0..=t_max).map(|t| m.std_err(t)).collect(),
        p_success,
        n_trajectories: m.count,
        master_seed: run.master_seed,
        convergence,
    })
}

/// Mean squared coefficient of every data basis state at one iteration count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub t: usize,
    /// Indexed by basis state of the data register.
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Average of `mean` over the basis states of each Hamming weight
    /// `0..=n`.
    pub weight_mean: Vec<f64>,
    /// Standard error of the per-trajectory weight-group average.
    pub weight_std_err: Vec<f64>,
    pub n_trajectories: u64,
}

impl WeightHistogram {
    pub fn total(&self) -> f64 {
        self.mean.iter().sum()
    }
}

/// Per-basis-state squared coefficients of the data register (ancillas traced
/// out) at each requested iteration count.
pub fn coefficient_histogram(
    n: usize,
    params: &NoiseParams,
    t_values: &[usize],
    run: &McRun,
) -> Result<Vec<WeightHistogram>> {
    if t_values.is_empty() {
        return domain("no iteration counts requested");
    }
    if run.n_trajectories < 1 {
        return domain("need at least one trajectory");
    }
    let net = GroverNetwork::new(n)?;
    let t_max = *t_values.iter().max().unwrap();
    let dim = 1usize << n;
    let groups = n + 1;
    let stride = dim + groups;
    let mut group_size = vec![0usize; groups];
    for i in 0..dim {
        group_size[i.count_ones() as usize] += 1;
    }
    let mut run = *run;
    run.check_convergence = false;
    let (m, _) = run_moments(&run, stride * t_values.len(), |rng, acc| {
        net.trajectory(params, rng, t_max, |t, s| {
            for (slot, _) in t_values.iter().enumerate().filter(|(_, &x)| x == t) {
                let dist = s.low_register_distribution(n);
                let base = slot * stride;
                let mut g = vec![0.0; groups];
                for (i, p) in dist.iter().enumerate() {
                    acc.add(base + i, *p);
                    g[i.count_ones() as usize] += p;
                }
                for (w, gw) in g.iter().enumerate() {
                    acc.add(base + dim + w, gw / group_size[w] as f64);
                }
            }
        })
    })?;
    Ok(t_values
        .iter()
        .enumerate()
        .map(|(slot, &t)| {
            let base = slot * stride;
            WeightHistogram {
                t,
                mean: (0..dim).map(|i| m.mean(base + i)).collect(),
                std_err: (0..dim).map(|i| m.std_err(base + i)).collect(),
                weight_mean: (0..groups).map(|w| m.mean(base + dim + w)).collect(),
                weight_std_err: (0..groups).map(|w| m.std_err(base + dim + w)).collect(),
                n_trajectories: m.count,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_rule() {
        let p = NoiseParams::new(1.0 / 2000.0, 1.0 / 2000.0).unwrap();
        assert_eq!(required_trajectories(&p, 0), 20_000);
        assert_eq!(required_trajectories(&p, DEFAULT_FLOOR), 20_000);
        let p = NoiseParams::new(1.0 / 3000.0, 1.0 / 5000.0).unwrap();
        assert_eq!(required_trajectories(&p, DEFAULT_FLOOR), 50_000);
        let p = NoiseParams::new(0.5, 0.5).unwrap();
        assert_eq!(required_trajectories(&p, DEFAULT_FLOOR), 10_000);
        assert_eq!(required_trajectories(&NoiseParams::noiseless(), DEFAULT_FLOOR), 10_000);
    }

    #[test]
    fn noiseless_two_qubit_curve() {
        let c = estimate_success_curve(2, &NoiseParams::noiseless(), 4, &McRun::new(3, 1)).unwrap();
        let expect: Vec<f64> = (0..=4)
            .map(|t| (((2 * t + 1) as f64) * std::f64::consts::PI / 6.0).sin().powi(2))
            .collect();
        for (p, e) in c.p_success.iter().zip(&expect) {
            assert!((p - e).abs() < 1e-12);
        }
        assert!((c.p_success[1] - 1.0).abs() < 1e-12);
        assert!(c.std_err.iter().all(|&s| s < 1e-12));
    }

    #[test]
    fn std_err_bounded_by_bernoulli() {
        let p = NoiseParams::new(0.01, 0.01).unwrap();
        let c = estimate_success_curve(3, &p, 4, &McRun::new(2000, 5)).unwrap();
        for (&ps, &se) in c.p_success.iter().zip(&c.std_err) {
            assert!((0.0..=1.0).contains(&ps));
            let bound = (ps * (1.0 - ps) / 1999.0).sqrt();
            assert!(se <= bound * (1.0 + 1e-9), "{se} > {bound}");
        }
    }

    #[test]
    fn worker_count_is_irrelevant() {
        let p = NoiseParams::new(0.004, 0.002).unwrap();
        let a = estimate_success_curve(4, &p, 5, &McRun::new(500, 9).workers(Some(1))).unwrap();
        let b = estimate_success_curve(4, &p, 5, &McRun::new(500, 9).workers(Some(4))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convergence_record() {
        let p = NoiseParams::new(0.001, 0.001).unwrap();
        let c = estimate_success_curve(2, &p, 2, &McRun::new(1000, 2).check_convergence(true))
            .unwrap();
        assert_eq!(c.n_trajectories, 2048);
        let conv = c.convergence.unwrap();
        assert!(conv.max_relative_change >= 0.0);
    }

    #[test]
    fn noiseless_histogram_has_two_levels() {
        let h = coefficient_histogram(4, &NoiseParams::noiseless(), &[0, 2, 3], &McRun::new(2, 0))
            .unwrap();
        for hist in &h {
            let target = hist.mean[0];
            let rest = hist.mean[1];
            assert!(hist.mean[1..].iter().all(|&v| (v - rest).abs() < 1e-12));
            assert!((target + 15.0 * rest - 1.0).abs() < 1e-12);
            let half_theta = 0.25f64.asin();
            let expect = ((2 * hist.t + 1) as f64 * half_theta).sin().powi(2);
            assert!((target - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_sums_to_one() {
        let p = NoiseParams::new(0.01, 0.01).unwrap();
        let h = coefficient_histogram(3, &p, &[1, 3], &McRun::new(300, 4)).unwrap();
        for hist in &h {
            assert!((hist.total() - 1.0).abs() < 1e-9);
        }
    }
}
