//! Scaled-down acceptance battery behind `--paper-suite`. Small trajectory
//! counts, so it finishes in well under a minute; the full battery is the
//! `acceptance` test target of the core crate.

use std::time::Instant;

use noisy_grover::analysis::{fit_curve_damping, lambda_model};
use noisy_grover::exact::exact_success_curve;
use noisy_grover::mc::{estimate_success_curve, McRun};
use noisy_grover::noise::sample_gate_error;
use noisy_grover::steane::{
    build_encoded_grover, decoded_zero_probability, ft_prep_error_rate, logical_zero_ideal, tables,
    EncodedRegister, DEFAULT_MAX_RESTARTS,
};
use noisy_grover::{Gate, NoiseParams, PauliWord, RandomStream};

// chi-square 0.999 quantiles for 3, 15 and 63 degrees of freedom
const CHI2_999: [(usize, f64); 3] = [(3, 16.266), (15, 37.697), (63, 103.442)];

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn closed_form(n: usize, k: usize) -> f64 {
    let th = (0.5f64.powi(n as i32)).sqrt().asin();
    ((2 * k + 1) as f64 * th).sin().powi(2)
}

fn noiseless() -> Line {
    let mut worst = 0.0f64;
    for n in 2..=6 {
        let c = estimate_success_curve(n, &NoiseParams::noiseless(), 8, &McRun::new(1, 0)).unwrap();
        for (k, p) in c.p_success.iter().enumerate() {
            worst = worst.max((p - closed_form(n, k)).abs());
        }
    }
    Line {
        name: "noiseless curves match sin^2((2k+1) theta), n = 2..6",
        pass: worst < 1e-9,
        detail: format!("max |diff| = {worst:.2e}"),
    }
}

fn word_index(w: &PauliWord, support: &[usize]) -> usize {
    support
        .iter()
        .enumerate()
        .map(|(i, &q)| (((w.x_bits() >> q) & 1) as usize | ((((w.z_bits() >> q) & 1) as usize) << 1)) << (2 * i))
        .sum()
}

fn gate_channels() -> Vec<Line> {
    let cases: [(&'static str, Gate, Vec<usize>); 3] = [
        ("one-qubit gate error is uniform over 3 Paulis", Gate::h(0), vec![0]),
        ("CNOT error is uniform over 15 Paulis", Gate::cnot(1, 0), vec![1, 0]),
        ("Toffoli error is uniform over 63 Paulis", Gate::toffoli(0, 1, 2), vec![0, 1, 2]),
    ];
    let mut rng = RandomStream::new(11, 0);
    cases
        .into_iter()
        .map(|(name, gate, support)| {
            let m = 4usize.pow(support.len() as u32);
            let draws = 400 * m as u64;
            let mut counts = vec![0u64; m];
            // gamma = 1 makes every draw an error, so the test sees only the non-identity words
            for _ in 0..draws {
                counts[word_index(&sample_gate_error(&gate, 1.0, &mut rng), &support)] += 1;
            }
            let expected = draws as f64 / (m - 1) as f64;
            let stat: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            let crit = CHI2_999.iter().find(|(df, _)| *df == m - 1).unwrap().1;
            Line {
                name,
                pass: counts[0] == 0 && stat < crit,
                detail: format!("chi2 = {stat:.2} < {crit} over {draws} draws"),
            }
        })
        .collect()
}

fn exact_match(workers: Option<usize>) -> Vec<Line> {
    let p = NoiseParams::new(0.01, 0.01).unwrap();
    let exact = exact_success_curve(2, &p, 1).unwrap();
    let c = estimate_success_curve(2, &p, 1, &McRun::new(20_000, 3).workers(workers)).unwrap();
    let again = estimate_success_curve(2, &p, 1, &McRun::new(20_000, 3).workers(Some(1))).unwrap();
    let z = (c.p_success[1] - exact[1]).abs() / c.std_err[1];
    vec![
        Line {
            name: "n=2 Monte Carlo agrees with the exact density matrix",
            pass: z < 4.0,
            detail: format!("P(1) = {:.4} vs {:.4}, |z| = {z:.2}", c.p_success[1], exact[1]),
        },
        Line {
            name: "results do not depend on the worker count",
            pass: c.p_success == again.p_success,
            detail: "default pool vs one worker".into(),
        },
    ]
}

fn damping(workers: Option<usize>) -> Line {
    let (eps, gamma) = (1.0 / 3000.0, 1.0 / 5000.0);
    let p = NoiseParams::new(eps, gamma).unwrap();
    let c = estimate_success_curve(4, &p, 40, &McRun::new(20_000, 4).workers(workers)).unwrap();
    let model = lambda_model(eps, gamma, 4);
    match fit_curve_damping(&c) {
        Ok(f) => Line {
            name: "n=4 maxima decay exponentially with lambda near the model",
            pass: f.residual_rms < 0.1 && ((f.lambda - model) / model).abs() < 0.4,
            detail: format!("lambda = {:.4}, model {model:.4}, rms {:.3}", f.lambda, f.residual_rms),
        },
        Err(e) => Line {
            name: "n=4 maxima decay exponentially with lambda near the model",
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn steane(workers: Option<usize>) -> Vec<Line> {
    let t = tables();
    let zero = logical_zero_ideal();
    let mut s = zero.tensor(&zero).unwrap();
    build_encoded_grover().unwrap().apply(&mut s).unwrap();
    let p = decoded_zero_probability(&s, &EncodedRegister::contiguous(2)).unwrap();
    let rate = |eps: f64, n: u64| {
        let p = NoiseParams::new(eps, eps).unwrap();
        ft_prep_error_rate(&p, &McRun::new(n, 9).workers(workers), DEFAULT_MAX_RESTARTS).unwrap()
    };
    let (lo, hi) = (rate(2e-3, 200_000), rate(8e-3, 25_000));
    let slope = (hi.logical_error_rate / lo.logical_error_rate).ln() / 4f64.ln();
    vec![
        Line {
            name: "Steane tables verify and noiseless encoded search decodes to (0,0)",
            pass: t.verify().is_ok() && (p - 1.0).abs() < 1e-9,
            detail: format!("P = {p:.12}"),
        },
        Line {
            name: "verified preparation error rate scales quadratically",
            pass: (slope - 2.0).abs() <= 0.5,
            detail: format!(
                "slope = {slope:.2} from {:.2e} at 2e-3 and {:.2e} at 8e-3",
                lo.logical_error_rate, hi.logical_error_rate
            ),
        },
    ]
}

/// Runs the battery, prints one line per check, and returns whether all passed.
pub fn run(workers: Option<usize>) -> bool {
    let mut total = 0;
    let mut failed = 0;
    let groups: [fn(Option<usize>) -> Vec<Line>; 5] = [
        |_| vec![noiseless()],
        |_| gate_channels(),
        exact_match,
        |w| vec![damping(w)],
        steane,
    ];
    for g in groups {
        let start = Instant::now();
        let lines = g(workers);
        let secs = start.elapsed().as_secs_f64();
        for l in lines {
            total += 1;
            if !l.pass {
                failed += 1;
            }
            println!(
                "[{}] {} ({secs:.1}s)\n       {}",
                if l.pass { "PASS" } else { "FAIL" },
                l.name,
                l.detail
            );
        }
    }
    println!("suite: {} of {total} checks passed", total - failed);
    failed == 0
}
