use liftsense::landscape::{find_sops, Tolerances};
use liftsense::objective::{LiftedObjective, Problem};
use liftsense::optimize::*;
use liftsense::tensor::{rank1_power, ProjectionConfig};

fn quiet() -> TrialConfig {
    TrialConfig {
        adam: AdamConfig {
            record_every: 0,
            ..AdamConfig::default()
        },
        ..TrialConfig::default()
    }
}

#[test]
fn unlifted_trials_end_at_ground_truth_or_spurious_sop() {
    let p = Problem::benchmark(3, 0.3).unwrap();
    let rates = success_rate(&p, 1, 40, 0, &quiet()).unwrap();
    assert!(rates.successes > 0 && rates.successes < 40);
    for r in &rates.records {
        if r.success {
            assert!(r.terminal_loss <= 1e-10, "seed {}", r.seed);
        } else {
            assert!(r.terminal_loss > 0.01, "seed {}", r.seed);
        }
    }
}

#[test]
fn successful_trials_have_tiny_mean_terminal_loss() {
    let p = Problem::benchmark(3, 0.3).unwrap();
    let rates = success_rate(&p, 1, 200, 0, &quiet()).unwrap();
    let ok: Vec<f64> = rates
        .records
        .iter()
        .filter(|r| r.success)
        .map(|r| r.terminal_loss)
        .collect();
    assert!(!ok.is_empty());
    assert!(ok.iter().sum::<f64>() / ok.len() as f64 <= 1e-6);
}

#[test]
fn success_rate_is_reproducible_and_sorted() {
    let p = Problem::benchmark(3, 0.3).unwrap();
    let a = success_rate(&p, 1, 30, 7, &quiet()).unwrap();
    let b = success_rate(&p, 1, 30, 7, &quiet()).unwrap();
    assert_eq!(a, b);
    let seeds: Vec<u64> = a.records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, (7..37).collect::<Vec<_>>());
    let single = success_rate(&p, 1, 1, 0, &quiet()).unwrap();
    assert!(single.rate == 0.0 || single.rate == 1.0);
}

#[test]
fn lifted_trajectory_projects_onto_ground_truth() {
    let p = Problem::benchmark(3, 0.3).unwrap();
    let cfg = TrialConfig {
        adam: AdamConfig {
            record_every: 500,
            ..AdamConfig::default()
        },
        ..TrialConfig::default()
    };
    let rec = (0..20)
        .map(|seed| run_trial(&p, 3, seed, &cfg).unwrap())
        .find(|r| r.success)
        .expect("some lifted trial succeeds");
    let proj = project_trajectory(&rec, &ProjectionConfig::default()).unwrap();
    let last = proj.last().unwrap();
    let z = p.z();
    let plus: f64 = last
        .point
        .iter()
        .zip(z.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let minus: f64 = last
        .point
        .iter()
        .zip(z.iter())
        .map(|(a, b)| (a + b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(plus.min(minus) <= 0.05);
    for (step, s) in rec.steps.iter().zip(&proj) {
        assert!(s.residual <= step.iterate.frobenius_norm() + 1e-12);
        assert!(s.loss.is_finite());
    }
}

#[test]
fn adam_started_at_spurious_sop_stays_there() {
    let p = Problem::benchmark(3, 0.3).unwrap();
    let found = find_sops(&p, 40, &AdamConfig::default(), 0, Tolerances::default()).unwrap();
    let xhat = found.sops.iter().find(|c| !c.is_global(&p)).unwrap();
    let obj = LiftedObjective::new(&p, 1).unwrap();
    let run = run_adam(|x| obj.value_grad(x), &xhat.point, &AdamConfig::default()).unwrap();
    assert!((run.loss - xhat.h_value).abs() < 1e-8);
    let w = rank1_power(&xhat.point, 1).unwrap();
    assert!(success_distance(&p, &w).unwrap() > SUCCESS_RADIUS);
}
