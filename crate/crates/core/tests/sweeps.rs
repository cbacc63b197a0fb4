use paracont::catalog::{self, EXAMPLE_IDS};
use paracont::sweep::{self, AlphaOutcome, Job};
use paracont::Error;

fn csv(id: &str, seed: u64) -> String {
    catalog::run(id, &[], seed).unwrap().log.to_csv_string().unwrap()
}

#[test]
fn every_example_is_deterministic() {
    for id in EXAMPLE_IDS {
        assert_eq!(csv(id, 7), csv(id, 7), "{id}");
    }
}

#[test]
fn noise_seed_changes_the_run() {
    assert_ne!(csv("ident-linear", 1), csv("ident-linear", 2));
}

#[test]
fn parallel_and_sequential_batches_agree() {
    let jobs: Vec<Job> = (0..6).map(|seed| Job::new("ident-linear", &[("t_end", "5".into())], seed)).collect();
    let a = sweep::run_batch(&jobs);
    let b = sweep::run_batch_sequential(&jobs);
    let c = sweep::run_batch_limited(&jobs, 2).unwrap();
    for ((x, y), z) in a.iter().zip(&b).zip(&c) {
        let (x, y, z) = (x.as_ref().unwrap(), y.as_ref().unwrap(), z.as_ref().unwrap());
        assert_eq!(x.log, y.log);
        assert_eq!(x.log, z.log);
        assert_eq!(x.seed, y.seed);
    }
}

#[test]
fn seed_sweep_spread_is_small() {
    let seeds: Vec<u64> = (1..=20).collect();
    let finals: Vec<f64> = sweep::seed_sweep("ident-linear", &[], &seeds)
        .into_iter()
        .map(|(_, th)| th.unwrap()[0])
        .collect();
    let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 0.06, "spread {}", hi - lo);
    assert!(finals.iter().all(|t| (t - 5.0).abs() <= 0.2));
}

#[test]
fn anchor_sweep_converges_for_both_modes() {
    let anchors = ["0", "0.2", "1.5"];
    for id in ["ident-nl-continuous", "ident-nl-discrete"] {
        let jobs: Vec<Job> = anchors.iter().map(|a| Job::new(id, &[("theta0", a.to_string())], 0)).collect();
        for (a, out) in anchors.iter().zip(sweep::run_batch(&jobs)) {
            let r = out.unwrap().report.unwrap();
            assert!(r.t_switch.is_some(), "{id} from {a}");
            assert!((r.final_theta.unwrap()[0] - 0.75).abs() < 0.01, "{id} from {a}");
        }
    }
}

#[test]
fn alpha_bracket_separates_outcomes() {
    let ov = [("t_end", "6".to_string())];
    let b = sweep::locate_alpha_min("affine-mimo", &ov, 1.0, 20.0, 3, 3).unwrap();
    assert!(b.stagnates < b.reaches);
    assert!(b.reaches - b.stagnates < 19.0 / 4.0_f64.powi(3) + 1e-9);
    assert_eq!(sweep::probe_alpha("affine-mimo", &ov, b.stagnates).unwrap(), AlphaOutcome::Stagnated);
    assert_eq!(sweep::probe_alpha("affine-mimo", &ov, b.reaches).unwrap(), AlphaOutcome::Reached);
}

#[test]
fn bad_bracket_rejected() {
    let ov = [("t_end", "3".to_string())];
    assert!(matches!(
        sweep::locate_alpha_min("affine-mimo", &ov, 20.0, 25.0, 2, 1),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn unknown_example_in_batch_is_reported_per_job() {
    let jobs = vec![Job::new("nope", &[], 0), Job::new("cubic-siso", &[], 0)];
    let out = sweep::run_batch(&jobs);
    assert!(matches!(out[0], Err(Error::UnknownExample { .. })));
    assert!(out[1].is_ok());
}
