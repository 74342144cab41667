use tvsurv::dgp::{Dgp, DgpConfig};
use tvsurv::weights::{
    fit_propensity, hajek_potential_survival, stabilized_weights, trim_weights, weight_diagnostics,
};

fn config(seed: u64) -> DgpConfig {
    DgpConfig {
        seed,
        ..DgpConfig::default()
    }
}

#[test]
fn null_model_has_small_covariate_coefficients() {
    let cohort = Dgp::new(DgpConfig {
        confounding: 0.0,
        feedback: 0.0,
        ..config(4)
    })
    .unwrap()
    .simulate()
    .unwrap();
    let model = fit_propensity(&cohort, true, 0.0).unwrap();
    let coef = &model.denominator[0].coef;
    for (j, c) in coef[1..=cohort.d].iter().enumerate() {
        assert!(c.abs() < 0.1, "x_{j}: {c}");
    }
}

#[test]
fn pooled_fit_recovers_the_true_propensity() {
    let dgp = Dgp::new(config(6)).unwrap();
    let cohort = dgp.simulate().unwrap();
    let model = fit_propensity(&cohort, true, 0.0).unwrap();
    let fit = &model.denominator[0];
    let d = cohort.d;
    let mut truth = vec![-dgp.offset];
    truth.extend(dgp.w_treat.iter().map(|w| dgp.config.confounding * w));
    truth.push(0.5);
    truth.extend(std::iter::repeat(0.0).take(cohort.k));
    assert_eq!(truth.len(), fit.coef.len());
    for j in 0..truth.len() {
        let z = (fit.coef[j] - truth[j]) / fit.std_errors[j];
        assert!(z.abs() < 3.0, "coefficient {j}: z = {z}");
    }
    assert_eq!(fit.coef.len(), 2 + d + cohort.k);
}

#[test]
fn stabilized_weights_average_one_and_beat_unstabilized() {
    let cohort = Dgp::new(config(8)).unwrap().simulate().unwrap();
    let model = fit_propensity(&cohort, true, 0.0).unwrap();
    let table = trim_weights(&stabilized_weights(&cohort, &model).unwrap(), 0.01, 0.99).unwrap();
    let diag = weight_diagnostics(&table).unwrap();
    assert!((0.95..=1.05).contains(&diag.raw.mean), "{:?}", diag.raw);
    assert!(diag.raw.variance < diag.unstabilized.variance);
    // scale-free comparison as well: squared coefficient of variation
    let cv2 = |s: &tvsurv::weights::WeightSummary| s.variance / (s.mean * s.mean);
    assert!(cv2(&diag.raw) < cv2(&diag.unstabilized));
    assert!(diag.trimmed.max <= diag.raw.max);
}

#[test]
fn hajek_estimate_is_unbiased_across_cohorts() {
    // one cohort of 5000 carries an SD of roughly 0.05 here, so the bias
    // check averages over cohorts and each cohort gets a 3-SD bound
    let tau = 4.5;
    let seeds = 0..8u64;
    let (mut est_sum, mut truth_sum) = ([0.0; 2], [0.0; 2]);
    for seed in seeds.clone() {
        let dgp = Dgp::new(config(seed)).unwrap();
        let cohort = dgp.simulate().unwrap();
        let model = fit_propensity(&cohort, true, 0.0).unwrap();
        for (s, seq) in [dgp.all_treat(), dgp.never_treat()].iter().enumerate() {
            let truth: f64 = cohort
                .trajectories
                .iter()
                .map(|tr| dgp.true_survival(tr, seq, &[tau]).unwrap()[0])
                .sum::<f64>()
                / cohort.len() as f64;
            let est = hajek_potential_survival(&cohort, &model, seq, tau, 5).unwrap();
            assert!((est - truth).abs() < 0.15, "seed {seed} {seq:?}: {est} vs {truth}");
            est_sum[s] += est;
            truth_sum[s] += truth;
        }
    }
    let n = seeds.count() as f64;
    for s in 0..2 {
        let (e, t) = (est_sum[s] / n, truth_sum[s] / n);
        assert!((e - t).abs() < 0.03, "sequence {s}: mean {e} vs {t}");
    }
}
