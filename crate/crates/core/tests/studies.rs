use lstm_laglasso::dataset::{business_days, synth_generate, SynthConfig, TimeSeriesTable};
use lstm_laglasso::experiments::{
    significance_from_trace, train_signal_model, walk_forward, ForecastReport, LagLassoConfig,
    ModelSpec, SignalModelConfig, SignificanceConfig, WalkForwardConfig,
};
use lstm_laglasso::lasso::{GammaChoice, LassoConfig};
use lstm_laglasso::numerics::Rng;
use lstm_laglasso::signals::{extract_trace, TraceOptions};
use lstm_laglasso::training::TrainConfig;

fn ar1(n: usize, phi: f64, seed: u64) -> TimeSeriesTable {
    let mut rng = Rng::new(seed);
    let mut x = 0.0;
    let v: Vec<f64> = (0..n)
        .map(|_| {
            x = phi * x + rng.normal();
            x
        })
        .collect();
    let dates = business_days(chrono::NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), n);
    TimeSeriesTable::new(dates, vec!["y".into()], vec![v], "y").unwrap()
}

#[test]
fn target_only_smoke_run() {
    let table = ar1(400, 0.8, 3);
    let cfg = WalkForwardConfig {
        window: 200,
        horizons: vec![0],
        train_frac: 0.6,
        retrain_every: 10,
        initial_epochs: 20,
        retrain_epochs: 5,
        batch_size: 64,
        max_test_steps: Some(50),
        ..WalkForwardConfig::default()
    };
    let roster = [ModelSpec::MlpTarget {
        name: "NN TgtOnly".into(),
        hidden: 10,
        steps: 6,
    }];
    let report = walk_forward(&table, &roster, &cfg).unwrap();
    let s = &report.series[0];
    assert_eq!(s.errors.len(), 50);
    assert!(s.summary.median.is_finite());
    assert!(s.origin_rows.iter().zip(&s.target_rows).all(|(o, t)| t == &(o + 1)));

    let back = ForecastReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn window_longer_than_training_region_is_rejected() {
    let table = ar1(300, 0.5, 1);
    let cfg = WalkForwardConfig {
        window: 250,
        horizons: vec![0],
        ..WalkForwardConfig::default()
    };
    let roster = [ModelSpec::LastValue { name: "last".into() }];
    assert!(walk_forward(&table, &roster, &cfg).is_err());
}

/// With exogenous columns that are pure noise, the real MSE should land
/// anywhere in the random distribution.
#[test]
fn null_features_are_not_significant() {
    let table = synth_generate(
        &SynthConfig {
            length: 800,
            decoys: 0,
            ..SynthConfig::default()
        },
        &mut Rng::new(5),
    )
    .unwrap();
    let model = train_signal_model(
        &table,
        &SignalModelConfig {
            inputs: Some(vec!["target".into()]),
            train: TrainConfig {
                epochs: 10,
                batch_size: 64,
                ..TrainConfig::default()
            },
            ..SignalModelConfig::default()
        },
    )
    .unwrap();
    let inputs = model.normalized_inputs(&table).unwrap();
    let trace = extract_trace(&model.params, &inputs, model.seq_in, TraceOptions::default()).unwrap();
    let cfg = LagLassoConfig {
        lasso: LassoConfig {
            k: 6,
            gamma: GammaChoice::Fixed(1.0),
            grid_points: 0,
            ..LassoConfig::default()
        },
        ..LagLassoConfig::default()
    };
    let trials = 20;
    let mut inside = 0;
    for meta in 0..trials {
        let mut rng = Rng::substream(900, meta);
        let names: Vec<String> = (0..5).map(|j| format!("noise_{j}")).collect();
        let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..table.len()).map(|_| rng.normal()).collect()).collect();
        let exog = TimeSeriesTable::new(table.timestamps().to_vec(), names, cols, "noise_0").unwrap();
        let rep = significance_from_trace(
            &trace,
            &exog,
            &cfg,
            &SignificanceConfig { n_runs: 50, seed: meta },
        )
        .unwrap();
        if (5.0..=95.0).contains(&rep.percentile) {
            inside += 1;
        }
    }
    // under the null about 90% of percentiles fall in [5, 95]
    assert!(inside >= 16, "{inside}/{trials} inside [5, 95]");
}
