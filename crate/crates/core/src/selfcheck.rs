//! Quick numerical self-checks, run by `laglasso check`.

use serde::Serialize;

use crate::dataset::{synth_generate, SequenceSample, SynthConfig};
use crate::error::Result;
use crate::lasso::{LassoProblem, SolverOptions};
use crate::lstm::{backward, loss, LstmParameters, SeqOut};
use crate::mlp::{mlp_backward, mlp_loss, MlpParameters, MlpSample};
use crate::numerics::{finite_diff_gradient, max_relative_error, Matrix, Rng};
use crate::params::ParameterSet;
use crate::signals::{extract_trace, TraceOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn lstm_gradient(rng: &mut Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for mode in [SeqOut::Last, SeqOut::AllSteps] {
        let p = LstmParameters::init(3, 2, rng)?;
        let batch: Vec<SequenceSample> = (0..3)
            .map(|a| {
                let inputs: Vec<Vec<f64>> =
                    (0..5).map(|_| vec![rng.normal(), rng.normal()]).collect();
                let labels = if mode.is_sequence() {
                    (0..5).map(|_| rng.normal()).collect()
                } else {
                    vec![rng.normal()]
                };
                SequenceSample { anchor: a, inputs, labels }
            })
            .collect();
        let (_, g) = backward(&p, &batch, mode)?;
        let mut q = p.clone();
        let fd = finite_diff_gradient(
            |w| {
                q.set_flat(w).expect("length");
                loss(&q, &batch, mode).unwrap_or(f64::NAN)
            },
            &p.to_flat(),
            1e-5,
        )?;
        worst = worst.max(max_relative_error(&g.to_flat(), &fd, 1e-6));
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn mlp_gradient(rng: &mut Rng) -> Result<(bool, String)> {
    let p = MlpParameters::init(4, 3, rng)?;
    let batch: Vec<MlpSample> = (0..6)
        .map(|_| MlpSample {
            features: (0..3).map(|_| rng.normal()).collect(),
            label: rng.normal(),
        })
        .collect();
    let (_, g) = mlp_backward(&p, &batch)?;
    let mut q = p.clone();
    let fd = finite_diff_gradient(
        |w| {
            q.set_flat(w).expect("length");
            mlp_loss(&q, &batch).unwrap_or(f64::NAN)
        },
        &p.to_flat(),
        1e-5,
    )?;
    let err = max_relative_error(&g.to_flat(), &fd, 1e-6);
    Ok((err < 1e-4, format!("max relative error {err:.2e}")))
}

fn lasso_kkt(rng: &mut Rng) -> Result<(bool, String)> {
    let x = Matrix::from_fn(80, 12, |_, _| rng.normal());
    let s: Vec<f64> = (0..80).map(|i| x.get(i, 0) - 0.5 * x.get(i, 3) + 0.1 * rng.normal()).collect();
    let problem = LassoProblem::new(&x, &s)?;
    let gamma = 0.1 * problem.gamma_max();
    let sol = problem.fit(gamma, &SolverOptions::default())?;
    let v = problem.kkt_violation(&sol.w, gamma);
    Ok((
        v <= 1e-6,
        format!("{} active, KKT violation {v:.2e}", sol.active_set.len()),
    ))
}

fn trace_invariants(rng: &mut Rng) -> Result<(bool, String)> {
    let table = synth_generate(
        &SynthConfig {
            length: 300,
            decoys: 1,
            ..SynthConfig::default()
        },
        rng,
    )?;
    let p = LstmParameters::init(3, table.n_columns(), rng)?;
    let trace = extract_trace(&p, &table, 6, TraceOptions::default())?;
    let err = trace.check_invariants()?;
    Ok((err < 1e-12, format!("{} steps, max |h - o tanh c| {err:.2e}", trace.len())))
}

/// Run every check with a fixed seed.
pub fn run_all() -> Vec<CheckResult> {
    let mut rng = Rng::new(7);
    vec![
        outcome("lstm gradient", lstm_gradient(&mut rng)),
        outcome("mlp gradient", mlp_gradient(&mut rng)),
        outcome("lasso optimality", lasso_kkt(&mut rng)),
        outcome("signal invariants", trace_invariants(&mut rng)),
    ]
}
