//! Heldout predictive checks, posterior predictive nulls and studies.
//!
//! Every random quantity is drawn from a stream derived from the caller's
//! stream by a fixed label, e.g. `gmm-k3/fit-in`, `gmm-k3/rep` (indexed by
//! replicate) or `gmm-k3/diag/gmm-k2` (indexed by replicate). The same labels
//! are used by standalone checks and by studies, so a study's diagonal
//! reproduces [`heldout_predictive_check`] exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataSplit, Dataset};
use crate::diagnostics::{validation_diagnostic, DiagnosticSpec};
use crate::error::{Error, Result, StageExt};
use crate::estimators::{harmonic_mean_marginal_likelihood, sym_kl_estimate};
use crate::model::{FitConfig, Fitted, Model};
use crate::outcome::{check_alpha, CheckOutcome, PpnOutcome, StudyMode, StudyReport, Verdict, VerdictClass};
use crate::rng::VariateStream;

/// Settings shared by checks, PPNs and studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConfig {
    /// Posterior predictive replicates per check (R).
    pub replicates: usize,
    pub alpha: f64,
    /// Largest symmetrized KL at which one model's replicates fool another's
    /// check.
    pub tau: f64,
    pub mode: StudyMode,
    pub fit: FitConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            replicates: 200,
            alpha: 0.1,
            tau: 1.0,
            mode: StudyMode::Full,
            fit: FitConfig::default(),
        }
    }
}

impl CheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::param("replicates", "must be at least 1"));
        }
        check_alpha(self.alpha)?;
        if !(self.tau >= 0.0) {
            return Err(Error::param("tau", "must be nonnegative"));
        }
        self.fit.gibbs.validate()
    }
}

/// A model fitted for replication (on x_in) and for its diagnostic (on
/// x_val).
struct Prepared {
    model: Model,
    on_in: Fitted,
    on_val: Fitted,
}

fn prepare(model: &Model, split: &DataSplit, cfg: &CheckConfig, stream: &VariateStream) -> Result<Prepared> {
    let id = &model.id;
    let on_in = Fitted::fit(model, &split.x_in, &cfg.fit, &mut stream.derive(&format!("{id}/fit-in"))).stage(id, "fit-in")?;
    let on_val =
        Fitted::fit(model, &split.x_val, &cfg.fit, &mut stream.derive(&format!("{id}/fit-val"))).stage(id, "fit-val")?;
    Ok(Prepared {
        model: model.clone(),
        on_in,
        on_val,
    })
}

/// The owner's validation diagnostic on each of `replicates` datasets drawn
/// from `source`, shaped like `template`.
fn replicate_diagnostics(
    owner: &Prepared,
    spec: &DiagnosticSpec,
    source: &Prepared,
    template: &Dataset,
    replicates: usize,
    stream: &VariateStream,
) -> Result<Vec<f64>> {
    let rep_stream = stream.derive(&format!("{}/rep", source.model.id));
    let diag_stream = stream.derive(&format!("{}/diag/{}", owner.model.id, source.model.id));
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep = source
                .on_in
                .replicate(template, r, &mut rep_stream.derive_index(r as u64))
                .stage(&source.model.id, "replicate")?;
            validation_diagnostic(&rep, spec, &owner.on_val, &mut diag_stream.derive_index(r as u64))
                .stage(&owner.model.id, "diagnostic")
        })
        .collect()
}

fn check_prepared(p: &Prepared, spec: &DiagnosticSpec, split: &DataSplit, cfg: &CheckConfig, stream: &VariateStream) -> Result<CheckOutcome> {
    let id = &p.model.id;
    let observed = validation_diagnostic(&split.x_out, spec, &p.on_val, &mut stream.derive(&format!("{id}/diag/observed")))
        .stage(id, "diagnostic")?;
    let reps = replicate_diagnostics(p, spec, p, &split.x_out, cfg.replicates, stream)?;
    let mut outcome = CheckOutcome::from_samples(id.clone(), observed, reps, cfg.alpha)?;
    outcome.log_evidence = p
        .on_in
        .log_likelihoods()
        .map(harmonic_mean_marginal_likelihood)
        .transpose()
        .stage(id, "evidence")?;
    Ok(outcome)
}

fn check_spec(model: &Model, spec: &DiagnosticSpec) -> Result<()> {
    spec.validate()?;
    if spec.owner != model.id {
        return Err(Error::Wiring(format!("diagnostic owned by `{}` given to model `{}`", spec.owner, model.id)));
    }
    Ok(())
}

/// Heldout predictive check: replicate from the x_in posterior, score with
/// the x_val validation diagnostic, and locate the score of x_out.
pub fn heldout_predictive_check(
    split: &DataSplit,
    model: &Model,
    spec: &DiagnosticSpec,
    cfg: &CheckConfig,
    stream: &VariateStream,
) -> Result<CheckOutcome> {
    cfg.validate()?;
    check_spec(model, spec)?;
    let p = prepare(model, split, cfg, stream)?;
    check_prepared(&p, spec, split, cfg, stream)
}

/// Classical posterior predictive p-value: the reference and the diagnostic
/// posterior are both fitted on `x_obs`, which is then located in its own
/// reference. Uses the data twice, so it is not calibrated.
pub fn posterior_predictive_pvalue(
    x_obs: &Dataset,
    model: &Model,
    spec: &DiagnosticSpec,
    cfg: &CheckConfig,
    stream: &VariateStream,
) -> Result<CheckOutcome> {
    cfg.validate()?;
    check_spec(model, spec)?;
    let id = &model.id;
    let fit = Fitted::fit(model, x_obs, &cfg.fit, &mut stream.derive(&format!("{id}/fit"))).stage(id, "fit")?;
    let observed = fit
        .diagnostic(x_obs, spec.reduction, spec.draws, &mut stream.derive(&format!("{id}/diag/observed")))
        .stage(id, "diagnostic")?;
    let rep_stream = stream.derive(&format!("{id}/rep"));
    let diag_stream = stream.derive(&format!("{id}/diag/{id}"));
    let reps = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rep = fit.replicate(x_obs, r, &mut rep_stream.derive_index(r as u64)).stage(id, "replicate")?;
            fit.diagnostic(&rep, spec.reduction, spec.draws, &mut diag_stream.derive_index(r as u64))
                .stage(id, "diagnostic")
        })
        .collect::<Result<Vec<_>>>()?;
    CheckOutcome::from_samples(id.clone(), observed, reps, cfg.alpha)
}

fn ppn_from_samples(owner: &str, source: &str, samples_a: Vec<f64>, samples_b: Vec<f64>, tau: f64) -> Result<PpnOutcome> {
    let sym_kl = sym_kl_estimate(&samples_a, &samples_b).stage(&format!("{owner}<-{source}"), "sym-kl")?;
    Ok(PpnOutcome {
        diag_owner: owner.to_string(),
        data_source: source.to_string(),
        sym_kl,
        fools: sym_kl <= tau,
        samples_a,
        samples_b,
        standalone: false,
    })
}

/// Posterior predictive null of `model_b` against the check of `model_a`:
/// compare A's validation diagnostic on A's replicates with the same
/// diagnostic on B's replicates, both replicated from x_in fits.
///
/// The two roles use separate streams, so passing the same model twice
/// gives two independent replicate sets. The outcome is marked standalone
/// since neither model's check is run here.
pub fn ppn_check(
    split: &DataSplit,
    model_a: &Model,
    model_b: &Model,
    spec_a: &DiagnosticSpec,
    cfg: &CheckConfig,
    stream: &VariateStream,
) -> Result<PpnOutcome> {
    cfg.validate()?;
    check_spec(model_a, spec_a)?;
    let sa = stream.derive("a");
    let sb = stream.derive("b");
    let a = prepare(model_a, split, cfg, &sa)?;
    let b_on_in = Fitted::fit(model_b, &split.x_in, &cfg.fit, &mut sb.derive(&format!("{}/fit-in", model_b.id)))
        .stage(&model_b.id, "fit-in")?;
    let b = Prepared {
        model: model_b.clone(),
        on_val: b_on_in.clone(),
        on_in: b_on_in,
    };
    let samples_a = replicate_diagnostics(&a, spec_a, &a, &split.x_out, cfg.replicates, &sa)?;
    // B's replicates come from the "b" stream, A's diagnostic draws from "a".
    let rep_stream = sb.derive(&format!("{}/rep", model_b.id));
    let diag_stream = sa.derive(&format!("{}/diag/b:{}", model_a.id, model_b.id));
    let samples_b = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rep = b
                .on_in
                .replicate(&split.x_out, r, &mut rep_stream.derive_index(r as u64))
                .stage(&model_b.id, "replicate")?;
            validation_diagnostic(&rep, spec_a, &a.on_val, &mut diag_stream.derive_index(r as u64))
                .stage(&model_a.id, "diagnostic")
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ppn_from_samples(&model_a.id, &model_b.id, samples_a, samples_b, cfg.tau)?;
    out.standalone = true;
    Ok(out)
}

/// Ordered (owner, source) index pairs compared among the passing models.
pub fn study_pairs(passers: &[usize], mode: StudyMode) -> Vec<(usize, usize)> {
    match mode {
        StudyMode::Full => passers
            .iter()
            .flat_map(|&k| passers.iter().filter(move |&&j| j != k).map(move |&j| (k, j)))
            .collect(),
        StudyMode::Chain => passers.windows(2).map(|w| (w[1], w[0])).collect(),
    }
}

/// Run every model's heldout check, then the PPNs among the models that
/// pass, and classify each pair that was compared in both directions.
pub fn ppn_study(
    split: &DataSplit,
    models: &[Model],
    specs: &[DiagnosticSpec],
    cfg: &CheckConfig,
    stream: &VariateStream,
) -> Result<StudyReport> {
    cfg.validate()?;
    if models.len() < 2 {
        return Err(Error::Config("a study needs at least two models".into()));
    }
    if specs.len() != models.len() {
        return Err(Error::Config(format!("{} models but {} diagnostic specs", models.len(), specs.len())));
    }
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|o| o.id == m.id) {
            return Err(Error::Config(format!("duplicate model id `{}`", m.id)));
        }
        check_spec(m, &specs[i])?;
    }

    let prepared: Vec<Prepared> = models
        .par_iter()
        .map(|m| prepare(m, split, cfg, stream))
        .collect::<Result<_>>()?;
    let diagonal: Vec<CheckOutcome> = prepared
        .iter()
        .zip(specs)
        .map(|(p, spec)| check_prepared(p, spec, split, cfg, stream))
        .collect::<Result<_>>()?;

    let passers: Vec<usize> = (0..models.len()).filter(|&i| diagonal[i].pass).collect();
    let pairs: Vec<PpnOutcome> = study_pairs(&passers, cfg.mode)
        .into_iter()
        .map(|(k, j)| {
            let samples_b = replicate_diagnostics(&prepared[k], &specs[k], &prepared[j], &split.x_out, cfg.replicates, stream)?;
            ppn_from_samples(&models[k].id, &models[j].id, diagonal[k].replicates.clone(), samples_b, cfg.tau)
        })
        .collect::<Result<_>>()?;

    let find = |owner: usize, source: usize| {
        pairs
            .iter()
            .find(|p| p.diag_owner == models[owner].id && p.data_source == models[source].id)
    };
    let mut verdicts = Vec::new();
    for (x, &a) in passers.iter().enumerate() {
        for &b in &passers[x + 1..] {
            if let (Some(b_fools_a), Some(a_fools_b)) = (find(a, b), find(b, a)) {
                verdicts.push(Verdict {
                    a: models[a].id.clone(),
                    b: models[b].id.clone(),
                    class: VerdictClass::classify(a_fools_b.fools, b_fools_a.fools),
                });
            }
        }
    }

    Ok(StudyReport {
        models: models.iter().map(|m| m.id.clone()).collect(),
        alpha: cfg.alpha,
        tau: cfg.tau,
        mode: cfg.mode,
        diagonal,
        pairs,
        verdicts,
    })
}
