//! Result records of checks, PPNs and studies, with their JSON form.

use serde::{Deserialize, Serialize};

use crate::data::pass_fail;
use crate::error::{Error, Result};

/// JSON numbers cannot hold ±∞ or NaN; those are written as the strings
/// "inf", "-inf" and "nan" so reports round-trip exactly.
mod float_text {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Num(f64),
        Text(String),
    }

    pub(super) fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub(super) fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| to_repr(*x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(from_repr::<D::Error>)
                .collect::<Result<_, _>>()
                .map_err(D::Error::custom)
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(to_repr).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr::<D::Error>).transpose()
        }
    }
}

/// Fraction of replicate diagnostics strictly greater than the observed one.
pub fn p_value(observed: f64, replicates: &[f64]) -> f64 {
    let above = replicates.iter().filter(|r| **r > observed).count();
    above as f64 / replicates.len() as f64
}

/// Outcome of a predictive check for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub model: String,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub pass: bool,
    #[serde(with = "float_text")]
    pub observed: f64,
    #[serde(with = "float_text::vec")]
    pub replicates: Vec<f64>,
    /// Harmonic-mean log evidence of the replication fit, for sampled models.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "float_text::option")]
    pub log_evidence: Option<f64>,
}

impl CheckOutcome {
    /// Locate `observed` among `replicates` and apply the pass rule.
    pub fn from_samples(model: impl Into<String>, observed: f64, replicates: Vec<f64>, alpha: f64) -> Result<Self> {
        if replicates.is_empty() {
            return Err(Error::param("replicates", "must be at least 1"));
        }
        check_alpha(alpha)?;
        let p = p_value(observed, &replicates);
        Ok(CheckOutcome {
            model: model.into(),
            p_value: p,
            pass: pass_fail(p, alpha),
            observed,
            replicates,
            log_evidence: None,
        })
    }

    /// The p-value implied by the stored samples.
    pub fn recomputed_p(&self) -> f64 {
        p_value(self.observed, &self.replicates)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Outcome of one posterior predictive null: the owner's diagnostic on
/// its own replicates (`samples_a`) and on the source model's replicates
/// (`samples_b`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpnOutcome {
    pub diag_owner: String,
    pub data_source: String,
    #[serde(with = "float_text")]
    pub sym_kl: f64,
    pub fools: bool,
    #[serde(with = "float_text::vec")]
    pub samples_a: Vec<f64>,
    #[serde(with = "float_text::vec")]
    pub samples_b: Vec<f64>,
    /// Set when run outside a study, i.e. without first checking that both
    /// models pass.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub standalone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictClass {
    /// Each model's replicates fool the other's check.
    Equivalent,
    /// A's replicates fool B's check, but not the other way round.
    ADominates,
    /// B's replicates fool A's check, but not the other way round.
    BDominates,
    /// Neither fools the other.
    Complementary,
}

impl VerdictClass {
    /// Classify from "A's data fools B" and "B's data fools A".
    pub fn classify(a_fools_b: bool, b_fools_a: bool) -> Self {
        match (a_fools_b, b_fools_a) {
            (true, true) => VerdictClass::Equivalent,
            (true, false) => VerdictClass::ADominates,
            (false, true) => VerdictClass::BDominates,
            (false, false) => VerdictClass::Complementary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub a: String,
    pub b: String,
    pub class: VerdictClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMode {
    /// Every ordered pair of passing models.
    #[default]
    Full,
    /// Only consecutive passing models, the later one owning the diagnostic.
    Chain,
}

/// The grid of a study: checks on the diagonal, PPNs off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub models: Vec<String>,
    pub alpha: f64,
    pub tau: f64,
    pub mode: StudyMode,
    pub diagonal: Vec<CheckOutcome>,
    pub pairs: Vec<PpnOutcome>,
    pub verdicts: Vec<Verdict>,
}

impl StudyReport {
    pub fn check(&self, model: &str) -> Option<&CheckOutcome> {
        self.diagonal.iter().find(|c| c.model == model)
    }

    pub fn pair(&self, owner: &str, source: &str) -> Option<&PpnOutcome> {
        self.pairs.iter().find(|p| p.diag_owner == owner && p.data_source == source)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
