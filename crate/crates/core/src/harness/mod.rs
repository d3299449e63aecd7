//! Experiment runner behind the command-line front end. Each command takes
//! a declarative spec (deserializable from JSON) and produces a report with
//! a fixed CSV schema.

mod bias;
mod lower_bound;
mod phi;
mod rnmm;
mod sweep;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};
use crate::lipschitz::LipschitzProfile;
use crate::losses::{Dataset, LogisticProblem, PlantedLogistic};

pub use bias::{
    cmd_bias_oracle, random_discrete_distribution, BiasOracleReport, BiasOracleRow, BiasOracleSpec,
};
pub use lower_bound::{cmd_lower_bound_demo, LowerBoundReport, LowerBoundRow, LowerBoundSpec};
pub use phi::{cmd_phi_scaling, PhiScalingReport, PhiScalingRow, PhiScalingSpec};
pub use rnmm::{cmd_rnmm_pipeline, rnmm_select, RnmmReport, RnmmRow, RnmmSpec};
pub use sweep::{cmd_sweep_clip, MetricKind, SweepCell, SweepReport, SweepRow, SweepSpec};

/// A fully specified experiment, tagged by command name.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    SweepClip(SweepSpec),
    RnmmPipeline(RnmmSpec),
    PhiScaling(PhiScalingSpec),
    BiasOracle(BiasOracleSpec),
    LowerBoundDemo(LowerBoundSpec),
}

impl ExperimentSpec {
    pub fn run(&self) -> Result<Box<dyn CsvReport>> {
        Ok(match self {
            ExperimentSpec::SweepClip(s) => Box::new(cmd_sweep_clip(s)?),
            ExperimentSpec::RnmmPipeline(s) => Box::new(cmd_rnmm_pipeline(s)?),
            ExperimentSpec::PhiScaling(s) => Box::new(cmd_phi_scaling(s)?),
            ExperimentSpec::BiasOracle(s) => Box::new(cmd_bias_oracle(s)?),
            ExperimentSpec::LowerBoundDemo(s) => Box::new(cmd_lower_bound_demo(s)?),
        })
    }
}

/// A report with a fixed CSV header.
pub trait CsvReport {
    fn header(&self) -> &'static [&'static str];

    fn records(&self) -> Vec<Vec<String>>;

    /// Description of failed checks, if the command asserts anything.
    fn failure(&self) -> Option<String> {
        None
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for rec in self.records() {
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Shortest round-trip decimal rendering.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Accepts a JSON number or one of the strings `"inf"`, `"infinity"`.
pub fn parse_f64_or_inf(s: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|_| Error::InvalidConfig(format!("not a number: {s:?}"))),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

pub(crate) fn de_f64_or_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match NumOrStr::deserialize(d)? {
        NumOrStr::Num(x) => Ok(x),
        NumOrStr::Str(s) => parse_f64_or_inf(&s).map_err(serde::de::Error::custom),
    }
}

/// A clip-norm candidate: an absolute value, a percentile of the
/// per-sample Lipschitz profile (`"p<q>"`), or no clipping (`"inf"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipCandidate {
    Absolute(f64),
    Percentile(f64),
    Infinite,
}

impl ClipCandidate {
    pub fn resolve(&self, profile: &LipschitzProfile) -> Result<f64> {
        match *self {
            ClipCandidate::Absolute(t) => Ok(t),
            ClipCandidate::Percentile(q) => profile.percentile(q),
            ClipCandidate::Infinite => Ok(f64::INFINITY),
        }
    }

    /// Value of the `tau_kind` CSV column.
    pub fn kind_label(&self) -> String {
        match *self {
            ClipCandidate::Absolute(_) => "abs".into(),
            ClipCandidate::Percentile(q) => format!("p{q}"),
            ClipCandidate::Infinite => "inf".into(),
        }
    }
}

impl FromStr for ClipCandidate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(q) = t.strip_prefix('p').or_else(|| t.strip_prefix('P')) {
            let q: f64 = q
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad percentile token {s:?}")))?;
            if !(0.0..=100.0).contains(&q) {
                return Err(Error::InvalidConfig(format!(
                    "percentile out of range in {s:?}"
                )));
            }
            return Ok(ClipCandidate::Percentile(q));
        }
        let v = parse_f64_or_inf(t)?;
        if v == f64::INFINITY {
            Ok(ClipCandidate::Infinite)
        } else if v > 0.0 {
            Ok(ClipCandidate::Absolute(v))
        } else {
            Err(Error::InvalidConfig(format!(
                "clip norm must be positive, got {s:?}"
            )))
        }
    }
}

impl fmt::Display for ClipCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClipCandidate::Absolute(v) => write!(f, "{v}"),
            ClipCandidate::Percentile(q) => write!(f, "p{q}"),
            ClipCandidate::Infinite => write!(f, "inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ClipCandidate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(x) => ClipCandidate::from_str(&x.to_string()),
            NumOrStr::Str(s) => ClipCandidate::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Where the training (and optional held-out) data come from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        append_bias: bool,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
    Planted {
        generator: PlantedLogistic,
        /// Size of a held-out split labelled by the same rule; 0 for none.
        #[serde(default)]
        n_test: usize,
        #[serde(default)]
        seed: u64,
    },
}

/// Training problem plus optional held-out data with aligned class count.
pub struct LoadedData {
    pub problem: LogisticProblem,
    pub test: Option<Dataset>,
}

impl DataSource {
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSource::Csv {
                path,
                append_bias,
                test_path,
            } => {
                let mut train = Dataset::from_csv_path(path, *append_bias)?;
                let mut test = test_path
                    .as_ref()
                    .map(|p| Dataset::from_csv_path(p, *append_bias))
                    .transpose()?;
                if let Some(t) = test.as_mut() {
                    if t.dim() != train.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: train.dim(),
                            got: t.dim(),
                        });
                    }
                    let m = train.num_classes().max(t.num_classes());
                    train.set_num_classes(m)?;
                    t.set_num_classes(m)?;
                }
                Ok(LoadedData {
                    problem: LogisticProblem::new(train),
                    test,
                })
            }
            DataSource::Planted {
                generator,
                n_test,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let sample = generator.generate(&mut rng)?;
                let test = if *n_test > 0 {
                    Some(generator.generate_with_rule(&sample.rule, *n_test, &mut rng)?)
                } else {
                    None
                };
                Ok(LoadedData {
                    problem: LogisticProblem::new(sample.data),
                    test,
                })
            }
        }
    }
}

pub(crate) fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg.into()))
    }
}

fn default_delta() -> f64 {
    1e-5
}

fn default_nu() -> f64 {
    1.0
}

fn default_reference_iterations() -> usize {
    2000
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_tokens() {
        assert_eq!(
            "p0".parse::<ClipCandidate>().unwrap(),
            ClipCandidate::Percentile(0.0)
        );
        assert_eq!(
            "p37.5".parse::<ClipCandidate>().unwrap(),
            ClipCandidate::Percentile(37.5)
        );
        assert_eq!(
            "2.5".parse::<ClipCandidate>().unwrap(),
            ClipCandidate::Absolute(2.5)
        );
        assert_eq!(
            "inf".parse::<ClipCandidate>().unwrap(),
            ClipCandidate::Infinite
        );
        assert!("p101".parse::<ClipCandidate>().is_err());
        assert!("-1".parse::<ClipCandidate>().is_err());
        assert!("abc".parse::<ClipCandidate>().is_err());
    }

    #[test]
    fn percentile_tokens_resolve_to_extremes() {
        let prof = LipschitzProfile::from_constants(&[5.0, 2.0, 9.0, 3.0]).unwrap();
        assert_eq!(ClipCandidate::Percentile(0.0).resolve(&prof).unwrap(), 2.0);
        assert_eq!(
            ClipCandidate::Percentile(100.0).resolve(&prof).unwrap(),
            9.0
        );
        assert_eq!(
            ClipCandidate::Infinite.resolve(&prof).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn infinity_strings() {
        assert_eq!(parse_f64_or_inf("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_f64_or_inf(" Infinity ").unwrap(), f64::INFINITY);
        assert_eq!(parse_f64_or_inf("0.3").unwrap(), 0.3);
        assert!(parse_f64_or_inf("x").is_err());
    }
}
