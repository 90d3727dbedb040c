//! Evaluate-interface over opaque decision systems.
//!
//! A [`SystemUnderTest`] is anything that maps an input vector to a
//! categorical or integer output. The three built-in systems have known
//! ground truth; [`ExternalSystem`] wraps an arbitrary command-line
//! program behind the same interface.

use std::fmt;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point in a system's N-dimensional continuous input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputVector(pub Vec<f64>);

impl InputVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("input vector must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("input vector contains non-finite value".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Output of a system under test. Equality is exact: labels compare by
/// string, scores by integer, and the two variants never compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputValue {
    Label(String),
    Score(i64),
}

impl fmt::Display for OutputValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputValue::Label(s) => write!(f, "{s}"),
            OutputValue::Score(n) => write!(f, "{n}"),
        }
    }
}

/// Per-dimension lower/upper limits of the input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::InvalidInput("bounds low/high length mismatch".into()));
        }
        // NaN must be rejected too, so compare via partial_cmp rather than >=.
        if low.iter().zip(&high).any(|(l, h)| l.partial_cmp(h) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidInput("bounds require low[i] < high[i]".into()));
        }
        Ok(Self { low, high })
    }

    /// Uniform box with the same limits in every dimension.
    pub fn symmetric(dim: usize, low: f64, high: f64) -> Self {
        Self {
            low: vec![low; dim],
            high: vec![high; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.low[i], self.high[i]);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.low[i] && *v <= self.high[i])
    }
}

/// An opaque decision system: deterministic, side-effect-free from the
/// pipeline's perspective.
pub trait SystemUnderTest: Send + Sync {
    fn name(&self) -> &str;
    fn input_dim(&self) -> usize;
    fn bounds(&self) -> &Bounds;
    fn evaluate(&self, x: &InputVector) -> Result<OutputValue>;
}

struct BuiltinSystem {
    name: &'static str,
    bounds: Bounds,
    eval: fn(&[f64]) -> OutputValue,
}

impl SystemUnderTest for BuiltinSystem {
    fn name(&self) -> &str {
        self.name
    }

    fn input_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &InputVector) -> Result<OutputValue> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        Ok((self.eval)(x.values()))
    }
}

/// 1-D threshold system: "Category A" iff x0 <= 5.0, else "Category B".
/// Bounds [-10, 10].
pub fn make_system_1_threshold() -> Box<dyn SystemUnderTest> {
    Box::new(BuiltinSystem {
        name: "system_1_threshold",
        bounds: Bounds::symmetric(1, -10.0, 10.0),
        eval: |x| {
            if x[0] <= 5.0 {
                OutputValue::Label("Category A".into())
            } else {
                OutputValue::Label("Category B".into())
            }
        },
    })
}

/// 2-D combined-condition system over [-5, 5]^2: High iff both positive,
/// Low iff both negative, Medium otherwise.
pub fn make_system_2_combined() -> Box<dyn SystemUnderTest> {
    Box::new(BuiltinSystem {
        name: "system_2_combined",
        bounds: Bounds::symmetric(2, -5.0, 5.0),
        eval: |x| {
            if x[0] > 0.0 && x[1] > 0.0 {
                OutputValue::Label("High".into())
            } else if x[0] < 0.0 && x[1] < 0.0 {
                OutputValue::Label("Low".into())
            } else {
                OutputValue::Label("Medium".into())
            }
        },
    })
}

/// 1-D range system over [-5, 5]: score 10 strictly inside (-2, 2),
/// score 20 outside. The two branches are exhaustive.
pub fn make_system_3_nonlinear() -> Box<dyn SystemUnderTest> {
    Box::new(BuiltinSystem {
        name: "system_3_nonlinear",
        bounds: Bounds::symmetric(1, -5.0, 5.0),
        eval: |x| {
            if x[0] > -2.0 && x[0] < 2.0 {
                OutputValue::Score(10)
            } else {
                OutputValue::Score(20)
            }
        },
    })
}

pub fn builtin_systems() -> Vec<Box<dyn SystemUnderTest>> {
    vec![
        make_system_1_threshold(),
        make_system_2_combined(),
        make_system_3_nonlinear(),
    ]
}

pub fn make_builtin(name: &str) -> Option<Box<dyn SystemUnderTest>> {
    match name {
        "system_1_threshold" => Some(make_system_1_threshold()),
        "system_2_combined" => Some(make_system_2_combined()),
        "system_3_nonlinear" => Some(make_system_3_nonlinear()),
        _ => None,
    }
}

/// How to interpret an external command's stdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Label,
    Score,
}

/// Wraps an external command as a system under test. Each evaluation
/// spawns one process; `{i}` in the argument template expands to the
/// i-th input component as a shortest round-trip decimal.
pub struct ExternalSystem {
    name: String,
    cmd: String,
    arg_template: String,
    parse_mode: ParseMode,
    bounds: Bounds,
}

pub fn make_external_system(
    cmd: &str,
    arg_template: &str,
    parse_mode: ParseMode,
    input_dim: usize,
    bounds: Bounds,
) -> Result<ExternalSystem> {
    if bounds.dim() != input_dim || input_dim == 0 {
        return Err(Error::InvalidInput("external system bounds/dim mismatch".into()));
    }
    Ok(ExternalSystem {
        name: format!("external_{}", cmd.rsplit('/').next().unwrap_or(cmd)),
        cmd: cmd.to_string(),
        arg_template: arg_template.to_string(),
        parse_mode,
        bounds,
    })
}

impl ExternalSystem {
    fn render_args(&self, x: &[f64]) -> Vec<String> {
        self.arg_template
            .split_whitespace()
            .map(|tok| {
                let mut out = tok.to_string();
                for (i, v) in x.iter().enumerate() {
                    out = out.replace(&format!("{{{i}}}"), &format!("{v}"));
                }
                out
            })
            .collect()
    }
}

impl SystemUnderTest for ExternalSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &InputVector) -> Result<OutputValue> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        let output = Command::new(&self.cmd)
            .args(self.render_args(x.values()))
            .output()
            .map_err(|e| Error::External(format!("failed to spawn {}: {e}", self.cmd)))?;
        let stdout = String::from_utf8_lossy(&output.stdout).trim().to_string();
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr).trim().to_string();
            return Err(Error::External(format!(
                "{} exited with {}: stdout={stdout:?} stderr={stderr:?}",
                self.cmd, output.status
            )));
        }
        match self.parse_mode {
            ParseMode::Label => Ok(OutputValue::Label(stdout)),
            ParseMode::Score => stdout
                .parse::<i64>()
                .map(OutputValue::Score)
                .map_err(|_| Error::External(format!("unparseable score output: {stdout:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(sys: &dyn SystemUnderTest, x: &[f64]) -> OutputValue {
        sys.evaluate(&InputVector::new(x.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn system_1_threshold_semantics() {
        let sys = make_system_1_threshold();
        assert_eq!(eval(sys.as_ref(), &[4.0]), OutputValue::Label("Category A".into()));
        // threshold itself is inclusive
        assert_eq!(eval(sys.as_ref(), &[5.0]), OutputValue::Label("Category A".into()));
        assert_eq!(eval(sys.as_ref(), &[5.04]), OutputValue::Label("Category B".into()));
        assert_eq!(eval(sys.as_ref(), &[-10.0]), OutputValue::Label("Category A".into()));
    }

    #[test]
    fn system_2_region_semantics() {
        let sys = make_system_2_combined();
        assert_eq!(eval(sys.as_ref(), &[1.0, 1.0]), OutputValue::Label("High".into()));
        assert_eq!(eval(sys.as_ref(), &[-1.0, -1.0]), OutputValue::Label("Low".into()));
        assert_eq!(eval(sys.as_ref(), &[0.0, 0.0]), OutputValue::Label("Medium".into()));
        assert_eq!(eval(sys.as_ref(), &[3.0, -3.0]), OutputValue::Label("Medium".into()));
    }

    #[test]
    fn system_3_range_semantics() {
        let sys = make_system_3_nonlinear();
        assert_eq!(eval(sys.as_ref(), &[0.0]), OutputValue::Score(10));
        assert_eq!(eval(sys.as_ref(), &[2.0]), OutputValue::Score(20));
        assert_eq!(eval(sys.as_ref(), &[-5.0]), OutputValue::Score(20));
        assert_eq!(eval(sys.as_ref(), &[1.99]), OutputValue::Score(10));
    }

    #[test]
    fn output_equality_is_exact_and_cross_variant_unequal() {
        assert_eq!(OutputValue::Score(10), OutputValue::Score(10));
        assert_ne!(OutputValue::Score(10), OutputValue::Label("10".into()));
        assert_ne!(OutputValue::Label("A".into()), OutputValue::Label("B".into()));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = make_system_1_threshold();
        let x = InputVector::new(vec![1.0, 2.0]).unwrap();
        assert!(sys.evaluate(&x).is_err());
    }

    #[test]
    fn builtin_evaluation_is_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for sys in builtin_systems() {
            let b = sys.bounds().clone();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..b.dim())
                    .map(|i| rng.gen_range(b.low[i]..b.high[i]))
                    .collect();
                let x = InputVector::new(x).unwrap();
                let first = sys.evaluate(&x).unwrap();
                assert_eq!(sys.evaluate(&x).unwrap(), first);
            }
        }
    }

    #[test]
    fn evaluation_is_total_slightly_out_of_bounds() {
        let sys = make_system_1_threshold();
        assert_eq!(eval(sys.as_ref(), &[10.5]), OutputValue::Label("Category B".into()));
        let sys3 = make_system_3_nonlinear();
        assert_eq!(eval(sys3.as_ref(), &[-5.3]), OutputValue::Score(20));
    }

    #[test]
    fn external_system_constant_label() {
        let sys = make_external_system(
            "/bin/echo",
            "Category A",
            ParseMode::Label,
            1,
            Bounds::symmetric(1, -1.0, 1.0),
        )
        .unwrap();
        assert_eq!(eval(&sys, &[0.5]), OutputValue::Label("Category A".into()));
    }

    #[test]
    fn external_system_score_and_arg_substitution() {
        let sys = make_external_system(
            "/bin/echo",
            "20",
            ParseMode::Score,
            1,
            Bounds::symmetric(1, -1.0, 1.0),
        )
        .unwrap();
        assert_eq!(eval(&sys, &[0.0]), OutputValue::Score(20));

        let echo_input = make_external_system(
            "/bin/echo",
            "{0}",
            ParseMode::Label,
            1,
            Bounds::symmetric(1, -1.0, 1.0),
        )
        .unwrap();
        assert_eq!(eval(&echo_input, &[0.25]), OutputValue::Label("0.25".into()));
    }

    #[test]
    fn external_system_nonzero_exit_is_error() {
        let sys = make_external_system(
            "/bin/false",
            "",
            ParseMode::Label,
            1,
            Bounds::symmetric(1, -1.0, 1.0),
        )
        .unwrap();
        let x = InputVector::new(vec![0.0]).unwrap();
        assert!(sys.evaluate(&x).is_err());
    }

    #[test]
    fn external_system_unparseable_score_is_error() {
        let sys = make_external_system(
            "/bin/echo",
            "not-a-number",
            ParseMode::Score,
            1,
            Bounds::symmetric(1, -1.0, 1.0),
        )
        .unwrap();
        let x = InputVector::new(vec![0.0]).unwrap();
        assert!(sys.evaluate(&x).is_err());
    }
}
