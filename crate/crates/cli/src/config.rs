//! Experiment configuration: a TOML file read as a flat map of dotted keys.
//!
//! `experiment`, `seed` and `output_dir` sit at the top level; everything
//! else is a parameter of the chosen experiment. Nested tables flatten to
//! dotted keys and a leading `parameters.` is dropped, so
//!
//! ```toml
//! [reservoir]
//! n = 300
//! ```
//!
//! and `parameters.reservoir.n = 300` both set `reservoir.n`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Bound;
use std::path::PathBuf;

use toml::Value;

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "ECHOLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    LorenzTrain,
    LorenzForecast,
    FixedPoint,
    Lyapunov,
    Homology,
    GsExamples,
    EmbeddingCheck,
    ValueLearn,
    PdeDirichlet,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Self::LorenzTrain,
        Self::LorenzForecast,
        Self::FixedPoint,
        Self::Lyapunov,
        Self::Homology,
        Self::GsExamples,
        Self::EmbeddingCheck,
        Self::ValueLearn,
        Self::PdeDirichlet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LorenzTrain => "lorenz_train",
            Self::LorenzForecast => "lorenz_forecast",
            Self::FixedPoint => "fixed_point",
            Self::Lyapunov => "lyapunov",
            Self::Homology => "homology",
            Self::GsExamples => "gs_examples",
            Self::EmbeddingCheck => "embedding_check",
            Self::ValueLearn => "value_learn",
            Self::PdeDirichlet => "pde_dirichlet",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn summary(self) -> &'static str {
        match self {
            Self::LorenzTrain => "train an ESN readout on the Lorenz xi record",
            Self::LorenzForecast => "train on next-step xi, then run the closed loop",
            Self::FixedPoint => "Newton fixed point of the autonomous ESN and its Jacobian spectrum",
            Self::Lyapunov => "QR Lyapunov spectrum of the Lorenz map or the autonomous ESN",
            Self::Homology => "H1 persistence of Lorenz, driven or autonomous point sets",
            Self::GsExamples => "tanh(2x+z), eight-box and polar example reservoirs",
            Self::EmbeddingCheck => "conditions C and D on random linear reservoirs",
            Self::ValueLearn => "value of a finite reward chain: exact, Monte Carlo, Bellman residual",
            Self::PdeDirichlet => "random-feature solver for the Dirichlet problem on the disc",
        }
    }

    pub fn params(self) -> Vec<Param> {
        use Kind::*;
        let mut p = Vec::new();
        match self {
            Self::LorenzTrain => {
                p.extend(esn_params());
                p.push(Param::text("task", &["zeta_from_xi", "next_xi"], "zeta_from_xi"));
            }
            Self::LorenzForecast => {
                p.extend(esn_params());
                p.push(Param::int("forecast.steps", "2000", 1.0));
                p.push(Param::float("forecast.threshold", "1.0", Bound::Excluded(0.0), Bound::Unbounded));
            }
            Self::FixedPoint => {
                p.extend(esn_params());
                p.push(Param::text("fixed_point.wing", &["plus", "minus"], "plus"));
                p.push(Param::float("newton.tol", "1e-10", Bound::Excluded(0.0), Bound::Unbounded));
                p.push(Param::int("newton.max_iter", "100", 1.0));
                p.push(Param::float("match.radius", "0.1", Bound::Excluded(0.0), Bound::Unbounded));
            }
            Self::Lyapunov => {
                p.extend(esn_params());
                p.push(Param::text("system", &["lorenz", "esn"], "lorenz"));
                p.push(Param::int("steps", "200000", 100.0));
                p.push(Param::int("transient", "1000", 0.0));
                p.push(Param::int("esn.exponents", "3", 1.0));
            }
            Self::Homology => {
                p.extend(esn_params());
                p.push(Param::text("source", &["lorenz", "driven", "autonomous"], "lorenz"));
                p.push(Param::int("landmarks", "400", 50.0));
                p.push(Param::float("max_eps_factor", "5.0", Bound::Excluded(0.0), Bound::Unbounded));
                p.push(Param::int("transient", "1000", 0.0));
                p.push(Param::int("autonomous.steps", "20000", 1.0));
                p.push(Param::int("autonomous.transient", "2000", 0.0));
            }
            Self::GsExamples => {
                p.push(Param::text("example", &["tanh2x", "signed_power", "polar_sqrt", "polar_square"], "tanh2x"));
                p.push(Param::int("steps", "2000", 1.0));
                p.push(Param::int("burn_in", "500", 0.0));
                p.push(Param::float("epsilon", "0.06283185307179587", Bound::Excluded(0.0), Bound::Unbounded));
                p.push(Param::float("m0", "0.0", Bound::Unbounded, Bound::Unbounded));
                p.push(Param::float("input.amplitude", "0.5", Bound::Included(0.0), Bound::Unbounded));
                p.push(Param::float("alpha", "0.9", Bound::Excluded(0.0), Bound::Unbounded));
                p.push(Param::float("lambda", "0.009", Bound::Included(0.0), Bound::Unbounded));
                p.push(Param::float("k", "0.1", Bound::Unbounded, Bound::Unbounded));
                p.push(Param::float("delta", "0.1", Bound::Unbounded, Bound::Unbounded));
                p.push(Param::int("probes", "10000", 1.0));
                p.push(Param::int("xi_range_steps", "20000", 1.0));
                p.push(Param { key: "polar.rho0", kind: FloatList, default: "[0.25, 1.0, 4.0]", lo: Bound::Included(0.0), hi: Bound::Unbounded });
            }
            Self::EmbeddingCheck => {
                p.push(Param::int("n", "10", 1.0));
                p.push(Param::int("trials", "200", 1.0));
                p.push(Param::int("eigenvalues", "3", 1.0));
                p.push(Param::int("period", "3", 1.0));
            }
            Self::ValueLearn => {
                p.push(Param { key: "chain.transition", kind: FloatMatrix, default: "[[0.7, 0.3], [0.4, 0.6]]", lo: Bound::Included(0.0), hi: Bound::Included(1.0) });
                p.push(Param { key: "chain.rewards", kind: FloatList, default: "[-1.0, 1.0]", lo: Bound::Unbounded, hi: Bound::Unbounded });
                p.push(Param::float("gamma", "0.9", Bound::Included(0.0), Bound::Excluded(1.0)));
                p.push(Param::int("path.length", "20000", 2.0));
                p.push(Param::int("mc.rollouts", "2000", 1.0));
                p.push(Param::int("mc.horizon", "200", 1.0));
                p.push(Param::int("contraction.pairs", "1000", 1.0));
            }
            Self::PdeDirichlet => {
                p.push(Param::int("n", "500", 1.0));
                p.push(Param::int("ell", "500", 1.0));
                p.push(Param::int("ell_prime", "500", 1.0));
                p.push(Param::float("lambda", "0.0", Bound::Included(0.0), Bound::Unbounded));
                p.push(Param::float("half_width", "0.05", Bound::Excluded(0.0), Bound::Unbounded));
                p.push(Param::int("boundary.k", "4", 0.0));
                p.push(Param::text("stacking", &["plain", "normalized"], "plain"));
                p.push(Param { key: "norm_factor", kind: Bool, default: "true", lo: Bound::Unbounded, hi: Bound::Unbounded });
                p.push(Param::text("solver", &["offline", "online"], "offline"));
                p.push(Param::int("online.steps", "100000", 1.0));
                p.push(Param::float("online.a", "1.0", Bound::Excluded(0.0), Bound::Unbounded));
                p.push(Param::float("online.k0", "100.0", Bound::Included(0.0), Bound::Unbounded));
            }
        }
        p
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn esn_params() -> Vec<Param> {
    vec![
        Param::int("reservoir.n", "300", 1.0),
        Param::text("reservoir.scheme", &["uniform", "sparse"], "uniform"),
        Param::float("training.lambda", "1e-9", Bound::Included(0.0), Bound::Unbounded),
        Param::text("training.objective", &["sum", "mean"], "sum"),
        Param::int("training.length", "20000", 1.0),
        Param::int("training.burn_in", "100", 0.0),
        Param::float("lorenz.tau", "0.01", Bound::Excluded(0.0), Bound::Unbounded),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text(&'static [&'static str]),
    FloatList,
    FloatMatrix,
}

/// One accepted parameter. `default` is a TOML value literal; numeric
/// bounds apply to every entry of lists and matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Param {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub lo: Bound<f64>,
    pub hi: Bound<f64>,
}

impl Param {
    fn int(key: &'static str, default: &'static str, min: f64) -> Self {
        Self { key, kind: Kind::Int, default, lo: Bound::Included(min), hi: Bound::Unbounded }
    }

    fn float(key: &'static str, default: &'static str, lo: Bound<f64>, hi: Bound<f64>) -> Self {
        Self { key, kind: Kind::Float, default, lo, hi }
    }

    fn text(key: &'static str, options: &'static [&'static str], default: &'static str) -> Self {
        Self { key, kind: Kind::Text(options), default, lo: Bound::Unbounded, hi: Bound::Unbounded }
    }

    pub fn default_value(&self) -> Value {
        let v = if let Kind::Text(_) = self.kind { format!("v = \"{}\"", self.default) } else { format!("v = {}", self.default) };
        v.parse::<toml::Table>().expect("valid default literal").remove("v").expect("default present")
    }

    fn in_range(&self, x: f64) -> bool {
        let lo = match self.lo {
            Bound::Included(a) => x >= a,
            Bound::Excluded(a) => x > a,
            Bound::Unbounded => true,
        };
        let hi = match self.hi {
            Bound::Included(b) => x <= b,
            Bound::Excluded(b) => x < b,
            Bound::Unbounded => true,
        };
        lo && hi && x.is_finite()
    }

    fn range_text(&self) -> String {
        let lo = match self.lo {
            Bound::Included(a) => format!("[{a}"),
            Bound::Excluded(a) => format!("({a}"),
            Bound::Unbounded => "(-inf".into(),
        };
        let hi = match self.hi {
            Bound::Included(b) => format!("{b}]"),
            Bound::Excluded(b) => format!("{b})"),
            Bound::Unbounded => "inf)".into(),
        };
        format!("{lo}, {hi}")
    }

    /// Type and range check of a supplied value.
    fn check(&self, v: &Value) -> Result<(), String> {
        let num = |v: &Value| match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        let ranged = |x: f64| if self.in_range(x) { Ok(()) } else { Err(format!("{x} is outside {}", self.range_text())) };
        match self.kind {
            Kind::Int => match v {
                Value::Integer(i) => ranged(*i as f64),
                _ => Err(format!("expected an integer, found {}", v.type_str())),
            },
            Kind::Float => num(v).map_or_else(|| Err(format!("expected a number, found {}", v.type_str())), ranged),
            Kind::Bool => match v {
                Value::Boolean(_) => Ok(()),
                _ => Err(format!("expected true or false, found {}", v.type_str())),
            },
            Kind::Text(options) => match v.as_str() {
                Some(s) if options.contains(&s) => Ok(()),
                Some(s) => Err(format!("`{s}` is not one of {}", options.join(", "))),
                None => Err(format!("expected one of {}, found {}", options.join(", "), v.type_str())),
            },
            Kind::FloatList => {
                let items = v.as_array().ok_or_else(|| format!("expected an array of numbers, found {}", v.type_str()))?;
                if items.is_empty() {
                    return Err("expected a nonempty array".into());
                }
                for x in items {
                    ranged(num(x).ok_or("array entries must be numbers")?)?;
                }
                Ok(())
            }
            Kind::FloatMatrix => {
                let rows = v.as_array().ok_or_else(|| format!("expected an array of rows, found {}", v.type_str()))?;
                if rows.is_empty() {
                    return Err("expected a nonempty matrix".into());
                }
                let mut width = None;
                for r in rows {
                    let r = r.as_array().ok_or("matrix rows must be arrays")?;
                    if *width.get_or_insert(r.len()) != r.len() || r.is_empty() {
                        return Err("matrix rows must be nonempty and of equal length".into());
                    }
                    for x in r {
                        ranged(num(x).ok_or("matrix entries must be numbers")?)?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// One validation finding, tied to the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A validated configuration with every parameter of the experiment
/// present (defaults filled in).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub parameters: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key.strip_prefix("parameters.").map(str::to_string).unwrap_or(key), v.clone());
            }
        }
    }
}

/// Parses and validates a configuration. `seed_override`, when given,
/// replaces the file's seed. All problems are reported together.
pub fn parse(text: &str, seed_override: Option<&str>) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![Diagnostic::new("syntax", e.message().to_string())])?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);
    let mut diags = Vec::new();

    let experiment = match flat.remove("experiment") {
        None => {
            diags.push(Diagnostic::new("experiment", "missing required key"));
            None
        }
        Some(v) => {
            let found = v.as_str().and_then(Experiment::from_name);
            if found.is_none() {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                diags.push(Diagnostic::new("experiment", format!("{v} is not one of {}", names.join(", "))));
            }
            found
        }
    };

    let file_seed = flat.remove("seed");
    let seed = match seed_override {
        Some(s) => {
            let v = s.trim().parse::<u64>().ok();
            if v.is_none() {
                diags.push(Diagnostic::new(SEED_ENV, format!("`{s}` is not a nonnegative integer")));
            }
            v
        }
        None => match &file_seed {
            None => {
                diags.push(Diagnostic::new("seed", "missing required key"));
                None
            }
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(v) => {
                diags.push(Diagnostic::new("seed", format!("expected a nonnegative integer, found {v}")));
                None
            }
        },
    };

    let output_dir = match flat.remove("output_dir") {
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        None => {
            diags.push(Diagnostic::new("output_dir", "missing required key"));
            None
        }
        Some(v) => {
            diags.push(Diagnostic::new("output_dir", format!("expected a nonempty path string, found {v}")));
            None
        }
    };

    let mut parameters = BTreeMap::new();
    if let Some(exp) = experiment {
        let specs = exp.params();
        for (key, v) in &flat {
            match specs.iter().find(|p| p.key == key) {
                None => diags.push(Diagnostic::new(key.as_str(), format!("unknown parameter for {exp}"))),
                Some(p) => {
                    if let Err(m) = p.check(v) {
                        diags.push(Diagnostic::new(key.as_str(), m));
                    }
                }
            }
        }
        for p in &specs {
            let v = flat.get(p.key).cloned().unwrap_or_else(|| p.default_value());
            // Integer literals are accepted for real parameters.
            let v = match (p.kind, v) {
                (Kind::Float, Value::Integer(i)) => Value::Float(i as f64),
                (_, v) => v,
            };
            parameters.insert(p.key.to_string(), v);
        }
        if diags.is_empty() {
            cross_checks(exp, &parameters, &mut diags);
        }
    }

    match (experiment, seed, output_dir) {
        (Some(experiment), Some(seed), Some(output_dir)) if diags.is_empty() => {
            Ok(ExperimentConfig { experiment, seed, output_dir, parameters })
        }
        _ => Err(diags),
    }
}

/// Checks spanning several keys, run once every key is individually valid.
fn cross_checks(exp: Experiment, p: &BTreeMap<String, Value>, diags: &mut Vec<Diagnostic>) {
    let int = |k: &str| p[k].as_integer().expect("validated integer");
    match exp {
        Experiment::ValueLearn => {
            let rows = matrix_of(&p["chain.transition"]);
            if rows.len() != rows[0].len() {
                diags.push(Diagnostic::new("chain.transition", "transition matrix must be square"));
            }
            for (i, r) in rows.iter().enumerate() {
                let s: f64 = r.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    diags.push(Diagnostic::new("chain.transition", format!("row {i} sums to {s}, not 1")));
                }
            }
            let n_rewards = p["chain.rewards"].as_array().map_or(0, Vec::len);
            if n_rewards != rows.len() {
                diags.push(Diagnostic::new("chain.rewards", format!("expected {} rewards, one per state, found {n_rewards}", rows.len())));
            }
        }
        Experiment::GsExamples if int("burn_in") >= int("steps") => {
            diags.push(Diagnostic::new("burn_in", "must be smaller than steps"));
        }
        Experiment::Lyapunov if p["system"].as_str() == Some("esn") && int("esn.exponents") > int("reservoir.n") => {
            diags.push(Diagnostic::new("esn.exponents", "cannot exceed reservoir.n"));
        }
        Experiment::Homology if int("transient") >= int("training.length") + int("training.burn_in") => {
            diags.push(Diagnostic::new("transient", "leaves no driven samples"));
        }
        Experiment::Homology if int("autonomous.transient") >= int("autonomous.steps") => {
            diags.push(Diagnostic::new("autonomous.transient", "must be smaller than autonomous.steps"));
        }
        _ => {}
    }
}

fn number(v: &Value) -> f64 {
    match v {
        Value::Float(x) => *x,
        Value::Integer(i) => *i as f64,
        _ => panic!("validated number"),
    }
}

fn matrix_of(v: &Value) -> Vec<Vec<f64>> {
    v.as_array().expect("validated matrix").iter().map(|r| r.as_array().expect("validated row").iter().map(number).collect()).collect()
}

/// Collects every diagnostic; empty iff the configuration can run.
pub fn validate(text: &str, seed_override: Option<&str>) -> Vec<Diagnostic> {
    parse(text, seed_override).err().unwrap_or_default()
}

// Accessors assume validation filled in the key with the right type.
impl ExperimentConfig {
    fn value(&self, key: &str) -> &Value {
        self.parameters.get(key).unwrap_or_else(|| panic!("parameter `{key}` not declared for {}", self.experiment))
    }

    pub fn usize(&self, key: &str) -> usize {
        self.value(key).as_integer().expect("integer parameter") as usize
    }

    pub fn float(&self, key: &str) -> f64 {
        number(self.value(key))
    }

    pub fn text(&self, key: &str) -> &str {
        self.value(key).as_str().expect("text parameter")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.value(key).as_bool().expect("boolean parameter")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        self.value(key).as_array().expect("list parameter").iter().map(number).collect()
    }

    pub fn matrix(&self, key: &str) -> Vec<Vec<f64>> {
        matrix_of(self.value(key))
    }

    /// JSON echo of the resolved configuration.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment.name(),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "parameters": serde_json::to_value(&self.parameters).expect("TOML values map to JSON"),
        })
    }
}
