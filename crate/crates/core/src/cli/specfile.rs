//! JSON study files: parsing and validation into library types.

use super::CliError;
use crate::bayespower::Prior;
use crate::design::{shape_profile, Allocation, ContrastSet, ShapeModel, TwoStageDesign};
use crate::freqpower::DeltaSource;
use crate::gaussian::QmcConfig;
use crate::simengine::{SsrMethod, SsrRule};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    arms: RawArms,
    stages: Option<OneOrMany<RawStage>>,
    test: RawTest,
    ssr: Option<RawSsr>,
    simulate: Option<RawSimulate>,
    qmc: Option<RawQmc>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArms {
    doses: Vec<f64>,
    sigma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    label: Option<String>,
    n1: f64,
    n2: f64,
    n_max: f64,
    phi1: Option<Vec<f64>>,
    phi2: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    alpha: f64,
    contrasts: RawContrasts,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContrasts {
    shapes: Option<Vec<ShapeModel>>,
    matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum RuleKind {
    Cp,
    Pp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSsr {
    target_power: f64,
    cp_min: Option<f64>,
    pp_min: Option<f64>,
    methods: Option<Vec<RawMethod>>,
    // single-method shorthand
    rule: Option<RuleKind>,
    label: Option<String>,
    delta_source: Option<DeltaSource>,
    prior: Option<RawPrior>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    label: Option<String>,
    rule: RuleKind,
    delta_source: Option<DeltaSource>,
    prior: Option<RawPrior>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawPrior {
    Flat,
    Conjugate { mu0: Vec<f64>, tau0: Precision },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Precision {
    Common(f64),
    PerArm(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    true_mu: Option<Vec<f64>>,
    scenarios: Option<Vec<RawScenario>>,
    replicates: u64,
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    label: String,
    true_mu: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQmc {
    sample_budget: Option<usize>,
    randomizations: Option<usize>,
    seed: Option<u64>,
    abs_tol: Option<f64>,
}

/// One interim timing of the study.
#[derive(Debug, Clone)]
pub struct Timing {
    pub label: String,
    pub design: TwoStageDesign,
}

/// An interim rule with its own promising-zone bound.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub method: SsrMethod,
    pub promising_min: f64,
}

#[derive(Debug, Clone)]
pub struct SimulateSpec {
    pub scenarios: Vec<(String, Vec<f64>)>,
    pub replicates: u64,
    pub seed: u64,
}

/// A validated study file.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub doses: Vec<f64>,
    pub contrasts: ContrastSet,
    pub contrast_labels: Vec<String>,
    /// Empty when the file has no `stages` section.
    pub timings: Vec<Timing>,
    pub methods: Vec<MethodSpec>,
    pub simulate: Option<SimulateSpec>,
    pub qmc: QmcConfig,
    pub target_power: f64,
}

fn err(code: &'static str, path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::validation(code, path, message)
}

fn check_len(path: &str, v: &[f64], k: usize) -> Result<(), CliError> {
    if v.len() != k {
        return Err(err(
            "E_DIMENSION",
            path,
            format!("expected {k} entries to match the doses, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(err("E_VALUE", path, "entries must be finite"));
    }
    Ok(())
}

fn allocation(path: &str, phi: Option<Vec<f64>>, k: usize) -> Result<Allocation, CliError> {
    match phi {
        None => Ok(Allocation::equal(k)),
        Some(v) => {
            check_len(path, &v, k)?;
            Allocation::new(v).map_err(|e| err("E_ALLOCATION", path, e.to_string()))
        }
    }
}

impl StudySpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            err(
                "E_PARSE",
                path,
                format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            )
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawSpec) -> Result<Self, CliError> {
        let doses = raw.arms.doses;
        crate::design::validate_doses(&doses).map_err(|e| err("E_DOSES", "arms.doses", e.to_string()))?;
        let k = doses.len();
        let sigma = raw.arms.sigma;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(err("E_SIGMA", "arms.sigma", format!("must be positive, got {sigma}")));
        }
        let alpha = raw.test.alpha;
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(err("E_ALPHA", "test.alpha", format!("must be in (0, 0.5), got {alpha}")));
        }

        let stages: Vec<RawStage> = match raw.stages {
            None => Vec::new(),
            Some(OneOrMany::One(s)) => vec![s],
            Some(OneOrMany::Many(v)) => v,
        };
        let many = stages.len() > 1;
        let mut parsed_stages = Vec::with_capacity(stages.len());
        for (i, s) in stages.into_iter().enumerate() {
            let base = if many { format!("stages[{i}]") } else { "stages".to_string() };
            for (name, v) in [("n1", s.n1), ("n2", s.n2), ("n_max", s.n_max)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(err("E_STAGE_SIZE", format!("{base}.{name}"), format!("must be positive, got {v}")));
                }
            }
            if s.n_max < s.n2 {
                return Err(err(
                    "E_NMAX_BELOW_N2",
                    format!("{base}.n_max"),
                    format!("n_max ({}) must be at least n2 ({})", s.n_max, s.n2),
                ));
            }
            let phi1 = allocation(&format!("{base}.phi1"), s.phi1, k)?;
            let phi2 = allocation(&format!("{base}.phi2"), s.phi2, k)?;
            let label = s.label.unwrap_or_else(|| if many { format!("timing{}", i + 1) } else { "main".into() });
            parsed_stages.push((label, s.n1, s.n2, s.n_max, phi1, phi2));
        }

        // optimal contrasts use the first-stage allocation
        let phi_for_contrasts = parsed_stages
            .first()
            .map(|s| s.4.clone())
            .unwrap_or_else(|| Allocation::equal(k));
        let (contrasts, contrast_labels) = match (raw.test.contrasts.shapes, raw.test.contrasts.matrix) {
            (Some(shapes), None) => {
                if shapes.is_empty() {
                    return Err(err("E_CONTRAST", "test.contrasts.shapes", "at least one shape is required"));
                }
                let mut rows = Vec::with_capacity(shapes.len());
                for (i, m) in shapes.iter().enumerate() {
                    let path = format!("test.contrasts.shapes[{i}]");
                    if let ShapeModel::Custom { means } = m {
                        check_len(&format!("{path}.means"), means, k)?;
                    }
                    let profile = shape_profile(m, &doses).map_err(|e| err("E_CONTRAST", &path, e.to_string()))?;
                    let c = crate::design::optimal_contrast(&profile, &phi_for_contrasts)
                        .map_err(|e| err("E_CONTRAST", &path, e.to_string()))?;
                    rows.push(c);
                }
                let set = ContrastSet::new(rows).map_err(|e| err("E_CONTRAST", "test.contrasts.shapes", e.to_string()))?;
                (set, shapes.iter().map(|m| m.label()).collect())
            }
            (None, Some(matrix)) => {
                for (i, row) in matrix.iter().enumerate() {
                    check_len(&format!("test.contrasts.matrix[{i}]"), row, k)?;
                }
                if matrix.is_empty() {
                    return Err(err("E_CONTRAST", "test.contrasts.matrix", "at least one row is required"));
                }
                let labels = (0..matrix.len()).map(|i| format!("row{}", i + 1)).collect();
                let set = ContrastSet::normalized(matrix).map_err(|e| err("E_CONTRAST", "test.contrasts.matrix", e.to_string()))?;
                (set, labels)
            }
            _ => {
                return Err(err(
                    "E_CONTRAST",
                    "test.contrasts",
                    "give exactly one of `shapes` or `matrix`",
                ))
            }
        };

        let mut qmc = QmcConfig::default();
        if let Some(q) = raw.qmc {
            qmc.sample_budget = q.sample_budget.unwrap_or(qmc.sample_budget);
            qmc.randomizations = q.randomizations.unwrap_or(qmc.randomizations);
            qmc.seed = q.seed.unwrap_or(qmc.seed);
            qmc.abs_tol = q.abs_tol.unwrap_or(qmc.abs_tol);
            qmc.validate().map_err(|e| err("E_QMC", "qmc", e.to_string()))?;
        }

        let (target_power, cp_min, methods) = match raw.ssr {
            None => (0.8, 0.3, Vec::new()),
            Some(ssr) => {
                let target = ssr.target_power;
                if !(target > 0.5 && target < 1.0) {
                    return Err(err("E_POWER", "ssr.target_power", format!("must be in (0.5, 1), got {target}")));
                }
                let cp_min = ssr.cp_min.unwrap_or(0.3);
                let pp_min = ssr.pp_min.unwrap_or(cp_min);
                for (name, v) in [("cp_min", cp_min), ("pp_min", pp_min)] {
                    if !(v > 0.0 && v < target) {
                        return Err(err(
                            "E_ZONE_BOUND",
                            format!("ssr.{name}"),
                            format!("must be in (0, target_power), got {v}"),
                        ));
                    }
                }
                let raw_methods = match (ssr.methods, ssr.rule) {
                    (Some(list), None) => list,
                    (None, Some(rule)) => vec![RawMethod {
                        label: ssr.label,
                        rule,
                        delta_source: ssr.delta_source,
                        prior: ssr.prior,
                    }],
                    (None, None) => Vec::new(),
                    (Some(_), Some(_)) => {
                        return Err(err("E_METHOD_PARAMS", "ssr", "give either `methods` or the `rule` shorthand, not both"))
                    }
                };
                let many = raw_methods.len() > 1;
                let mut methods = Vec::with_capacity(raw_methods.len());
                for (i, m) in raw_methods.into_iter().enumerate() {
                    let path = if many { format!("ssr.methods[{i}]") } else { "ssr".to_string() };
                    methods.push(method(&path, m, i, k, cp_min, pp_min)?);
                }
                (target, cp_min, methods)
            }
        };

        let timings = parsed_stages
            .into_iter()
            .map(|(label, n1, n2, n_max, alloc1, alloc2)| {
                let design = TwoStageDesign {
                    doses: doses.clone(),
                    sigma,
                    alloc1,
                    alloc2,
                    n1,
                    n2,
                    contrasts: contrasts.clone(),
                    alpha,
                    beta: 1.0 - target_power,
                    n_max,
                    promising_min: cp_min,
                };
                design
                    .validate()
                    .map_err(|e| err("E_DESIGN", "stages", e.to_string()))?;
                Ok(Timing { label, design })
            })
            .collect::<Result<Vec<_>, CliError>>()?;

        let simulate = match raw.simulate {
            None => None,
            Some(sim) => {
                let scenarios = match (sim.true_mu, sim.scenarios) {
                    (Some(mu), None) => {
                        check_len("simulate.true_mu", &mu, k)?;
                        vec![("truth".to_string(), mu)]
                    }
                    (None, Some(list)) if !list.is_empty() => {
                        let mut out = Vec::with_capacity(list.len());
                        for (i, s) in list.into_iter().enumerate() {
                            check_len(&format!("simulate.scenarios[{i}].true_mu"), &s.true_mu, k)?;
                            out.push((s.label, s.true_mu));
                        }
                        out
                    }
                    _ => {
                        return Err(err(
                            "E_SIMULATE",
                            "simulate",
                            "give exactly one of `true_mu` or a non-empty `scenarios` list",
                        ))
                    }
                };
                if sim.replicates < crate::simengine::MIN_REPLICATES {
                    return Err(err(
                        "E_SIMULATE",
                        "simulate.replicates",
                        format!("at least {} replicates are required", crate::simengine::MIN_REPLICATES),
                    ));
                }
                Some(SimulateSpec {
                    scenarios,
                    replicates: sim.replicates,
                    seed: sim.seed,
                })
            }
        };

        Ok(Self {
            doses,
            contrasts,
            contrast_labels,
            timings,
            methods,
            simulate,
            qmc,
            target_power,
        })
    }

    /// The single timing selected by `label`, or the only one.
    pub fn timing(&self, label: Option<&str>) -> Result<&Timing, CliError> {
        if self.timings.is_empty() {
            return Err(err("E_MISSING", "stages", "this command needs a `stages` section"));
        }
        match label {
            Some(l) => self
                .timings
                .iter()
                .find(|t| t.label == l)
                .ok_or_else(|| err("E_SELECT", "--timing", format!("no timing labelled `{l}`"))),
            None if self.timings.len() == 1 => Ok(&self.timings[0]),
            None => Err(err("E_SELECT", "--timing", "several timings are defined; pick one with --timing")),
        }
    }

    /// The single method selected by `label`, or the only one.
    pub fn method(&self, label: Option<&str>) -> Result<&MethodSpec, CliError> {
        if self.methods.is_empty() {
            return Err(err("E_MISSING", "ssr", "this command needs an `ssr` section with a rule"));
        }
        match label {
            Some(l) => self
                .methods
                .iter()
                .find(|m| m.method.label == l)
                .ok_or_else(|| err("E_SELECT", "--method", format!("no method labelled `{l}`"))),
            None if self.methods.len() == 1 => Ok(&self.methods[0]),
            None => Err(err("E_SELECT", "--method", "several methods are defined; pick one with --method")),
        }
    }
}

fn method(path: &str, m: RawMethod, index: usize, k: usize, cp_min: f64, pp_min: f64) -> Result<MethodSpec, CliError> {
    match m.rule {
        RuleKind::Cp => {
            let Some(source) = m.delta_source else {
                return Err(err("E_METHOD_PARAMS", format!("{path}.delta_source"), "a cp rule needs a delta_source"));
            };
            if m.prior.is_some() {
                return Err(err("E_METHOD_PARAMS", format!("{path}.prior"), "a cp rule takes no prior"));
            }
            match &source {
                DeltaSource::AssumedMeans(mu) => check_len(&format!("{path}.delta_source.assumed_means"), mu, k)?,
                DeltaSource::Fixed(d) if d.iter().any(|x| !x.is_finite()) => {
                    return Err(err("E_VALUE", format!("{path}.delta_source.fixed"), "entries must be finite"))
                }
                _ => {}
            }
            let label = m.label.unwrap_or_else(|| format!("CP{}", index + 1));
            Ok(MethodSpec {
                method: SsrMethod::new(label, SsrRule::Conditional(source)),
                promising_min: cp_min,
            })
        }
        RuleKind::Pp => {
            let Some(raw_prior) = m.prior else {
                return Err(err("E_METHOD_PARAMS", format!("{path}.prior"), "a pp rule needs a prior"));
            };
            if m.delta_source.is_some() {
                return Err(err("E_METHOD_PARAMS", format!("{path}.delta_source"), "a pp rule takes no delta_source"));
            }
            let prior = match raw_prior {
                RawPrior::Flat => Prior::Flat,
                RawPrior::Conjugate { mu0, tau0 } => {
                    let ppath = format!("{path}.prior.conjugate");
                    check_len(&format!("{ppath}.mu0"), &mu0, k)?;
                    let tau0 = match tau0 {
                        Precision::Common(t) => vec![t; k],
                        Precision::PerArm(v) => {
                            check_len(&format!("{ppath}.tau0"), &v, k)?;
                            v
                        }
                    };
                    Prior::conjugate_per_arm(mu0, tau0).map_err(|e| err("E_METHOD_PARAMS", ppath, e.to_string()))?
                }
            };
            let label = m.label.unwrap_or_else(|| format!("PP{}", index + 1));
            Ok(MethodSpec {
                method: SsrMethod::new(label, SsrRule::Predictive(prior)),
                promising_min: pp_min,
            })
        }
    }
}
