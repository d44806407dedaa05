//! Typed, validated scenarios built from an [`Ini`] file.

use std::path::PathBuf;
use std::sync::Arc;

use kinetic_uq::models::{
    EquilibriumRule, Interaction, Kernel, LinearFp, MeanRule, Model, Opinion, SpaceGrid, Swarming, Wealth,
};
use kinetic_uq::sampling::{EquilibriumMean, UqMethod};
use kinetic_uq::{FluxScheme, QuadratureRule, RandomInput, Stepper, TimeGrid, VelocityGrid};

use crate::config::{ConfigError, Ini};

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("scenario", &["name", "description"]),
    (
        "model",
        &[
            "kind", "c", "sigma2", "sigma2_slope", "equilibrium", "p_mean", "p_slope", "interaction", "radius",
            "u_tilde", "l", "mean", "alpha", "d_mean", "d_slope", "kernel", "mu_w", "sigma_w2", "mu_x", "sigma_x",
            "v_max",
        ],
    ),
    ("input", &["a", "b"]),
    ("grid", &["n_cells", "w_min", "w_max", "n_x", "x_min", "x_max"]),
    ("time", &["horizon", "dt", "outputs", "stepper"]),
    ("flux", &["kind", "quadrature"]),
    (
        "uq",
        &["methods", "nodes", "samples", "order", "repetitions", "equilibrium", "seed", "reference", "reference_nodes"],
    ),
    ("output", &["dir", "entropy"]),
];

/// Model with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelChoice {
    LinearFp(LinearFp),
    Opinion(Opinion),
    Wealth(Wealth),
    Swarming(Swarming),
}

impl ModelChoice {
    pub fn as_model(&self) -> &dyn Model {
        match self {
            ModelChoice::LinearFp(m) => m,
            ModelChoice::Opinion(m) => m,
            ModelChoice::Wealth(m) => m,
            ModelChoice::Swarming(m) => m,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            ModelChoice::LinearFp(_) => "linear_fp",
            ModelChoice::Opinion(_) => "opinion",
            ModelChoice::Wealth(_) => "wealth",
            ModelChoice::Swarming(_) => "swarming",
        }
    }
}

/// What estimates are compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    None,
    /// Expected closed-form steady state by quadrature.
    SteadyState,
    /// High-order collocation with the same scheme, at every output time.
    Collocation,
}

impl Reference {
    pub fn name(&self) -> &'static str {
        match self {
            Reference::None => "none",
            Reference::SteadyState => "steady_state",
            Reference::Collocation => "collocation",
        }
    }
}

/// A resolved scenario: every value below is either read from the file or a documented default.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub model: ModelChoice,
    pub input: RandomInput,
    pub velocity: Arc<VelocityGrid>,
    pub space: Option<SpaceGrid>,
    pub horizon: f64,
    pub dt_rule: String,
    pub time: TimeGrid,
    pub stepper: Stepper,
    pub schemes: Vec<FluxScheme>,
    pub methods: Vec<UqMethod>,
    pub nodes: Vec<usize>,
    pub samples: Vec<usize>,
    pub orders: Vec<usize>,
    pub repetitions: usize,
    pub equilibrium: EquilibriumMean,
    pub seed: u64,
    pub reference: Reference,
    pub reference_nodes: usize,
    pub entropy: bool,
    pub output_dir: PathBuf,
}

fn parse_method(name: &str) -> Option<UqMethod> {
    Some(match name {
        "collocation" => UqMethod::Collocation,
        "mc" => UqMethod::Mc,
        "m3c" => UqMethod::M3c,
        "fm3c" => UqMethod::Fm3c,
        "gpc" => UqMethod::Galerkin,
        "mm_gpc" => UqMethod::MmGalerkin,
        _ => return None,
    })
}

pub fn parse_quadrature(name: &str) -> Option<QuadratureRule> {
    Some(match name {
        "midpoint" => QuadratureRule::Midpoint,
        "open_nc2" => QuadratureRule::OpenNc2,
        "open_nc4" => QuadratureRule::OpenNc4,
        "open_nc6" => QuadratureRule::OpenNc6,
        "gauss" => QuadratureRule::default(),
        other => QuadratureRule::Gauss(other.strip_prefix("gauss")?.parse().ok().filter(|&n| n > 0)?),
    })
}

fn parse_stepper(name: &str) -> Option<Stepper> {
    Some(match name {
        "explicit_euler" => Stepper::ExplicitEuler,
        "ssp_rk2" => Stepper::SspRk2,
        "ssp_rk3" => Stepper::SspRk3,
        "semi_implicit" => Stepper::SemiImplicit,
        _ => return None,
    })
}

fn parse_equilibrium(text: &str) -> Option<EquilibriumMean> {
    let (kind, n) = text.split_once(':')?;
    let n: usize = n.trim().parse().ok().filter(|&n| n > 0)?;
    match kind.trim() {
        "sampled" => Some(EquilibriumMean::Sampled(n)),
        "quadrature" => Some(EquilibriumMean::Quadrature(n)),
        _ => None,
    }
}

pub fn equilibrium_name(e: EquilibriumMean) -> String {
    match e {
        EquilibriumMean::Sampled(n) => format!("sampled:{n}"),
        EquilibriumMean::Quadrature(n) => format!("quadrature:{n}"),
    }
}

/// Evaluates a time-step rule such as `dw^2/2` over the variables `dw`, `dx`, `L`, `sigma2`.
pub fn evaluate_dt_rule(rule: &str, vars: &[(&str, f64)]) -> Result<f64, String> {
    use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
    let mut ctx = HashMapContext::new();
    for &(name, value) in vars {
        ctx.set_value(name.into(), Value::Float(value)).map_err(|e| e.to_string())?;
    }
    // Integer literals would otherwise truncate divisions such as `1/2`.
    let dt = evalexpr::eval_number_with_context(&float_literals(rule), &ctx)
        .map_err(|e| format!("cannot evaluate `{rule}`: {e}"))?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(format!("`{rule}` evaluates to {dt}; the time step must be positive"));
    }
    Ok(dt)
}

/// Appends `.0` to bare integer literals so the expression is evaluated in floating point.
fn float_literals(rule: &str) -> String {
    let mut out = String::with_capacity(rule.len() + 8);
    let chars: Vec<char> = rule.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_number = c.is_ascii_digit() && (i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.'));
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
            i += 1;
        }
        let mantissa: String = chars[start..i].iter().collect();
        let exponent_follows = matches!(mantissa.chars().last(), Some('e' | 'E'))
            && matches!(chars.get(i), Some('+' | '-'))
            && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit());
        if exponent_follows {
            let sign = chars[i];
            i += 1;
            let exp_start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let exponent: String = chars[exp_start..i].iter().collect();
            let base = &mantissa[..mantissa.len() - 1];
            let sign = if sign == '-' { "-" } else { "" };
            out.push_str(&format!("({base}{}*10.0^({sign}{exponent}.0))", if base.contains('.') { "" } else { ".0" }));
        } else {
            out.push_str(&mantissa);
            if mantissa.chars().all(|c| c.is_ascii_digit()) {
                out.push_str(".0");
            }
        }
    }
    out
}

struct Reader<'a> {
    ini: &'a Ini,
    resolved: Vec<(String, String)>,
}

impl<'a> Reader<'a> {
    fn record(&mut self, section: &str, key: &str, value: String) {
        self.resolved.push((format!("{section}.{key}"), value));
    }

    fn num(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.ini.get_or(section, key, default)?;
        if !v.is_finite() {
            return Err(self.ini.error_at(section, key, "must be finite"));
        }
        self.record(section, key, format!("{v}"));
        Ok(v)
    }

    fn text(&mut self, section: &str, key: &str, default: &str) -> String {
        let v = self.ini.raw(section, key).unwrap_or(default).to_string();
        self.record(section, key, v.clone());
        v
    }

    fn int(&mut self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        let v: usize = self.ini.get_or(section, key, default)?;
        self.record(section, key, v.to_string());
        Ok(v)
    }

    fn ints(&mut self, section: &str, key: &str) -> Result<Vec<usize>, ConfigError> {
        let v: Vec<usize> = self.ini.list(section, key)?.unwrap_or_default();
        if v.contains(&0) {
            return Err(self.ini.error_at(section, key, "entries must be at least 1"));
        }
        let text = v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ");
        self.record(section, key, text);
        Ok(v)
    }

    fn words(&mut self, section: &str, key: &str, default: &str) -> Result<Vec<String>, ConfigError> {
        let v: Vec<String> = match self.ini.list::<String>(section, key)? {
            Some(v) => v,
            None => default.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        };
        self.record(section, key, v.join(", "));
        Ok(v)
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        self.ini.error_at(section, key, message)
    }

    fn model(&mut self) -> Result<ModelChoice, ConfigError> {
        let kind = self.ini.required("model", "kind")?.to_string();
        self.record("model", "kind", kind.clone());
        Ok(match kind.as_str() {
            "linear_fp" => {
                let d = LinearFp::default();
                let equilibrium = match self.text("model", "equilibrium", "analytic").as_str() {
                    "analytic" => EquilibriumRule::Analytic,
                    "moments" => EquilibriumRule::Moments,
                    other => return Err(self.err("model", "equilibrium", format!("unknown rule `{other}` (analytic, moments)"))),
                };
                ModelChoice::LinearFp(LinearFp {
                    c: self.num("model", "c", d.c)?,
                    sigma2: self.num("model", "sigma2", d.sigma2)?,
                    sigma2_slope: self.num("model", "sigma2_slope", d.sigma2_slope)?,
                    equilibrium,
                    domain: d.domain,
                })
            }
            "opinion" => {
                let d = Opinion::default();
                let interaction = match self.text("model", "interaction", "constant").as_str() {
                    "constant" => Interaction::Constant,
                    "bounded" => Interaction::BoundedConfidence { radius: self.num("model", "radius", 1.0)? },
                    other => {
                        return Err(self.err("model", "interaction", format!("unknown interaction `{other}` (constant, bounded)")))
                    }
                };
                ModelChoice::Opinion(Opinion {
                    p_mean: self.num("model", "p_mean", d.p_mean)?,
                    p_slope: self.num("model", "p_slope", d.p_slope)?,
                    sigma2: self.num("model", "sigma2", d.sigma2)?,
                    c: self.num("model", "c", d.c)?,
                    interaction,
                })
            }
            "wealth" => {
                let d = Wealth::default();
                let mean = match self.text("model", "mean", "conserved").as_str() {
                    "conserved" => MeanRule::Conserved,
                    "dynamic" => MeanRule::Dynamic,
                    other => return Err(self.err("model", "mean", format!("unknown rule `{other}` (conserved, dynamic)"))),
                };
                ModelChoice::Wealth(Wealth {
                    sigma2: self.num("model", "sigma2", d.sigma2)?,
                    sigma2_slope: self.num("model", "sigma2_slope", d.sigma2_slope)?,
                    c: self.num("model", "c", d.c)?,
                    u_tilde: self.num("model", "u_tilde", d.u_tilde)?,
                    l: self.num("model", "l", d.l)?,
                    mean,
                })
            }
            "swarming" => {
                let d = Swarming::default();
                let kernel = match self.text("model", "kernel", "global").as_str() {
                    "global" => Kernel::Global,
                    "top_hat" => Kernel::TopHat { radius: self.num("model", "radius", 1.0)? },
                    other => return Err(self.err("model", "kernel", format!("unknown kernel `{other}` (global, top_hat)"))),
                };
                ModelChoice::Swarming(Swarming {
                    alpha: self.num("model", "alpha", d.alpha)?,
                    d_mean: self.num("model", "d_mean", d.d_mean)?,
                    d_slope: self.num("model", "d_slope", d.d_slope)?,
                    kernel,
                    mu_w: self.num("model", "mu_w", d.mu_w)?,
                    sigma_w2: self.num("model", "sigma_w2", d.sigma_w2)?,
                    mu_x: self.num("model", "mu_x", d.mu_x)?,
                    sigma_x: self.num("model", "sigma_x", d.sigma_x)?,
                    v_max: self.num("model", "v_max", d.v_max)?,
                })
            }
            other => {
                return Err(self.err("model", "kind", format!("unknown model `{other}` (linear_fp, opinion, wealth, swarming)")))
            }
        })
    }
}

impl Scenario {
    /// Parses and validates; the second value lists every resolved `section.key = value`.
    pub fn from_ini(ini: &Ini, fallback_name: &str) -> Result<(Self, Vec<(String, String)>), ConfigError> {
        ini.check_known(KNOWN_KEYS)?;
        let mut r = Reader { ini, resolved: Vec::new() };
        let name = r.text("scenario", "name", fallback_name);
        let description = r.text("scenario", "description", "");
        let model = r.model()?;
        let is_swarming = matches!(model, ModelChoice::Swarming(_));

        let a = r.num("input", "a", -1.0)?;
        let b = r.num("input", "b", 1.0)?;
        let input = RandomInput::uniform(a, b).map_err(|e| r.err("input", "b", e.to_string()))?;

        let (lo, hi) = model.as_model().domain();
        let n_cells: usize = r.int("grid", "n_cells", 0)?;
        if ini.raw("grid", "n_cells").is_none() {
            return Err(r.err("grid", "n_cells", "missing required key"));
        }
        if n_cells < 2 {
            return Err(r.err("grid", "n_cells", "n_cells must be ≥ 2"));
        }
        let w_min = r.num("grid", "w_min", lo)?;
        let w_max = r.num("grid", "w_max", hi)?;
        let velocity = VelocityGrid::new(w_min, w_max, n_cells).map_err(|e| r.err("grid", "w_max", e.to_string()))?;
        let space = if is_swarming {
            let n_x = r.int("grid", "n_x", n_cells)?;
            if n_x < 5 {
                return Err(r.err("grid", "n_x", "n_x must be ≥ 5"));
            }
            let x_min = r.num("grid", "x_min", 0.0)?;
            let x_max = r.num("grid", "x_max", 10.0)?;
            Some(SpaceGrid::periodic(x_min, x_max, n_x).map_err(|e| r.err("grid", "x_max", e.to_string()))?)
        } else {
            for key in ["n_x", "x_min", "x_max"] {
                if ini.raw("grid", key).is_some() {
                    return Err(r.err("grid", key, "only the swarming model has a space grid"));
                }
            }
            None
        };

        let horizon = r.num("time", "horizon", 0.0)?;
        if ini.raw("time", "horizon").is_none() {
            return Err(r.err("time", "horizon", "missing required key"));
        }
        if !(horizon > 0.0) {
            return Err(r.err("time", "horizon", "horizon must be positive"));
        }
        let dt_rule = ini.required("time", "dt")?.to_string();
        r.record("time", "dt", dt_rule.clone());
        let dx = space.as_ref().map_or(velocity.dw(), |s| s.dx);
        let vars = [
            ("dw", velocity.dw()),
            ("dx", dx),
            ("L", w_min.abs().max(w_max.abs())),
            ("sigma2", model.as_model().diffusion_scale().unwrap_or(1.0)),
        ];
        let dt = evaluate_dt_rule(&dt_rule, &vars).map_err(|m| r.err("time", "dt", m))?;
        let outputs: Vec<f64> = match ini.list::<f64>("time", "outputs")? {
            Some(v) => v,
            None => vec![horizon],
        };
        r.record("time", "outputs", outputs.iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(", "));
        let time = TimeGrid::new(horizon, dt, &outputs).map_err(|e| r.err("time", "outputs", e.to_string()))?;
        let stepper_name = r.text("time", "stepper", "explicit_euler");
        let stepper = parse_stepper(&stepper_name).ok_or_else(|| {
            r.err("time", "stepper", format!("unknown stepper `{stepper_name}` (explicit_euler, ssp_rk2, ssp_rk3, semi_implicit)"))
        })?;

        let kinds = r.words("flux", "kind", "cc")?;
        let rules = r.words("flux", "quadrature", "gauss20")?;
        let mut quadratures = Vec::new();
        for q in &rules {
            quadratures.push(parse_quadrature(q).ok_or_else(|| {
                r.err("flux", "quadrature", format!("unknown rule `{q}` (midpoint, open_nc2, open_nc4, open_nc6, gaussN)"))
            })?);
        }
        let mut schemes = Vec::new();
        for kind in &kinds {
            match kind.as_str() {
                "cc" => schemes.extend(quadratures.iter().map(|&q| FluxScheme::ChangCooper(q))),
                "entropic" => schemes.extend(quadratures.iter().map(|&q| FluxScheme::Entropic(q))),
                "exact_cc" | "exact" => schemes.push(FluxScheme::ExactChangCooper),
                "exact_entropic" => schemes.push(FluxScheme::ExactEntropic),
                other => {
                    return Err(r.err("flux", "kind", format!("unknown flux `{other}` (cc, entropic, exact_cc, exact_entropic)")))
                }
            }
        }

        let method_names = r.words("uq", "methods", "collocation")?;
        let mut methods = Vec::new();
        for m in &method_names {
            let method = parse_method(m).ok_or_else(|| {
                r.err("uq", "methods", format!("unknown method `{m}` (collocation, mc, m3c, fm3c, gpc, mm_gpc)"))
            })?;
            if is_swarming && !matches!(method, UqMethod::Mc | UqMethod::M3c) {
                return Err(r.err("uq", "methods", format!("the swarming model supports mc and m3c, not `{m}`")));
            }
            methods.push(method);
        }
        if is_swarming && schemes.iter().any(|s| !matches!(s, FluxScheme::ChangCooper(_))) {
            return Err(r.err("flux", "kind", "the swarming model uses the cc flux"));
        }
        let nodes = r.ints("uq", "nodes")?;
        let samples = r.ints("uq", "samples")?;
        let orders: Vec<usize> = ini.list("uq", "order")?.unwrap_or_default();
        r.record("uq", "order", orders.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "));
        let needs = |m: UqMethod| methods.contains(&m);
        if needs(UqMethod::Collocation) && nodes.is_empty() {
            return Err(r.err("uq", "nodes", "collocation needs `nodes`"));
        }
        if (needs(UqMethod::Mc) || needs(UqMethod::M3c) || needs(UqMethod::Fm3c)) && samples.is_empty() {
            return Err(r.err("uq", "samples", "sampling methods need `samples`"));
        }
        if (needs(UqMethod::Galerkin) || needs(UqMethod::MmGalerkin)) && orders.is_empty() {
            return Err(r.err("uq", "order", "Galerkin methods need `order`"));
        }
        let repetitions = r.int("uq", "repetitions", 1)?;
        if repetitions == 0 {
            return Err(r.err("uq", "repetitions", "repetitions must be at least 1"));
        }
        if is_swarming && repetitions != 1 {
            return Err(r.err("uq", "repetitions", "swarming runs use a single repetition"));
        }
        let eq_text = r.text("uq", "equilibrium", "quadrature:20");
        let equilibrium = parse_equilibrium(&eq_text)
            .ok_or_else(|| r.err("uq", "equilibrium", format!("expected `sampled:N` or `quadrature:N`, found `{eq_text}`")))?;
        if let EquilibriumMean::Sampled(me) = equilibrium {
            if (needs(UqMethod::M3c) || needs(UqMethod::Fm3c)) && samples.iter().any(|&m| m > me) {
                return Err(r.err("uq", "equilibrium", format!("the equilibrium bank ({me}) must hold at least as many samples as `samples`")));
            }
        }
        let seed: u64 = ini.get_or("uq", "seed", 1)?;
        r.record("uq", "seed", seed.to_string());
        let reference = match r.text("uq", "reference", if is_swarming { "none" } else { "steady_state" }).as_str() {
            "none" => Reference::None,
            "steady_state" => Reference::SteadyState,
            "collocation" => Reference::Collocation,
            other => {
                return Err(r.err("uq", "reference", format!("unknown reference `{other}` (none, steady_state, collocation)")))
            }
        };
        if is_swarming && reference != Reference::None {
            return Err(r.err("uq", "reference", "swarming runs have no reference solution"));
        }
        let reference_nodes = r.int("uq", "reference_nodes", 40)?;
        if reference_nodes == 0 {
            return Err(r.err("uq", "reference_nodes", "reference_nodes must be at least 1"));
        }

        let output_dir = PathBuf::from(r.text("output", "dir", &format!("out/{name}")));
        let entropy: bool = ini.get_or("output", "entropy", false)?;
        r.record("output", "entropy", entropy.to_string());
        if entropy && is_swarming {
            return Err(r.err("output", "entropy", "entropy traces are not available for phase-space runs"));
        }

        let resolved = r.resolved;
        Ok((
            Scenario {
                name,
                description,
                model,
                input,
                velocity,
                space,
                horizon,
                dt_rule,
                time,
                stepper,
                schemes,
                methods,
                nodes,
                samples,
                orders,
                repetitions,
                equilibrium,
                seed,
                reference,
                reference_nodes,
                entropy,
                output_dir,
            },
            resolved,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Result<Scenario, ConfigError> {
        Scenario::from_ini(&Ini::parse("t.ini", text)?, "t").map(|(s, _)| s)
    }

    const BASE: &str = "[model]\nkind = linear_fp\n[grid]\nn_cells = 21\n[time]\nhorizon = 1\ndt = dw^2/2\n[uq]\nnodes = 4\n";

    #[test]
    fn dt_rules() {
        let vars = [("dw", 0.1), ("dx", 0.2), ("L", 10.0), ("sigma2", 0.2)];
        assert!((evaluate_dt_rule("dw^2/2", &vars).unwrap() - 0.005).abs() < 1e-18);
        assert!((evaluate_dt_rule("dw/L", &vars).unwrap() - 0.01).abs() < 1e-18);
        assert!((evaluate_dt_rule("dw^2/(2*sigma2)", &vars).unwrap() - 0.025).abs() < 1e-17);
        assert!(evaluate_dt_rule("dw^", &vars).is_err());
        assert!(evaluate_dt_rule("-dw", &vars).is_err());
        assert!(evaluate_dt_rule("dv/2", &vars).is_err());
        assert!((evaluate_dt_rule("1/2*dw", &vars).unwrap() - 0.05).abs() < 1e-18);
        assert!((evaluate_dt_rule("0.9*dx/L", &vars).unwrap() - 0.018).abs() < 1e-17);
        assert!((evaluate_dt_rule("1e-3", &vars).unwrap() - 1e-3).abs() < 1e-18);
        assert!((evaluate_dt_rule("2.5E+1*dw^2", &vars).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn base_scenario_resolves_defaults() {
        let s = scenario(BASE).unwrap();
        assert_eq!(s.velocity.n_cells(), 21);
        assert_eq!((s.velocity.w_min(), s.velocity.w_max()), (-1.0, 1.0));
        assert_eq!(s.schemes, vec![FluxScheme::ChangCooper(QuadratureRule::Gauss(20))]);
        assert_eq!(s.methods, vec![UqMethod::Collocation]);
        assert_eq!(s.time.n_steps, (1.0 / (s.velocity.dw().powi(2) / 2.0)).ceil() as usize);
        assert_eq!(s.output_dir, PathBuf::from("out/t"));
    }

    #[test]
    fn diagnostics_name_the_key_and_line() {
        let e = scenario(&BASE.replace("n_cells = 21", "n_cells = 0")).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.contains("n_cells must be ≥ 2"));
        let e = scenario(&BASE.replace("dw^2/2", "dw^^2")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("time.dt"));
        assert_eq!(e.line, Some(7));
        let e = scenario(&format!("{BASE}methods = mm_gpc\n")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("uq.order"));
        let e = scenario(&BASE.replace("kind = linear_fp", "kind = plasma")).unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = scenario(&format!("{BASE}typo = 3\n")).unwrap_err();
        assert_eq!(e.line, Some(10));
    }

    #[test]
    fn sampled_bank_must_cover_samples() {
        let text = format!("{BASE}methods = m3c\nsamples = 50\nequilibrium = sampled:20\n");
        assert_eq!(scenario(&text).unwrap_err().key.as_deref(), Some("uq.equilibrium"));
        assert!(scenario(&text.replace("sampled:20", "sampled:50")).is_ok());
    }
}
