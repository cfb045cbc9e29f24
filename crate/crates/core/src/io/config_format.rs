//! Flat `key = value` config text with `[section]` headers.
//!
//! ```text
//! [grid]
//! basis = sine
//! x = -16 16 256
//! y = -16 16 256
//!
//! [equation]
//! sigma = 1
//! beta = 8
//! dispersion = schrodinger
//!
//! [damping]
//! law = linear
//! delta = 0.5
//!
//! [time]
//! k = 0.001
//! t_end = 1.25
//!
//! [init]
//! kind = gaussian
//! gamma_y = 2
//! epsilon = 0.2
//! ```
//!
//! `#` starts a comment. Lists are whitespace separated; schedule
//! breakpoints `t beta delta_scale` are separated by `;`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::config::{BlowupConfig, InitSpec, OutputConfig, SimConfig};
use crate::damping::{DampingLaw, NumericG, NumericLaw, DEFAULT_PANELS, DEFAULT_SUBSTEPS};
use crate::diagnostics::{DEFAULT_ENERGY_FLOOR_FACTOR, DEFAULT_RHO_CAP_FACTOR};
use crate::error::{Error, Result};
use crate::experiments::GaussianSpec;
use crate::spectral::{Axis, Basis, Dispersion};
use crate::stepper::{Breakpoint, Potential, DEFAULT_STRIDE};

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["basis", "x", "y"]),
    ("equation", &["sigma", "beta", "dispersion", "epsilon"]),
    ("schedule", &["points"]),
    ("potential", &["kind", "gamma"]),
    (
        "damping",
        &["law", "delta", "q", "delta1", "delta2", "g", "substeps", "panels"],
    ),
    ("time", &["k", "t_end", "stride"]),
    ("init", &["kind", "gamma_y", "epsilon", "path"]),
    ("blowup", &["rho_cap_factor", "energy_floor_factor", "horizon"]),
    ("output", &["timeseries", "snapshot_prefix"]),
];

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Table {
    entries: BTreeMap<(String, String), Entry>,
    section_lines: BTreeMap<String, usize>,
    last_line: usize,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
        let mut section_lines = BTreeMap::new();
        let mut section: Option<String> = None;
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(line, format!("malformed section header `{content}`")))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(Error::config(line, format!("unknown section [{name}]")));
                }
                if let Some(prev) = section_lines.insert(name.to_string(), line) {
                    return Err(Error::config(
                        line,
                        format!("duplicate section [{name}] (first at line {prev})"),
                    ));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some(sec) = &section else {
                return Err(Error::config(line, "key outside of any [section]"));
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let allowed = SECTIONS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(Error::config(line, format!("unknown key `{key}` in [{sec}]")));
            }
            if value.is_empty() {
                return Err(Error::config(line, format!("empty value for `{key}`")));
            }
            let id = (sec.clone(), key.to_string());
            if let Some(prev) = entries.get(&id) {
                return Err(Error::config(
                    line,
                    format!("duplicate key `{key}` in [{sec}] (lines {} and {line})", prev.line),
                ));
            }
            entries.insert(
                id,
                Entry {
                    value: value.to_string(),
                    line,
                    used: false,
                },
            );
        }
        Ok(Table {
            entries,
            section_lines,
            last_line,
        })
    }

    fn take(&mut self, sec: &str, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(&(sec.to_string(), key.to_string())).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn missing_line(&self, sec: &str) -> usize {
        self.section_lines.get(sec).copied().unwrap_or(self.last_line)
    }

    fn required(&mut self, sec: &str, key: &str) -> Result<(String, usize)> {
        self.take(sec, key).ok_or_else(|| {
            Error::config(self.missing_line(sec), format!("missing required key `{key}` in [{sec}]"))
        })
    }

    fn f64_or(&mut self, sec: &str, key: &str, default: f64) -> Result<(f64, usize)> {
        match self.take(sec, key) {
            Some((v, line)) => Ok((parse_f64(&v, key, line)?, line)),
            None => Ok((default, self.missing_line(sec))),
        }
    }

    fn f64_required(&mut self, sec: &str, key: &str) -> Result<(f64, usize)> {
        let (v, line) = self.required(sec, key)?;
        Ok((parse_f64(&v, key, line)?, line))
    }

    fn usize_or(&mut self, sec: &str, key: &str, default: usize) -> Result<(usize, usize)> {
        match self.take(sec, key) {
            Some((v, line)) => Ok((parse_usize(&v, key, line)?, line)),
            None => Ok((default, self.missing_line(sec))),
        }
    }

    /// Keys present but not consumed for the chosen variant.
    fn reject_unused(&self) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some(((sec, key), e)) => Err(Error::config(
                e.line,
                format!("key `{key}` in [{sec}] does not apply to this configuration"),
            )),
            None => Ok(()),
        }
    }
}

fn parse_f64(v: &str, key: &str, line: usize) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::config(line, format!("`{key}`: expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(Error::config(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn parse_usize(v: &str, key: &str, line: usize) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::config(line, format!("`{key}`: expected a non-negative integer, got `{v}`")))
}

fn parse_list(v: &str, key: &str, line: usize) -> Result<Vec<f64>> {
    v.split_whitespace().map(|t| parse_f64(t, key, line)).collect()
}

fn positive(x: f64, key: &str, line: usize) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::config(line, format!("`{key}` must be positive (got {x})")))
    }
}

fn parse_axis(v: &str, key: &str, line: usize) -> Result<Axis> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::config(line, format!("`{key}` expects `a b M`, got `{v}`")));
    }
    let a = parse_f64(parts[0], key, line)?;
    let b = parse_f64(parts[1], key, line)?;
    let m = parse_usize(parts[2], key, line)?;
    if m % 2 == 1 {
        return Err(Error::config(line, format!("M must be even (got {m})")));
    }
    Axis::new(a, b, m).map_err(|e| Error::config(line, e.to_string()))
}

/// Parse and fully validate a config text.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut t = Table::parse(text)?;

    // grid
    let basis = match t.take("grid", "basis") {
        Some((v, line)) => v
            .parse::<Basis>()
            .map_err(|e| Error::config(line, e))?,
        None => Basis::Sine,
    };
    let (xv, xl) = t.required("grid", "x")?;
    let mut axes = vec![parse_axis(&xv, "x", xl)?];
    if let Some((yv, yl)) = t.take("grid", "y") {
        axes.push(parse_axis(&yv, "y", yl)?);
    }

    // equation
    let (sigma, sl) = t.f64_or("equation", "sigma", 1.0)?;
    positive(sigma, "sigma", sl)?;
    let (beta, beta_line) = t.f64_required("equation", "beta")?;
    let dispersion = match t.take("equation", "dispersion") {
        None => Dispersion::Schrodinger,
        Some((v, line)) => match v.as_str() {
            "schrodinger" => Dispersion::Schrodinger,
            "cgl" => {
                let (epsilon, el) = t.f64_required("equation", "epsilon")?;
                if epsilon < 0.0 {
                    return Err(Error::config(el, format!("`epsilon` must be >= 0 (got {epsilon})")));
                }
                Dispersion::Cgl { epsilon }
            }
            other => {
                return Err(Error::config(
                    line,
                    format!("unknown dispersion `{other}` (expected schrodinger or cgl)"),
                ))
            }
        },
    };

    // schedule
    let schedule = match t.take("schedule", "points") {
        None => Vec::new(),
        Some((v, _)) if v == "constant" => Vec::new(),
        Some((v, line)) => {
            let mut pts = Vec::new();
            for chunk in v.split(';') {
                let nums = parse_list(chunk, "points", line)?;
                if nums.len() != 3 {
                    return Err(Error::config(
                        line,
                        format!("schedule breakpoint `{}` must be `t beta delta_scale`", chunk.trim()),
                    ));
                }
                pts.push(Breakpoint {
                    t: nums[0],
                    beta: nums[1],
                    delta_scale: nums[2],
                });
            }
            crate::stepper::Schedule::new(pts.clone()).map_err(|e| Error::config(line, e.to_string()))?;
            if pts[0].beta != beta {
                return Err(Error::config(
                    line,
                    format!(
                        "first breakpoint beta {} differs from [equation] beta {beta} (line {beta_line})",
                        pts[0].beta
                    ),
                ));
            }
            pts
        }
    };

    // potential
    let potential = match t.take("potential", "kind") {
        None => Potential::Zero,
        Some((v, line)) => match v.as_str() {
            "zero" => Potential::Zero,
            "harmonic" => {
                let (g, gl) = t.required("potential", "gamma")?;
                let gamma = parse_list(&g, "gamma", gl)?;
                if gamma.len() != axes.len() {
                    return Err(Error::config(
                        gl,
                        format!("`gamma` needs {} values (got {})", axes.len(), gamma.len()),
                    ));
                }
                if gamma.iter().any(|x| *x < 0.0) {
                    return Err(Error::config(gl, "`gamma` values must be >= 0"));
                }
                Potential::Harmonic { gamma }
            }
            other => return Err(Error::config(line, format!("unknown potential kind `{other}`"))),
        },
    };

    // damping
    let law = match t.take("damping", "law") {
        None => DampingLaw::None,
        Some((v, line)) => {
            let pos = |t: &mut Table, key: &str| -> Result<f64> {
                let (x, l) = t.f64_required("damping", key)?;
                positive(x, key, l)
            };
            match v.as_str() {
                "none" => DampingLaw::None,
                "linear" => DampingLaw::Linear {
                    delta: pos(&mut t, "delta")?,
                },
                "power" => DampingLaw::PowerLaw {
                    delta: pos(&mut t, "delta")?,
                    q: pos(&mut t, "q")?,
                },
                "cubic_quintic" => DampingLaw::CubicQuinticCombo {
                    delta1: pos(&mut t, "delta1")?,
                    delta2: pos(&mut t, "delta2")?,
                },
                "feeding_quintic" => DampingLaw::FeedingQuintic {
                    delta1: pos(&mut t, "delta1")?,
                    delta2: pos(&mut t, "delta2")?,
                },
                "cgl" => DampingLaw::CglLaw {
                    delta1: pos(&mut t, "delta1")?,
                    delta2: pos(&mut t, "delta2")?,
                },
                "numeric" => {
                    let (g, gl) = t.required("damping", "g")?;
                    let coeffs = parse_list(&g, "g", gl)?;
                    if coeffs.is_empty() {
                        return Err(Error::config(gl, "`g` needs at least one coefficient"));
                    }
                    let (substeps, _) = t.usize_or("damping", "substeps", DEFAULT_SUBSTEPS)?;
                    let (panels, pl) = t.usize_or("damping", "panels", DEFAULT_PANELS)?;
                    if substeps == 0 || panels == 0 || panels % 2 == 1 {
                        return Err(Error::config(
                            pl,
                            "`substeps` must be >= 1 and `panels` even and >= 2",
                        ));
                    }
                    DampingLaw::Numeric(
                        NumericLaw::new(NumericG::Polynomial(coeffs)).with_resolution(substeps, panels),
                    )
                }
                other => return Err(Error::config(line, format!("unknown damping law `{other}`"))),
            }
        }
    };

    // time
    let (k, kl) = t.f64_required("time", "k")?;
    positive(k, "k", kl)?;
    let (t_end, tl) = t.f64_required("time", "t_end")?;
    if t_end < 0.0 {
        return Err(Error::config(tl, format!("`t_end` must be >= 0 (got {t_end})")));
    }
    let (stride, stl) = t.usize_or("time", "stride", DEFAULT_STRIDE)?;
    if stride == 0 {
        return Err(Error::config(stl, "`stride` must be >= 1"));
    }

    // init
    let (kind, kind_line) = t.required("init", "kind")?;
    let init = match kind.as_str() {
        "gaussian" => {
            let (gy, gl) = t.f64_required("init", "gamma_y")?;
            let (eps, _) = t.f64_required("init", "epsilon")?;
            InitSpec::Gaussian(GaussianSpec::new(gy, eps).map_err(|e| Error::config(gl, e.to_string()))?)
        }
        "snapshot" => InitSpec::Snapshot(PathBuf::from(t.required("init", "path")?.0)),
        other => return Err(Error::config(kind_line, format!("unknown init kind `{other}`"))),
    };

    // blowup
    let (rho_cap_factor, rl) = t.f64_or("blowup", "rho_cap_factor", DEFAULT_RHO_CAP_FACTOR)?;
    if rho_cap_factor <= 1.0 {
        return Err(Error::config(rl, "`rho_cap_factor` must exceed 1"));
    }
    let (energy_floor_factor, el) = t.f64_or("blowup", "energy_floor_factor", DEFAULT_ENERGY_FLOOR_FACTOR)?;
    if energy_floor_factor < 0.0 {
        return Err(Error::config(el, "`energy_floor_factor` must be >= 0"));
    }
    let (horizon, hl) = t.f64_or("blowup", "horizon", t_end)?;
    positive(horizon, "horizon", hl)?;

    // output
    let timeseries = t
        .take("output", "timeseries")
        .map(|v| v.0)
        .unwrap_or_else(|| "timeseries.csv".into());
    let snapshot_prefix = t
        .take("output", "snapshot_prefix")
        .map(|v| v.0)
        .unwrap_or_else(|| "snapshot".into());

    t.reject_unused()?;

    let cfg = SimConfig {
        axes,
        basis,
        sigma,
        beta,
        dispersion,
        schedule,
        potential,
        law,
        k,
        t_end,
        stride,
        init,
        blowup: BlowupConfig {
            rho_cap_factor,
            energy_floor_factor,
            horizon,
        },
        output: OutputConfig {
            timeseries: timeseries.into(),
            snapshot_prefix: snapshot_prefix.into(),
        },
    };
    cfg.validate().map_err(|e| Error::config(t.last_line, e.to_string()))?;
    Ok(cfg)
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Write every field of `cfg`, defaults included.
pub fn serialize_config(cfg: &SimConfig) -> Result<String> {
    let mut s = String::new();
    let names = ["x", "y"];
    writeln!(s, "[grid]").unwrap();
    writeln!(s, "basis = {}", cfg.basis.name()).unwrap();
    for (ax, name) in cfg.axes.iter().zip(names) {
        writeln!(s, "{name} = {} {} {}", num(ax.a()), num(ax.b()), ax.m()).unwrap();
    }

    writeln!(s, "\n[equation]").unwrap();
    writeln!(s, "sigma = {}", num(cfg.sigma)).unwrap();
    writeln!(s, "beta = {}", num(cfg.beta)).unwrap();
    match cfg.dispersion {
        Dispersion::Schrodinger => writeln!(s, "dispersion = schrodinger").unwrap(),
        Dispersion::Cgl { epsilon } => {
            writeln!(s, "dispersion = cgl").unwrap();
            writeln!(s, "epsilon = {}", num(epsilon)).unwrap();
        }
    }

    writeln!(s, "\n[schedule]").unwrap();
    if cfg.schedule.is_empty() {
        writeln!(s, "points = constant").unwrap();
    } else {
        let pts: Vec<String> = cfg
            .schedule
            .iter()
            .map(|p| format!("{} {} {}", num(p.t), num(p.beta), num(p.delta_scale)))
            .collect();
        writeln!(s, "points = {}", pts.join("; ")).unwrap();
    }

    writeln!(s, "\n[potential]").unwrap();
    match &cfg.potential {
        Potential::Zero => writeln!(s, "kind = zero").unwrap(),
        Potential::Harmonic { gamma } => {
            writeln!(s, "kind = harmonic").unwrap();
            let g: Vec<String> = gamma.iter().map(|x| num(*x)).collect();
            writeln!(s, "gamma = {}", g.join(" ")).unwrap();
        }
        Potential::Tabulated { .. } => {
            return Err(Error::InvalidArgument(
                "tabulated potentials have no config representation".into(),
            ))
        }
    }

    writeln!(s, "\n[damping]").unwrap();
    writeln!(s, "law = {}", cfg.law.name()).unwrap();
    match &cfg.law {
        DampingLaw::None => {}
        DampingLaw::Linear { delta } => writeln!(s, "delta = {}", num(*delta)).unwrap(),
        DampingLaw::PowerLaw { delta, q } => {
            writeln!(s, "delta = {}", num(*delta)).unwrap();
            writeln!(s, "q = {}", num(*q)).unwrap();
        }
        DampingLaw::CubicQuinticCombo { delta1, delta2 }
        | DampingLaw::FeedingQuintic { delta1, delta2 }
        | DampingLaw::CglLaw { delta1, delta2 } => {
            writeln!(s, "delta1 = {}", num(*delta1)).unwrap();
            writeln!(s, "delta2 = {}", num(*delta2)).unwrap();
        }
        DampingLaw::Numeric(n) => match &n.g {
            NumericG::Polynomial(c) => {
                let c: Vec<String> = c.iter().map(|x| num(*x)).collect();
                writeln!(s, "g = {}", c.join(" ")).unwrap();
                writeln!(s, "substeps = {}", n.substeps).unwrap();
                writeln!(s, "panels = {}", n.panels).unwrap();
            }
            NumericG::Custom(_) => {
                return Err(Error::InvalidArgument(
                    "custom numeric damping functions have no config representation".into(),
                ))
            }
        },
    }

    writeln!(s, "\n[time]").unwrap();
    writeln!(s, "k = {}", num(cfg.k)).unwrap();
    writeln!(s, "t_end = {}", num(cfg.t_end)).unwrap();
    writeln!(s, "stride = {}", cfg.stride).unwrap();

    writeln!(s, "\n[init]").unwrap();
    match &cfg.init {
        InitSpec::Gaussian(g) => {
            writeln!(s, "kind = gaussian").unwrap();
            writeln!(s, "gamma_y = {}", num(g.gamma_y())).unwrap();
            writeln!(s, "epsilon = {}", num(g.epsilon())).unwrap();
        }
        InitSpec::Snapshot(p) => {
            writeln!(s, "kind = snapshot").unwrap();
            writeln!(s, "path = {}", p.display()).unwrap();
        }
    }

    writeln!(s, "\n[blowup]").unwrap();
    writeln!(s, "rho_cap_factor = {}", num(cfg.blowup.rho_cap_factor)).unwrap();
    writeln!(s, "energy_floor_factor = {}", num(cfg.blowup.energy_floor_factor)).unwrap();
    writeln!(s, "horizon = {}", num(cfg.blowup.horizon)).unwrap();

    writeln!(s, "\n[output]").unwrap();
    writeln!(s, "timeseries = {}", cfg.output.timeseries.display()).unwrap();
    writeln!(s, "snapshot_prefix = {}", cfg.output.snapshot_prefix.display()).unwrap();
    Ok(s)
}
