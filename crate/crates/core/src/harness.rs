//! Run orchestration: config files, initial conditions, output writing.
//!
//! Config files are line-oriented `key = value` text; `#` starts a comment and
//! unknown keys are errors. Every key except `scheme` and `dims` has a
//! default, and all invariants are checked before any computation starts.

use std::fs::{create_dir_all, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{write_snapshot, Field, Grid};
use crate::schemes::{evolve_observed, EnergyTrace, SchemeConfig, SchemeKind};

/// SplitMix64: tiny, well-known 64-bit generator with a fixed published
/// update rule, so seeded runs are bit-reproducible across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}

/// Initial-condition kinds. The tanh profiles use an explicit interface
/// width, which the config layer sets to the scheme's epsilon.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant(f64),
    UniformRandom,
    Stripe { width: f64 },
    Disk { center: Vec<f64>, radius: f64, width: f64 },
}

/// Deterministic initial state for `(ic, grid, seed)`.
pub fn make_initial(ic: &InitialCondition, grid: &Grid, seed: u64) -> Result<Field> {
    match ic {
        InitialCondition::Constant(c) => {
            if !c.is_finite() {
                return Err(Error::InvalidParameter("constant must be finite".into()));
            }
            Ok(Field::constant(grid, *c))
        }
        InitialCondition::UniformRandom => {
            let mut rng = SplitMix64::new(seed);
            Field::from_values(grid, (0..grid.cells()).map(|_| rng.next_symmetric()).collect())
        }
        InitialCondition::Stripe { width } => {
            if !(*width > 0.0) {
                return Err(Error::InvalidParameter("stripe width must be > 0".into()));
            }
            let mid = grid.origin()[0] + 0.5 * grid.dims()[0] as f64 * grid.spacing()[0];
            let scale = std::f64::consts::SQRT_2 * width;
            Ok(Field::from_fn(grid, |x| ((x[0] - mid) / scale).tanh()))
        }
        InitialCondition::Disk { center, radius, width } => {
            if center.len() != grid.ndim() {
                return Err(Error::InvalidParameter(format!(
                    "disk center has {} coordinates for a {}-d grid",
                    center.len(),
                    grid.ndim()
                )));
            }
            if !(*radius > 0.0) || !(*width > 0.0) {
                return Err(Error::InvalidParameter(
                    "disk radius and width must be > 0".into(),
                ));
            }
            let scale = std::f64::consts::SQRT_2 * width;
            Ok(Field::from_fn(grid, |x| {
                let dist = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>()
                    .sqrt();
                ((radius - dist) / scale).tanh()
            }))
        }
    }
}

/// Fully validated run description parsed from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dims: Vec<usize>,
    pub extent: Vec<f64>,
    pub origin: Vec<f64>,
    pub scheme: SchemeConfig,
    pub ic: InitialCondition,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 disables snapshots; otherwise states are written every `stride` steps.
    pub snapshot_stride: usize,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::from_extent(&self.dims, &self.extent, &self.origin)
    }

    pub fn initial_field(&self) -> Result<Field> {
        make_initial(&self.ic, &self.grid()?, self.seed)
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

/// Parse and validate a config file. See the module docs for the format.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut scheme_name: Option<(usize, String)> = None;
    let mut dims: Option<(usize, Vec<usize>)> = None;
    let mut extent: Option<(usize, Vec<f64>)> = None;
    let mut origin: Option<(usize, Vec<f64>)> = None;
    let mut epsilon = 0.1;
    let mut time_step = 0.1;
    let mut stabilization = 1.0;
    let mut steps = 100usize;
    let mut seed = 0u64;
    let mut ic_kind: Option<(usize, String)> = None;
    let mut ic_value = 0.0f64;
    let mut ic_value_line = 0usize;
    let mut ic_center: Option<(usize, Vec<f64>)> = None;
    let mut ic_radius: Option<(usize, f64)> = None;
    let mut output_dir = PathBuf::from("out");
    let mut snapshot_stride = 0usize;
    let mut qp_tol = 1e-8;
    let mut qp_max_iter: Option<usize> = None;
    let mut newton_tol = 1e-10;
    let mut newton_max_iter = 50usize;
    let mut cg_tol = 1e-12;
    let mut cg_max_iter: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(lineno, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(config_err(lineno, format!("key `{key}` has no value")));
        }

        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| config_err(lineno, format!("`{v}` is not a number")))
        };
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| config_err(lineno, format!("`{v}` is not a non-negative integer")))
        };
        let parse_f64_list = |v: &str| -> Result<Vec<f64>> {
            v.split(',').map(|t| parse_f64(t.trim())).collect()
        };
        let positive = |name: &str, v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(config_err(lineno, format!("{name} must be > 0, got {v}")))
            }
        };

        match key {
            "scheme" => scheme_name = Some((lineno, value.to_string())),
            "dims" => {
                let parsed: Vec<usize> = value
                    .split(',')
                    .map(|t| parse_usize(t.trim()))
                    .collect::<Result<_>>()?;
                if parsed.is_empty() || parsed.len() > 3 {
                    return Err(config_err(lineno, "dims must list 1-3 axes"));
                }
                if parsed.iter().any(|&n| n == 0) {
                    return Err(config_err(lineno, "every cell count must be >= 1"));
                }
                dims = Some((lineno, parsed));
            }
            "extent" => {
                let parsed = parse_f64_list(value)?;
                for &e in &parsed {
                    positive("extent", e)?;
                }
                extent = Some((lineno, parsed));
            }
            "origin" => origin = Some((lineno, parse_f64_list(value)?)),
            "epsilon" => epsilon = positive("epsilon", parse_f64(value)?)?,
            "k" => time_step = positive("k", parse_f64(value)?)?,
            "stabilization" => {
                let v = parse_f64(value)?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(config_err(lineno, format!("stabilization must be >= 0, got {v}")));
                }
                stabilization = v;
            }
            "steps" => steps = parse_usize(value)?,
            "seed" => {
                seed = value
                    .parse::<u64>()
                    .map_err(|_| config_err(lineno, format!("`{value}` is not a 64-bit seed")))?;
            }
            "ic" => ic_kind = Some((lineno, value.to_string())),
            "ic_value" => {
                ic_value = parse_f64(value)?;
                ic_value_line = lineno;
            }
            "ic_center" => ic_center = Some((lineno, parse_f64_list(value)?)),
            "ic_radius" => ic_radius = Some((lineno, positive("ic_radius", parse_f64(value)?)?)),
            "output" => output_dir = PathBuf::from(value),
            "snapshot_stride" => snapshot_stride = parse_usize(value)?,
            "qp_tol" => qp_tol = positive("qp_tol", parse_f64(value)?)?,
            "qp_max_iter" => qp_max_iter = Some(parse_usize(value)?),
            "newton_tol" => newton_tol = positive("newton_tol", parse_f64(value)?)?,
            "newton_max_iter" => newton_max_iter = parse_usize(value)?,
            "cg_tol" => cg_tol = positive("cg_tol", parse_f64(value)?)?,
            "cg_max_iter" => cg_max_iter = Some(parse_usize(value)?),
            other => {
                return Err(config_err(lineno, format!("unknown key `{other}`")));
            }
        }
    }

    let (scheme_line, scheme_name) =
        scheme_name.ok_or_else(|| config_err(0, "missing required key `scheme`"))?;
    let scheme_kind = SchemeKind::parse(&scheme_name).ok_or_else(|| {
        config_err(
            scheme_line,
            format!(
                "unknown scheme `{scheme_name}`; expected one of {}",
                SchemeKind::ALL.map(|k| k.as_str()).join(", ")
            ),
        )
    })?;
    let (dims_line, dims) = dims.ok_or_else(|| config_err(0, "missing required key `dims`"))?;

    let nd = dims.len();
    let extent = match extent {
        Some((line, e)) => {
            if e.len() != nd {
                return Err(config_err(line, format!("extent must list {nd} axes")));
            }
            e
        }
        None => vec![1.0; nd],
    };
    let origin = match origin {
        Some((line, o)) => {
            if o.len() != nd {
                return Err(config_err(line, format!("origin must list {nd} axes")));
            }
            o
        }
        None => vec![0.0; nd],
    };
    // dims/extent/origin must form a valid grid before any computation starts
    Grid::from_extent(&dims, &extent, &origin)
        .map_err(|e| config_err(dims_line, e.to_string()))?;

    let mut scheme = SchemeConfig::new(scheme_kind, epsilon)
        .map_err(|e| config_err(0, e.to_string()))?;
    scheme.time_step = time_step;
    scheme.stabilization = stabilization;
    scheme.steps = steps;
    scheme.qp_tol = qp_tol;
    scheme.qp_max_iter = qp_max_iter;
    scheme.newton_tol = newton_tol;
    scheme.newton_max_iter = newton_max_iter;
    scheme.cg_tol = cg_tol;
    scheme.cg_max_iter = cg_max_iter;
    scheme.validate().map_err(|e| config_err(0, e.to_string()))?;

    let default_center: Vec<f64> = origin
        .iter()
        .zip(&extent)
        .map(|(o, e)| o + 0.5 * e)
        .collect();
    let default_radius = 0.25 * extent.iter().cloned().fold(f64::INFINITY, f64::min);

    let ic = match ic_kind.as_ref().map(|(_, s)| s.as_str()).unwrap_or("constant") {
        "constant" => {
            if scheme_kind.is_constrained() && ic_value.abs() > 1.0 {
                return Err(config_err(
                    ic_value_line,
                    format!(
                        "constant initial value {ic_value} outside [-1, 1] for constrained scheme {}",
                        scheme_kind.as_str()
                    ),
                ));
            }
            InitialCondition::Constant(ic_value)
        }
        "random" | "uniform_random" => InitialCondition::UniformRandom,
        "stripe" => InitialCondition::Stripe { width: epsilon },
        "disk" => InitialCondition::Disk {
            center: ic_center.map(|(_, c)| c).unwrap_or(default_center),
            radius: ic_radius.map(|(_, r)| r).unwrap_or(default_radius),
            width: epsilon,
        },
        other => {
            let line = ic_kind.as_ref().map(|(l, _)| *l).unwrap_or(0);
            return Err(config_err(
                line,
                format!("unknown ic `{other}`; expected constant, random, stripe or disk"),
            ));
        }
    };
    if let InitialCondition::Disk { center, .. } = &ic {
        if center.len() != nd {
            return Err(config_err(0, format!("ic_center must list {nd} axes")));
        }
    }

    Ok(RunConfig {
        dims,
        extent,
        origin,
        scheme,
        ic,
        seed,
        output_dir,
        snapshot_stride,
    })
}

/// Outcome of a completed run, for the CLI summary line.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scheme: SchemeKind,
    pub steps_completed: usize,
    pub final_energy: f64,
    pub status: String,
    pub trace_path: PathBuf,
}

impl RunSummary {
    pub fn one_line(&self) -> String {
        format!(
            "{}: {} steps, final energy {:.6e}, status {}",
            self.scheme.as_str(),
            self.steps_completed,
            self.final_energy,
            self.status
        )
    }
}

/// Execute a run: evolve (or minimize), write `trace.csv` and snapshots.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let grid = cfg.grid()?;
    let u0 = make_initial(&cfg.ic, &grid, cfg.seed)?;
    create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
        path: cfg.output_dir.display().to_string(),
        source: e,
    })?;

    let stride = cfg.snapshot_stride;
    let out_dir = cfg.output_dir.clone();
    let observer = |step: usize, u: &Field| -> Result<()> {
        if stride > 0 && step % stride == 0 {
            write_snapshot(&out_dir.join(format!("state_{step}.f64")), u)?;
        }
        Ok(())
    };

    let (_, trace) = evolve_observed(&u0, &cfg.scheme, observer)?;
    let trace_path = cfg.output_dir.join("trace.csv");
    write_trace(&trace_path, &trace)?;

    let steps_completed = trace.len() - 1;
    let status = if cfg.scheme.scheme == SchemeKind::Algorithm1 {
        if steps_completed < cfg.scheme.steps {
            "converged".to_string()
        } else {
            "iteration_budget".to_string()
        }
    } else {
        "completed".to_string()
    };
    Ok(RunSummary {
        scheme: cfg.scheme.scheme,
        steps_completed,
        final_energy: trace.final_energy(),
        status,
        trace_path,
    })
}

pub fn write_trace(path: &Path, trace: &EnergyTrace) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    trace.write_csv(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
