//! Command-line flags, INI config files, and their merge into an
//! `ExperimentConfig`.
//!
//! Precedence, lowest first: built-in defaults (or the desk-scale preset),
//! keys outside any section, keys in the section named after the subcommand,
//! command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use monlyap_core::experiment::ExperimentConfig;
use monlyap_core::ModelKind;

use crate::Failure;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// INI file; flags given on the command line override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// random | floquet
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// Comma-separated measurement strengths in [0, 1/2].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eta: Vec<f64>,
    /// Comma-separated chain lengths.
    #[arg(long = "L", value_delimiter = ',', num_args = 1..)]
    pub sizes: Vec<usize>,
    /// Number of probe states.
    #[arg(long)]
    pub q: Option<usize>,
    /// Steps per bin between orthonormalizations.
    #[arg(long)]
    pub b: Option<usize>,
    /// Convergence window in bins.
    #[arg(long)]
    pub f: Option<usize>,
    /// Relative standard-deviation threshold.
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub min_steps: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Entropy samples per trajectory after equilibration.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub equilibration_cap: Option<u64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Monte Carlo θ draws for the random-model channel.
    #[arg(long)]
    pub theta_samples: Option<usize>,
    #[arg(long)]
    pub oracle_steps: Option<usize>,
    /// Bins between rows of the exponent trace.
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Start from the small desk-scale preset and allow f below 200.
    #[arg(long)]
    pub desk_scale: bool,
}

pub fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| format!("{e} (expected random or floquet)"))
}

pub const DEFAULT_OUT: &str = "results";

#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub desk_scale: bool,
}

/// Flat key/value view of an INI file restricted to one subcommand.
pub fn read_ini(text: &str, section: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut global = BTreeMap::new();
    let mut local = BTreeMap::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('-', "_");
        let value = v.trim().to_string();
        match current.as_deref() {
            None => {
                global.insert(key, value);
            }
            Some(s) if s == section => {
                local.insert(key, value);
            }
            Some(_) => {}
        }
    }
    global.extend(local);
    Ok(global)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Failure> {
    v.trim()
        .parse()
        .map_err(|_| Failure::config(format!("config key {key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, Failure> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, Failure> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Failure::config(format!("config key {key}: expected a boolean, got '{v}'"))),
    }
}

/// Folds config-file values into `args` wherever no flag was given.
fn apply_file(args: &mut RunArgs, file: &BTreeMap<String, String>) -> Result<(), Failure> {
    fn set<T>(slot: &mut Option<T>, v: Result<T, Failure>) -> Result<(), Failure> {
        if slot.is_none() {
            *slot = Some(v?);
        }
        Ok(())
    }
    for (k, v) in file {
        match k.as_str() {
            "model" => set(&mut args.model, parse_model(v).map_err(Failure::config))?,
            "eta" => {
                if args.eta.is_empty() {
                    args.eta = parse_list(k, v)?;
                }
            }
            "l" | "sizes" => {
                if args.sizes.is_empty() {
                    args.sizes = parse_list(k, v)?;
                }
            }
            "q" => set(&mut args.q, parse(k, v))?,
            "b" => set(&mut args.b, parse(k, v))?,
            "f" => set(&mut args.f, parse(k, v))?,
            "d" => set(&mut args.d, parse(k, v))?,
            "seed" => set(&mut args.seed, parse(k, v))?,
            "trajectories" => set(&mut args.trajectories, parse(k, v))?,
            "min_steps" => set(&mut args.min_steps, parse(k, v))?,
            "max_steps" => set(&mut args.max_steps, parse(k, v))?,
            "samples" => set(&mut args.samples, parse(k, v))?,
            "equilibration_cap" => set(&mut args.equilibration_cap, parse(k, v))?,
            "grid_points" => set(&mut args.grid_points, parse(k, v))?,
            "theta_samples" => set(&mut args.theta_samples, parse(k, v))?,
            "oracle_steps" => set(&mut args.oracle_steps, parse(k, v))?,
            "trace_every" => set(&mut args.trace_every, parse(k, v))?,
            "threads" => set(&mut args.threads, parse(k, v))?,
            "out" => set(&mut args.out, Ok(PathBuf::from(v)))?,
            "desk_scale" => args.desk_scale |= parse_bool(k, v)?,
            other => return Err(Failure::config(format!("unknown config key '{other}'"))),
        }
    }
    Ok(())
}

pub fn resolve(mut args: RunArgs, section: &str) -> Result<Resolved, Failure> {
    if let Some(path) = args.config.clone() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        // INI keys are case-insensitive; "L" arrives as "l".
        let file = read_ini(&text, section)?
            .into_iter()
            .map(|(k, v)| (k.to_ascii_lowercase(), v))
            .collect();
        apply_file(&mut args, &file)?;
    }
    let mut cfg = if args.desk_scale {
        ExperimentConfig::desk_scale()
    } else {
        ExperimentConfig::default()
    };
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if !args.eta.is_empty() {
        cfg.etas = args.eta;
    }
    if !args.sizes.is_empty() {
        cfg.sizes = args.sizes;
    }
    macro_rules! take {
        ($($field:ident <- $arg:ident),*) => {$(
            if let Some(v) = args.$arg { cfg.$field = v; }
        )*};
    }
    take!(
        q <- q,
        bin_size <- b,
        window <- f,
        threshold <- d,
        seed <- seed,
        trajectories <- trajectories,
        min_steps <- min_steps,
        max_steps <- max_steps,
        entropy_samples <- samples,
        equilibration_cap <- equilibration_cap,
        grid_points <- grid_points,
        theta_samples <- theta_samples,
        oracle_steps <- oracle_steps,
        trace_every <- trace_every,
        threads <- threads
    );
    Ok(Resolved {
        cfg,
        out: args.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        desk_scale: args.desk_scale,
    })
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// The effective settings in the same INI dialect `--config` reads. Thread
/// count is left out so the file does not depend on the machine.
pub fn echo(r: &Resolved, section: &str) -> String {
    let c = &r.cfg;
    let mut s = format!("[{section}]\n");
    let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
    kv("model", c.model.name().to_string());
    kv("eta", join(&c.etas));
    kv("L", join(&c.sizes));
    kv("q", c.q.to_string());
    kv("b", c.bin_size.to_string());
    kv("f", c.window.to_string());
    kv("d", format!("{:e}", c.threshold));
    kv("seed", c.seed.to_string());
    kv("trajectories", c.trajectories.to_string());
    kv("min_steps", c.min_steps.to_string());
    kv("max_steps", c.max_steps.to_string());
    kv("samples", c.entropy_samples.to_string());
    kv("equilibration_cap", c.equilibration_cap.to_string());
    kv("grid_points", c.grid_points.to_string());
    kv("theta_samples", c.theta_samples.to_string());
    kv("oracle_steps", c.oracle_steps.to_string());
    kv("trace_every", c.trace_every.to_string());
    kv("desk_scale", r.desk_scale.to_string());
    s
}

pub fn config_path(out: &Path) -> PathBuf {
    out.join("run_config.ini")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn sections_and_comments() {
        let text = "# c\nq = 4\n[lyapunov]\nq = 6\n; x\n[gap-sweep]\nq = 2\n";
        assert_eq!(read_ini(text, "lyapunov").unwrap()["q"], "6");
        assert_eq!(read_ini(text, "gap-sweep").unwrap()["q"], "2");
        assert_eq!(read_ini(text, "cptp-check").unwrap()["q"], "4");
        assert!(read_ini("q 4", "x").is_err());
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let f = write("eta = 0.1, 0.2\nL = 4,6\nq = 3\nseed = 9\nmodel = floquet\n");
        let args = RunArgs {
            config: Some(f.path().to_path_buf()),
            q: Some(2),
            ..Default::default()
        };
        let r = resolve(args, "lyapunov").unwrap();
        assert_eq!(r.cfg.q, 2);
        assert_eq!(r.cfg.seed, 9);
        assert_eq!(r.cfg.etas, vec![0.1, 0.2]);
        assert_eq!(r.cfg.sizes, vec![4, 6]);
        assert_eq!(r.cfg.model, ModelKind::Floquet);
        assert_eq!(r.cfg.bin_size, ExperimentConfig::default().bin_size);
    }

    #[test]
    fn desk_scale_from_file_selects_preset() {
        let f = write("desk-scale = yes\n");
        let r = resolve(
            RunArgs {
                config: Some(f.path().to_path_buf()),
                ..Default::default()
            },
            "lyapunov",
        )
        .unwrap();
        assert!(r.desk_scale);
        assert_eq!(r.cfg.window, ExperimentConfig::desk_scale().window);
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        for text in ["bogus = 1\n", "q = many\n", "model = ising\n"] {
            let f = write(text);
            let err = resolve(
                RunArgs {
                    config: Some(f.path().to_path_buf()),
                    ..Default::default()
                },
                "lyapunov",
            )
            .unwrap_err();
            assert_eq!(err.code, crate::EXIT_CONFIG, "{text}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let args = RunArgs {
            eta: vec![0.25, 0.3],
            sizes: vec![4],
            q: Some(3),
            d: Some(1e-3),
            desk_scale: true,
            ..Default::default()
        };
        let r = resolve(args, "lyapunov").unwrap();
        let f = write(&echo(&r, "lyapunov"));
        let again = resolve(
            RunArgs {
                config: Some(f.path().to_path_buf()),
                threads: Some(r.cfg.threads),
                ..Default::default()
            },
            "lyapunov",
        )
        .unwrap();
        assert_eq!(again.cfg, r.cfg);
    }
}
