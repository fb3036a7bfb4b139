//! `vlc-sim` — run dimming-scheme experiment sweeps, emit illuminance maps,
//! and scaffold reference scenarios.
//!
//! Exit codes: 0 on success, 1 when any run failed, 2 on invalid input.
//! Every flag can also be set through an environment variable with the
//! `VLC_SIM_` prefix.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use vlc_cli::experiment::{run_experiment, ExperimentPlan};
use vlc_cli::map::{scheme_map, selection_map, MapArtifact};
use vlc_cli::{invalid, is_invalid_input, load_scenario_file, write_atomic};
use vlc_core::orchestrator::{FrMode, Scheme};
use vlc_core::scenario::Scenario;

// ---------------------------------------------------------------------------
// Flags
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "vlc-sim",
    version,
    about = "Multi-cell visible-light-communication network simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the cross product of schemes x dimming levels x reuse modes x
    /// seeds and write metrics.csv plus one JSON summary per run.
    Run {
        /// Scenario TOML file.
        #[arg(long, env = "VLC_SIM_SCENARIO")]
        scenario: PathBuf,
        /// Comma-separated: tasp-hd, tasp-hd-up, ad, dd.
        #[arg(long, env = "VLC_SIM_SCHEMES", value_delimiter = ',')]
        schemes: Vec<String>,
        /// Comma-separated dimming levels in (0, 1].
        #[arg(long, env = "VLC_SIM_ETAS", value_delimiter = ',')]
        etas: Vec<f64>,
        /// Comma-separated reuse modes: 1, nc, or an explicit factor.
        #[arg(long, env = "VLC_SIM_FR", value_delimiter = ',', default_value = "1")]
        fr: Vec<String>,
        /// Comma-separated placement seeds.
        #[arg(long, env = "VLC_SIM_SEEDS", value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Output directory.
        #[arg(long, env = "VLC_SIM_OUT")]
        out: PathBuf,
        /// Worker threads (default: CPU count, capped at 8).
        #[arg(long, env = "VLC_SIM_JOBS")]
        jobs: Option<usize>,
        /// Print one line per finished run.
        #[arg(long, short, env = "VLC_SIM_VERBOSE")]
        verbose: bool,
    },
    /// Emit (x, y, lux) over the uniformity lattice, for a scheme run or an
    /// explicit LED selection.
    IlluminanceMap {
        /// Scenario TOML file.
        #[arg(long, env = "VLC_SIM_SCENARIO")]
        scenario: PathBuf,
        /// Scheme whose selection and operating bias the map shows.
        #[arg(long, env = "VLC_SIM_SCHEME", default_value = "tasp-hd")]
        scheme: String,
        /// Override the scenario's dimming target.
        #[arg(long, env = "VLC_SIM_ETA")]
        eta: Option<f64>,
        /// Override the scenario's placement seed.
        #[arg(long, env = "VLC_SIM_SEED")]
        seed: Option<u64>,
        /// Map an explicit selection instead of running the scheme:
        /// comma-separated LED indices, or 'none' for a dark room.
        #[arg(long, env = "VLC_SIM_ACTIVE")]
        active: Option<String>,
        /// Output CSV file.
        #[arg(long, env = "VLC_SIM_OUT")]
        out: PathBuf,
    },
    /// Write a reference scenario TOML file.
    InitScenario {
        /// LED grid: 36 or 64.
        #[arg(long, env = "VLC_SIM_LEDS", default_value_t = 64)]
        leds: usize,
        /// Output TOML file.
        #[arg(long, env = "VLC_SIM_OUT")]
        out: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_invalid_input(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> anyhow::Result<ExitCode> {
    match cmd {
        Cmd::Run {
            scenario,
            schemes,
            etas,
            fr,
            seeds,
            out,
            jobs,
            verbose,
        } => {
            let plan = ExperimentPlan {
                scenario: load_scenario_file(&scenario)?,
                schemes: parse_list::<Scheme>(&schemes, "scheme")?,
                dimming_levels: etas,
                fr_modes: parse_list::<FrMode>(&fr, "reuse mode")?,
                seeds,
                jobs: jobs.unwrap_or_else(default_jobs),
            };
            let outcome = run_experiment(&plan, &out)?;
            if verbose {
                for row in &outcome.rows {
                    println!(
                        "run scheme={} eta={} fr={} seed={}: mbe={:.4} cv={:.4} iterations={}",
                        row.scheme, row.eta, row.fr, row.seed, row.mbe, row.cv, row.iterations
                    );
                }
            }
            for f in &outcome.failures {
                eprintln!(
                    "run failed: scheme={} eta={} fr={} seed={}: {}",
                    f.scheme, f.eta, f.fr, f.seed, f.error
                );
            }
            println!(
                "wrote {} metrics rows and {} summaries to {} ({} failures)",
                outcome.rows.len(),
                outcome.rows.len(),
                out.display(),
                outcome.failures.len()
            );
            Ok(if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::IlluminanceMap {
            scenario,
            scheme,
            eta,
            seed,
            active,
            out,
        } => {
            let mut sc = load_scenario_file(&scenario)?;
            if let Some(eta) = eta {
                sc.dimming_target = eta;
            }
            if let Some(seed) = seed {
                sc.users.seed = seed;
            }
            let art = match active {
                Some(spec) => selection_map(&sc, &parse_active(&spec)?)?,
                None => scheme_map(&sc, parse_one::<Scheme>(&scheme, "scheme")?)?,
            };
            write_atomic(&out, &art.csv)?;
            print_map_summary(&art, &out);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::InitScenario { leds, out } => {
            let sc = match leds {
                36 => Scenario::reference_36(),
                64 => Scenario::reference_64(),
                other => {
                    return Err(invalid(format!(
                        "no reference scenario with {other} LEDs (expected 36 or 64)"
                    )))
                }
            };
            write_atomic(&out, sc.to_toml().as_bytes())?;
            println!("wrote {} LED reference scenario to {}", leds, out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_map_summary(art: &MapArtifact, out: &std::path::Path) {
    println!(
        "map: points={} active={} bias_a={:.4} min_lux={:.2} max_lux={:.2} mean_lux={:.2} cv={:.4} cv_feasible={} file={}",
        art.points,
        art.active,
        art.bias_a,
        art.min_lux,
        art.max_lux,
        art.mean_lux,
        art.cv,
        art.cv_feasible,
        out.display()
    );
}

// ---------------------------------------------------------------------------
// Flag parsing helpers
// ---------------------------------------------------------------------------

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}

fn parse_one<T>(token: &str, what: &str) -> anyhow::Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    token
        .trim()
        .parse::<T>()
        .map_err(|e| invalid(format!("bad {what} '{token}': {e}")))
}

fn parse_list<T>(tokens: &[String], what: &str) -> anyhow::Result<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    tokens.iter().map(|t| parse_one::<T>(t, what)).collect()
}

/// Explicit activation spec: 'none' for a dark room, else LED indices.
fn parse_active(spec: &str) -> anyhow::Result<Vec<usize>> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| invalid(format!("bad LED index '{t}': {e}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_and_reuse_tokens_parse() {
        let schemes =
            parse_list::<Scheme>(&["tasp-hd".into(), "dd".into()], "scheme").unwrap();
        assert_eq!(schemes, vec![Scheme::TaspHd, Scheme::Dd]);
        let frs = parse_list::<FrMode>(&["1".into(), "nc".into(), "4".into()], "reuse mode")
            .unwrap();
        assert_eq!(frs, vec![FrMode::Fr1, FrMode::CellCount, FrMode::Exact(4)]);
        assert!(parse_list::<Scheme>(&["sd".into()], "scheme").is_err());
    }

    #[test]
    fn active_spec_accepts_none_and_index_lists() {
        assert_eq!(parse_active("none").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_active("3, 1,2").unwrap(), vec![3, 1, 2]);
        assert!(parse_active("1,x").is_err());
    }
}
