//! `ispec`: command-line driver. Each subcommand reads and writes the JSON
//! formats of [`ispec::io`], so stages chain through files in `--out`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ispec::config::{require_oracle, GeometryConfig, Mode, Shape, SigmaArg};
use ispec::io::{read_dataset, read_green_record, write_green_record, write_json, IoError};
use ispec::verify::{parse_suite, run_suite_with, summary};
use ispec_core::energy::{energy_flux, FluxOptions};
use ispec_core::geometry::{intrinsic_distances, varadhan_distances};
use ispec_core::green::{poles_and_residues, residues_to_spectral_data, simulate_green, PencilOptions};
use ispec_core::manifold::{check_disjointness, eigendecompose, emit_spectral_data, subdomain_dirichlet_spectrum, DataKind, Region, Side, SpectralDataset};
use ispec_core::response::{recover_nd, response, AnchorOptions, JRoute, SigmaOperator};
use ispec_core::signal::{Interpolation, SourceSignal};
use ispec_core::subdomain::{assign_spectra, extended_eigenfunctions};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ispec", version, about = "Spectral data on an interior hypersurface: forward generation, reconstruction and verification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, value_enum, default_value_t = Shape::Cycle)]
    geometry: Shape,
    /// Cycle vertex count.
    #[arg(long, global = true, default_value_t = 64)]
    n: usize,
    #[arg(long, global = true, default_value_t = 32)]
    nx: usize,
    #[arg(long, global = true, default_value_t = 32)]
    ny: usize,
    /// Cycle edge stretch in `x`, or torus conformal factor in `x, y`.
    #[arg(long = "metric-expr", global = true)]
    metric_expr: Option<String>,
    /// Hypersurface components, e.g. `0,3;7,12` or `ring(4,4,5,4)`.
    #[arg(long, global = true)]
    sigma: Option<SigmaArg>,
    /// Number of eigenpairs kept in generated or consumed data.
    #[arg(long = "trunc-J", global = true)]
    trunc_j: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Test)]
    mode: Mode,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the manifold and hypersurface and write their spectral data.
    Forge {
        #[arg(long, value_enum, default_value_t = KindArg::Cauchy)]
        kind: KindArg,
    },
    /// Ground-truth Dirichlet spectra of the five regions.
    Spectra {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
    },
    /// Distances between Σ vertices from heat asymptotics.
    Distances {
        #[command(flatten)]
        data: DataArg,
        /// Comma-separated heat times.
        #[arg(long = "t-grid", default_value = "0.05,0.075,0.1,0.15,0.2")]
        t_grid: String,
        /// Chaining scale for intrinsic distances.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Trace on the plus side of the transmission field for jumps `f`, `h`.
    Respond {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        /// Value jump, one number per Σ vertex.
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        /// Derivative jump, one number per Σ vertex.
        #[arg(long, allow_hyphen_values = true)]
        h: String,
        #[command(flatten)]
        route: RouteArg,
    },
    /// Neumann-to-Dirichlet map of one side of Σ.
    Nd {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, value_enum)]
        side: SideArg,
        #[command(flatten)]
        route: RouteArg,
    },
    /// Dirichlet spectra of the five regions and their extended
    /// eigenfunctions, from data alone.
    Subspec {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
    },
    /// Energy sent into the region enclosed by one component by a pulse.
    Flux {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value_t = 0)]
        component: usize,
        /// Pulse amplitude per vertex of the component.
        #[arg(long, allow_hyphen_values = true)]
        amp: String,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long = "t-final", default_value_t = 2.0)]
        t_final: f64,
    },
    /// Green record of the manifold, its poles and the reassembled data.
    Green {
        /// Read a stored record instead of simulating one.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long = "t-end", default_value_t = 200.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long = "record-every", default_value_t = 500)]
        record_every: usize,
    },
    /// Run acceptance criteria and write a pass/fail report.
    Verify {
        /// `all` or a comma-separated list of criterion numbers.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cauchy,
    Dirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Minus,
    Plus,
}

#[derive(Args)]
struct DataArg {
    /// Dataset file; defaults to `dataset.json` in the output directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RouteArg {
    /// Anchor height for `J`; tuned when absent.
    #[arg(long)]
    anchor: Option<f64>,
    /// Use the plain truncated sum for `J`.
    #[arg(long, conflicts_with = "anchor")]
    direct: bool,
}

impl RouteArg {
    fn route(&self) -> JRoute {
        if self.direct {
            JRoute::Direct
        } else {
            JRoute::Anchored(AnchorOptions {
                anchor: self.anchor,
                ..Default::default()
            })
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<dyn std::error::Error> },
    #[error("{0}")]
    Usage(String),
}

fn stage<E: std::error::Error + 'static>(stage: &'static str) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Stage {
        stage,
        source: Box::new(e),
    }
}

#[derive(Serialize)]
struct Matrix {
    label: String,
    lambda: f64,
    rows: Vec<Vec<f64>>,
    asymmetry: f64,
}

impl From<&SigmaOperator> for Matrix {
    fn from(op: &SigmaOperator) -> Self {
        Matrix {
            label: format!("{:?}", op.label),
            lambda: op.lambda,
            rows: op.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
            asymmetry: op.asymmetry(),
        }
    }
}

fn numbers(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number '{}'", t.trim()))))
        .collect()
}

fn geometry(g: &Global) -> GeometryConfig {
    GeometryConfig {
        shape: g.geometry,
        n: g.n,
        nx: g.nx,
        ny: g.ny,
        metric_expr: g.metric_expr.clone(),
        ..Default::default()
    }
}

fn load(g: &Global, arg: &DataArg) -> Result<SpectralDataset, CliError> {
    let path = arg.data.clone().unwrap_or_else(|| g.out.join("dataset.json"));
    let data = read_dataset(&path).map_err(stage("read dataset"))?;
    Ok(match g.trunc_j {
        Some(j) if j < data.len() => data.truncated(j),
        _ => data,
    })
}

fn save<T: Serialize>(g: &Global, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = g.out.join(name);
    write_json(&path, value).map_err(stage("write output"))?;
    Ok(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when every stage ran but some requested check failed.
fn run(cli: &Cli) -> Result<bool, CliError> {
    let g = &cli.global;
    std::fs::create_dir_all(&g.out).map_err(|source| {
        stage("create output directory")(IoError::File {
            path: g.out.display().to_string(),
            source,
        })
    })?;
    let sigma_arg = || g.sigma.clone().ok_or_else(|| CliError::Usage("--sigma is required".into()));
    match &cli.command {
        Command::Forge { kind } => {
            let man = geometry(g).build().map_err(stage("build manifold"))?;
            let sigma = sigma_arg()?.carve(&man).map_err(stage("carve hypersurface"))?;
            let count = g.trunc_j.unwrap_or(man.vertex_count()).min(man.vertex_count());
            let basis = eigendecompose(&man, count).map_err(stage("eigendecompose"))?;
            let kind = match kind {
                KindArg::Cauchy => DataKind::Cauchy,
                KindArg::Dirichlet => DataKind::Dirichlet,
            };
            let data = emit_spectral_data(&basis, &sigma, kind).map_err(stage("emit spectral data"))?;
            let path = save(g, "dataset.json", &data)?;
            println!("{} eigenpairs on {} Σ vertices -> {}", data.len(), data.sigma_len(), path.display());
        }
        Command::Spectra { count, tau } => {
            require_oracle(g.mode, "subdomain_dirichlet_spectrum").map_err(stage("mode"))?;
            let man = geometry(g).build().map_err(stage("build manifold"))?;
            let sigma = sigma_arg()?.carve(&man).map_err(stage("carve hypersurface"))?;
            let report = if sigma.components.len() == 2 {
                check_disjointness(&man, &sigma, *count, *tau).map_err(stage("check disjointness"))?
            } else {
                let mut spectra = Vec::new();
                for region in [Region::Inside(0), Region::Outside] {
                    let values = subdomain_dirichlet_spectrum(&man, &sigma, region, *count).map_err(stage("subdomain spectrum"))?;
                    spectra.push((region.label(), values));
                }
                ispec_core::manifold::DisjointnessReport {
                    min_pairwise_gap: ispec_core::manifold::min_cross_gap(&spectra.iter().map(|s| s.1.clone()).collect::<Vec<_>>()),
                    spectra,
                    tolerance: *tau,
                    passes: true,
                }
            };
            let path = save(g, "spectra.json", &report)?;
            for (label, values) in &report.spectra {
                println!("{label:>6}: {}", values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "));
            }
            println!("smallest cross gap {:.3e} -> {}", report.min_pairwise_gap, path.display());
            return Ok(report.passes);
        }
        Command::Distances { data, t_grid, eps } => {
            let data = load(g, data)?;
            let grid = numbers(t_grid)?;
            let ambient = varadhan_distances(&data, &grid).map_err(stage("varadhan distances"))?;
            let path = save(g, "distances.json", &ambient)?;
            if let Some(eps) = eps {
                let intrinsic = intrinsic_distances(&ambient, *eps).map_err(stage("intrinsic distances"))?;
                save(g, "intrinsic.json", &intrinsic)?;
            }
            println!("{} Σ vertices, {} flagged pairs -> {}", ambient.len(), ambient.flagged.len(), path.display());
        }
        Command::Respond { data, lambda, f, h, route } => {
            let data = load(g, data)?;
            let (f, h) = (numbers(f)?, numbers(h)?);
            let r = response(&data, &f, &h, *lambda, route.route()).map_err(stage("response"))?;
            let path = save(g, "response.json", &r)?;
            println!("response at λ = {lambda} -> {}", path.display());
        }
        Command::Nd { data, lambda, side, route } => {
            let data = load(g, data)?;
            let side = match side {
                SideArg::Minus => Side::Minus,
                SideArg::Plus => Side::Plus,
            };
            let nd = recover_nd(&data, *lambda, side, route.route()).map_err(stage("recover ND map"))?;
            let path = save(g, "nd.json", &Matrix::from(&nd))?;
            println!("ND map {side:?} at λ = {lambda}, asymmetry {:.2e} -> {}", nd.asymmetry(), path.display());
        }
        Command::Subspec { data, n_max, tau } => {
            let data = load(g, data)?;
            let asg = assign_spectra(&data, *n_max, *tau).map_err(stage("assign spectra"))?;
            let mut modes = Vec::new();
            for region in Region::all_five() {
                modes.push(extended_eigenfunctions(asg.region(region), &data, None).map_err(stage("extended eigenfunctions"))?);
            }
            save(g, "extended.json", &modes)?;
            let path = save(g, "subspec.json", &asg)?;
            for r in &asg.regions {
                println!("{:>6}: {}", r.region.label(), r.values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "));
            }
            println!("-> {}", path.display());
        }
        Command::Flux { data, component, amp, width, t_final } => {
            let data = load(g, data)?;
            let amp = numbers(amp)?;
            let asg = assign_spectra(&data, None, 1e-6).map_err(stage("assign spectra"))?;
            let dt = 0.01;
            let steps = (width / dt).round() as usize + 1;
            let f = SourceSignal::from_fn(0.0, dt, steps, amp.len(), Interpolation::Linear, |t, x| {
                amp[x] * (std::f64::consts::PI * t / width).sin().powi(4)
            });
            let rec = energy_flux(&data, asg.region(Region::Inside(*component)), &f, *t_final, &FluxOptions::default())
                .map_err(stage("energy flux"))?;
            let path = save(g, "flux.json", &rec)?;
            println!("flux {:.10e}, drift {:.2e} -> {}", rec.flux, rec.constancy_error(), path.display());
        }
        Command::Green {
            record,
            t_end,
            dt,
            record_every,
        } => {
            let rec = match record {
                Some(path) => read_green_record(path).map_err(stage("read Green record"))?,
                None => {
                    require_oracle(g.mode, "simulate_green").map_err(stage("mode"))?;
                    let man = geometry(g).build().map_err(stage("build manifold"))?;
                    let sigma = sigma_arg()?.carve(&man).map_err(stage("carve hypersurface"))?;
                    let rec = simulate_green(&man, &sigma, *t_end, *dt, *record_every).map_err(stage("simulate Green record"))?;
                    write_green_record(&g.out.join("green.bin"), &rec).map_err(stage("write Green record"))?;
                    rec
                }
            };
            let poles = poles_and_residues(&rec, g.trunc_j, &PencilOptions::default()).map_err(stage("pole retrieval"))?;
            save(g, "poles.json", &poles)?;
            let data = residues_to_spectral_data(&poles).map_err(stage("reassemble data"))?;
            let path = save(g, "green_dataset.json", &data)?;
            let unresolved = poles.poles.iter().filter(|p| p.unresolved).count();
            println!("{} poles ({unresolved} unresolved), {} eigenpairs -> {}", poles.poles.len(), data.len(), path.display());
        }
        Command::Verify { suite } => {
            require_oracle(g.mode, "verify").map_err(stage("mode"))?;
            let ids = parse_suite(suite).map_err(CliError::Usage)?;
            let report = run_suite_with(&ids, g.seed, |c| {
                eprintln!("criterion {:>2} {}", c.id, if c.passed { "passed" } else { "FAILED" });
            });
            save(g, "report.json", &report)?;
            let text = summary(&report);
            let path = g.out.join("report.txt");
            std::fs::write(&path, &text).map_err(|source| {
                stage("write output")(IoError::File {
                    path: path.display().to_string(),
                    source,
                })
            })?;
            print!("{text}");
            return Ok(report.passed);
        }
    }
    Ok(true)
}
