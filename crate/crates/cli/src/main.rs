use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gridfactor_core::cascade;
use gridfactor_core::factors::{self, GlodfMethod, LineMatrix, OutageSet};
use gridfactor_core::graph_algos;
use gridfactor_core::localization::{self, PerturbationSpec};
use gridfactor_core::net_model::{self, Case, Injections};
use gridfactor_core::{Error, dcpf};
use serde_json::{Value, json};

mod verify;

#[derive(Parser, Debug)]
#[command(name = "gridfactor", version, about = "DC power-flow contingency analysis")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Reference node id (defaults to the document's choice).
    #[arg(long, global = true)]
    reference: Option<u32>,

    /// Zero / agreement tolerance.
    #[arg(long, global = true, env = "GRIDFACTOR_TOL", default_value_t = 1e-9)]
    tol: f64,

    /// Seed for randomized checks and perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Blocks, bridges and cut vertices.
    Blocks { network: PathBuf },
    /// DC power flow under the document's injections.
    Flow { network: PathBuf },
    /// Full PTDF matrix.
    Ptdf { network: PathBuf },
    /// LODF column for one outaged line.
    Lodf {
        network: PathBuf,
        #[arg(long)]
        line: usize,
    },
    /// GLODF for a simultaneous outage.
    Glodf {
        network: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lines: Vec<usize>,
        #[arg(long, default_value = "pre-contingency")]
        method: GlodfMethod,
    },
    /// Block structure of an outage and optional perturbation statistics.
    Localize {
        network: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lines: Vec<usize>,
        #[arg(long)]
        perturb: bool,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Cascade started by tripping the given lines.
    Cascade {
        network: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        trip: Vec<usize>,
        #[arg(long)]
        max_stages: Option<usize>,
    },
    /// Pairs of lines whose outage factors exceed a threshold.
    Influence {
        network: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        threshold: f64,
    },
    /// Cross-checks every identity on the network.
    Verify { network: PathBuf },
}

enum Output {
    Json(Value),
    Text(String),
}

struct Failure {
    code: u8,
    message: String,
    stdout: Option<Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() { 1 } else { 2 };
        let stdout = match &e {
            Error::MaxStages(trace) => serde_json::to_value(trace).ok(),
            Error::Validation(report) => serde_json::to_value(report).ok(),
            _ => None,
        };
        Failure {
            code,
            message: e.to_string(),
            stdout,
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
        stdout: None,
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Case, Failure> {
    if !path.exists() {
        return Err(usage(format!("{}: no such file or directory", path.display())));
    }
    let mut case = net_model::load_path(path)?;
    if let Some(id) = cli.reference {
        case.network = case.network.with_reference(id)?;
    }
    Ok(case)
}

fn injections(case: &Case) -> Result<&Injections, Failure> {
    case.injections
        .as_ref()
        .ok_or_else(|| usage("the network document has no injections"))
}

fn require_format(cli: &Cli, allowed: &[Format]) -> Result<(), Failure> {
    if allowed.contains(&cli.format) {
        Ok(())
    } else {
        Err(usage(format!("format {:?} is not supported by this subcommand", cli.format).to_lowercase()))
    }
}

fn matrix_output(cli: &Cli, m: LineMatrix) -> Output {
    match cli.format {
        Format::Csv => Output::Text(m.to_csv()),
        _ => Output::Json(json!(m)),
    }
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(usage(format!("tolerance must be positive, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Blocks { network } => {
            require_format(cli, &[Format::Json, Format::Csv])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let d = graph_algos::block_decomposition(net)?;
            if cli.format == Format::Csv {
                let mut out = String::from("line,block,bridge\n");
                for (l, b) in d.block_of.iter().enumerate() {
                    out.push_str(&format!("{},{},{}\n", l + 1, b, d.is_bridge(l)));
                }
                return Ok(Output::Text(out));
            }
            let ids = |v: &[usize]| v.iter().map(|l| l + 1).collect::<Vec<_>>();
            Ok(Output::Json(json!({
                "blocks": d.blocks.iter().map(|b| ids(b)).collect::<Vec<_>>(),
                "bridges": ids(&d.bridges),
                "cut_vertices": d.cut_vertices.iter().map(|&i| net.node_id(i)).collect::<Vec<_>>(),
            })))
        }
        Command::Flow { network } => {
            require_format(cli, &[Format::Json, Format::Csv])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let bundle = dcpf::build_laplacian(net)?;
            let state = dcpf::solve_flow(&bundle, net, injections(&case)?);
            if cli.format == Format::Csv {
                let mut out = String::from("line,from,to,flow\n");
                for (e, f) in net.edges().iter().zip(&state.flows) {
                    let (s, t) = (net.node_id(e.source), net.node_id(e.target));
                    out.push_str(&format!("{},{s},{t},{f}\n", e.id));
                }
                return Ok(Output::Text(out));
            }
            let flows: Vec<Value> = net
                .edges()
                .iter()
                .zip(&state.flows)
                .map(|(e, f)| {
                    json!({"line": e.id, "from": net.node_id(e.source), "to": net.node_id(e.target), "flow": f})
                })
                .collect();
            let angles: Vec<Value> = state
                .theta
                .iter()
                .enumerate()
                .map(|(i, t)| json!({"node": net.node_id(i), "theta": t}))
                .collect();
            Ok(Output::Json(json!({
                "reference": net.node_id(net.reference()),
                "flows": flows,
                "angles": angles,
            })))
        }
        Command::Ptdf { network } => {
            require_format(cli, &[Format::Json, Format::Csv])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let bundle = dcpf::build_laplacian(net)?;
            let ptdf = factors::ptdf_matrix(&bundle, net);
            let all: Vec<usize> = (0..net.m()).collect();
            Ok(matrix_output(cli, LineMatrix::new(&all, &all, ptdf.matrix())))
        }
        Command::Lodf { network, line } => {
            require_format(cli, &[Format::Json, Format::Csv])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let l_hat = net.edge_indices(&[*line])?[0];
            let bundle = dcpf::build_laplacian(net)?;
            let ptdf = factors::ptdf_matrix(&bundle, net);
            let d = graph_algos::block_decomposition(net)?;
            let col = factors::lodf_single(&ptdf, &d, l_hat)?;
            Ok(matrix_output(cli, LineMatrix::column(&col.lines, l_hat, &col.values)))
        }
        Command::Glodf { network, lines, method } => {
            require_format(cli, &[Format::Json, Format::Csv])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let outage = OutageSet::from_ids(net, lines)?;
            let bundle = dcpf::build_laplacian(net)?;
            let ptdf = factors::ptdf_matrix(&bundle, net);
            let r = factors::glodf(&bundle, &ptdf, net, &outage, *method)?;
            let k = LineMatrix::new(outage.surviving(), outage.outaged(), &r.k);
            if cli.format == Format::Csv {
                return Ok(Output::Text(k.to_csv()));
            }
            Ok(Output::Json(json!({
                "outage": lines_of(&outage),
                "method": r.method,
                "k": k,
                "k_stack": LineMatrix::new(outage.surviving(), outage.outaged(), &r.k_stack),
                "residuals": r.residuals,
            })))
        }
        Command::Localize {
            network,
            lines,
            perturb,
            trials,
            eps,
        } => {
            require_format(cli, &[Format::Json])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let outage = OutageSet::from_ids(net, lines)?;
            let bundle = dcpf::build_laplacian(net)?;
            let ptdf = factors::ptdf_matrix(&bundle, net);
            let d = graph_algos::block_decomposition(net)?;
            let r = factors::glodf(&bundle, &ptdf, net, &outage, GlodfMethod::PreContingency)?;
            let report = localization::block_structure_report(&bundle, &ptdf, net, &r, &d, cli.tol)?;
            let mut out = json!({ "report": report });
            if *perturb {
                let spec = PerturbationSpec {
                    eps: *eps,
                    trials: *trials,
                    seed: cli.seed,
                };
                out["perturbation"] = json!(localization::almost_sure_nonzero_test(net, &outage, &spec)?);
            }
            Ok(Output::Json(out))
        }
        Command::Cascade {
            network,
            trip,
            max_stages,
        } => {
            require_format(cli, &[Format::Json])?;
            let case = load(cli, network)?;
            let net = &case.network;
            let initial = net.edge_indices(trip)?;
            let trace = cascade::run_cascade(net, injections(&case)?, &initial, *max_stages)?;
            Ok(Output::Json(json!(trace)))
        }
        Command::Influence { network, threshold } => {
            require_format(cli, &[Format::Json, Format::Dot])?;
            if threshold.is_nan() || *threshold < 0.0 {
                return Err(usage("threshold must be nonnegative"));
            }
            let case = load(cli, network)?;
            let net = &case.network;
            let bundle = dcpf::build_laplacian(net)?;
            let ptdf = factors::ptdf_matrix(&bundle, net);
            let d = graph_algos::block_decomposition(net)?;
            let pairs = cascade::influence_graph(&ptdf, &d, *threshold);
            Ok(match cli.format {
                Format::Dot => Output::Text(cascade::influence_dot(&pairs)),
                _ => Output::Json(json!({ "threshold": threshold, "pairs": pairs })),
            })
        }
        Command::Verify { network } => {
            require_format(cli, &[Format::Json])?;
            let case = load(cli, network)?;
            let report = verify::run(&case, cli.tol, cli.seed)?;
            let pass = report.pass;
            let value = json!(report);
            if pass {
                Ok(Output::Json(value))
            } else {
                Err(Failure {
                    code: 2,
                    message: "one or more identity checks failed".into(),
                    stdout: Some(value),
                })
            }
        }
    }
}

fn lines_of(outage: &OutageSet) -> Vec<usize> {
    outage.outaged().iter().map(|l| l + 1).collect()
}

fn print_json(v: &Value) {
    let mut text = serde_json::to_string_pretty(v).expect("JSON values serialize");
    text.push('\n');
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Output::Json(v)) => {
            print_json(&v);
            ExitCode::SUCCESS
        }
        Ok(Output::Text(t)) => {
            let _ = std::io::stdout().write_all(t.as_bytes());
            ExitCode::SUCCESS
        }
        Err(f) => {
            if let Some(v) = &f.stdout {
                print_json(v);
            }
            eprintln!("gridfactor: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
