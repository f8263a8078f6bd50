use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pppca::eval::{
    bench, compare, format_bench, format_reports, load_csv, partition_horizontal, reports_csv, write_matrix_csv,
    CompareOptions, CsvOptions, Dataset, EvalError, EvalMethod, Task,
};
use pppca::party::RoleKind;
use pppca::protocol::{
    drive, run_loopback, run_session, Consumer, DataProvider, MessageType, Method, ProtocolError, Role, Server, SessionConfig,
    SessionOutcome,
};
use pppca::transport::{TcpTransport, TransportError};
use pppca::PartyId;

#[derive(Parser, Debug)]
#[command(name = "pppca", version, about = "Privacy-preserving PCA over horizontally partitioned data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every party of a session in this process.
    Simulate(SimulateArgs),
    /// Run a single party over TCP.
    Role(RoleArgs),
    /// Cross-validated comparison of centralized, separate and private PCA.
    Compare(CompareArgs),
    /// Time full sessions for several party counts.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV file with one sample per row.
    #[arg(long)]
    input: PathBuf,
    /// Field delimiter, a single byte such as ';'.
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Name of the target column, excluded from the features.
    #[arg(long)]
    label: Option<String>,
    /// The first row holds data, not column names.
    #[arg(long)]
    no_header: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        let delimiter = match self.delimiter.as_bytes() {
            [b] => *b,
            _ if self.delimiter == "\\t" => b'\t',
            _ => return Err(CliError::Usage(format!("delimiter must be one byte, got {:?}", self.delimiter))),
        };
        let opts = CsvOptions { delimiter, header: !self.no_header, label: self.label.clone() };
        Ok(load_csv(&self.input, &opts)?)
    }
}

#[derive(Args, Debug, Default)]
struct SessionArgs {
    /// JSON file with session settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    /// Paillier modulus size in bits.
    #[arg(long)]
    key_bits: Option<u64>,
    /// Allow 512-bit keys.
    #[arg(long)]
    test_keys: bool,
    /// Provider that adds ciphertexts on the HE path.
    #[arg(long)]
    aggregator: Option<u16>,
    /// Seconds to wait for a message in networked runs.
    #[arg(long)]
    timeout: Option<f64>,
}

impl SessionArgs {
    fn resolve(&self, parties: Option<u16>, k: Option<usize>) -> Result<SessionConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => SessionConfig::default(),
        };
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(p) = parties {
            cfg.parties = p;
        }
        if let Some(k) = k {
            cfg.k = k;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if let Some(bits) = self.key_bits {
            cfg.key_bits = bits;
        }
        cfg.test_keys |= self.test_keys;
        if let Some(a) = self.aggregator {
            cfg.aggregator = a;
        }
        if let Some(t) = self.timeout {
            cfg.timeout_secs = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> Result<SessionConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    session: SessionArgs,
    /// Number of data providers.
    #[arg(long)]
    parties: Option<u16>,
    #[arg(long)]
    k: Option<usize>,
    /// Route messages over loopback TCP instead of the in-process queue.
    #[arg(long)]
    tcp: bool,
    /// Where to write the reduced rows; standard output by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleName {
    Provider,
    Server,
    Consumer,
}

#[derive(Args, Debug)]
struct RoleArgs {
    #[arg(long, value_enum)]
    role: RoleName,
    /// Provider number in 1..=parties.
    #[arg(long)]
    id: Option<u16>,
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long)]
    parties: Option<u16>,
    #[arg(long)]
    k: Option<usize>,
    /// Address this party accepts connections on.
    #[arg(long)]
    listen: SocketAddr,
    /// Peers as ID=HOST:PORT, comma separated; the server is 0 and the
    /// consumer is parties+1.
    #[arg(long, value_delimiter = ',', value_parser = parse_peer)]
    connect: Vec<(PartyId, SocketAddr)>,
    /// Provider rows; every column is a feature unless --label is given.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = ",")]
    delimiter: String,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    no_header: bool,
    /// Consumer output file; standard output by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_peer(s: &str) -> Result<(PartyId, SocketAddr), String> {
    let (id, addr) = s.split_once('=').ok_or_else(|| format!("expected ID=HOST:PORT, got {s:?}"))?;
    let id: u16 = id.trim().parse().map_err(|_| format!("bad party id {id:?}"))?;
    let addr = addr.trim().parse().map_err(|e| format!("bad address {addr:?}: {e}"))?;
    Ok((PartyId(id), addr))
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, default_value_t = 2)]
    parties: u16,
    /// Target dimensions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    /// centralized, separate, pppca-he, pppca-ss or all, comma separated.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// regression or classification; inferred from the labels by default.
    #[arg(long)]
    task: Option<Task>,
    /// Scale features to unit variance before PCA.
    #[arg(long)]
    standardize: bool,
    /// Also write the metrics as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    session: SessionArgs,
    /// Party counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    parties: Vec<u16>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Protocol(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Protocol(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Protocol(m) => m,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(_) => CliError::Usage(e.to_string()),
            ProtocolError::Data(_) => CliError::Data(e.to_string()),
            _ => CliError::Protocol(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Protocol(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        CliError::Protocol(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| io_err(path, e))
}

fn write_reduced(out: Option<&Path>, m: &pppca::Matrix) -> Result<(), CliError> {
    let names: Vec<String> = (1..=m.cols()).map(|c| format!("pc{c}")).collect();
    match out {
        Some(path) => write_matrix_csv(create(path)?, m, Some(&names))?,
        None => write_matrix_csv(std::io::stdout().lock(), m, Some(&names))?,
    }
    Ok(())
}

fn summary(outcome: &SessionOutcome) -> String {
    let t = &outcome.transcript;
    let mut s = format!("messages: {}\n", t.len());
    for ty in MessageType::ALL {
        let n = t.count(ty);
        if n > 0 {
            s.push_str(&format!("  {ty:?}: {n}\n"));
        }
    }
    s.push_str("seconds by stage:\n");
    for (step, secs) in &outcome.phase_seconds {
        s.push_str(&format!("  {step}: {secs:.4}\n"));
    }
    s
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = args.session.resolve(args.parties, args.k)?;
    let ds = args.input.load()?;
    let parts = partition_horizontal(&ds, cfg.parties as usize, cfg.seed.unwrap_or(0))?
        .into_iter()
        .map(|d| d.features)
        .collect();
    let outcome = if args.tcp { run_loopback(&cfg, parts)? } else { run_session(&cfg, parts)? };
    write_reduced(args.out.as_deref(), &outcome.reduced)?;
    let text = summary(&outcome);
    if args.out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    Ok(())
}

fn role(args: RoleArgs) -> Result<(), CliError> {
    let cfg = args.session.resolve(args.parties, args.k)?;
    let role = match args.role {
        RoleName::Provider => {
            let id = args.id.ok_or_else(|| CliError::Usage("--id is required for a provider".into()))?;
            let input = args.input.as_ref().ok_or_else(|| CliError::Usage("--input is required for a provider".into()))?;
            let ds = InputArgs {
                input: input.clone(),
                delimiter: args.delimiter.clone(),
                label: args.label.clone(),
                no_header: args.no_header,
            }
            .load()?;
            if cfg.role_of(PartyId(id)) != Some(RoleKind::Provider) {
                return Err(CliError::Usage(format!("provider id must be in 1..={}, got {id}", cfg.parties)));
            }
            Role::Provider(DataProvider::new(cfg.clone(), PartyId(id), ds.features)?)
        }
        RoleName::Server => Role::Server(Server::new(cfg.clone())?),
        RoleName::Consumer => Role::Consumer(Consumer::new(cfg.clone())),
    };
    let peers: HashMap<PartyId, SocketAddr> = args.connect.into_iter().collect();
    let mut transport = TcpTransport::bind(role.id(), args.listen, peers, None)?;
    transport.set_connect_timeout(cfg.timeout());
    let mut role = role;
    drive(&mut role, &mut transport, cfg.timeout())?;
    if let Role::Consumer(c) = role {
        let reduced = c.into_reduced().ok_or_else(|| CliError::Protocol("consumer finished without rows".into()))?;
        write_reduced(args.out.as_deref(), &reduced)?;
    }
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<(), CliError> {
    let session = args.session.resolve(Some(args.parties), None)?;
    let methods = EvalMethod::parse_list(&args.methods).map_err(CliError::Usage)?;
    let ds = args.input.load()?;
    let mut reports = Vec::new();
    for &k in &args.k {
        let opts = CompareOptions {
            parties: args.parties,
            k,
            methods: methods.clone(),
            folds: args.folds,
            seed: session.seed.unwrap_or(0),
            task: args.task,
            standardize: args.standardize,
            logreg: Default::default(),
            session: session.clone(),
        };
        reports.extend(compare(&ds, &opts)?);
    }
    print!("{}", format_reports(&reports, true));
    if let Some(path) = &args.out {
        create(path)?.write_all(reports_csv(&reports).as_bytes()).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<(), CliError> {
    let first = args.parties.first().copied();
    let cfg = args.session.resolve(first, args.k)?;
    let ds = args.input.load()?;
    let rows = bench(&ds.features, &args.parties, &cfg, cfg.seed.unwrap_or(0))?;
    let table = format_bench(&rows);
    print!("{table}");
    if let Some(path) = &args.out {
        let mut csv = String::from("method,parties,seconds,messages\n");
        for r in &rows {
            csv.push_str(&format!("{},{},{},{}\n", r.method, r.parties, r.seconds, r.messages));
        }
        create(path)?.write_all(csv.as_bytes()).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Role(a) => role(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
