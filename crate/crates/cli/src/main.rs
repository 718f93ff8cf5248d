//! `hexdiary`: command-line pipeline over hexagon OD and footfall files.
//!
//! Every subcommand reads its inputs, runs one library operation and writes
//! fixed-name outputs under `--out`. Failures print a single line
//! `error: <kind>: <message>` and exit 1; usage errors exit 2.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use hexdiary::analytics::{
    all_profiles, day_difference_for, day_of_week_totals, top_k, write_diff_csv, write_dow_csv,
    write_dow_summary_csv, write_profiles_csv, write_topk_csv,
};
use hexdiary::diary::{default_min_support, enrich, load_attributes, mine_diary};
use hexdiary::geojson::{export_geojson, load_boundaries, load_layer};
use hexdiary::homework::{build_homework_matrix, detect_with, write_pairs_csv, DetectionRule};
use hexdiary::ingest::{descriptive_stats, load_footfall, load_od, monthly_od_aggregate, OdStore};
use hexdiary::mining::{eclat, read_transactions, write_itemsets};
use hexdiary::synth::{generate, SynthConfig};
use hexdiary::{HexId, Month, Role, UserType};

#[derive(Parser, Debug)]
#[command(
    name = "hexdiary",
    version,
    about = "Home-work pairs, travel diaries and day-of-week analytics from hexagon OD flows"
)]
struct Cli {
    /// Flat `key = value` file whose keys are long flag names (e.g.
    /// `min-days = 12`). Flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load OD (and optionally footfall) files and print a summary.
    IngestCheck(IngestCheckArgs),
    /// Count/mean/std/min/max of record counts, plus month pair totals (stats.csv).
    Stats(StatsArgs),
    /// Detect home/work pairs (homework_pairs.csv).
    Homework(HomeworkArgs),
    /// Build travel diaries for anchors of detected pairs (diary_<anchor>_<weekday>.json).
    Diary(DiaryArgs),
    /// Month totals per hex and interval 1..8 (profile_<role>.csv).
    Profile(ProfileArgs),
    /// Daily totals grouped by weekday (dow_totals.csv, dow_summary.csv).
    Dow(DowArgs),
    /// Per-hex difference of mean daily counts between two weekdays (diff_<a>_<b>.csv).
    Diff(DiffArgs),
    /// Busiest hexes over the month (topk_<role>.csv).
    Topk(TopkArgs),
    /// Generate a synthetic month (od.csv, footfall.csv, ledger.json, boundaries.csv).
    Synth(SynthArgs),
    /// Join a hex,value layer to boundaries and write GeoJSON (<layer>.geojson).
    ExportGeojson(ExportArgs),
    /// Mine frequent itemsets from a whitespace-separated transaction file (itemsets.tsv).
    Mine(MineArgs),
}

#[derive(Args, Debug)]
struct OdInput {
    /// OD CSV file.
    #[arg(long, value_name = "PATH")]
    od: PathBuf,
}

#[derive(Args, Debug)]
struct OutDir {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestCheckArgs {
    #[command(flatten)]
    input: OdInput,
    /// Footfall CSV file.
    #[arg(long, value_name = "PATH")]
    ff: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    input: OdInput,
    #[command(flatten)]
    out: OutDir,
    /// OD user type to summarise.
    #[arg(long, value_name = "TYPE", default_value = "worker", value_parser = ["all", "worker"])]
    user_type: String,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// OD user type used for detection.
    #[arg(long, value_name = "TYPE", default_value = "worker", value_parser = ["all", "worker"])]
    user_type: String,
    /// Minimum number of qualifying days for a pair.
    #[arg(long, value_name = "N", default_value_t = 10)]
    min_days: usize,
    /// Intervals in which a work->home flow voids the day.
    #[arg(
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "3,4,5"
    )]
    disqualify: Vec<u8>,
}

impl DetectArgs {
    fn rule(&self) -> DetectionRule {
        DetectionRule {
            min_days: self.min_days,
            disqualifier: self.disqualify.clone(),
        }
    }
}

#[derive(Args, Debug)]
struct HomeworkArgs {
    #[command(flatten)]
    input: OdInput,
    #[command(flatten)]
    out: OutDir,
    #[command(flatten)]
    detect: DetectArgs,
}

#[derive(Args, Debug)]
struct DiaryArgs {
    #[command(flatten)]
    input: OdInput,
    #[command(flatten)]
    out: OutDir,
    #[command(flatten)]
    detect: DetectArgs,
    /// Anchor hex [default: every home of a detected pair].
    #[arg(long, value_name = "HEX")]
    anchor: Option<HexId>,
    /// ISO weekday, 1 = Monday.
    #[arg(long, value_name = "N", default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=7))]
    weekday: u8,
    /// Minimum support in days [default: max(2, ceil(n/2)) for the n
    /// occurrences of the weekday in the month].
    #[arg(long, value_name = "N")]
    min_support: Option<usize>,
    /// Footfall CSV used to attach per-hex mean footfall.
    #[arg(long, value_name = "PATH")]
    ff: Option<PathBuf>,
    /// `hex,key,value` attribute CSV attached to mentioned hexes.
    #[arg(long, value_name = "PATH")]
    attrs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyticsInput {
    #[command(flatten)]
    input: OdInput,
    #[command(flatten)]
    out: OutDir,
    /// OD user type to analyse.
    #[arg(long, value_name = "TYPE", default_value = "worker", value_parser = ["all", "worker"])]
    user_type: String,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[command(flatten)]
    common: AnalyticsInput,
    /// Whether hexes are counted as origins or destinations.
    #[arg(long, value_name = "ROLE", default_value = "destination", value_parser = ["origin", "destination"])]
    role: String,
    /// Restrict the output to one hex [default: all hexes].
    #[arg(long, value_name = "HEX")]
    hex: Option<HexId>,
}

#[derive(Args, Debug)]
struct DowArgs {
    #[command(flatten)]
    common: AnalyticsInput,
}

#[derive(Args, Debug)]
struct DiffArgs {
    #[command(flatten)]
    common: AnalyticsInput,
    /// First ISO weekday (minuend), 1 = Monday.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u8).range(1..=7))]
    a: u8,
    /// Second ISO weekday (subtrahend).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u8).range(1..=7))]
    b: u8,
    /// Whether hexes are counted as origins or destinations.
    #[arg(long, value_name = "ROLE", default_value = "destination", value_parser = ["origin", "destination"])]
    role: String,
}

#[derive(Args, Debug)]
struct TopkArgs {
    #[command(flatten)]
    common: AnalyticsInput,
    /// Number of hexes to list.
    #[arg(long, value_name = "N", default_value_t = 10)]
    k: usize,
    /// Whether hexes are counted as origins or destinations.
    #[arg(long, value_name = "ROLE", default_value = "destination", value_parser = ["origin", "destination"])]
    role: String,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    out: OutDir,
    /// Random seed; equal seeds give byte-identical files.
    #[arg(long, value_name = "N", default_value_t = 7)]
    seed: u64,
    /// Number of hexes in the world.
    #[arg(long, value_name = "N", default_value_t = 500)]
    n_hexes: usize,
    /// Number of agents.
    #[arg(long, value_name = "N", default_value_t = 5000)]
    n_agents: usize,
    /// Month to simulate, YYYY-MM.
    #[arg(long, value_name = "YYYY-MM", default_value = "2022-06")]
    month: Month,
    /// Multiplier on office attendance on Thursdays.
    #[arg(long, value_name = "X", default_value_t = 1.3)]
    thursday_weight: f64,
    /// Multiplier on office attendance at weekends.
    #[arg(long, value_name = "X", default_value_t = 0.3)]
    weekend_worker_fraction: f64,
    /// Chance of a lunch or night outing per cohort weekday.
    #[arg(long, value_name = "X", default_value_t = 0.3)]
    secondary_activity_rate: f64,
    /// OD records below this count are withheld (1 disables suppression).
    #[arg(long, value_name = "N", default_value_t = 22)]
    suppression_threshold: u32,
    /// Office-day probability of a regular worker on a normal weekday.
    #[arg(long, value_name = "X", default_value_t = 0.7)]
    office_rate: f64,
    /// Per agent-day chance of shifting departure or return by one interval (0 = deterministic).
    #[arg(long, value_name = "X", default_value_t = 0.0)]
    schedule_jitter: f64,
    /// Share of agents that are not workers.
    #[arg(long, value_name = "X", default_value_t = 0.2)]
    resident_fraction: f64,
    /// Daily chance that a non-worker goes out shopping.
    #[arg(long, value_name = "X", default_value_t = 0.6)]
    resident_outing_rate: f64,
    /// Agents per cohort sharing home, work and schedule.
    #[arg(long, value_name = "N", default_value_t = 50)]
    cohort_size: usize,
    /// Share of cohorts that come in on only 8..=12 days.
    #[arg(long, value_name = "X", default_value_t = 0.1)]
    hybrid_fraction: f64,
    /// Per cohort-day chance that one attendee goes home at midday.
    #[arg(long, value_name = "X", default_value_t = 0.05)]
    midday_return_rate: f64,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            n_hexes: self.n_hexes,
            n_agents: self.n_agents,
            month: self.month,
            thursday_weight: self.thursday_weight,
            weekend_worker_fraction: self.weekend_worker_fraction,
            secondary_activity_rate: self.secondary_activity_rate,
            suppression_threshold: self.suppression_threshold,
            office_rate: self.office_rate,
            schedule_jitter: self.schedule_jitter,
            resident_fraction: self.resident_fraction,
            resident_outing_rate: self.resident_outing_rate,
            cohort_size: self.cohort_size,
            hybrid_fraction: self.hybrid_fraction,
            midday_return_rate: self.midday_return_rate,
        }
    }
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    out: OutDir,
    /// Layer CSV with `hex` first and the value second (e.g. a diff output).
    #[arg(long, value_name = "PATH")]
    layer: PathBuf,
    /// Boundary lookup CSV `hex,ring`, ring = `lon lat` pairs joined by `;`.
    #[arg(long, value_name = "PATH")]
    boundaries: PathBuf,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[command(flatten)]
    out: OutDir,
    /// Transaction file, one transaction of whitespace-separated items per line.
    #[arg(long, value_name = "PATH")]
    transactions: PathBuf,
    /// Minimum support in transactions.
    #[arg(long, value_name = "N", default_value_t = 2)]
    min_support: usize,
}

struct CliError {
    kind: &'static str,
    message: String,
    usage: bool,
}

impl From<hexdiary::Error> for CliError {
    fn from(e: hexdiary::Error) -> Self {
        CliError {
            kind: e.kind(),
            message: e.to_string(),
            usage: false,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| hexdiary::Error::io(path, e).into()
}

type CliResult<T = ()> = Result<T, CliError>;

fn user_type(s: &str) -> UserType {
    s.parse().expect("clap restricts user types")
}

fn role(s: &str) -> Role {
    s.parse().expect("clap restricts roles")
}

/// Parses the config file into `(key, value)` pairs in file order.
fn read_config(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError {
            kind: "config",
            message: format!("{}:{}: expected key = value", path.display(), i + 1),
            usage: true,
        })?;
        out.push((key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

fn find_config(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Puts config-file values in front of the user's own flags so that later
/// occurrences (the command line) override them.
fn merge_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = find_config(&argv) else {
        return Ok(argv);
    };
    let entries = read_config(&path)?;
    let cmd = Cli::command();
    let Some(sub_pos) = argv
        .iter()
        .skip(1)
        .position(|a| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .map(|p| p + 1)
    else {
        return Ok(argv);
    };
    let sub = cmd
        .find_subcommand(argv[sub_pos].to_string_lossy().as_ref())
        .expect("position found above");
    let every_flag: Vec<String> = cmd
        .get_subcommands()
        .flat_map(|s| {
            s.get_arguments()
                .filter_map(|a| a.get_long().map(str::to_string))
        })
        .collect();
    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" || !every_flag.contains(&key) {
            return Err(CliError {
                kind: "config",
                message: format!("{}: unknown key {key:?}", path.display()),
                usage: true,
            });
        }
        if sub
            .get_arguments()
            .any(|a| a.get_long() == Some(key.as_str()))
        {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut merged = argv[..=sub_pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(merged)
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut io::BufWriter<File>) -> io::Result<()>,
) -> CliResult<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = io::BufWriter::new(file);
    write(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_error(path))
}

fn report(line: impl Display) {
    println!("{line}");
}

fn ingest_check(args: &IngestCheckArgs) -> CliResult {
    let od = load_od(&args.input.od, None)?;
    report(format_args!("od_records {}", od.len()));
    report(format_args!("od_hexes {}", od.hexes().len()));
    report(format_args!("od_days {}", od.days_present().len()));
    if let Some(month) = od.month() {
        report(format_args!("month {month}"));
    }
    for ut in [UserType::All, UserType::Worker] {
        let n = od.user_types().iter().filter(|&&u| u == ut).count();
        report(format_args!("od_records_{} {n}", ut.as_str()));
    }
    if let Some(ff) = &args.ff {
        let ff = load_footfall(ff)?;
        report(format_args!("ff_records {}", ff.len()));
        report(format_args!("ff_hexes {}", ff.hexes().len()));
    }
    Ok(())
}

fn stats(args: &StatsArgs) -> CliResult {
    let ut = user_type(&args.user_type);
    let od = load_od(&args.input.od, Some(ut))?;
    let s = descriptive_stats(&od, ut)?;
    let agg = monthly_od_aggregate(&od, false)?;
    let header = "user_type,records,mean,std,min,max,od_pairs,pair_mean,below_mean_share";
    let row = format!(
        "{},{},{},{},{},{},{},{},{}",
        ut.as_str(),
        s.count,
        s.mean,
        s.std,
        s.min,
        s.max,
        agg.totals.len(),
        agg.mean,
        agg.below_mean_share
    );
    create_out(&args.out.out)?;
    write_file(&args.out.out.join("stats.csv"), |w| {
        writeln!(w, "{header}\n{row}")
    })?;
    report(header);
    report(row);
    Ok(())
}

fn homework(args: &HomeworkArgs) -> CliResult {
    let od = load_od(&args.input.od, Some(user_type(&args.detect.user_type)))?;
    let pairs = detect_with(&od, &args.detect.rule())?;
    create_out(&args.out.out)?;
    write_file(&args.out.out.join("homework_pairs.csv"), |w| {
        write_pairs_csv(&pairs, w)
    })?;
    report(format_args!("pairs {}", pairs.len()));
    Ok(())
}

fn diary(args: &DiaryArgs) -> CliResult {
    let od: Arc<OdStore> = Arc::new(load_od(
        &args.input.od,
        Some(user_type(&args.detect.user_type)),
    )?);
    let pairs = detect_with(&od, &args.detect.rule())?;
    let month = od
        .month()
        .ok_or_else(|| hexdiary::Error::EmptySelection("OD file has no records".into()))?;
    let min_support = args
        .min_support
        .unwrap_or_else(|| default_min_support(month, args.weekday));
    let matrix = build_homework_matrix(Arc::clone(&od), &pairs);
    let anchors: Vec<HexId> = match args.anchor {
        Some(a) => vec![a],
        None => matrix.homes().into_iter().collect(),
    };
    let ff = args.ff.as_ref().map(load_footfall).transpose()?;
    let attrs = args.attrs.as_ref().map(load_attributes).transpose()?;
    create_out(&args.out.out)?;
    for anchor in &anchors {
        let mut pattern = mine_diary(&matrix, *anchor, args.weekday, min_support)?;
        if let Some(ff) = &ff {
            pattern = enrich(pattern, ff, attrs.as_ref());
        }
        let json = pattern.to_json()?;
        let path = args
            .out
            .out
            .join(format!("diary_{anchor}_{}.json", args.weekday));
        write_file(&path, |w| writeln!(w, "{json}"))?;
    }
    report(format_args!(
        "diaries {} min_support {min_support}",
        anchors.len()
    ));
    Ok(())
}

fn analytics_input(common: &AnalyticsInput) -> CliResult<OdStore> {
    let od = load_od(&common.input.od, Some(user_type(&common.user_type)))?;
    create_out(&common.out.out)?;
    Ok(od)
}

fn profile(args: &ProfileArgs) -> CliResult {
    let od = analytics_input(&args.common)?;
    let mut profiles = all_profiles(&od, role(&args.role));
    if let Some(hex) = args.hex {
        let counts = profiles.remove(&hex).unwrap_or_default();
        profiles = BTreeMap::from([(hex, counts)]);
    }
    let path = args
        .common
        .out
        .out
        .join(format!("profile_{}.csv", args.role));
    write_file(&path, |w| write_profiles_csv(&profiles, w))?;
    report(format_args!("hexes {}", profiles.len()));
    Ok(())
}

fn dow(args: &DowArgs) -> CliResult {
    let od = analytics_input(&args.common)?;
    let dist = day_of_week_totals(&od, Role::Origin);
    let out = &args.common.out.out;
    write_file(&out.join("dow_totals.csv"), |w| write_dow_csv(&dist, w))?;
    write_file(&out.join("dow_summary.csv"), |w| {
        write_dow_summary_csv(&dist, w)
    })?;
    if let Some(busiest) = (1..=7u8)
        .filter_map(|wd| dist.summary(wd).map(|s| (wd, s.median)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
    {
        report(format_args!(
            "busiest_weekday {} median {}",
            busiest.0, busiest.1
        ));
    }
    Ok(())
}

fn diff(args: &DiffArgs) -> CliResult {
    let od = analytics_input(&args.common)?;
    let layer = day_difference_for(&od, args.a, args.b, role(&args.role))?;
    let path = args
        .common
        .out
        .out
        .join(format!("diff_{}_{}.csv", args.a, args.b));
    write_file(&path, |w| write_diff_csv(&layer, w))?;
    report(format_args!("hexes {}", layer.values.len()));
    Ok(())
}

fn topk(args: &TopkArgs) -> CliResult {
    let od = analytics_input(&args.common)?;
    let ranked = top_k(&od, role(&args.role), args.k)?;
    let path = args.common.out.out.join(format!("topk_{}.csv", args.role));
    write_file(&path, |w| write_topk_csv(&ranked, w))?;
    for (i, (hex, total)) in ranked.iter().enumerate() {
        report(format_args!("{} {hex} {total}", i + 1));
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> CliResult {
    let world = generate(&args.config())?;
    world.write_to(&args.out.out)?;
    let l = &world.ledger;
    report(format_args!("od_records {}", l.emitted_records().count()));
    report(format_args!(
        "suppressed_records {} mass {}",
        l.suppressed_records, l.suppressed_mass
    ));
    report(format_args!("planted_pairs {}", l.planted_pairs.len()));
    Ok(())
}

fn export(args: &ExportArgs) -> CliResult {
    let layer = load_layer(&args.layer)?;
    let boundaries = load_boundaries(&args.boundaries)?;
    let out = export_geojson(&layer, &boundaries)?;
    create_out(&args.out.out)?;
    let stem = args
        .layer
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "layer".into());
    let path = args.out.out.join(format!("{stem}.geojson"));
    let json = serde_json::to_string(&out.collection).map_err(hexdiary::Error::from)?;
    write_file(&path, |w| writeln!(w, "{json}"))?;
    if !out.missing.is_empty() {
        eprintln!(
            "warning: {} layer hexes have no boundary and were skipped",
            out.missing.len()
        );
    }
    report(format_args!(
        "features {} missing {}",
        out.features,
        out.missing.len()
    ));
    Ok(())
}

fn mine(args: &MineArgs) -> CliResult {
    let file = File::open(&args.transactions).map_err(io_error(&args.transactions))?;
    let transactions =
        read_transactions(BufReader::new(file)).map_err(io_error(&args.transactions))?;
    let sets = eclat(&transactions, args.min_support)?;
    create_out(&args.out.out)?;
    write_file(&args.out.out.join("itemsets.tsv"), |w| {
        write_itemsets(&sets, w)
    })?;
    report(format_args!("itemsets {}", sets.len()));
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::IngestCheck(a) => ingest_check(a),
        Command::Stats(a) => stats(a),
        Command::Homework(a) => homework(a),
        Command::Diary(a) => diary(a),
        Command::Profile(a) => profile(a),
        Command::Dow(a) => dow(a),
        Command::Diff(a) => diff(a),
        Command::Topk(a) => topk(a),
        Command::Synth(a) => synth(a),
        Command::ExportGeojson(a) => export(a),
        Command::Mine(a) => mine(a),
    }
}

fn fail(e: CliError) -> ExitCode {
    let message = e.message.replace('\n', " ");
    eprintln!("error: {}: {message}", e.kind);
    ExitCode::from(if e.usage { 2 } else { 1 })
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let matches = Cli::command()
        .mut_subcommands(|s| s.args_override_self(true))
        .get_matches_from(argv);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
