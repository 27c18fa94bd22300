use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use mcm_core::exact_algebra::parse_poly;
use mcm_core::finite_geometry::{characterization_crosscheck, core_lemma_census, smoothness_check, CensusMode, CENSUS_BUDGET};
use mcm_core::identity_verifier::{
    verify_cramer, verify_divisibility, verify_gluing_all, verify_surjectivity, verify_transition, CheckMode, VerificationReport,
};
use mcm_core::pipeline::{base_locus_all, family_bundles, replay, run_pipeline, RunConfig, RunReport, Witness};
use mcm_core::product_coup::{effective_bound_nn2, frobenius_split, verify_product_decomposition, verify_semigroup_bound};
use mcm_core::schedule::{build_schedule, effective_bound_report, subsets, twist_ledger, validate_schedule, ProblemShape};
use mcm_core::section_builder::{build_sections, CoeffSource, FamilyFile, FamilySpec, SectionFamily, SectionMode};
use mcm_core::{Error, Field};

const CHECK_PRIME: u32 = 2_147_483_647;

#[derive(Parser)]
#[command(name = "mcm", version, about = "Schedules, section families, identity checks and finite-field scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and validate an exponent schedule.
    Schedule(ScheduleArgs),
    /// Build a section family and write it as a family file.
    Build(BuildArgs),
    /// Identity checks on a family.
    Verify(VerifyArgs),
    /// Finite-field scans.
    Scan(ScanArgs),
    /// Frobenius splits, effective bounds and product decompositions.
    Coup {
        #[command(subcommand)]
        what: CoupCommand,
    },
    /// Run a configured pipeline.
    Run(RunArgs),
    /// Re-execute the unit of a failure witness.
    Replay {
        #[arg(long)]
        witness: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    c: usize,
    #[arg(long, default_value_t = 0)]
    r: usize,
}

impl ShapeArgs {
    fn shape(&self) -> Result<ProblemShape, Error> {
        ProblemShape::new(self.n, self.c, self.r)
    }
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 2)]
    heart: u64,
    /// ε_1,..,ε_{c+r}; all 1 by default.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mcm,
    Fermat,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, value_enum, default_value = "mcm")]
    mode: ModeArg,
    #[arg(long, default_value_t = 2)]
    heart: u64,
    #[arg(long, value_delimiter = ',')]
    eps: Vec<u64>,
    /// λ_0,..,λ_N for Fermat mode.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<u32>,
    /// d_1,..,d_{c+r} for Fermat mode.
    #[arg(long, value_delimiter = ',')]
    degrees: Vec<u32>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    twists: Vec<i64>,
    /// Prime p of the coefficient field; rationals when absent.
    #[arg(long)]
    p: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifyWhat {
    Forms,
    Cramer,
    Transition,
    Surjectivity,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    what: VerifyWhat,
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 20)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    budget_terms: u64,
    /// Matrix size for `cramer`.
    #[arg(long)]
    rows: Option<usize>,
    /// Dimension for `surjectivity` when no family is given.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Degree for `surjectivity`.
    #[arg(long, default_value_t = 3)]
    d: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScanWhat {
    BaseLocus,
    Smooth,
    Census,
    Crosscheck,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(value_enum)]
    what: ScanWhat,
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    a: usize,
    #[arg(long, default_value_t = 2)]
    b: usize,
    /// Random samples: census sampling instead of enumeration, or crosscheck pairs.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = CENSUS_BUDGET)]
    budget_census: u64,
}

#[derive(Subcommand)]
enum CoupCommand {
    /// Write d = p·s + q·(s+1) with minimal q.
    Split {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        s: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Effective degree bound comparisons for dimension N.
    Bound {
        #[arg(long = "N")]
        n: usize,
        /// Also check splits of every d ≥ s² up to this horizon for s = 2..=N.
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare the base locus of products with the union of the factor loci.
    Decompose {
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        p: u32,
        /// Factors of one F_i, comma separated; repeat once per equation.
        #[arg(long = "factors", required = true)]
        factors: Vec<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget_terms: Option<u64>,
    #[arg(long)]
    budget_points: Option<u64>,
    #[arg(long)]
    budget_census: Option<u64>,
    /// Write each failure witness here as <stage>-<k>.json.
    #[arg(long)]
    witness_dir: Option<PathBuf>,
}

type CliResult = Result<bool, Box<dyn std::error::Error>>;

fn sorted_json<T: Serialize>(v: &T) -> Result<String, serde_json::Error> {
    serde_json::to_string_pretty(&serde_json::to_value(v)?)
}

fn emit<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Box<dyn std::error::Error>> {
    let Some(path) = path else { return Ok(()) };
    let text = sorted_json(value)? + "\n";
    if path == Path::new("-") {
        print!("{text}");
    } else {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn load_family(path: Option<&PathBuf>) -> Result<SectionFamily, Box<dyn std::error::Error>> {
    let path = path.ok_or("--family is required")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: FamilyFile = serde_json::from_str(&text)?;
    Ok(SectionFamily::from_file(&file)?)
}

fn print_checks(rep: &VerificationReport) {
    for c in &rep.checks {
        println!("{:<6} {} [{}]", format!("{:?}", c.verdict).to_uppercase(), c.id, c.mode);
    }
    for n in &rep.notes {
        println!("note   {n}");
    }
}

fn cmd_schedule(a: &ScheduleArgs) -> CliResult {
    let shape = a.shape.shape()?;
    let eps = if a.eps.is_empty() { vec![1; shape.equations()] } else { a.eps.clone() };
    let s = build_schedule(shape, a.heart, &eps)?;
    let validation = validate_schedule(&s)?;
    let ledger = twist_ledger(&s)?;
    let bounds = json!({ "validation": validation, "effective_bound": effective_bound_report(&s), "nn2": effective_bound_nn2(shape.dim)? });
    for l in s.levels() {
        let row: Vec<String> = (0..=l).map(|k| s.mu(l, k).to_string()).collect();
        println!("delta_{l} = {:<8} mu_{l} = ({})", s.delta(l).to_string(), row.join(", "));
    }
    println!("d = {}", s.d);
    println!("inequalities: {}/{} hold", validation.checks.iter().filter(|c| c.pass).count(), validation.checks.len());
    println!("twist ledger: {} entries, all negative: {}", ledger.entries.len(), ledger.all_negative);
    let sv = serde_json::to_value(&s)?;
    let report = json!({ "shape": shape, "first_level": shape.first_level(), "delta": sv["delta"], "mu": sv["mu"], "d": sv["d"], "heart": s.heart, "eps": s.eps, "ledger": ledger, "bounds": bounds });
    emit(a.json.as_deref(), &report)?;
    Ok(validation.all_pass)
}

fn cmd_build(a: &BuildArgs) -> CliResult {
    let shape = a.shape.shape()?;
    let e = shape.equations();
    let mode = match a.mode {
        ModeArg::Mcm => {
            let eps = if a.eps.is_empty() { vec![1; e] } else { a.eps.clone() };
            SectionMode::Mcm { schedule: build_schedule(shape, a.heart, &eps)? }
        }
        ModeArg::Fermat => SectionMode::GeneralFermat { lambda: a.lambda.clone(), degrees: a.degrees.clone() },
    };
    let field = match a.p {
        Some(p) => Field::prime(p)?,
        None => Field::Rational,
    };
    let twists = if a.twists.is_empty() { vec![0; e] } else { a.twists.clone() };
    let fam = build_sections(&FamilySpec { shape, mode, field, twists, source: CoeffSource::Random { seed: a.seed } })?;
    std::fs::write(&a.out, sorted_json(&fam.to_file())? + "\n")?;
    for (i, f) in fam.sections().iter().enumerate() {
        println!("F_{} : degree {}, {} terms", i + 1, fam.z_degree(i), f.len());
    }
    println!("wrote {}", a.out.display());
    Ok(true)
}

fn cmd_verify(a: &VerifyArgs) -> CliResult {
    let mode = if a.exact { CheckMode::Exact } else { CheckMode::Auto { threshold: a.budget_terms, trials: a.trials, seed: a.seed } };
    let mut rep = VerificationReport::default();
    match a.what {
        VerifyWhat::Cramer => {
            let rows = match (a.rows, &a.family) {
                (Some(r), _) => r,
                (None, Some(_)) => load_family(a.family.as_ref())?.shape.dim + 1,
                (None, None) => 4,
            };
            rep = verify_cramer(rows, a.trials, a.seed, CHECK_PRIME)?;
        }
        VerifyWhat::Surjectivity => {
            let n = match (a.n, &a.family) {
                (Some(n), _) => n,
                (None, Some(_)) => load_family(a.family.as_ref())?.shape.dim,
                (None, None) => return Err("--N or --family is required".into()),
            };
            rep = verify_surjectivity(n, a.d, None, a.trials, a.seed, CHECK_PRIME)?;
        }
        VerifyWhat::Forms | VerifyWhat::Transition => {
            let fam = load_family(a.family.as_ref())?;
            if matches!(fam.field, Field::Prime(p) if p != CHECK_PRIME) && !a.exact {
                return Err(format!("{:?} families can only be checked with --exact; build over the rationals for probabilistic checks", fam.field).into());
            }
            for (_, v, b) in family_bundles(&fam)? {
                if a.what == VerifyWhat::Forms {
                    rep.extend(verify_divisibility(&b)?);
                }
                for sel in subsets(fam.shape.c, fam.shape.n() - v.len()) {
                    if a.what == VerifyWhat::Forms {
                        rep.extend(verify_gluing_all(&fam, &b, &sel, mode)?);
                        continue;
                    }
                    for omit in 0..b.ncols() {
                        for (x, &l1) in b.retained.iter().enumerate() {
                            for &l2 in &b.retained[x + 1..] {
                                rep.extend(verify_transition(&fam, &b, &sel, omit, l1, l2, mode)?);
                            }
                        }
                    }
                }
            }
        }
    }
    print_checks(&rep);
    println!("{} checks, {} failed", rep.checks.len(), rep.count(mcm_core::identity_verifier::Verdict::Fail));
    emit(a.json.as_deref(), &rep)?;
    Ok(rep.pass())
}

fn family_prime(fam: &SectionFamily, q: u64) -> Result<u64, Box<dyn std::error::Error>> {
    match fam.field {
        Field::Prime(p) if p as u64 == q => Ok(q),
        other => Err(format!("the family is over {other:?}; build it with --p {q}").into()),
    }
}

fn cmd_scan(a: &ScanArgs) -> CliResult {
    let (ok, report): (bool, Value) = match a.what {
        ScanWhat::Census => {
            let mode = match a.samples {
                Some(n) => CensusMode::Sample { n, seed: a.seed },
                None => CensusMode::Exhaustive,
            };
            let c = core_lemma_census(a.a, a.b, a.q, mode, a.budget_census)?;
            println!(
                "M_{{{},{}}} over F_{}: {} of {} matrices, implied codimension {:.3}, bound {}, {}",
                c.a,
                c.b,
                c.q,
                c.count,
                c.examined,
                c.implied_codim,
                c.bound,
                if c.verdict { "PASS" } else { "FAIL" }
            );
            (c.verdict && c.alt_disagreements == 0, serde_json::to_value(&c)?)
        }
        ScanWhat::Smooth => {
            let fam = load_family(a.family.as_ref())?;
            let p = family_prime(&fam, a.q)?;
            let s = smoothness_check(fam.sections(), fam.shape.dim, p)?;
            println!("{} points, {} singular", s.points, s.singular.len());
            (s.smooth, serde_json::to_value(&s)?)
        }
        ScanWhat::BaseLocus => {
            let fam = load_family(a.family.as_ref())?;
            let p = family_prime(&fam, a.q)?;
            let scans = base_locus_all(&fam, p)?;
            for s in &scans {
                println!("stratum {:?}: {} points, {} pairs, {} base pairs, {} forms", s.vanishing_set, s.points, s.pairs, s.base_pairs.len(), s.forms);
            }
            (scans.iter().all(|s| s.tangent_dim_ok), serde_json::to_value(&scans)?)
        }
        ScanWhat::Crosscheck => {
            let fam = load_family(a.family.as_ref())?;
            let p = family_prime(&fam, a.q)?;
            let c = characterization_crosscheck(&fam, p, a.samples.unwrap_or(10_000), a.seed)?;
            println!(
                "{} pairs, agreement {:.6}, forward exceptions {}, backward exceptions {}",
                c.pairs, c.agreement_rate, c.forward_exceptions, c.backward_exceptions
            );
            (c.forward_exceptions == 0, serde_json::to_value(&c)?)
        }
    };
    emit(a.json.as_deref(), &report)?;
    Ok(ok)
}

fn cmd_coup(what: &CoupCommand) -> CliResult {
    match what {
        CoupCommand::Split { d, s, json } => {
            let (p, q) = frobenius_split(*d, *s)?;
            println!("{d} = {p}*{s} + {q}*{}", s + 1);
            emit(json.as_deref(), &json!({ "d": d, "s": s, "p": p, "q": q }))?;
            Ok(true)
        }
        CoupCommand::Bound { n, horizon, json } => {
            let r = effective_bound_nn2(*n)?;
            println!("N = {n}: exact {:?}, ceiling {:?}, floor {:?}, real {}", r.exact, r.ceiling_variant, r.floor_variant, r.real);
            let mut semigroups = Vec::new();
            let mut ok = r.pass();
            if let Some(h) = horizon {
                for s in 2..=*n as u64 {
                    let sg = verify_semigroup_bound(s, *h)?;
                    ok &= sg.pass;
                    semigroups.push(sg);
                }
            }
            emit(json.as_deref(), &json!({ "bound": r, "semigroups": semigroups }))?;
            Ok(ok)
        }
        CoupCommand::Decompose { shape, p, factors, json } => {
            let shape = shape.shape()?;
            let field = Field::prime(*p)?;
            let parsed = factors
                .iter()
                .map(|list| list.split(',').map(|f| parse_poly(f.trim(), shape.dim, field)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            let r = verify_product_decomposition(&parsed, shape, *p as u64)?;
            println!("{} pairs on the locus, {} in the union of {} pieces: {}", r.locus, r.union, r.pieces, if r.pass { "PASS" } else { "FAIL" });
            emit(json.as_deref(), &r)?;
            Ok(r.pass)
        }
    }
}

fn print_run(r: &RunReport) {
    for s in &r.stages {
        let extra = s.reason.clone().map(|m| format!(" ({m})")).unwrap_or_default();
        println!("{:<13} {}{}", s.stage.name(), format!("{:?}", s.verdict).to_uppercase(), extra);
        for n in &s.notes {
            println!("              note: {n}");
        }
    }
}

fn write_report(r: &RunReport, json: Option<&Path>) -> Result<(), Box<dyn std::error::Error>> {
    match json {
        Some(p) if p == Path::new("-") => println!("{}", r.to_json()?),
        Some(p) => std::fs::write(p, r.to_json()? + "\n")?,
        None => {}
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> CliResult {
    let text = std::fs::read_to_string(&a.config).map_err(|e| format!("{}: {e}", a.config.display()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.budget_terms {
        cfg.budgets.max_terms = b;
    }
    if let Some(b) = a.budget_points {
        cfg.budgets.max_points = b;
    }
    if let Some(b) = a.budget_census {
        cfg.budgets.max_census = b;
    }
    let r = run_pipeline(&cfg)?;
    print_run(&r);
    if let Some(dir) = &a.witness_dir {
        std::fs::create_dir_all(dir)?;
        for s in &r.stages {
            for (k, w) in s.failures.iter().enumerate() {
                std::fs::write(dir.join(format!("{}-{k}.json", s.stage.name())), sorted_json(w)? + "\n")?;
            }
        }
    }
    write_report(&r, a.json.as_deref())?;
    Ok(r.pass)
}

fn cmd_replay(witness: &Path, json: Option<&Path>) -> CliResult {
    let text = std::fs::read_to_string(witness).map_err(|e| format!("{}: {e}", witness.display()))?;
    let w = Witness::parse(&text)?;
    let r = replay(&w)?;
    print_run(&r);
    write_report(&r, json)?;
    Ok(r.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Schedule(a) => cmd_schedule(a),
        Command::Build(a) => cmd_build(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Coup { what } => cmd_coup(what),
        Command::Run(a) => cmd_run(a),
        Command::Replay { witness, json } => cmd_replay(witness, json.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
