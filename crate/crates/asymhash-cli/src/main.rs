//! Command-line wiring for the asymmetric-hash experiments: data generation,
//! training, threshold-sweep evaluation, the constructed gap instance, and a
//! packed Hamming scan. Every command that writes artifacts also writes a
//! manifest (full flag set plus seed); replaying a manifest's flags
//! reproduces every byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use asymhash::baseline;
use asymhash::datagen::{self, CrossLabels, Dataset, SimilarityMatrix, Split};
use asymhash::eval::{self, Pooling};
use asymhash::io;
use asymhash::retrieval::CodeDatabase;
use asymhash::train::{self, CodeSide, InitStrategy, TrainConfig, Variant};
use asymhash::{Error, Result};

#[derive(Parser)]
#[command(
    name = "asymhash",
    version,
    about = "Asymmetric binary hash experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a uniform dataset and its neighbor-threshold similarity.
    Gen(GenArgs),
    /// Train a hash model on a similarity matrix.
    Train(TrainArgs),
    /// Evaluate a model: average precision and the threshold-sweep PR curve.
    Eval(EvalArgs),
    /// Build the constructed gap instance and check both code regimes on it.
    Theorem1(Theorem1Args),
    /// Scan a packed code database for the nearest neighbors of new queries.
    Retrieve(RetrieveArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of points.
    #[arg(long)]
    n: usize,
    /// Feature dimension.
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target mean neighbor count for the similarity radius.
    #[arg(long, conflicts_with = "positive_frac")]
    neighbors: Option<f64>,
    /// Target fraction of positive pairs (off-diagonal).
    #[arg(long, conflicts_with = "neighbors")]
    positive_frac: Option<f64>,
    /// How many leading points form the training split (default: all).
    #[arg(long)]
    train: Option<usize>,
    /// Compute the radius on the training split only, or on all points.
    #[arg(long, default_value = "train", value_parser = ["train", "all"])]
    radius_scope: String,
    /// Also write CSV copies of the point files.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = ["uv", "sym", "linlin", "linv", "lsh"])]
    variant: String,
    /// Target code length in bits.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.7)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature file; required for linlin, linv, and lsh.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Similarity file; required for all variants except lsh.
    #[arg(long)]
    sim: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    sweeps: usize,
    #[arg(long, default_value_t = 10)]
    sgd_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    sgd_rate: f64,
    #[arg(long, default_value = "best-of-both", value_parser = ["random", "rank-one", "best-of-both"])]
    init: String,
    #[arg(long, default_value_t = 512)]
    theta_grid: usize,
    /// Skip the per-sweep threshold re-optimization.
    #[arg(long)]
    freeze_theta: bool,
    /// Mean-center the features before hashing (stored in the model).
    #[arg(long)]
    center: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query-side points.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Database-side points.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Square similarity file (query and database sets coincide).
    #[arg(long, conflicts_with = "radius")]
    sim: Option<PathBuf>,
    /// Label each (test, db) pair by this distance threshold instead.
    #[arg(long, conflicts_with = "sim")]
    radius: Option<f64>,
    /// Mean of per-query APs instead of one pooled ranking.
    #[arg(long = "macro")]
    macro_ap: bool,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct Theorem1Args {
    /// Scale parameter: the instance has n = 2^r points and a 2r-bit code.
    #[arg(long)]
    r: usize,
    /// Also probe symmetric training at this many bits.
    #[arg(long)]
    probe_symmetric_k: Option<usize>,
    /// Seeds for the symmetric probe.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Train both regimes incrementally and write the bits-required table.
    #[arg(long)]
    bits_table: bool,
    /// AP targets for the bits-required table.
    #[arg(long, default_value = "0.3,0.5,0.7,0.9")]
    ap_targets: String,
    /// Code length ceiling for the bits-required runs (default 2r + 2).
    #[arg(long)]
    bits_k: Option<usize>,
    /// Output directory: writes the instance files (points, similarity,
    /// both code sides) and, with --bits-table, the AP tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Packed database codes.
    #[arg(long)]
    db_codes: PathBuf,
    /// Id sidecar, one id per line.
    #[arg(long)]
    ids: PathBuf,
    /// Model providing the query-side map.
    #[arg(long)]
    model: PathBuf,
    /// Query points (.csv or binary).
    #[arg(long)]
    query_file: PathBuf,
    /// Number of neighbors per query.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: Option<u64>,
    args: Vec<(String, String)>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    args: Vec<(String, String)>,
) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        seed,
        args,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
    io::save(&dir.join("manifest.json"), |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("ASYMHASH_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Theorem1(args) => cmd_theorem1(args),
        Command::Retrieve(args) => cmd_retrieve(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut x = datagen::gen_uniform(args.n, args.d, args.seed)?;
    let n_train = args.train.unwrap_or(args.n);
    if n_train < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 training points".to_string(),
        ));
    }
    x.set_train_prefix(n_train)?;
    let train_idx = x.indices_with(Split::Train);
    let test_idx = x.indices_with(Split::Test);
    let x_train = x.select(&train_idx)?;

    let scope_points = if args.radius_scope == "all" {
        &x
    } else {
        &x_train
    };
    let target = match (args.neighbors, args.positive_frac) {
        (Some(t), None) => t,
        (None, Some(f)) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidInput(
                    "positive fraction must be in (0, 1)".into(),
                ));
            }
            f * (scope_points.n() - 1) as f64
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "one of --neighbors or --positive-frac is required".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let search = datagen::threshold_for_avg_neighbors(scope_points, target)?;
    let sim = SimilarityMatrix::from_radius(&x_train, search.radius)?;

    io::save(&args.out.join("train.abhx"), |w| {
        io::write_dataset(w, &x_train)
    })?;
    if !test_idx.is_empty() {
        let x_test = x.select(&test_idx)?;
        io::save(&args.out.join("test.abhx"), |w| {
            io::write_dataset(w, &x_test)
        })?;
        if args.csv {
            io::save(&args.out.join("test.csv"), |w| {
                io::write_dataset_csv(w, &x_test)
            })?;
        }
    }
    if args.csv {
        io::save(&args.out.join("train.csv"), |w| {
            io::write_dataset_csv(w, &x_train)
        })?;
    }
    io::save(&args.out.join("sim.abhs"), |w| {
        io::write_similarity(w, &sim)
    })?;

    let mut manifest_args = vec![
        ("n".to_string(), args.n.to_string()),
        ("d".to_string(), args.d.to_string()),
        ("train".to_string(), n_train.to_string()),
        ("radius_scope".to_string(), args.radius_scope.clone()),
        ("csv".to_string(), args.csv.to_string()),
    ];
    if let Some(t) = args.neighbors {
        manifest_args.push(("neighbors".to_string(), t.to_string()));
    }
    if let Some(f) = args.positive_frac {
        manifest_args.push(("positive_frac".to_string(), f.to_string()));
    }
    write_manifest(&args.out, "gen", Some(args.seed), manifest_args)?;

    println!(
        "gen: n={} d={} train={} test={} radius={} mean_neighbors={} positive_fraction={}",
        args.n,
        args.d,
        n_train,
        test_idx.len(),
        search.radius,
        search.mean_neighbors,
        sim.positive_fraction()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let variant = Variant::parse(&args.variant)?;
    let data = args.data.as_deref().map(io::load_dataset).transpose()?;
    let sim = args
        .sim
        .as_deref()
        .map(|p| -> Result<SimilarityMatrix> { io::read_similarity(&mut std::fs::File::open(p)?) })
        .transpose()?;

    let needs_data = matches!(variant, Variant::LinLin | Variant::LinV | Variant::Lsh);
    if needs_data && data.is_none() {
        return Err(Error::InvalidInput(format!(
            "variant {} needs --data",
            variant.as_str()
        )));
    }
    if args.center && data.is_none() {
        return Err(Error::InvalidInput("--center needs --data".to_string()));
    }
    let needs_sim = !matches!(variant, Variant::Lsh);
    if needs_sim && sim.is_none() {
        return Err(Error::InvalidInput(format!(
            "variant {} needs --sim",
            variant.as_str()
        )));
    }

    // center before training so the stored center matches the learned maps
    let center = match (&data, args.center) {
        (Some(x), true) => {
            let mut mean = vec![0.0; x.d()];
            for i in 0..x.n() {
                for (m, &v) in mean.iter_mut().zip(x.point(i)) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= x.n() as f64;
            }
            Some(mean)
        }
        _ => None,
    };
    let centered = match (&data, &center) {
        (Some(x), Some(c)) => {
            let mut shifted = Vec::with_capacity(x.d() * x.n());
            for i in 0..x.n() {
                shifted.extend(x.point(i).iter().zip(c).map(|(a, b)| a - b));
            }
            Some(Dataset::new(x.d(), x.n(), shifted)?)
        }
        _ => None,
    };
    let train_data = centered.as_ref().or(data.as_ref());

    let config = TrainConfig {
        beta: args.beta,
        k_max: args.k,
        sweeps_per_bit: args.sweeps,
        sgd_epochs: args.sgd_epochs,
        sgd_rate: args.sgd_rate,
        seed: args.seed,
        init: InitStrategy::parse(&args.init)?,
        theta_grid: args.theta_grid,
        surrogate: asymhash::Surrogate::SqrtLogistic,
        update_theta_each_sweep: !args.freeze_theta,
    };

    let mut model = match variant {
        Variant::Uv => train::train_unconstrained(sim.as_ref().expect("checked"), &config)?,
        Variant::Sym => train::train_symmetric(sim.as_ref().expect("checked"), &config)?,
        Variant::LinLin => train::train_lin_lin(
            train_data.expect("checked"),
            sim.as_ref().expect("checked"),
            &config,
        )?,
        Variant::LinV => train::train_lin_v(
            train_data.expect("checked"),
            sim.as_ref().expect("checked"),
            &config,
        )?,
        Variant::Lsh => {
            let d = train_data.expect("checked").d();
            baseline::lsh_model(d, args.k, args.seed)?
        }
    };
    model.center = center;

    io::save(&args.out.join("model.abhm"), |w| io::write_model(w, &model))?;
    io::save(&args.out.join("loss_trace.csv"), |w| {
        io::write_loss_trace_csv(w, &model.loss_trace)
    })?;

    // database-side codes over the training points, plus the id sidecar
    let db_points = match &model.database {
        CodeSide::Hash(_) => Some(
            data.as_ref()
                .ok_or_else(|| Error::InvalidInput("database map needs --data".to_string()))?,
        ),
        CodeSide::Codes(_) => None,
    };
    let db_codes = eval::side_codes(&model.database, db_points, model.center.as_deref())?;
    let ids: Vec<String> = (0..db_codes.n()).map(|i| format!("{i:08}")).collect();
    io::save(&args.out.join("db_codes.abhc"), |w| {
        io::write_codes(w, &db_codes)
    })?;
    io::save(&args.out.join("db.ids"), |w| io::write_ids(w, &ids))?;

    let manifest_args = vec![
        ("variant".to_string(), args.variant.clone()),
        ("k".to_string(), args.k.to_string()),
        ("beta".to_string(), args.beta.to_string()),
        (
            "data".to_string(),
            args.data.as_deref().map(display_path).unwrap_or_default(),
        ),
        (
            "sim".to_string(),
            args.sim.as_deref().map(display_path).unwrap_or_default(),
        ),
        ("sweeps".to_string(), args.sweeps.to_string()),
        ("sgd_epochs".to_string(), args.sgd_epochs.to_string()),
        ("sgd_rate".to_string(), args.sgd_rate.to_string()),
        ("init".to_string(), args.init.clone()),
        ("theta_grid".to_string(), args.theta_grid.to_string()),
        ("freeze_theta".to_string(), args.freeze_theta.to_string()),
        ("center".to_string(), args.center.to_string()),
    ];
    write_manifest(&args.out, "train", Some(args.seed), manifest_args)?;

    let (final_loss, zero_one) = model
        .stages
        .last()
        .map(|s| (s.surrogate_loss, s.zero_one_loss))
        .unwrap_or((f64::NAN, f64::NAN));
    let fmt = |v: f64| {
        if v.is_nan() {
            "-".to_string()
        } else {
            v.to_string()
        }
    };
    println!(
        "train: variant={} k={} beta={} theta={} surrogate_loss={} zero_one_loss={}",
        variant.as_str(),
        model.k(),
        args.beta,
        model.theta,
        fmt(final_loss),
        fmt(zero_one)
    );
    Ok(())
}

fn display_path(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = io::read_model(&mut std::fs::File::open(&args.model)?)?;
    let test = args.test.as_deref().map(io::load_dataset).transpose()?;
    let db = args.db.as_deref().map(io::load_dataset).transpose()?;

    let labels = match (&args.sim, args.radius) {
        (Some(path), None) => {
            let s = io::read_similarity(&mut std::fs::File::open(path)?)?;
            CrossLabels::from_square(&s)
        }
        (None, Some(radius)) => {
            let (Some(t), Some(d)) = (&test, &db) else {
                return Err(Error::InvalidInput(
                    "--radius needs both --test and --db point files".to_string(),
                ));
            };
            CrossLabels::from_radius(t, d, radius)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "ground truth: pass exactly one of --sim or --radius".to_string(),
            ))
        }
    };

    let pooling = if args.macro_ap {
        Pooling::Macro
    } else {
        Pooling::Micro
    };
    let report = eval::evaluate_model(&model, test.as_ref(), db.as_ref(), &labels, pooling)?;

    io::save(&args.report.join("pr.csv"), |w| {
        io::write_pr_csv(w, &report.pr_points)
    })?;
    let manifest_args = vec![
        ("model".to_string(), display_path(&args.model)),
        (
            "test".to_string(),
            args.test.as_deref().map(display_path).unwrap_or_default(),
        ),
        (
            "db".to_string(),
            args.db.as_deref().map(display_path).unwrap_or_default(),
        ),
        (
            "sim".to_string(),
            args.sim.as_deref().map(display_path).unwrap_or_default(),
        ),
        (
            "radius".to_string(),
            args.radius.map(|r| r.to_string()).unwrap_or_default(),
        ),
        ("macro".to_string(), args.macro_ap.to_string()),
    ];
    write_manifest(&args.report, "eval", None, manifest_args)?;

    println!(
        "eval: variant={} k={} pairs={} positives={} pooling={} ap={}",
        model.variant.as_str(),
        model.k(),
        report.pairs,
        report.positives,
        if args.macro_ap { "macro" } else { "micro" },
        report.ap
    );
    Ok(())
}

fn cmd_theorem1(args: Theorem1Args) -> Result<()> {
    let started = Instant::now();
    let inst = datagen::theorem1_instance(args.r)?;
    let check = datagen::verify_exact_realization(
        &inst.codes_query,
        &inst.codes_db,
        inst.theta,
        &inst.similarity,
    )?;
    let elapsed = started.elapsed();
    println!(
        "theorem1: r={} n={} asym_bits={} sym_lower_bound={} asym_exact={} min_margin={} violations={} build_ms={}",
        inst.r,
        inst.n,
        2 * inst.r,
        inst.n / 2,
        check.exact,
        check.min_margin,
        check.violations,
        elapsed.as_millis()
    );

    if let Some(out) = &args.out {
        io::save(&out.join("points.abhx"), |w| {
            io::write_dataset(w, &inst.points)
        })?;
        io::save(&out.join("sim.abhs"), |w| {
            io::write_similarity(w, &inst.similarity)
        })?;
        io::save(&out.join("codes_query.abhc"), |w| {
            io::write_codes(w, &inst.codes_query)
        })?;
        io::save(&out.join("codes_db.abhc"), |w| {
            io::write_codes(w, &inst.codes_db)
        })?;
    }

    if let Some(probe_k) = args.probe_symmetric_k {
        let mut best_accuracy = 0.0f64;
        let mut reached_exact = false;
        for seed in 0..args.seeds {
            let config = TrainConfig {
                k_max: probe_k,
                seed,
                sweeps_per_bit: 12,
                ..TrainConfig::default()
            };
            let model = train::train_symmetric(&inst.similarity, &config)?;
            let acc = train::pair_accuracy(&model, &inst.similarity)?;
            best_accuracy = best_accuracy.max(acc);
            reached_exact |= acc == 1.0;
        }
        println!(
            "theorem1-probe: r={} sym_bits={} seeds={} best_accuracy={} exact_reached={}",
            inst.r, probe_k, args.seeds, best_accuracy, reached_exact
        );
    }

    if args.bits_table {
        let out = args
            .out
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--bits-table needs --out".to_string()))?;
        let targets: Vec<f64> = args
            .ap_targets
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad AP target '{t}': {e}")))
            })
            .collect::<Result<_>>()?;
        let k_max = args.bits_k.unwrap_or(2 * args.r + 2);
        let config = TrainConfig {
            k_max,
            seed: 0,
            sweeps_per_bit: 12,
            ..TrainConfig::default()
        };
        let uv = train::train_unconstrained(&inst.similarity, &config)?;
        let sym = train::train_symmetric(&inst.similarity, &config)?;
        let labels = CrossLabels::from_square(&inst.similarity);
        let uv_aps = eval::stage_aps(&uv, None, None, &labels, Pooling::Micro)?;
        let sym_aps = eval::stage_aps(&sym, None, None, &labels, Pooling::Micro)?;
        let uv_table = eval::bits_for_ap(&uv_aps, &targets)?;
        let sym_table = eval::bits_for_ap(&sym_aps, &targets)?;
        io::save(&out.join("kap_asym.csv"), |w| io::write_kap_csv(w, &uv_aps))?;
        io::save(&out.join("kap_sym.csv"), |w| io::write_kap_csv(w, &sym_aps))?;
        io::save(&out.join("bits.csv"), |w| {
            io::write_bits_table_csv(w, &sym_table, &uv_table)
        })?;
        println!(
            "theorem1-bits: r={} k_max={} table={}",
            args.r,
            k_max,
            out.join("bits.csv").display()
        );
    }
    if let Some(out) = &args.out {
        let manifest_args = vec![
            ("r".to_string(), args.r.to_string()),
            ("bits_table".to_string(), args.bits_table.to_string()),
            ("ap_targets".to_string(), args.ap_targets.clone()),
            (
                "bits_k".to_string(),
                args.bits_k.map(|k| k.to_string()).unwrap_or_default(),
            ),
        ];
        write_manifest(out, "theorem1", Some(0), manifest_args)?;
    }
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<()> {
    let codes = io::read_codes(&mut std::fs::File::open(&args.db_codes)?)?;
    let ids = io::read_ids(&mut std::fs::File::open(&args.ids)?)?;
    let db = CodeDatabase::new(codes, ids)?;
    let model = io::read_model(&mut std::fs::File::open(&args.model)?)?;
    let CodeSide::Hash(hash) = &model.query else {
        return Err(Error::InvalidInput(
            "model stores fixed query codes; retrieval needs a parametric query map".to_string(),
        ));
    };
    if hash.k() != db.k() {
        return Err(Error::DimensionMismatch(format!(
            "model produces {}-bit codes, database stores {}-bit codes",
            hash.k(),
            db.k()
        )));
    }
    let queries = io::load_dataset(&args.query_file)?;
    if queries.d() != hash.d() {
        return Err(Error::DimensionMismatch(format!(
            "queries have dimension {}, model expects {}",
            queries.d(),
            hash.d()
        )));
    }
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for qi in 0..queries.n() {
        let signs = match &model.center {
            Some(c) => {
                let shifted: Vec<f64> = queries
                    .point(qi)
                    .iter()
                    .zip(c)
                    .map(|(a, b)| a - b)
                    .collect();
                hash.apply(&shifted)
            }
            None => hash.apply(queries.point(qi)),
        };
        let packed = asymhash::bitcode::pack(&signs)?;
        for hit in db.scan_top(&packed, args.top)? {
            use std::io::Write;
            // a closed downstream pipe (e.g. `| head`) is not an error
            match writeln!(out, "{qi} {} {}", hit.id, hit.distance) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
                other => other?,
            }
        }
    }
    Ok(())
}
