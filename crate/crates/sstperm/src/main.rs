//! `sstperm` — run-until-stopped shuffling from the command line.
//!
//! Subcommands cover the whole pipeline: generating single permutations from
//! keys, Monte-Carlo estimation of stopping times, the exact sign-bias table
//! for truncated runs, round budgets, exhaustive small-deck oracles, and the
//! masked block cipher built on top of the bit-level permutations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use sst_shuffle::analysis::{
    conditional_uniformity, exact_distribution, format_rational, format_significant,
    rounds_for_epsilon, separation_vs_tail, sign_advantage_log2, sign_distribution,
    sign_distribution_exact, tv, uniform_deck, uniform_envelope, MAX_DP_N,
};
use sst_shuffle::masking::{
    decompose_to_riffle_rounds, BitPermutation, MaskedCipher, TransformChoice, DEFAULT_BLOCK_BITS,
};
use sst_shuffle::randomness::RandomBits;
use sst_shuffle::sampler::{ksa_double_star_with, SamplerOptions, Scheme};
use sst_shuffle::simulate::{run_trials, run_trials_sequential, sign_empirical, TrialConfig};
use sst_shuffle::{KeyStream, RuleKind, ShuffleKind, StreamLabel};

#[derive(Parser)]
#[command(name = "sstperm", version, about = "Perfect-sampling shuffles and what they cost")]
struct Cli {
    /// TOML file with defaults (keys: `seed`, `workers`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for anything randomized. Precedence: this flag, the config file,
    /// $SSTPERM_SEED, then 1.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one uniform permutation from a key.
    Shuffle(ShuffleArgs),
    /// Estimate stopping-time statistics over many independent trials.
    Simulate(SimulateArgs),
    /// Sign bias of the cyclic chain cut short at t steps (exact).
    Advantage(AdvantageArgs),
    /// Rounds of the cyclic chain needed for a separation budget.
    Plan(PlanArgs),
    /// Exhaustive small-deck verification; exits non-zero on any failure.
    Oracle(OracleArgs),
    /// Encrypt or decrypt whole blocks with the masked cipher.
    Mask(MaskArgs),
    /// Self-timed throughput comparison of the slow and fast paths.
    Bench(BenchArgs),
}

/// Defaults read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    workers: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = file.seed {
        return Ok(seed);
    }
    match std::env::var("SSTPERM_SEED") {
        Ok(raw) => raw
            .trim()
            .parse()
            .with_context(|| format!("SSTPERM_SEED must be an unsigned integer, got {raw:?}")),
        Err(_) => Ok(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = load_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &file)?;
    match cli.cmd {
        Cmd::Shuffle(args) => cmd_shuffle(args, seed),
        Cmd::Simulate(args) => cmd_simulate(args, seed, &file),
        Cmd::Advantage(args) => cmd_advantage(args, seed),
        Cmd::Plan(args) => cmd_plan(args),
        Cmd::Oracle(args) => cmd_oracle(args),
        Cmd::Mask(args) => cmd_mask(args),
        Cmd::Bench(args) => cmd_bench(args, seed, &file),
    }
}

// --- shuffle ---------------------------------------------------------------

#[derive(Copy, Clone, ValueEnum)]
enum Emit {
    /// One line: the deck as space-separated labels.
    Deck,
    /// The full sample record as JSON.
    Json,
}

#[derive(Args)]
struct ShuffleArgs {
    /// Deck size.
    #[arg(long, default_value_t = 8)]
    n: usize,

    /// Shuffle/rule pairing: riffle-sst, ctrt-klz, rtrt-klz or t2r.
    #[arg(long, default_value = "riffle-sst")]
    scheme: Scheme,

    /// Key bytes in hex. Without this (or --system-random) the key is the
    /// resolved seed, so runs stay reproducible.
    #[arg(long, conflicts_with = "system_random")]
    key_hex: Option<String>,

    /// Draw a fresh 32-byte key from the OS and echo it to stderr.
    #[arg(long)]
    system_random: bool,

    /// Keep shuffling to at least this many steps after the rule fires.
    #[arg(long)]
    min_steps: Option<u64>,

    /// Fail if the rule has not fired after this many steps.
    #[arg(long)]
    max_steps: Option<u64>,

    #[arg(long, value_enum, default_value_t = Emit::Deck)]
    emit: Emit,
}

fn cmd_shuffle(args: ShuffleArgs, seed: u64) -> Result<ExitCode> {
    let key: Vec<u8> = if let Some(hex_key) = &args.key_hex {
        hex::decode(hex_key.trim()).context("--key-hex must be an even-length hex string")?
    } else if args.system_random {
        let mut key = vec![0u8; 32];
        rand::rng().fill_bytes(&mut key);
        eprintln!("# key-hex={}", hex::encode(&key));
        key
    } else {
        seed.to_le_bytes().to_vec()
    };
    if key.is_empty() {
        bail!("key must not be empty");
    }

    let (kind, rule) = args.scheme.pairing();
    let mut src = KeyStream::new(&key, StreamLabel::Generic);
    let opts = SamplerOptions { max_steps: args.max_steps, min_steps: args.min_steps };
    let sample = ksa_double_star_with(kind, args.n, rule, &mut src, &opts)?;

    eprintln!(
        "# scheme={} n={} steps={} bits={}",
        args.scheme, args.n, sample.steps, sample.bits_used
    );
    match args.emit {
        Emit::Deck => println!("{}", sample.deck.to_line()),
        Emit::Json => println!("{}", serde_json::to_string_pretty(&sample)?),
    }
    Ok(ExitCode::SUCCESS)
}

// --- simulate ----------------------------------------------------------------

#[derive(Copy, Clone, ValueEnum)]
enum OutFormat {
    Json,
    /// `steps,count` histogram rows.
    Csv,
}

#[derive(Args)]
struct SimulateArgs {
    /// Shuffle: top-to-random, random-transpositions, cyclic-to-random,
    /// riffle-inverse (or t2r/rtrt/ctrt/riffle).
    #[arg(long)]
    kind: ShuffleKind,

    /// Stopping rule: bottom-card-tracker, checked-set, klz-mark,
    /// pair-separation (or tracker/mironov/klz/pairs).
    #[arg(long)]
    rule: RuleKind,

    /// Deck size.
    #[arg(long)]
    n: usize,

    #[arg(long, default_value_t = 10_000)]
    trials: u64,

    /// Worker threads; 0 picks one per core. Precedence: this flag, the
    /// config file, then 0.
    #[arg(long)]
    workers: Option<usize>,

    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

fn cmd_simulate(args: SimulateArgs, seed: u64, file: &FileConfig) -> Result<ExitCode> {
    let workers = args.workers.or(file.workers).unwrap_or(0);
    let cfg = TrialConfig {
        kind: args.kind,
        rule: args.rule,
        n: args.n,
        trials: args.trials,
        seed,
        workers,
    };
    eprintln!(
        "# kind={} rule={} n={} trials={} seed={} workers={}",
        cfg.kind, cfg.rule, cfg.n, cfg.trials, cfg.seed, cfg.workers
    );
    let report = run_trials(&cfg)?;
    match args.out {
        OutFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutFormat::Csv => {
            println!("steps,count");
            for (steps, count) in &report.histogram {
                println!("{steps},{count}");
            }
        }
    }
    eprintln!(
        "# mean_steps={} var_steps={} mean_bits={} wall={:.3}s",
        report.mean_steps,
        report.var_steps,
        report.mean_bits,
        report.wall_time.as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

// --- advantage ---------------------------------------------------------------

#[derive(Args)]
struct AdvantageArgs {
    /// Deck size.
    #[arg(long, default_value_t = 256)]
    n: u64,

    /// Step counts to tabulate; repeat for multiple rows.
    #[arg(long = "t", value_name = "STEPS",
          default_values_t = [0u64, 256, 512, 1024, 2048])]
    t: Vec<u64>,

    /// Print P(even) with 16 exact decimals instead of display precision.
    #[arg(long)]
    full_precision: bool,

    /// Also estimate each row empirically with this many trials.
    #[arg(long, value_name = "TRIALS")]
    empirical: Option<u64>,
}

fn cmd_advantage(args: AdvantageArgs, seed: u64) -> Result<ExitCode> {
    if args.n < 2 {
        bail!("--n must be at least 2");
    }
    let mut header = String::from("k,p_plus,log2_advantage");
    if args.empirical.is_some() {
        header.push_str(",empirical");
    }
    println!("{header}");
    for &t in &args.t {
        let log2 = sign_advantage_log2(args.n, t);
        let mut row = if args.full_precision {
            let exact = sign_distribution_exact(args.n, t);
            format!("{t},{},{}", format_rational(&exact, 16), format_significant(log2, 12))
        } else {
            let law = sign_distribution(args.n, t);
            format!("{t},{:.6},{}", law.p_plus, format_significant(log2, 6))
        };
        if let Some(trials) = args.empirical {
            let p = sign_empirical(args.n as usize, t, trials, seed);
            write!(row, ",{p:.6}")?;
        }
        println!("{row}");
    }
    Ok(ExitCode::SUCCESS)
}

// --- plan --------------------------------------------------------------------

#[derive(Args)]
struct PlanArgs {
    /// Deck size.
    #[arg(long)]
    n: u64,

    /// Separation budget, 0 < epsilon < 1/n!.
    #[arg(long)]
    epsilon: f64,
}

fn cmd_plan(args: PlanArgs) -> Result<ExitCode> {
    let rounds = rounds_for_epsilon(args.n, args.epsilon)?;
    println!("{rounds}");
    Ok(ExitCode::SUCCESS)
}

// --- oracle --------------------------------------------------------------

#[derive(Args)]
struct OracleArgs {
    /// Largest deck size to check exhaustively (3 or 4; runtime is O(n! ·
    /// states) per chain, so 4 is the practical ceiling).
    #[arg(long, default_value_t = MAX_DP_N)]
    max_n: usize,

    /// Tolerance for the conditional-uniformity deviation.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

struct OracleRun {
    checks: u32,
    failures: u32,
}

impl OracleRun {
    fn record(&mut self, ok: bool, line: &str) {
        self.checks += 1;
        if ok {
            println!("PASS {line}");
        } else {
            self.failures += 1;
            println!("FAIL {line}");
        }
    }
}

/// Numerical slack for the exact-arithmetic comparisons (the dynamic programs
/// run in f64; mass bookkeeping drifts by a few ulps per round).
const ORACLE_EPS: f64 = 1e-12;

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    if !(3..=MAX_DP_N).contains(&args.max_n) {
        bail!("--max-n must be 3 or 4 (exhaustive checks beyond {MAX_DP_N} cards are impractical)");
    }
    let mut run = OracleRun { checks: 0, failures: 0 };

    for n in 3..=args.max_n {
        let pairs = ShuffleKind::ALL.iter().flat_map(|&kind| {
            RuleKind::ALL.iter().filter(move |rule| rule.valid_for(kind)).map(move |&r| (kind, r))
        });
        for (kind, rule) in pairs {
            let name = format!("{}+{} n={n}", kind.as_str(), rule.as_str());

            let dev = conditional_uniformity(kind, rule, n)?;
            run.record(
                dev <= args.tol,
                &format!(
                    "conditional-uniformity {name} (max deviation {dev:.3e}, tol {:.1e})",
                    args.tol
                ),
            );

            let points = separation_vs_tail(kind, rule, n, 1e-9)?;
            let worst = points
                .iter()
                .map(|p| p.sep - p.tail)
                .fold(f64::NEG_INFINITY, f64::max);
            run.record(
                worst <= ORACLE_EPS,
                &format!(
                    "separation-bound {name} (sep - P(T>k) <= {worst:.3e} over {} step counts)",
                    points.len()
                ),
            );
        }

        for kind in ShuffleKind::ALL {
            let mut mass_ok = true;
            let mut envelope_ok = true;
            let mut tv_ok = true;
            let factorial: f64 = (1..=n as u64).product::<u64>() as f64;
            for k in 1..=10u64 {
                let dist = exact_distribution(kind, n, k)?;
                mass_ok &= (dist.total() - 1.0).abs() <= ORACLE_EPS;
                let env = uniform_envelope(&dist);
                envelope_ok &= env.max_deficit <= env.sep / factorial + ORACLE_EPS;
                envelope_ok &= env.max_surplus <= env.sep * (factorial - 1.0) / factorial + ORACLE_EPS;
                tv_ok &= tv(&dist) <= env.sep + ORACLE_EPS;
            }
            let chain = format!("{} n={n} (k=1..10)", kind.as_str());
            run.record(mass_ok, &format!("law-total-mass {chain}"));
            run.record(envelope_ok, &format!("uniform-envelope {chain}"));
            run.record(tv_ok, &format!("tv-below-separation {chain}"));
        }
    }

    if run.failures == 0 {
        println!("oracle: all {} checks passed", run.checks);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("oracle: {} of {} checks failed", run.failures, run.checks);
        Ok(ExitCode::FAILURE)
    }
}

// --- mask ----------------------------------------------------------------

#[derive(Args)]
struct MaskArgs {
    #[command(subcommand)]
    dir: MaskDir,
}

#[derive(Subcommand)]
enum MaskDir {
    /// Mask, transform, mask again.
    Encrypt(MaskIo),
    /// Invert the layers in reverse order.
    Decrypt(MaskIo),
}

#[derive(Args)]
struct MaskIo {
    /// Key bytes in hex.
    #[arg(long)]
    key_hex: String,

    /// Input file; its length must be a whole number of blocks.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Block width in bits (a power of two, 8..=1024).
    #[arg(long, default_value_t = DEFAULT_BLOCK_BITS)]
    block_bits: usize,

    /// Core transform between the masks: xor-stream or identity.
    #[arg(long, default_value = "xor-stream")]
    transform: TransformChoice,
}

fn cmd_mask(args: MaskArgs) -> Result<ExitCode> {
    let (io, encrypt) = match &args.dir {
        MaskDir::Encrypt(io) => (io, true),
        MaskDir::Decrypt(io) => (io, false),
    };
    let key = hex::decode(io.key_hex.trim()).context("--key-hex must be an even-length hex string")?;
    let cipher = MaskedCipher::new(&key, io.block_bits, io.transform)?;
    let mut data =
        fs::read(&io.input).with_context(|| format!("reading {}", io.input.display()))?;
    let whole_blocks =
        || format!("input must be a whole number of {}-byte blocks", cipher.block_bytes());
    if encrypt {
        cipher.encrypt(&mut data).with_context(whole_blocks)?;
    } else {
        cipher.decrypt(&mut data).with_context(whole_blocks)?;
    }
    fs::write(&io.out, &data).with_context(|| format!("writing {}", io.out.display()))?;
    let (s1, s2) = cipher.setup_steps();
    eprintln!(
        "# {} {} block(s) of {} bytes (mask setup: {s1}+{s2} steps)",
        if encrypt { "encrypted" } else { "decrypted" },
        data.len() / cipher.block_bytes().max(1),
        cipher.block_bytes()
    );
    Ok(ExitCode::SUCCESS)
}

// --- bench ---------------------------------------------------------------

#[derive(Args)]
struct BenchArgs {
    /// Block width for the bit-permutation comparison.
    #[arg(long, default_value_t = DEFAULT_BLOCK_BITS)]
    n_bits: usize,

    /// Blocks pushed through each bit path.
    #[arg(long, default_value_t = 20_000)]
    blocks: u64,

    /// Deck size for the trial-runner comparison.
    #[arg(long, default_value_t = 64)]
    n: usize,

    /// Trials per runner.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,

    #[arg(long)]
    workers: Option<usize>,
}

fn cmd_bench(args: BenchArgs, seed: u64, file: &FileConfig) -> Result<ExitCode> {
    let mut bits = RandomBits::new(ChaCha20Rng::seed_from_u64(seed));
    let deck = uniform_deck(args.n_bits, &mut bits)?;
    let perm = BitPermutation::from_deck(&deck)?;
    let dec = decompose_to_riffle_rounds(&perm);

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut block = vec![0u8; args.n_bits / 8];
    rng.fill_bytes(&mut block);

    let start = Instant::now();
    for _ in 0..args.blocks {
        block = perm.apply_bits(&block)?;
    }
    let slow = start.elapsed();

    let start = Instant::now();
    for _ in 0..args.blocks {
        block = dec.apply_bits_fast(&block)?;
    }
    let fast = start.elapsed();

    let rate = |d: std::time::Duration| args.blocks as f64 / d.as_secs_f64();
    println!(
        "mask {} bits: bitwise {:.0} blocks/s, rounds {:.0} blocks/s ({:.1}x)",
        args.n_bits,
        rate(slow),
        rate(fast),
        slow.as_secs_f64() / fast.as_secs_f64()
    );

    let workers = args.workers.or(file.workers).unwrap_or(0);
    let cfg = TrialConfig {
        kind: ShuffleKind::CyclicToRandom,
        rule: RuleKind::KlzMark,
        n: args.n,
        trials: args.trials,
        seed,
        workers,
    };
    let start = Instant::now();
    let serial = run_trials_sequential(&cfg)?;
    let serial_time = start.elapsed();
    let start = Instant::now();
    let parallel = run_trials(&cfg)?;
    let parallel_time = start.elapsed();
    if serial.histogram != parallel.histogram {
        bail!("runner mismatch: serial and parallel histograms differ");
    }
    let trate = |d: std::time::Duration| args.trials as f64 / d.as_secs_f64();
    let label = if cfg!(feature = "parallel") { "parallel" } else { "serial fallback" };
    println!(
        "trials n={}: serial {:.0}/s, {label} {:.0}/s ({:.1}x)",
        args.n,
        trate(serial_time),
        trate(parallel_time),
        serial_time.as_secs_f64() / parallel_time.as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}
