//! Flag parsing and configuration resolution.
//!
//! Precedence: command-line flags override the config file named by the
//! `MC_CONFIG` environment variable, which overrides built-in defaults. The
//! config file is plain `key=value` text with `#` comments; keys are named
//! after the `StreamConfig` fields.

use std::path::PathBuf;

use tokmem::config::StreamConfig;

/// Environment variable naming the config file.
pub const CONFIG_ENV_VAR: &str = "MC_CONFIG";

const DEFAULT_SCENES: usize = 4;
const DEFAULT_NOISE: f64 = 0.05;
const DEFAULT_SEED: u64 = 42;
const DEFAULT_CHECKPOINT_EVERY: u64 = 100;

/// A bad invocation: reported to stderr with usage, exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

type ParseResult<T> = Result<T, UsageError>;

fn usage<T>(message: impl Into<String>) -> ParseResult<T> {
    Err(UsageError(message.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunSource {
    Input(PathBuf),
    Synthetic {
        frames: u64,
        scenes: usize,
        noise: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: StreamConfig,
    pub source: RunSource,
    pub output: PathBuf,
    /// 1-based frame ordinals at which breakpoint snapshots are written.
    pub breakpoints: Vec<u64>,
    pub json: bool,
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub config: StreamConfig,
    pub frames: u64,
    pub checkpoint_every: u64,
    pub csv: PathBuf,
    pub json: PathBuf,
    pub seed: u64,
    pub scenes: usize,
    pub noise: f64,
}

/// Cursor over raw argv tokens with typed take-next helpers.
struct Cursor<'a> {
    args: &'a [String],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(args: &'a [String]) -> Self {
        Cursor { args, pos: 0 }
    }

    fn next(&mut self) -> Option<&'a str> {
        let item = self.args.get(self.pos).map(String::as_str);
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn value_for(&mut self, flag: &str) -> ParseResult<&'a str> {
        match self.next() {
            Some(v) => Ok(v),
            None => usage(format!("flag {flag} requires a value")),
        }
    }

    fn parse_for<T: std::str::FromStr>(&mut self, flag: &str) -> ParseResult<T> {
        let raw = self.value_for(flag)?;
        raw.parse()
            .or_else(|_| usage(format!("flag {flag}: cannot parse {raw:?}")))
    }
}

/// Load `key=value` overrides from the file `MC_CONFIG` points at, if set.
fn apply_config_file(config: &mut StreamConfig) -> ParseResult<()> {
    let Some(path) = std::env::var_os(CONFIG_ENV_VAR) else {
        return Ok(());
    };
    let path = PathBuf::from(path);
    let contents = std::fs::read_to_string(&path).map_err(|e| {
        UsageError(format!(
            "cannot read config file {} ({CONFIG_ENV_VAR}): {e}",
            path.display()
        ))
    })?;
    for (lineno, raw) in contents.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!(
                "{}:{}: expected key=value, got {raw:?}",
                path.display(),
                lineno + 1
            ));
        };
        let key = key.trim();
        let value = value.trim();
        let bad_value = || {
            UsageError(format!(
                "{}:{}: cannot parse value {value:?} for key {key}",
                path.display(),
                lineno + 1
            ))
        };
        match key {
            "tokens_per_frame" => {
                config.tokens_per_frame = value.parse().map_err(|_| bad_value())?
            }
            "feature_dim" => config.feature_dim = value.parse().map_err(|_| bad_value())?,
            "window_size" => config.window_size = value.parse().map_err(|_| bad_value())?,
            "short_capacity" => config.short_capacity = value.parse().map_err(|_| bad_value())?,
            "consolidated_capacity" => {
                config.consolidated_capacity = value.parse().map_err(|_| bad_value())?
            }
            "base_pe_length" => config.base_pe_length = value.parse().map_err(|_| bad_value())?,
            "pe_alpha" => config.pe_alpha = value.parse().map_err(|_| bad_value())?,
            other => {
                return usage(format!(
                    "{}:{}: unknown config key {other:?}",
                    path.display(),
                    lineno + 1
                ));
            }
        }
    }
    Ok(())
}

fn resolved_config(
    window: Option<usize>,
    short_cap: Option<usize>,
    consolidated: Option<usize>,
) -> ParseResult<StreamConfig> {
    let mut config = StreamConfig::default();
    apply_config_file(&mut config)?;
    if let Some(c) = window {
        config.window_size = c;
    }
    if let Some(k) = short_cap {
        config.short_capacity = k;
    }
    if let Some(t) = consolidated {
        config.consolidated_capacity = t;
    }
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}

pub fn parse_run(args: &[String]) -> ParseResult<RunArgs> {
    let mut cursor = Cursor::new(args);
    let mut input: Option<PathBuf> = None;
    let mut synthetic = false;
    let mut frames: Option<u64> = None;
    let mut scenes: Option<usize> = None;
    let mut noise: Option<f64> = None;
    let mut seed: Option<u64> = None;
    let mut window: Option<usize> = None;
    let mut short_cap: Option<usize> = None;
    let mut consolidated: Option<usize> = None;
    let mut output: Option<PathBuf> = None;
    let mut breakpoints: Vec<u64> = Vec::new();
    let mut json = false;

    while let Some(flag) = cursor.next() {
        match flag {
            "--input" => input = Some(PathBuf::from(cursor.value_for(flag)?)),
            "--synthetic" => synthetic = true,
            "--frames" => frames = Some(cursor.parse_for(flag)?),
            "--scenes" => scenes = Some(cursor.parse_for(flag)?),
            "--noise" => noise = Some(cursor.parse_for(flag)?),
            "--seed" => seed = Some(cursor.parse_for(flag)?),
            "--window" => window = Some(cursor.parse_for(flag)?),
            "--short-cap" => short_cap = Some(cursor.parse_for(flag)?),
            "--consolidated" => consolidated = Some(cursor.parse_for(flag)?),
            "--output" => output = Some(PathBuf::from(cursor.value_for(flag)?)),
            "--breakpoint" => {
                let idx: u64 = cursor.parse_for(flag)?;
                if idx == 0 {
                    return usage("--breakpoint indices are 1-based frame ordinals");
                }
                breakpoints.push(idx);
            }
            "--json" => json = true,
            other => return usage(format!("unknown flag for run: {other}")),
        }
    }

    let source = match (input, synthetic) {
        (Some(_), true) => return usage("--input and --synthetic are mutually exclusive"),
        (None, false) => return usage("run needs a source: --input <file> or --synthetic"),
        (Some(path), false) => {
            for (set, name) in [
                (frames.is_some(), "--frames"),
                (scenes.is_some(), "--scenes"),
                (noise.is_some(), "--noise"),
                (seed.is_some(), "--seed"),
            ] {
                if set {
                    return usage(format!("{name} applies only to --synthetic runs"));
                }
            }
            RunSource::Input(path)
        }
        (None, true) => {
            let Some(frames) = frames else {
                return usage("--synthetic requires --frames");
            };
            let scenes = scenes.unwrap_or(DEFAULT_SCENES);
            if scenes == 0 {
                return usage("--scenes must be at least 1");
            }
            let noise = noise.unwrap_or(DEFAULT_NOISE);
            if !(noise.is_finite() && noise >= 0.0) {
                return usage("--noise must be finite and non-negative");
            }
            RunSource::Synthetic {
                frames,
                scenes,
                noise,
                seed: seed.unwrap_or(DEFAULT_SEED),
            }
        }
    };
    let Some(output) = output else {
        return usage("run requires --output <snapshot path>");
    };

    breakpoints.sort_unstable();
    breakpoints.dedup();

    Ok(RunArgs {
        config: resolved_config(window, short_cap, consolidated)?,
        source,
        output,
        breakpoints,
        json,
    })
}

pub fn parse_bench(args: &[String]) -> ParseResult<BenchArgs> {
    let mut cursor = Cursor::new(args);
    let mut frames: Option<u64> = None;
    let mut checkpoint_every: Option<u64> = None;
    let mut csv: Option<PathBuf> = None;
    let mut json: Option<PathBuf> = None;
    let mut seed: Option<u64> = None;

    while let Some(flag) = cursor.next() {
        match flag {
            "--frames" => frames = Some(cursor.parse_for(flag)?),
            "--checkpoint-every" => checkpoint_every = Some(cursor.parse_for(flag)?),
            "--csv" => csv = Some(PathBuf::from(cursor.value_for(flag)?)),
            "--json" => json = Some(PathBuf::from(cursor.value_for(flag)?)),
            "--seed" => seed = Some(cursor.parse_for(flag)?),
            other => return usage(format!("unknown flag for bench: {other}")),
        }
    }

    let Some(frames) = frames else {
        return usage("bench requires --frames");
    };
    if frames == 0 {
        return usage("bench needs at least 1 frame");
    }
    let checkpoint_every = checkpoint_every.unwrap_or(DEFAULT_CHECKPOINT_EVERY);
    if checkpoint_every == 0 {
        return usage("--checkpoint-every must be at least 1");
    }
    let Some(csv) = csv else {
        return usage("bench requires --csv <path>");
    };
    let Some(json) = json else {
        return usage("bench requires --json <path>");
    };

    Ok(BenchArgs {
        config: resolved_config(None, None, None)?,
        frames,
        checkpoint_every,
        csv,
        json,
        seed: seed.unwrap_or(DEFAULT_SEED),
        scenes: DEFAULT_SCENES,
        noise: DEFAULT_NOISE,
    })
}

pub fn print_usage() {
    eprintln!("Usage: tokmem <command> [flags]");
    eprintln!();
    eprintln!("Commands:");
    eprintln!("  run    Ingest a token stream and export memory snapshots");
    eprintln!("  bench  Measure resident memory growth over a synthetic stream");
    eprintln!();
    eprintln!("run flags:");
    eprintln!("  --input <file>       Read an MCTS token-stream file");
    eprintln!("  --synthetic          Generate a synthetic stream instead");
    eprintln!("  --frames <F>         Synthetic stream length (required with --synthetic)");
    eprintln!("  --scenes <S>         Synthetic scene count (default {DEFAULT_SCENES})");
    eprintln!("  --noise <SIGMA>      Synthetic per-token noise (default {DEFAULT_NOISE})");
    eprintln!("  --seed <U64>         Synthetic RNG seed (default {DEFAULT_SEED})");
    eprintln!("  --window <C>         Ingest window size (I/O batching only)");
    eprintln!("  --short-cap <K>      Short-term memory capacity in frames");
    eprintln!("  --consolidated <T>   Tokens kept per consolidation");
    eprintln!("  --output <path>      Global snapshot destination (required)");
    eprintln!("  --breakpoint <IDX>   1-based frame ordinal; writes <output>.bp<IDX>");
    eprintln!("                       with the memory state at that moment (repeatable)");
    eprintln!("  --json               Write snapshots as JSON instead of binary");
    eprintln!();
    eprintln!("bench flags:");
    eprintln!("  --frames <F>             Synthetic frames to ingest (required)");
    eprintln!("  --checkpoint-every <E>   Row cadence (default {DEFAULT_CHECKPOINT_EVERY})");
    eprintln!("  --csv <path>             Checkpoint table destination (required)");
    eprintln!("  --json <path>            Full report destination (required)");
    eprintln!("  --seed <U64>             Synthetic RNG seed (default {DEFAULT_SEED})");
    eprintln!();
    eprintln!("Configuration: flags > {CONFIG_ENV_VAR} config file (key=value lines,");
    eprintln!("keys named after StreamConfig fields) > defaults.");
    eprintln!("Exit codes: 0 ok, 1 runtime error (JSON on stderr), 2 usage error.");
}
