//! Command-line front end: `run` drives a stream through the memory pipeline
//! and exports snapshots; `bench` measures resident memory growth against a
//! dense keep-everything baseline.

mod args;
mod bench;
mod run;

use tokmem::error::Error;

/// Print a structured runtime error to stderr and return exit code 1.
/// `frame` is the 1-based ordinal of the frame that triggered the failure,
/// when known.
fn report_error(error: &Error, frame: Option<u64>) -> i32 {
    let doc = serde_json::json!({
        "error": {
            "kind": error.kind(),
            "message": error.to_string(),
            "frame": frame,
        }
    });
    eprintln!("{doc}");
    1
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = match argv.first().map(String::as_str) {
        Some("run") => match args::parse_run(&argv[1..]) {
            Ok(parsed) => run::cmd_run(parsed),
            Err(e) => {
                eprintln!("error: {e}");
                eprintln!();
                args::print_usage();
                2
            }
        },
        Some("bench") => match args::parse_bench(&argv[1..]) {
            Ok(parsed) => bench::cmd_bench(parsed),
            Err(e) => {
                eprintln!("error: {e}");
                eprintln!();
                args::print_usage();
                2
            }
        },
        Some("help") | Some("--help") | Some("-h") => {
            args::print_usage();
            0
        }
        Some(other) => {
            eprintln!("error: unknown command {other:?}");
            eprintln!();
            args::print_usage();
            2
        }
        None => {
            args::print_usage();
            2
        }
    };
    std::process::exit(code);
}
