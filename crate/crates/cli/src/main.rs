mod commands;
mod config;
mod report;

use commands::{Command, COMMANDS};
use config::{parse_config_text, CliError};
use report::{write_report, Format, Header};
use serde_json::json;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

struct Invocation {
    command: &'static Command,
    config_file: Option<PathBuf>,
    flags: Vec<(String, String)>,
    dry_run: bool,
    format: Format,
    output: Option<PathBuf>,
    threads: usize,
}

fn usage() -> String {
    let mut s = String::from(
        "usage: thinprime <subcommand> [--config FILE] [--KEY VALUE | --KEY=VALUE]...\n\
         \x20                [--format csv|json] [--output PATH] [--threads N] [--dry-run]\n\nsubcommands:\n",
    );
    for c in COMMANDS {
        s.push_str(&format!("  {:<14} {}\n", c.name, c.about));
    }
    s.push_str("\nrun `thinprime <subcommand> --help` to list its keys and defaults\n");
    s
}

fn command_help(c: &Command) -> String {
    let mut s = format!("thinprime {}: {}\n\nkeys:\n", c.name, c.about);
    let thin: &[(&str, Option<&str>)] = if c.thin { commands::THIN_KEYS } else { &[] };
    for (k, d) in thin.iter().chain(c.keys) {
        s.push_str(&format!("  {:<12} {}\n", k, d.unwrap_or("-")));
    }
    s
}

enum Parsed {
    Run(Invocation),
    Help(String),
}

fn parse_args(args: &[String]) -> Result<Parsed, CliError> {
    let Some(sub) = args.first() else {
        return Ok(Parsed::Help(usage()));
    };
    if sub == "--help" || sub == "-h" || sub == "help" {
        return Ok(Parsed::Help(usage()));
    }
    let command =
        Command::find(sub).ok_or_else(|| CliError::Validation(format!("unknown subcommand '{sub}'\n\n{}", usage())))?;
    let mut inv = Invocation {
        command,
        config_file: None,
        flags: Vec::new(),
        dry_run: false,
        format: Format::Csv,
        output: None,
        threads: 1,
    };
    let mut i = 1;
    while i < args.len() {
        let arg = &args[i];
        let Some(body) = arg.strip_prefix("--") else {
            return Err(CliError::Validation(format!("unexpected argument '{arg}'")));
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (body, None),
        };
        match key {
            "help" => return Ok(Parsed::Help(command_help(command))),
            "dry-run" => {
                inv.dry_run = true;
                i += 1;
                continue;
            }
            _ => {}
        }
        let value = match inline {
            Some(v) => v,
            None => {
                i += 1;
                args.get(i)
                    .cloned()
                    .ok_or_else(|| CliError::Validation(format!("--{key} needs a value")))?
            }
        };
        match key {
            "config" => inv.config_file = Some(PathBuf::from(value)),
            "output" => inv.output = Some(PathBuf::from(value)),
            "format" => {
                inv.format = Format::parse(&value)
                    .ok_or_else(|| CliError::Validation(format!("format '{value}' is not csv or json")))?
            }
            "threads" => {
                inv.threads = config::parse_u64("threads", &value)? as usize;
                if inv.threads == 0 {
                    return Err(CliError::Validation("threads must be at least 1".into()));
                }
            }
            k if command.knows(k) => {
                if value.trim().is_empty() {
                    return Err(CliError::Validation(format!("empty value for --{k}")));
                }
                inv.flags.push((k.to_string(), value.trim().to_string()));
            }
            k => {
                return Err(CliError::Validation(format!(
                    "unknown key '{k}' for '{}'; see `thinprime {} --help`",
                    command.name, command.name
                )))
            }
        }
        i += 1;
    }
    Ok(Parsed::Run(inv))
}

fn diagnostic(e: &CliError) -> String {
    let kind = match e {
        CliError::Compute(c) => c.kind(),
        CliError::Io(_) => "Io",
        CliError::Parse { .. } => "ParseError",
        CliError::Validation(_) => "ValidationError",
    };
    json!({"schema": report::SCHEMA, "error": kind, "message": e.to_string(), "exit_code": e.exit_code()}).to_string()
}

fn run(inv: Invocation) -> Result<(), CliError> {
    let command = inv.command;
    let mut given = Vec::new();
    if let Some(path) = &inv.config_file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config file {}: {e}", path.display())))?;
        given = parse_config_text(&text, &path.display().to_string(), &|k| command.knows(k))?;
    }
    given.extend(inv.flags);
    let cfg = command.resolve(given);
    let job = command.prepare(&cfg)?;

    let mut resolved: Vec<(String, String)> = cfg.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    resolved.push(("threads".into(), inv.threads.to_string()));

    if inv.dry_run {
        let mut out = io::stdout().lock();
        writeln!(out, "# plan: thinprime {} (threads = {})", command.name, inv.threads)?;
        write!(out, "{}", cfg.to_text())?;
        let fmt = if inv.format == Format::Csv { "csv" } else { "json" };
        match &inv.output {
            Some(p) => writeln!(out, "# output: {} ({fmt})", p.display())?,
            None => writeln!(out, "# output: stdout ({fmt})")?,
        }
        writeln!(out, "# dry run: nothing computed, nothing written")?;
        return Ok(());
    }

    rayon::ThreadPoolBuilder::new()
        .num_threads(inv.threads)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;

    let start = Instant::now();
    let report = job()?;
    let header = Header {
        subcommand: command.name,
        config: &resolved,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut buf = Vec::new();
    write_report(&mut buf, inv.format, &header, &report)?;
    match &inv.output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(&buf)?;
            f.flush()?;
        }
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = parse_args(&args).and_then(|p| match p {
        Parsed::Help(text) => {
            print!("{text}");
            Ok(())
        }
        Parsed::Run(inv) => run(inv),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            if code == 3 {
                eprintln!("{}", diagnostic(&e));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code as u8)
        }
    }
}
