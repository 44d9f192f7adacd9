use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ontodss::dsl::{compile, parse_rules, parse_templates, DslError, DslErrorKind};
use ontodss::kb::load_ontology;
use ontodss::notify::Outbox;
use ontodss::runtime::{ErrorClass, Runtime, RuntimeError};
use ontodss_service::{api, run_to_dir};

#[derive(Parser)]
#[command(name = "ontodss", about = "Ontology-driven decision support pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to quiescence and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "ONTODSS_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Rule file checks.
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
    /// List individuals of a class in a saved kb, with provenance.
    Query {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value = "Finding")]
        class: String,
    },
    /// Outbox inspection.
    Outbox {
        #[command(subcommand)]
        command: OutboxCommand,
    },
    /// Serve the HTTP API for a scenario.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "ONTODSS_OUT", default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Parse, validate and DL-safety check a rule file.
    Check {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        rules: PathBuf,
    },
}

#[derive(Subcommand)]
enum OutboxCommand {
    Ls {
        #[arg(long, env = "ONTODSS_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        user: Option<String>,
    },
}

const PARSE: u8 = 2;
const VALIDATION: u8 = 3;
const TICK_CAP: u8 = 4;

fn code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<RuntimeError>().map(RuntimeError::class) {
        Some(ErrorClass::Parse) => PARSE,
        Some(ErrorClass::Validation) => VALIDATION,
        Some(ErrorClass::TickCap) => TICK_CAP,
        _ => 1,
    }
}

fn dsl_code(e: &DslError) -> u8 {
    if e.kind == DslErrorKind::Syntax {
        PARSE
    } else {
        VALIDATION
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_for(&e))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run { scenario, out } => {
            let res = run_to_dir(&scenario, &out)?;
            println!(
                "quiescent after {} ticks: {} events, {} deliveries, artifacts in {}",
                res.ticks,
                res.log.len(),
                res.outbox.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Rules { command: RulesCommand::Check { schema, templates, rules } } => rules_check(&schema, &templates, &rules),
        Command::Query { kb, class } => {
            let text = std::fs::read_to_string(&kb).with_context(|| format!("reading {}", kb.display()))?;
            let kb = load_ontology(&text).map_err(|e| anyhow::anyhow!("{}: {e}", kb.display()))?;
            anyhow::ensure!(kb.class(&class).is_some(), "unknown class `{class}`");
            for id in kb.instances_of(&class) {
                let provs: Vec<String> = kb
                    .direct_classes(id)
                    .into_iter()
                    .flatten()
                    .map(|(c, p)| format!("{c} @{p}"))
                    .collect();
                println!("{id}\t{}", provs.join(", "));
            }
            Ok(0)
        }
        Command::Outbox { command: OutboxCommand::Ls { out, user } } => {
            let dir = out.join("outbox");
            anyhow::ensure!(dir.is_dir(), "no outbox at {}", dir.display());
            let outbox = Outbox::new(dir, ontodss::notify::Channel::ALL);
            for r in outbox.records()? {
                if user.as_ref().is_some_and(|u| *u != r.user) {
                    continue;
                }
                let first = r.body.lines().next().unwrap_or_default();
                println!("{}\t{}\t{}\t{}\t{}", r.timestamp, r.user, r.channel, r.message, first);
            }
            Ok(0)
        }
        Command::Serve { scenario, port, out } => {
            let rt = Runtime::load(&scenario, out.join("outbox"))?;
            let app = api::router(api::Session::new(rt));
            let tokio = tokio::runtime::Runtime::new()?;
            tokio.block_on(async {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app).await?;
                anyhow::Ok(())
            })?;
            Ok(0)
        }
    }
}

fn rules_check(schema: &Path, templates: &Path, rules: &Path) -> anyhow::Result<u8> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| RuntimeError::Load { path: p.into(), message: e.to_string() });
    let kb = load_ontology(&read(schema)?).map_err(|source| RuntimeError::Ontology { path: schema.into(), source })?;
    let report = |path: &Path, e: &DslError| {
        println!("{}:{}:{}: {}: {} (at `{}`)", path.display(), e.line, e.column, e.kind.as_str(), e.message, e.phrase);
        dsl_code(e)
    };
    let ts = match parse_templates(&read(templates)?, &kb) {
        Ok(ts) => ts,
        Err(e) => return Ok(report(templates, &e)),
    };
    let instances = match parse_rules(&read(rules)?, &ts, &kb) {
        Ok(i) => i,
        Err(e) => return Ok(report(rules, &e)),
    };
    let mut code = 0;
    for inst in &instances {
        match compile(inst, &kb) {
            Ok(rule) => println!("{}: rule `{}` ok ({} body atoms, DL-safe)", rules.display(), rule.id, rule.body.len()),
            Err(e) => code = code.max(report(rules, &e)),
        }
    }
    Ok(code)
}
