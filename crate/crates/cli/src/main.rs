use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use polity_core::analyzer::{render_text, Suite};
use polity_core::claims::{verify_claim, Claim, ClaimBag, IssuerKeypair, KeyRing, TrustConfig, TrustEntry, TrustList};
use polity_core::clock::{timestamp, Clock, FixedClock, SystemClock};
use polity_core::{decide_policy, CompiledBundle, Dec, EntityId, ProofEnvelope, Value, VerifyOptions};
use polity_gateway::config::{load_bundle, load_claims, load_trust, GatewayConfig};
use polity_gateway::{CallError, CallRequest, DecisionLog, Gateway, GuardSpec, HttpUpstream, StubUpstream, Upstream};

#[derive(Parser)]
#[command(name = "polity", version, about = "Proof-carrying attribute-based access control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and typecheck policy files as one bundle.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Decide a policy for concrete entities.
    Eval(EvalArgs),
    /// Check a proof envelope against local policies and trust.
    Verify(VerifyArgs),
    /// Run an analysis suite; exits nonzero if any check misses its expectation.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Issuer keys and signed claims.
    #[command(subcommand)]
    Claim(ClaimCommand),
    /// Run the gateway as an HTTP sidecar.
    Serve { config: PathBuf },
    /// One guarded call, decided locally.
    Call(CallArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long)]
    policy: String,
    /// Comma-separated entity handles or ids.
    #[arg(long, value_delimiter = ',')]
    args: Vec<String>,
    #[arg(long)]
    claims: Option<PathBuf>,
    #[arg(long)]
    trust: Option<PathBuf>,
    /// Evaluation instant (RFC 3339, milliseconds); defaults to now.
    #[arg(long)]
    at: Option<String>,
    /// Write the proof envelope here when the policy holds.
    #[arg(long)]
    envelope: Option<PathBuf>,
    #[arg(long, default_value = "urn:polity:cli")]
    producer: String,
}

#[derive(Args)]
struct VerifyArgs {
    envelope: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    policies: Vec<PathBuf>,
    #[arg(long)]
    trust: PathBuf,
    #[arg(long)]
    at: Option<String>,
    #[arg(long, default_value_t = 300)]
    max_skew_secs: i64,
    /// `Kind.attribute` pairs that must be claim-backed.
    #[arg(long = "require")]
    required: Vec<String>,
}

#[derive(Subcommand)]
enum ClaimCommand {
    /// Generate an issuer key file.
    Keygen {
        #[arg(long)]
        issuer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sign a claim; the value defaults to the entity's attribute in the bundle.
    Issue {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        policies: Vec<PathBuf>,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        property: String,
        /// Tagged value JSON, e.g. {"tag":"nat","payload":10}.
        #[arg(long)]
        value: Option<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long, default_value_t = 3600)]
        validity_secs: i64,
    },
    /// Check signature, trust and window of every claim in a file.
    Verify {
        claims: PathBuf,
        #[arg(long)]
        trust: PathBuf,
        #[arg(long)]
        at: Option<String>,
    },
    /// Write a trust file trusting key files' issuers for properties.
    Trust {
        #[arg(long)]
        owner: String,
        #[arg(long = "key", required = true)]
        keys: Vec<PathBuf>,
        #[arg(long = "property", default_value = "*")]
        properties: Vec<String>,
    },
}

#[derive(Args)]
struct CallArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long)]
    guard: PathBuf,
    #[arg(long)]
    context: Option<String>,
    #[arg(long)]
    sender: Option<String>,
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    payload: Option<String>,
    #[arg(long)]
    service: Option<String>,
    /// Further `role=entity` bindings.
    #[arg(long = "role")]
    roles: Vec<String>,
    #[arg(long)]
    trust: Option<PathBuf>,
    #[arg(long)]
    claims: Vec<PathBuf>,
    /// Video service base URL; without it the bundle's `Item` entities answer.
    #[arg(long)]
    upstream: Option<String>,
    /// Append the decision to this log instead of keeping it in memory.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    at: Option<String>,
}

type CliResult = Result<ExitCode, String>;

/// `println!` that exits quietly once stdout is closed, as when piped into
/// `head`.
macro_rules! out {
    ($($arg:tt)*) => {
        if writeln!(std::io::stdout().lock(), $($arg)*).is_err() {
            std::process::exit(141);
        }
    };
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { files } => check(&files),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => verify(a),
        Command::Analyze { files, suite, format } => analyze(&files, &suite, format),
        Command::Claim(c) => claim(c),
        Command::Serve { config } => serve(&config),
        Command::Call(a) => call(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn bundle(files: &[PathBuf]) -> Result<CompiledBundle, String> {
    load_bundle(files).map_err(|e| e.to_string())
}

fn instant(at: Option<&str>) -> Result<DateTime<Utc>, String> {
    match at {
        Some(s) => timestamp::parse(s),
        None => Ok(SystemClock::new().now()),
    }
}

fn entity(b: &CompiledBundle, name: &str) -> Result<EntityId, String> {
    b.resolve_entity(name).ok_or_else(|| format!("unknown entity `{name}`"))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn check(files: &[PathBuf]) -> CliResult {
    match polity_core::compile_paths(files) {
        Ok(b) => {
            out!("ok: {} policies, {} entities", b.policies.len(), b.store.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(errs) => {
            for e in &errs {
                eprintln!("{e}");
            }
            eprintln!("{} error(s)", errs.len());
            Ok(ExitCode::FAILURE)
        }
    }
}

fn claim_bag(claims: &[PathBuf], trust: Option<&Path>, at: DateTime<Utc>) -> Result<ClaimBag, String> {
    let mut all = Vec::new();
    for p in claims {
        all.extend(load_claims(p).map_err(|e| e.to_string())?);
    }
    let trust = match trust {
        Some(p) => load_trust(p).map_err(|e| e.to_string())?,
        None => TrustConfig { trust: TrustList::new("urn:polity:cli", []).expect("empty"), keys: KeyRing::new() },
    };
    Ok(ClaimBag::new(all, &trust.trust, &trust.keys, at))
}

fn eval(a: EvalArgs) -> CliResult {
    let b = bundle(&a.files)?;
    let pol = b.policy(&a.policy).ok_or_else(|| format!("unknown policy `{}`", a.policy))?;
    let args = a.args.iter().map(|n| entity(&b, n)).collect::<Result<Vec<_>, _>>()?;
    let at = instant(a.at.as_deref())?;
    let bag = claim_bag(a.claims.as_slice(), a.trust.as_deref(), at)?;
    let d = decide_policy(pol, &args, &b.store, &bag).map_err(|e| e.to_string())?;
    match &d.dec {
        Dec::Yes(p) => {
            if let Some(out) = &a.envelope {
                let env = ProofEnvelope::from_decision(&d, args, &bag, at, a.producer.clone()).map_err(|e| e.to_string())?;
                std::fs::write(out, env.to_bytes()).map_err(|e| format!("{}: {e}", out.display()))?;
            }
            out!("YES {} rule {}", d.policy, d.rule.as_deref().unwrap_or("?"));
            out!("{}", pretty(p));
            Ok(ExitCode::SUCCESS)
        }
        Dec::No(r) => {
            out!("NO {}", d.policy);
            out!("{}", pretty(r));
            Ok(ExitCode::FAILURE)
        }
    }
}

fn verify(a: VerifyArgs) -> CliResult {
    let b = bundle(&a.policies)?;
    let trust = load_trust(&a.trust).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&a.envelope).map_err(|e| format!("{}: {e}", a.envelope.display()))?;
    let opts = VerifyOptions { max_skew: Duration::seconds(a.max_skew_secs), required_claims: a.required };
    let at = instant(a.at.as_deref())?;
    let report = match ProofEnvelope::from_bytes(&bytes) {
        Ok(env) => match b.policy(&env.policy) {
            Some(pol) => polity_core::verify(pol, &env, &trust, at, &opts),
            None => return Err(format!("no local policy `{}`", env.policy)),
        },
        Err(e) => polity_core::VerifyReport::rejected("", polity_core::FailureReason::Malformed(e.to_string())),
    };
    out!("{}", pretty(&report));
    Ok(if report.accepted() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn analyze(files: &[PathBuf], suite: &Path, format: Format) -> CliResult {
    let b = bundle(files)?;
    let suite: Suite = toml::from_str(&read(suite)?).map_err(|e| format!("{}: {e}", suite.display()))?;
    let outcomes = suite.run(&b);
    match format {
        Format::Text => print!("{}", render_text(&outcomes)),
        Format::Json => out!("{}", pretty(&outcomes)),
    }
    Ok(if outcomes.iter().all(|o| o.passed()) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn claim(c: ClaimCommand) -> CliResult {
    match c {
        ClaimCommand::Keygen { issuer, out } => {
            let kp = IssuerKeypair::generate(issuer);
            std::fs::write(&out, kp.to_json()).map_err(|e| format!("{}: {e}", out.display()))?;
            out!("{}", kp.public_key_b64());
        }
        ClaimCommand::Issue { key, policies, subject, property, value, from, validity_secs } => {
            let kp = IssuerKeypair::from_json(&read(&key)?).map_err(|e| e.to_string())?;
            let b = bundle(&policies)?;
            let id = b.resolve_entity(&subject).unwrap_or_else(|| EntityId::new(subject.clone()));
            let value: Value = match value {
                Some(v) => serde_json::from_str(&v).map_err(|e| format!("--value: {e}"))?,
                None => b
                    .store
                    .entity(&id)
                    .and_then(|e| e.attributes.get(&property))
                    .cloned()
                    .ok_or_else(|| format!("`{subject}` has no attribute `{property}`; pass --value"))?,
            };
            let start = instant(from.as_deref())?;
            let clock = FixedClock::new(start);
            let claim = kp.issue(id, property, value, Duration::seconds(validity_secs), &clock).map_err(|e| e.to_string())?;
            out!("{}", pretty(&claim));
        }
        ClaimCommand::Verify { claims, trust, at } => {
            let claims: Vec<Claim> = load_claims(&claims).map_err(|e| e.to_string())?;
            let trust = load_trust(&trust).map_err(|e| e.to_string())?;
            let at = instant(at.as_deref())?;
            let mut all_ok = true;
            for c in &claims {
                let status = verify_claim(c, &trust.trust, &trust.keys, at);
                all_ok &= status.is_trusted();
                out!("{} {}.{} {}", c.content_hash(), c.subject, c.property, serde_json::to_string(&status).expect("status"));
            }
            return Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        ClaimCommand::Trust { owner, keys, properties } => {
            let mut ring = KeyRing::new();
            let mut entries = Vec::new();
            for k in &keys {
                let kp = IssuerKeypair::from_json(&read(k)?).map_err(|e| format!("{}: {e}", k.display()))?;
                ring = ring.with(&kp);
                entries.extend(properties.iter().map(|p| TrustEntry { issuer: kp.issuer.clone(), property: p.clone() }));
            }
            let trust = TrustList::new(owner, entries).map_err(|e| e.to_string())?;
            out!("{}", TrustConfig { trust, keys: ring }.to_json());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(config: &Path) -> CliResult {
    let cfg = GatewayConfig::load(config).map_err(|e| e.to_string())?;
    let built = cfg.build(Arc::new(SystemClock::new())).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen).await.map_err(|e| format!("{}: {e}", cfg.listen))?;
        let mut app = polity_gateway::server::router(Arc::clone(&built.gateway));
        if let Some(cs) = built.claim_server {
            app = app.merge(polity_gateway::claims_http::claim_router(cs));
        }
        tracing::info!(addr = %cfg.listen, "gateway listening");
        polity_gateway::server::serve_until(listener, app, built.gateway, polity_gateway::server::shutdown_signal())
            .await
            .map_err(|e| e.to_string())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn call(a: CallArgs) -> CliResult {
    let b = Arc::new(bundle(&a.files)?);
    let guard = GuardSpec::from_json(&read(&a.guard)?, &b).map_err(|e| e.to_string())?;
    let mut entities = BTreeMap::new();
    let named = [("context", &a.context), ("sender", &a.sender), ("channel", &a.channel), ("payload", &a.payload), ("service", &a.service)];
    for (role, v) in named {
        if let Some(v) = v {
            entities.insert(role.to_owned(), v.clone());
        }
    }
    for kv in &a.roles {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--role expects role=entity, got `{kv}`"))?;
        entities.insert(k.to_owned(), v.to_owned());
    }
    let trust = match &a.trust {
        Some(p) => load_trust(p).map_err(|e| e.to_string())?,
        None => TrustConfig { trust: TrustList::new("urn:polity:cli", []).expect("empty"), keys: KeyRing::new() },
    };
    let mut claims = Vec::new();
    for p in &a.claims {
        claims.extend(load_claims(p).map_err(|e| e.to_string())?);
    }
    let upstream: Arc<dyn Upstream> = match &a.upstream {
        Some(url) => Arc::new(HttpUpstream::new(url, "videoName", StdDuration::from_secs(10))),
        None => Arc::new(StubUpstream::from_store("videoName", &b.store, guard.response_kind())),
    };
    let log = Arc::new(match &a.log {
        Some(p) => DecisionLog::open(p).map_err(|e| e.to_string())?,
        None => DecisionLog::in_memory(),
    });
    let clock: Arc<dyn Clock> = Arc::new(FixedClock::new(instant(a.at.as_deref())?));
    let gw = Gateway::new(b, guard, trust, upstream, clock, log).with_claims(claims);
    let report = gw.handle(&CallRequest::local(entities));
    if let Some(r) = &report.record {
        out!("{}", pretty(r));
    }
    Ok(match report.result {
        Ok(_) => ExitCode::SUCCESS,
        Err(CallError::Denied(d)) => {
            eprintln!("denied at `{}`: {}", d.slot(), d.reason());
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    })
}
