use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use drift_core::corpus_io::{load_probe_set, load_run, read_loss_log, RunManifest, FINAL_LAYER};
use drift_core::correlation::{
    assemble_feature_matrix, build_heatmap, emit_heatmap, read_named_table,
};
use drift_core::geometry::geometry_deltas;
use drift_core::improvement::{improvement_table, write_improvement_table};
use drift_core::loss_dynamics::{loss_features, DEFAULT_WINDOW};
use drift_core::pipeline::{run_pipeline, summarize_bundle, DomainEntry, PipelineConfig};
use drift_core::repr_similarity::{layer_profile, similarity_features, SimilarityMetric};
use drift_core::scarce::{read_outcomes, run_scarce_protocol, write_outcomes, ProbeConfig};
use drift_core::synth::{constructed_study, gen_synthetic_domain, null_study, write_study, SynthSpec};

#[derive(Parser)]
#[command(name = "drift", version, about = "Embedding-drift diagnostics for fine-tuned encoders")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Seed for synthetic generation and clustering.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Constructed,
    Null,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic domain, or a whole study with its pipeline config.
    Synth {
        /// SynthSpec JSON; defaults are used for omitted fields.
        #[arg(long, conflicts_with = "study")]
        spec: Option<PathBuf>,
        #[arg(long)]
        study: Option<StudyKind>,
        #[arg(long, default_value_t = 9)]
        domains: usize,
    },
    /// Layer-wise similarity profile of base vs fine-tuned embeddings.
    Similarity {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "cka")]
        metric: String,
        /// Where to write the features JSON (default: next to the profile).
        #[arg(long)]
        features_out: Option<PathBuf>,
        #[arg(long)]
        include_layer0: bool,
    },
    /// Isotropy and clustering geometry of both models at one layer.
    Geometry {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = FINAL_LAYER)]
        layer: usize,
    },
    /// Scarce-label probes on base and fine-tuned embeddings.
    Classify {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        probe_test: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Improvement table (raw delta, ERR, logit delta) from probe outcomes.
    Improve {
        #[arg(long)]
        outcomes: PathBuf,
    },
    /// Loss-curve features and power-law fit.
    Loss {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
    /// Feature/target correlation heatmap across domains.
    Correlate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Run a whole study from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Markdown summary of a pipeline bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

fn required_out(out: &Option<PathBuf>) -> Result<&Path> {
    match out {
        Some(p) => Ok(p),
        None => bail!("--out is required for this subcommand"),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn synth(cli: &Cli, spec: &Option<PathBuf>, study: Option<StudyKind>, domains: usize) -> Result<()> {
    let out = required_out(&cli.out)?;
    if let Some(kind) = study {
        let seed = cli.seed.unwrap_or(0);
        let specs = match kind {
            StudyKind::Constructed => constructed_study(domains, seed),
            StudyKind::Null => null_study(domains, seed),
        };
        let manifests = write_study(&specs, out)?;
        let entries = manifests
            .iter()
            .map(|m| DomainEntry {
                run: m.strip_prefix(out).unwrap_or(m).to_path_buf(),
                probe_test: None,
            })
            .collect();
        let mut config = PipelineConfig::new(entries);
        config.seed = seed;
        let pool = specs.iter().map(|s| s.n_samples).min().unwrap_or(0);
        config.probe.subset_sizes.retain(|&size| size <= pool);
        if config.probe.subset_sizes.is_empty() {
            config.probe.subset_sizes.push(pool / 2);
        }
        config.write(out.join("pipeline.json"))?;
        println!("{}", out.join("pipeline.json").display());
        return Ok(());
    }
    let mut spec: SynthSpec = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    gen_synthetic_domain(&spec, out)?;
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn similarity(
    cli: &Cli,
    run: &Path,
    metric: &str,
    features_out: &Option<PathBuf>,
    include_layer0: bool,
) -> Result<()> {
    let out = required_out(&cli.out)?;
    let metric: SimilarityMetric = metric.parse()?;
    let domain = RunManifest::read(run)?.domain_name;
    let set = load_probe_set(run)?;
    let profile = layer_profile(&set.base, &set.ft, metric)?;
    let mut csv = String::from("layer,score,change\n");
    for (layer, (s, c)) in profile.scores.iter().zip(&profile.change).enumerate() {
        csv.push_str(&format!("{layer},{s},{c}\n"));
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    let features = similarity_features(&profile, include_layer0)?;
    let features_path = features_out
        .clone()
        .unwrap_or_else(|| out.with_extension("features.json"));
    write_json(
        &features_path,
        &serde_json::json!({
            "domain": domain,
            "metric": metric.to_string(),
            "profile": profile,
            "features": features,
        }),
    )
}

fn geometry(cli: &Cli, run: &Path, layer: usize) -> Result<()> {
    let out = required_out(&cli.out)?;
    if layer > FINAL_LAYER {
        bail!("layer {layer} out of range 0..={FINAL_LAYER}");
    }
    let domain = RunManifest::read(run)?.domain_name;
    let set = load_probe_set(run)?;
    let report = geometry_deltas(
        set.base.layer(layer),
        set.ft.layer(layer),
        set.labels.as_ref(),
        cli.seed.unwrap_or(0),
    )?;
    write_json(
        out,
        &serde_json::json!({ "domain": domain, "layer": layer, "report": report }),
    )
}

fn classify(cli: &Cli, run: &Path, probe_test: &Option<PathBuf>, config: &Option<PathBuf>) -> Result<bool> {
    let out = required_out(&cli.out)?;
    let config: ProbeConfig = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ProbeConfig::default(),
    };
    let run = load_run(run)?;
    let test_path = probe_test
        .clone()
        .or_else(|| run.probe_test_path())
        .context("no probe-test set given and the run manifest names none")?;
    let test = load_probe_set(&test_path)?;
    let output = run_scarce_protocol(run.domain(), &run.eval, &test, &config, cli.jobs)?;
    write_outcomes(&output.outcomes, out)?;
    if output.unlabeled {
        log::warn!("{}: unlabeled, no outcomes produced", run.domain());
    }
    Ok(!output.unlabeled)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Synth {
            spec,
            study,
            domains,
        } => synth(cli, spec, *study, *domains)?,
        Command::Similarity {
            run,
            metric,
            features_out,
            include_layer0,
        } => similarity(cli, run, metric, features_out, *include_layer0)?,
        Command::Geometry { run, layer } => geometry(cli, run, *layer)?,
        Command::Classify {
            run,
            probe_test,
            config,
        } => {
            if !classify(cli, run, probe_test, config)? {
                return Ok(2);
            }
        }
        Command::Improve { outcomes } => {
            let out = required_out(&cli.out)?;
            let table = improvement_table(&read_outcomes(outcomes)?);
            write_improvement_table(&table, out)?;
        }
        Command::Loss { log, window } => {
            let out = required_out(&cli.out)?;
            let features = loss_features(&read_loss_log(log)?, *window)?;
            write_json(out, &features)?;
        }
        Command::Correlate { features, targets } => {
            let out = required_out(&cli.out)?;
            let f = assemble_feature_matrix(&read_named_table(features)?)?;
            let t = assemble_feature_matrix(&read_named_table(targets)?)?;
            for path in emit_heatmap(&build_heatmap(&f, &t), out, None)? {
                println!("{}", path.display());
            }
        }
        Command::Pipeline { config } => {
            let out = required_out(&cli.out)?;
            let report = run_pipeline(config, out, cli.jobs)?;
            println!("{:?}", report.status);
            return Ok(report.status.exit_code() as u8);
        }
        Command::Report { bundle, top } => {
            let md = summarize_bundle(bundle, *top)?;
            match &cli.out {
                Some(path) => fs::write(path, md).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{md}"),
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
