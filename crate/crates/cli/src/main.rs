//! `e2i2`: analytic curves, Monte Carlo runs and geometry estimates from a
//! scenario file.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod plot;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use e2i2::correlation::{normalization, CorrelationCurve, CorrelationMap, Normalization, Variant, MAP_HEADER};
use e2i2::estimation::{estimate_diameter, estimate_separation, extract_center_vectors, Report};
use e2i2::montecarlo::{histogram_to_curve, run_trials_blocked, ConversionMethod, Experiment, RunResult};
use e2i2::scenario::ScenarioConfig;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "e2i2", version, about = "Multi-wavelength intensity interferometry toolkit")]
struct Cli {
    /// Scenario file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Monte Carlo seed (overrides the scenario).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Monte Carlo trials per baseline (overrides the scenario); `1e6` is accepted.
    #[arg(long, global = true, value_name = "COUNT", value_parser = parse_trials)]
    trials: Option<u64>,
    /// Correlation variant: single, no-e2i2, e2i2, delta or multi.
    #[arg(long, global = true, value_name = "NAME", value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Also write an SVG plot next to every curve.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write analytic correlation curves (and maps, if the scenario has a grid).
    Analytic,
    /// Simulate photon coincidences and write tallies and curves.
    Montecarlo,
    /// Estimate diameter, separation and center vectors from curve files.
    Estimate {
        /// Curve or map CSV files.
        #[arg(required = true)]
        curves: Vec<PathBuf>,
    },
    /// Check a scenario file and print its hash.
    Validate,
}

fn parse_trials(s: &str) -> std::result::Result<u64, String> {
    let n = match s.parse::<u64>() {
        Ok(n) => n,
        Err(_) => {
            let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
            if !(f.fract() == 0.0 && (0.0..=u64::MAX as f64).contains(&f)) {
                return Err(format!("`{s}` is not a whole number of trials"));
            }
            f as u64
        }
    };
    if n == 0 {
        return Err("must be at least 1".into());
    }
    Ok(n)
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: e2i2::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow!("--config <PATH> is required"))?;
    let cfg = ScenarioConfig::from_file(path)?;
    match &cli.command {
        Command::Validate => {
            println!("{}: ok ({} sources, hash {})", cfg.name, cfg.sources.len(), cfg.hash());
            Ok(())
        }
        Command::Analytic => analytic(cli, &cfg),
        Command::Montecarlo => montecarlo(cli, &cfg),
        Command::Estimate { curves } => estimate(cli, &cfg, curves),
    }
}

fn write(cli: &Cli, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let path = cli.out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn write_curve(cli: &Cli, name: &str, curve: &CorrelationCurve, header: Option<&str>) -> Result<()> {
    let mut text = header.map(|h| format!("{h}\n")).unwrap_or_default();
    text.push_str(&curve.to_csv());
    write(cli, &format!("{name}.csv"), &text)?;
    if cli.plot {
        write(cli, &format!("{name}.svg"), &plot::curve_svg(curve, name))?;
    }
    Ok(())
}

fn analytic(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let sources = cfg.sources()?;
    let ev = cfg.evaluator();
    let variants = match cli.variant {
        Some(v) => vec![v],
        None => cfg.variants()?,
    };
    let sweep = cfg.sweep();
    for v in variants {
        let curve = ev.curve(v, &sources, &sweep, cfg.analytic.scale)?;
        write_curve(cli, &format!("{}_{v}", cfg.name), &curve, None)?;
        if let Some(grid) = &cfg.grid {
            if v == Variant::Single {
                continue;
            }
            let map = ev.map(v, &sources, grid.half_width.value(), grid.samples)?;
            write(cli, &format!("{}_{v}_map.csv", cfg.name), &map.to_csv())?;
        }
    }
    Ok(())
}

fn run_method(cli: &Cli, cfg: &ScenarioConfig, exp: &Experiment, trials: u64, seed: u64) -> Result<(RunResult, CorrelationCurve)> {
    let run = run_trials_blocked(exp, trials, seed, cfg.montecarlo.block)?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let (acc_a, acc_b) = run.tally.acceptance();
    let (raw, corrected) = run.tally.coincidence_rates();
    println!(
        "method {}: seed {seed}, {trials} trials/baseline, acceptance A {acc_a:.6} B {acc_b:.6}, coincidences/trial {raw:.6e} (acceptance-corrected {corrected:.6e})",
        exp.conversion.method
    );
    let mc = histogram_to_curve(&run.tally)?;
    if !mc.empty_bins.is_empty() {
        eprintln!(
            "warning: {} baselines recorded no coincidences and were dropped",
            mc.empty_bins.len()
        );
    }
    let base = format!("{}_mc_{}", cfg.name, exp.conversion.method);
    write(cli, &format!("{base}_tally.csv"), &run.tally.to_csv())?;
    write_curve(cli, &base, &mc.curve, Some(&run.tally.metadata_line()))?;
    Ok((run, mc.curve))
}

fn montecarlo(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let trials = cli.trials.unwrap_or(cfg.montecarlo.trials);
    let seed = cli.seed.unwrap_or(cfg.montecarlo.seed);
    let mut exp = cfg.experiment()?;
    let configured = exp.conversion.method;
    match cli.variant {
        None | Some(Variant::Single) | Some(Variant::E2i2) | Some(Variant::Multi) => {
            if cli.variant.is_some_and(|v| v != Variant::Single) && configured == ConversionMethod::None {
                bail!("variant `{}` needs a conversion method in [conversion]", cli.variant.unwrap());
            }
            run_method(cli, cfg, &exp, trials, seed)?;
        }
        Some(Variant::NoE2i2) => {
            exp.conversion.method = ConversionMethod::None;
            run_method(cli, cfg, &exp, trials, seed)?;
        }
        Some(Variant::Delta) => {
            if configured == ConversionMethod::None {
                bail!("variant `delta` needs a conversion method in [conversion]");
            }
            let (_, converted) = run_method(cli, cfg, &exp, trials, seed)?;
            exp.conversion.method = ConversionMethod::None;
            let (_, plain) = run_method(cli, cfg, &exp, trials, seed)?;
            let delta = converted.difference(&plain, Variant::Delta)?;
            let meta = format!("# seed={seed} scenario={} variant=delta trials={trials} plateau=0", cfg.hash());
            write_curve(cli, &format!("{}_mc_delta", cfg.name), &delta, Some(&meta))?;
        }
    }
    Ok(())
}

enum Input {
    Curve(CorrelationCurve),
    Map(CorrelationMap),
}

/// `plateau=` from a `#` metadata line, if present.
fn metadata_plateau(text: &str) -> Option<f64> {
    text.lines()
        .filter(|l| l.starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .find_map(|kv| kv.strip_prefix("plateau=")?.parse().ok())
}

fn read_input(path: &Path, cfg: &ScenarioConfig) -> Result<Input> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().find(|l| !l.starts_with('#') && !l.trim().is_empty()).unwrap_or("");
    if header.trim() == MAP_HEADER {
        return Ok(Input::Map(CorrelationMap::from_csv(&text).with_context(|| path.display().to_string())?));
    }
    // the variant is needed for the configured plateau, so parse once without it
    let probe = CorrelationCurve::from_csv(&text, Normalization { plateau: 0.0, scale: 1.0 })
        .with_context(|| path.display().to_string())?;
    let norm = match metadata_plateau(&text) {
        Some(plateau) => Normalization { plateau, scale: 1.0 },
        None => normalization(probe.variant, &cfg.sources()?, cfg.analytic.scale),
    };
    Ok(Input::Curve(CorrelationCurve::from_csv(&text, norm)?))
}

fn estimate(cli: &Cli, cfg: &ScenarioConfig, files: &[PathBuf]) -> Result<()> {
    let mut curves = Vec::new();
    let mut maps = Vec::new();
    for f in files {
        match read_input(f, cfg)? {
            Input::Curve(c) => curves.push(c),
            Input::Map(m) => maps.push(m),
        }
    }
    let find = |v: Variant| curves.iter().find(|c| c.variant == v);
    let wavelengths = cfg.wavelengths()?;
    let mut report = Report::default();

    if let Some(c) = find(Variant::Single) {
        if wavelengths.len() != 1 {
            bail!("a `single` curve needs a one-source scenario");
        }
        let d = estimate_diameter(c, wavelengths[0])?;
        report.extend(d.report());
    }

    let delta = match (find(Variant::Delta), find(Variant::E2i2), find(Variant::NoE2i2)) {
        (Some(d), _, _) => Some(d.clone()),
        (None, Some(e), Some(n)) => Some(e.difference(n, Variant::Delta)?),
        _ => None,
    };
    if let Some(d) = &delta {
        let (l1, l2) = cfg.wavelength_pair()?;
        let s = estimate_separation(d, l1, l2, &cfg.separation_settings()?)?;
        report.extend(s.report());
    }

    if let Some(m) = maps.iter().find(|m| m.variant == Variant::Delta) {
        let out = extract_center_vectors(m, &wavelengths, &cfg.center_settings()?)?;
        for v in &out.vectors {
            let name = format!("center_vector_{}_{}", v.p, v.q);
            let unc = Some(out.resolution[0].hypot(out.resolution[1]));
            report.push(format!("{name}_x"), v.k[0], unc, "1/m");
            report.push(format!("{name}_y"), v.k[1], unc, "1/m");
            report.push(format!("{name}_sign_resolved"), if v.sign_resolved { 1.0 } else { 0.0 }, None, "");
        }
        for (p, q) in &out.unresolved_at_dc {
            eprintln!("warning: pair ({p},{q}) is unresolved at DC");
        }
        if !out.ambiguous.is_empty() {
            let list: Vec<String> = out.ambiguous.iter().map(|(p, q)| format!("({p},{q})")).collect();
            eprintln!("warning: ambiguous pairs: {}", list.join(" "));
        }
    } else if !maps.is_empty() {
        bail!("center vectors need a `delta` map; got {}", maps[0].variant);
    }

    if report.entries.is_empty() {
        let needed = if wavelengths.len() == 1 { "single" } else { "delta" };
        bail!("no usable input: this scenario needs a `{needed}` curve");
    }
    print!("{}", report.to_text());
    write(cli, &format!("{}_estimate.csv", cfg.name), &report.to_csv())?;
    Ok(())
}
