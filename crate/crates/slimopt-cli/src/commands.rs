//! The three subcommands: training runs, curve evaluation, and plotting.

use std::fs;
use std::path::{Path, PathBuf};

use slimopt::archspec::WidthConfig;
use slimopt::drivers::{
    curve_to_csv, eval_curve_for_widths, load_checkpoint, pareto_to_csv, save_checkpoint, train,
};
use slimopt::mobo::history_to_csv;

use crate::config::RunConfig;
use crate::svg::{render, Series};
use crate::{log_debug, log_info, CliError};

/// `train <config.json>`: runs the configured method and writes checkpoint,
/// history CSV, per-iteration JSONL, and Pareto CSV into the output
/// directory. Nothing is written until the run has finished; a write failure
/// removes this run's files and leaves a FAILED marker.
pub fn cmd_train(config_path: &Path) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let spec = config.build_spec()?;
    let driver_config = config.joslim_config();
    driver_config
        .validate(&spec)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dataset = config.build_dataset()?;

    log_info(&format!(
        "training {} on {} ({} iterations x {} steps, M = {})",
        config.method.name(),
        spec.name,
        config.full_iters,
        config.steps_per_iter,
        config.samples_per_iter
    ));

    let artifacts = train(config.method, &spec, &dataset, &driver_config)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    artifacts
        .verify(&spec, config.cost_objective)
        .map_err(|e| CliError::Runtime(format!("artifact invariants violated: {e}")))?;
    for log in &artifacts.iter_logs {
        log_debug(&format!(
            "iteration {}: full loss {:.4}, width loss {:.4}, searches {:.1}",
            log.iteration, log.mean_full_loss, log.mean_width_loss, log.mean_search_iters
        ));
    }

    fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", config.output_dir.display())))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<(), CliError> {
        let checkpoint = config.output_dir.join("checkpoint.ckpt");
        save_checkpoint(&checkpoint, &artifacts, &driver_config)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        written.push(checkpoint);

        let files = [
            ("history.csv", history_to_csv(&artifacts.history)),
            ("pareto.csv", pareto_to_csv(&artifacts)),
            ("iterations.jsonl", iter_jsonl(&artifacts)?),
        ];
        for (name, contents) in files {
            let path = config.output_dir.join(name);
            fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
            written.push(path);
        }

        if config.plot {
            let points: Vec<(f64, f64)> = artifacts
                .pareto
                .iter()
                .map(|&i| (artifacts.history[i].cost, artifacts.history[i].ce))
                .collect();
            let series = [Series {
                label: config.method.name().to_string(),
                points,
            }];
            let path = config.output_dir.join("pareto.svg");
            fs::write(&path, render(&series, "cost", "train loss"))
                .map_err(|e| CliError::Runtime(format!("pareto.svg: {e}")))?;
            written.push(path);
        }
        Ok(())
    })();

    if let Err(error) = result {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        let _ = fs::write(config.output_dir.join("FAILED"), error.to_string());
        return Err(error);
    }

    log_info(&format!(
        "run complete: {} steps, |H| = {}, front size {} -> {}",
        artifacts.steps_done,
        artifacts.history.len(),
        artifacts.pareto.len(),
        config.output_dir.display()
    ));
    Ok(())
}

fn iter_jsonl(artifacts: &slimopt::drivers::RunArtifacts) -> Result<String, CliError> {
    let mut out = String::new();
    for log in &artifacts.iter_logs {
        let line = serde_json::to_string(log).map_err(|e| CliError::Runtime(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// `eval <checkpoint> <config.json> [--grid N]`: rebuilds the spec and
/// dataset, loads the stored weights and Pareto set, writes `curve.csv`
/// beside the checkpoint, and prints the AUC.
pub fn cmd_eval(checkpoint_path: &Path, config_path: &Path, grid: usize) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let spec = config.build_spec()?;
    if grid < 2 {
        return Err(CliError::Config(format!("--grid must be at least 2, got {grid}")));
    }
    let (header, weights) = load_checkpoint(checkpoint_path, &spec)
        .map_err(|e| CliError::Incompatible(e.to_string()))?;
    log_debug(&format!(
        "checkpoint: {} via {}, {} steps",
        header.spec,
        header.method.name(),
        header.steps
    ));

    let run_dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let pareto_path = run_dir.join("pareto.csv");
    let pareto_text = fs::read_to_string(&pareto_path).map_err(|e| {
        CliError::Incompatible(format!("{}: {e} (need the run's pareto.csv)", pareto_path.display()))
    })?;
    let widths = parse_width_rows(&pareto_text, spec.width_dims())
        .map_err(|e| CliError::Incompatible(format!("{}: {e}", pareto_path.display())))?;

    let dataset = config.build_dataset()?;
    let curve = eval_curve_for_widths(
        &weights,
        &widths,
        &spec,
        &dataset,
        grid,
        config.cost_objective,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    let curve_path = run_dir.join("curve.csv");
    fs::write(&curve_path, curve_to_csv(&curve))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", curve_path.display())))?;
    println!("AUC {}", curve.estimate.auc);
    log_info(&format!(
        "evaluated {} widths on a {}-point grid -> {}",
        curve.points.len(),
        grid,
        curve_path.display()
    ));
    Ok(())
}

/// Pulls `a_1..a_d` vectors out of a pareto/curve CSV.
fn parse_width_rows(text: &str, dims: usize) -> Result<Vec<WidthConfig>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    let columns: Vec<&str> = header.split(',').collect();
    let first_width = columns
        .iter()
        .position(|c| *c == "a_1")
        .ok_or("no a_1 column")?;
    if columns.len() != first_width + dims {
        return Err(format!(
            "csv has {} width columns, spec has {dims}",
            columns.len() - first_width
        ));
    }
    let mut widths = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(format!("row {}: {} fields, expected {}", row + 2, fields.len(), columns.len()));
        }
        let a: Result<Vec<f64>, _> = fields[first_width..].iter().map(|f| f.parse()).collect();
        widths.push(WidthConfig(a.map_err(|e| format!("row {}: {e}", row + 2))?));
    }
    Ok(widths)
}

/// `plot <curve.csv>... --out <file.svg>`: one polyline per curve file.
pub fn cmd_plot(curves: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut series = Vec::new();
    for path in curves {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let points = parse_curve_points(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        series.push(Series { label, points });
    }
    let svg = render(&series, "cost", "top-1 error");
    fs::write(out, svg).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    log_info(&format!("wrote {}", out.display()));
    Ok(())
}

/// Reads (cost, error-like) pairs from a curve CSV: the `cost` column plus
/// the first of `val_error`, `error`, or `loss`.
fn parse_curve_points(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    let columns: Vec<&str> = header.split(',').collect();
    let x = columns.iter().position(|c| *c == "cost").ok_or("no cost column")?;
    let y = ["val_error", "error", "loss", "train_loss"]
        .iter()
        .find_map(|name| columns.iter().position(|c| c == name))
        .ok_or("no error or loss column")?;
    let mut points = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(format!("row {}: {} fields, expected {}", row + 2, fields.len(), columns.len()));
        }
        let parse = |i: usize| -> Result<f64, String> {
            fields[i].parse().map_err(|e| format!("row {}: {e}", row + 2))
        };
        points.push((parse(x)?, parse(y)?));
    }
    if points.is_empty() {
        return Err("no data rows".into());
    }
    Ok(points)
}
