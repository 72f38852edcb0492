use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gebit_core::csv::{read_profile, write_curve, write_matrix, write_profile};
use gebit_core::likelihood::brute_force_profile_capped;
use gebit_core::{
    connected_components, dimension_of_p, empirical_dimension, extract_links, fit_dimension, maximize_profile,
    run_iterator, DimensionCurvePoint, DimensionFit, Gebit, IterationHistory, IteratorConfig, LikelihoodQuery,
    MatrixSummary, MaximizationResult, NoiseSpec, RecordPolicy, RelationalIterator, RelationalMatrix, RootPolicy,
    ShellProfile,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::census::{power_law_exponent, size_histogram, GebitTracker, Lifetime, PowerLaw};
use crate::config::{ExperimentConfig, Mode};
use crate::ExpeditionError;

type Result<T> = std::result::Result<T, ExpeditionError>;

/// Absolute log-probability gap tolerated between the maximizer and full
/// enumeration.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// Smallest gebit size entering the power-law estimate.
pub const POWER_LAW_MIN_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Evaluate sweep points one after another instead of on the thread pool.
    pub serial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub result: MaximizationResult,
    /// Maximizer minus enumeration.
    pub difference: f64,
    /// Whether the enumerated optimum lies inside the swept depth range; only
    /// then must the two agree.
    pub depth_in_range: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LargestGebit {
    pub size: usize,
    pub fit: Option<DimensionFit>,
}

/// One recorded step of an emerge run.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusRecord {
    pub step: usize,
    pub summary: MatrixSummary,
    pub links: usize,
    pub non_isolated: usize,
    /// Gebit sizes, largest first. Isolated nodes are not gebits.
    pub sizes: Vec<usize>,
    pub largest: Option<LargestGebit>,
    pub born: usize,
    pub persisted: usize,
    pub decayed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Iterate {
        history: IterationHistory,
    },
    Maximize {
        optimum: MaximizationResult,
        fit: Option<DimensionFit>,
        oracle: Option<OracleCheck>,
    },
    Fit {
        profile: ShellProfile,
        fit: DimensionFit,
    },
    Sweep {
        points: Vec<DimensionCurvePoint>,
    },
    Emerge {
        initial: MatrixSummary,
        census: Vec<CensusRecord>,
        lifetimes: Vec<Lifetime>,
        power_law: Option<PowerLaw>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub version: &'static str,
    /// Wall-clock time of the run. Not written to report files, which stay
    /// byte-identical across repeated runs.
    pub duration: Duration,
    pub outcome: Outcome,
}

fn iterator_config(config: &ExperimentConfig) -> IteratorConfig {
    IteratorConfig {
        nodes: config.nodes,
        alpha: config.alpha,
        steps: config.steps,
        start_scale: config.start_scale,
        sigma_floor_ratio: config.sigma_floor_ratio,
        seed: config.seed,
        record: RecordPolicy {
            every: config.record_every,
            keep_matrices: config.record_matrices,
            link_threshold: config.link_threshold,
        },
    }
}

fn noise_spec(config: &ExperimentConfig) -> NoiseSpec {
    NoiseSpec {
        background_sigma: config.background_sigma,
        rare_prob: config.rare_prob,
        rare_lo: config.rare_lo,
        rare_hi: config.rare_hi,
    }
}

fn fail<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> ExpeditionError {
    move |e| ExpeditionError::Runtime {
        stage,
        message: e.to_string(),
    }
}

fn maximize(config: &ExperimentConfig) -> Result<Outcome> {
    let query = LikelihoodQuery::new(config.n, config.p).map_err(fail("maximize"))?;
    let range = config.depth_range(config.n);
    let optimum = maximize_profile(&query, range).map_err(fail("maximize"))?;
    let fit = fit_dimension(&optimum.profile, &config.fit_options()).ok();
    let oracle = if config.n <= config.oracle_cap {
        let result = brute_force_profile_capped(&query, config.oracle_cap).map_err(fail("oracle"))?;
        let difference = optimum.log_prob - result.log_prob;
        let depth_in_range = range.depths().contains(&result.depth());
        if depth_in_range && difference.abs() > ORACLE_TOLERANCE {
            return Err(fail("oracle")(format!(
                "maximizer log-probability {} differs from enumeration {} by {difference:e}",
                optimum.log_prob, result.log_prob
            )));
        }
        Some(OracleCheck {
            result,
            difference,
            depth_in_range,
        })
    } else {
        None
    };
    Ok(Outcome::Maximize { optimum, fit, oracle })
}

fn fit(config: &ExperimentConfig) -> Result<Outcome> {
    let path = config.profile.as_ref().expect("validated config has a profile in fit mode");
    let input = |message: String| ExpeditionError::Input { stage: "fit", message };
    let file = fs::File::open(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let profile = read_profile(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let fit = fit_dimension(&profile, &config.fit_options()).map_err(fail("fit"))?;
    Ok(Outcome::Fit { profile, fit })
}

fn sweep(config: &ExperimentConfig, options: RunOptions) -> Result<Outcome> {
    let range = config.depth_range(config.n);
    let fit_options = config.fit_options();
    let point = |&p: &f64| dimension_of_p(config.n, p, range, &fit_options);
    let results: Vec<_> = if options.serial {
        config.p_grid.iter().map(point).collect()
    } else {
        config.p_grid.par_iter().map(point).collect()
    };
    let mut points = Vec::with_capacity(results.len());
    for (p, result) in config.p_grid.iter().zip(results) {
        points.push(result.map_err(|e| fail("sweep")(format!("p = {p}: {e}")))?);
    }
    points.sort_by(|a, b| a.p.total_cmp(&b.p));
    Ok(Outcome::Sweep { points })
}

fn census_of(
    step: usize,
    b: &RelationalMatrix,
    config: &ExperimentConfig,
    tracker: &mut GebitTracker,
) -> Result<CensusRecord> {
    let summary = MatrixSummary::of(b, config.link_threshold).map_err(fail("emerge/summary"))?;
    let graph = extract_links(b, config.threshold()).map_err(fail("emerge/links"))?;
    let gebits: Vec<Gebit> = connected_components(&graph).into_iter().filter(|g| g.len() > 1).collect();
    let sizes: Vec<usize> = gebits.iter().map(Gebit::len).collect();
    let non_isolated = graph.non_isolated();
    if sizes.iter().sum::<usize>() != non_isolated {
        return Err(fail("emerge/census")(format!(
            "step {step}: gebit sizes sum to {} but {non_isolated} nodes carry links",
            sizes.iter().sum::<usize>()
        )));
    }
    let largest = gebits.first().map(|g| {
        let policy = RootPolicy::Sampled {
            max_roots: config.root_samples,
            seed: config.seed,
        };
        LargestGebit {
            size: g.len(),
            fit: empirical_dimension(g, policy, &config.fit_options()).ok(),
        }
    });
    let transition = tracker.observe(step, &gebits);
    Ok(CensusRecord {
        step,
        summary,
        links: graph.edge_count(),
        non_isolated,
        sizes,
        largest,
        born: transition.born,
        persisted: transition.persisted,
        decayed: transition.decayed,
    })
}

fn emerge(config: &ExperimentConfig) -> Result<Outcome> {
    let iter_config = iterator_config(config);
    let mut driver = RelationalIterator::new(&iter_config, &noise_spec(config)).map_err(fail("emerge/init"))?;
    let initial = MatrixSummary::of(driver.matrix(), config.link_threshold).map_err(fail("emerge/init"))?;
    let mut tracker = GebitTracker::new(config.jaccard_threshold);
    let mut census = Vec::new();
    for step in 1..=config.steps {
        driver.advance().map_err(fail("emerge/iterate"))?;
        if iter_config.record.records(step, config.steps) {
            census.push(census_of(step, driver.matrix(), config, &mut tracker)?);
        }
    }
    let all_sizes: Vec<usize> = census.iter().flat_map(|r| r.sizes.iter().copied()).collect();
    Ok(Outcome::Emerge {
        initial,
        census,
        lifetimes: tracker.lifetimes(),
        power_law: power_law_exponent(&all_sizes, POWER_LAW_MIN_SIZE),
    })
}

pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let outcome = match config.mode {
        Mode::Iterate => Outcome::Iterate {
            history: run_iterator(&iterator_config(config), &noise_spec(config)).map_err(fail("iterate"))?,
        },
        Mode::Maximize => maximize(config)?,
        Mode::Fit => fit(config)?,
        Mode::Sweep => sweep(config, options)?,
        Mode::Emerge => emerge(config)?,
    };
    Ok(ExperimentReport {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION"),
        duration: start.elapsed(),
        outcome,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report values serialize")
}

fn matrix_json(b: &RelationalMatrix) -> Value {
    let upper: Vec<Value> = b.upper_entries().map(|(i, j, v)| json!([i, j, v])).collect();
    json!({ "n": b.n(), "upper": upper })
}

fn fit_json(fit: Option<&DimensionFit>) -> Value {
    fit.map_or(Value::Null, to_json)
}

fn results_json(outcome: &Outcome) -> Value {
    match outcome {
        Outcome::Iterate { history } => {
            let snapshots: Vec<Value> = history
                .snapshots
                .iter()
                .map(|s| {
                    let mut v = json!({ "step": s.step, "summary": to_json(&s.summary) });
                    if let Some(m) = &s.matrix {
                        v["matrix"] = matrix_json(m);
                    }
                    v
                })
                .collect();
            json!({ "snapshots": snapshots, "final_matrix": matrix_json(&history.final_matrix) })
        }
        Outcome::Maximize { optimum, fit, oracle } => {
            let mut v = json!({ "optimum": to_json(&optimum.record()), "fit": fit_json(fit.as_ref()) });
            v["oracle"] = match oracle {
                Some(check) => json!({
                    "result": to_json(&check.result.record()),
                    "difference": check.difference,
                    "depth_in_range": check.depth_in_range,
                }),
                None => Value::Null,
            };
            v
        }
        Outcome::Fit { profile, fit } => json!({ "D": profile.shells(), "L": profile.depth(), "fit": to_json(fit) }),
        Outcome::Sweep { points } => json!({ "curve": to_json(points) }),
        Outcome::Emerge {
            initial,
            census,
            lifetimes,
            power_law,
        } => {
            let records: Vec<Value> = census
                .iter()
                .map(|r| {
                    let histogram: BTreeMap<String, usize> =
                        size_histogram(r.sizes.iter().copied()).into_iter().map(|(s, c)| (s.to_string(), c)).collect();
                    json!({
                        "step": r.step,
                        "summary": to_json(&r.summary),
                        "links": r.links,
                        "non_isolated": r.non_isolated,
                        "gebits": r.sizes.len(),
                        "sizes": r.sizes,
                        "size_histogram": histogram,
                        "largest": r.largest.as_ref().map(|l| json!({ "size": l.size, "fit": fit_json(l.fit.as_ref()) })),
                        "born": r.born,
                        "persisted": r.persisted,
                        "decayed": r.decayed,
                    })
                })
                .collect();
            let spans: Vec<usize> = lifetimes.iter().filter(|l| !l.alive).map(Lifetime::span).collect();
            let lifetime_stats = json!({
                "tracked": lifetimes.len(),
                "decayed": spans.len(),
                "mean_span": if spans.is_empty() { Value::Null } else { json!(spans.iter().sum::<usize>() as f64 / spans.len() as f64) },
                "max_span": spans.iter().max(),
                "spans": lifetimes.iter().map(|l| json!({
                    "id": l.id, "first_step": l.first_step, "last_step": l.last_step, "alive": l.alive,
                })).collect::<Vec<_>>(),
            });
            json!({
                "initial": to_json(initial),
                "census": records,
                "lifetimes": lifetime_stats,
                "power_law": power_law.map(|p| json!({ "s_min": p.s_min, "exponent": p.exponent, "samples": p.samples })),
            })
        }
    }
}

/// The whole report as a JSON value with sorted keys.
pub fn report_json(report: &ExperimentReport) -> Value {
    let config: BTreeMap<&str, String> = report.config.pairs().into_iter().collect();
    json!({
        "config": config,
        "mode": report.config.mode.as_str(),
        "seed": report.config.seed,
        "version": report.version,
        "results": results_json(&report.outcome),
    })
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| ExpeditionError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn table(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut text = format!("{header}\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    text.into_bytes()
}

fn with<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_files(report: &ExperimentReport) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![("config.txt".to_string(), report.config.echo().into_bytes())];
    match &report.outcome {
        Outcome::Iterate { history } => {
            let rows = history.snapshots.iter().map(|s| {
                let m = &s.summary;
                format!("{},{},{},{},{},{}", s.step, m.frobenius, m.max_abs, m.sigma_max, m.sigma_min, m.links)
            });
            files.push((
                "history.csv".into(),
                table("step,frobenius,max_abs,sigma_max,sigma_min,links", rows),
            ));
            files.push(("final_matrix.csv".into(), with(|w| write_matrix(&history.final_matrix, w))));
            for s in &history.snapshots {
                if let Some(m) = &s.matrix {
                    files.push((format!("matrix_step{}.csv", s.step), with(|w| write_matrix(m, w))));
                }
            }
        }
        Outcome::Maximize { optimum, fit, oracle } => {
            let row = format!(
                "{},{},{},{},{},{}",
                optimum.n,
                optimum.p,
                optimum.depth(),
                optimum.log_prob,
                optimum.method.as_str(),
                opt(fit.map(|f| f.d))
            );
            files.push(("optimum.csv".into(), table("N,p,L,log_prob,method,d", [row])));
            files.push(("profile.csv".into(), with(|w| write_profile(&optimum.profile, w))));
            if let Some(check) = oracle {
                files.push(("oracle_profile.csv".into(), with(|w| write_profile(&check.result.profile, w))));
            }
        }
        Outcome::Fit { fit, .. } => {
            let row = format!("{},{},{},{},{}", fit.d, fit.log_amplitude, fit.residual, fit.points_used, fit.period);
            files.push(("fit.csv".into(), table("d,log_amplitude,residual,points_used,period", [row])));
        }
        Outcome::Sweep { points } => {
            files.push(("curve.csv".into(), with(|w| write_curve(points, w))));
        }
        Outcome::Emerge { census, lifetimes, .. } => {
            let rows = census.iter().map(|r| {
                let (size, d) = match &r.largest {
                    Some(l) => (l.size.to_string(), opt(l.fit.map(|f| f.d))),
                    None => (String::new(), String::new()),
                };
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    r.step,
                    r.links,
                    r.non_isolated,
                    r.sizes.len(),
                    size,
                    d,
                    r.born,
                    r.persisted,
                    r.decayed
                )
            });
            files.push((
                "census.csv".into(),
                table("step,links,non_isolated,gebits,largest,largest_d,born,persisted,decayed", rows),
            ));
            let hist = size_histogram(census.iter().flat_map(|r| r.sizes.iter().copied()));
            files.push((
                "sizes.csv".into(),
                table("size,count", hist.into_iter().map(|(s, c)| format!("{s},{c}"))),
            ));
            let rows = lifetimes
                .iter()
                .map(|l| format!("{},{},{},{}", l.id, l.first_step, l.last_step, l.alive));
            files.push(("lifetimes.csv".into(), table("id,first_step,last_step,alive", rows)));
        }
    }
    files
}

/// Writes the report into `dir` (created if needed) and returns the paths
/// written. JSON goes to `report.json`; CSV output is one table per file plus
/// the effective config as `config.txt`.
pub fn emit_report(report: &ExperimentReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| ExpeditionError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let files = match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&report_json(report)).expect("json values serialize");
            text.push('\n');
            vec![("report.json".to_string(), text.into_bytes())]
        }
        Format::Csv => csv_files(report),
    };
    files.iter().map(|(name, bytes)| write_file(dir, name, bytes)).collect()
}

/// One-line human summary for the terminal.
pub fn summary_line(report: &ExperimentReport) -> String {
    match &report.outcome {
        Outcome::Iterate { history } => {
            let last = history.snapshots.last().expect("the start is always recorded");
            format!(
                "iterate: {} steps, sigma in [{:.6}, {:.6}], {} links",
                last.step, last.summary.sigma_min, last.summary.sigma_max, last.summary.links
            )
        }
        Outcome::Maximize { optimum, fit, oracle } => {
            let mut line = format!("maximize: L = {}, log_prob = {}", optimum.depth(), optimum.log_prob);
            if let Some(f) = fit {
                line += &format!(", d = {:.4}", f.d);
            }
            if let Some(check) = oracle {
                line += &format!(", enumeration gap {:e}", check.difference);
            }
            line
        }
        Outcome::Fit { profile, fit } => format!("fit: L = {}, d = {:.4}", profile.depth(), fit.d),
        Outcome::Sweep { points } => {
            let ds: Vec<String> = points.iter().map(|p| format!("{:.3}", p.d)).collect();
            format!("sweep: {} points, d = [{}]", points.len(), ds.join(", "))
        }
        Outcome::Emerge { census, .. } => match census.last() {
            Some(r) => format!(
                "emerge: step {}, {} gebits, largest {}",
                r.step,
                r.sizes.len(),
                r.largest.as_ref().map_or(0, |l| l.size)
            ),
            None => "emerge: no recorded steps".to_string(),
        },
    }
}
