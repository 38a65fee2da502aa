use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::json;

use scalestream_core::pipeline::BaselineRun;
use scalestream_core::point_stream::{export_csv, read_stream_file, write_stream_file};
use scalestream_core::report::timeline_svg;
use scalestream_core::{
    partition, run_baseline, run_scalable, scan, Backend, Error, MetricsReport, OverlapMode, PointStream,
    ScalableRun, Timeline,
};

use crate::config::{self, RunConfig};
use crate::Command;

pub enum Failure {
    Config(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Scene(_) | Error::CutsTooShort { .. } | Error::NoCameraCandidates => {
                Failure::Config(vec![e.to_string()])
            }
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

pub fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Scan(c) => cmd_scan(&c.resolve().map_err(Failure::Config)?, &c.out_dir, c.csv),
        Command::Partition(c) => cmd_partition(&c.resolve().map_err(Failure::Config)?, &c.out_dir),
        Command::Run(c) => cmd_run(&c.resolve().map_err(Failure::Config)?, &c.out_dir),
        Command::Sweep {
            common,
            tick_durations,
            seeds,
        } => {
            let cfg = common
                .resolve_with(|c| {
                    if let Some(t) = tick_durations {
                        c.sweep.tick_durations = t;
                    }
                    if let Some(config::SeedList(s)) = seeds {
                        c.sweep.seeds = Some(s);
                    }
                })
                .map_err(Failure::Config)?;
            cmd_sweep(&cfg, &common.out_dir)
        }
        Command::Report { from, out_dir } => cmd_report(&from, &out_dir),
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn manifest(mut self, command: &str, cfg: Option<&RunConfig>, points: Option<usize>) -> anyhow::Result<()> {
        let mut outputs = self.written.clone();
        outputs.push("manifest.json".into());
        let value = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": cfg.map(RunConfig::hash),
            "points": points,
            "config": cfg,
            "outputs": outputs,
        });
        self.json("manifest.json", &value)
    }
}

fn acquire(cfg: &RunConfig) -> Outcome<PointStream> {
    if let Some(p) = &cfg.stream {
        return read_stream_file(p).map_err(|e| Failure::Runtime(anyhow::Error::new(e).context(format!("reading {}", p.display()))));
    }
    let scene = cfg.scene()?;
    let pose = cfg.pose(&scene, cfg.seed)?;
    Ok(scan(&scene, &pose, &cfg.scan)?)
}

fn cmd_scan(cfg: &RunConfig, out_dir: &Path, csv: bool) -> Outcome {
    let stream = acquire(cfg)?;
    let mut out = Outputs::new(out_dir)?;
    let path = out.path("stream.pst");
    let bytes = write_stream_file(&stream, &path).with_context(|| format!("writing {}", path.display()))?;
    if csv {
        out.text("stream.csv", &export_csv(&stream))?;
    }
    out.manifest("scan", Some(cfg), Some(stream.len()))?;
    println!(
        "scanned {} points over {} ticks ({bytes} bytes) -> {}",
        stream.len(),
        cfg.scan.ticks,
        path.display()
    );
    Ok(())
}

fn cmd_partition(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let stream = acquire(cfg)?;
    let parts = partition(&stream, &cfg.spec())?;
    let mut table = String::from("scale,lower,upper,offset,points\n");
    for p in &parts {
        let _ = writeln!(table, "{},{},{},{},{}", p.scale, p.lower, p.upper, p.offset, p.len());
    }
    let mut out = Outputs::new(out_dir)?;
    out.text("partitions.csv", &table)?;
    out.manifest("partition", Some(cfg), Some(stream.len()))?;
    print!("{table}");
    Ok(())
}

struct Executed {
    stream: PointStream,
    run: ScalableRun,
    baseline: BaselineRun,
    report: MetricsReport,
}

fn execute(cfg: &RunConfig) -> Outcome<Executed> {
    let stream = acquire(cfg)?;
    let spec = cfg.spec();
    let run = run_scalable(&stream, &spec, &cfg.predictor, &cfg.update, &cfg.timing)?;
    let baseline = run_baseline(&stream, spec.scale_count(), &cfg.predictor, &cfg.timing)?;
    let report = MetricsReport::build(&stream, &run, &baseline)?;
    Ok(Executed {
        stream,
        run,
        baseline,
        report,
    })
}

#[derive(Serialize, Deserialize)]
struct Timelines {
    scalable: Timeline,
    baseline: Timeline,
}

fn write_report(out: &mut Outputs, report: &MetricsReport, timelines: &Timelines) -> anyhow::Result<()> {
    out.json("metrics.json", report)?;
    out.json("timeline.json", timelines)?;
    out.text("scales.csv", &report.scales_csv())?;
    out.text("per_class.csv", &report.per_class_csv())?;
    out.text("miou.svg", &report.miou_svg())?;
    out.text("timeline.svg", &timeline_svg(&timelines.scalable))?;
    Ok(())
}

fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let ex = execute(cfg)?;
    let mut out = Outputs::new(out_dir)?;
    let timelines = Timelines {
        scalable: ex.run.timeline.clone(),
        baseline: ex.baseline.timeline.clone(),
    };
    write_report(&mut out, &ex.report, &timelines)?;
    out.text("cumulative.csv", &ex.run.cumulative.last().expect("at least one scale").to_csv())?;
    out.manifest("run", Some(cfg), Some(ex.stream.len()))?;
    let r = &ex.report;
    println!("points: {}", ex.stream.len());
    for s in &r.scales {
        println!(
            "scale {}: {} points, mIoU {:.4} (unrefined {:.4}), available at {:.4} s",
            s.scale, s.points, s.cumulative.miou, s.unrefined_miou, s.available_at
        );
    }
    println!("baseline mIoU {:.4}, cost of scalability {:.2} pp", r.baseline.miou, r.cost_of_scalability);
    println!(
        "post-acquisition latency {:.4} s (bounds {:.4}..{:.4}), baseline {:.4} s, speedup {:.1}%",
        r.latency.post_acquisition,
        r.latency.lower_bound,
        r.latency.upper_bound,
        r.latency.baseline_processing,
        r.latency.speedup * 100.0
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    seed: u64,
    tick_duration: f64,
    points: usize,
    final_miou: f64,
    unrefined_miou: f64,
    baseline_miou: f64,
    cost_of_scalability: f64,
    refinement_lift: f64,
    acquisition_end: f64,
    post_acquisition: f64,
    lower_bound: f64,
    upper_bound: f64,
    baseline_processing: f64,
    speedup: f64,
    first_prediction_fraction: f64,
    within_bounds: bool,
}

impl SweepRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.tick_duration,
            self.points,
            self.final_miou,
            self.unrefined_miou,
            self.baseline_miou,
            self.cost_of_scalability,
            self.refinement_lift,
            self.acquisition_end,
            self.post_acquisition,
            self.lower_bound,
            self.upper_bound,
            self.baseline_processing,
            self.speedup,
            self.first_prediction_fraction,
            self.within_bounds
        )
    }
}

const SWEEP_HEADER: &str = "seed,tick_duration,points,final_miou,unrefined_miou,baseline_miou,cost_of_scalability,refinement_lift,acquisition_end,post_acquisition,lower_bound,upper_bound,baseline_processing,speedup,first_prediction_fraction,within_bounds";

/// Absolute slack, in seconds, for the bound and monotonicity checks.
const SWEEP_SLACK: f64 = 1e-9;

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let mut rows = Vec::new();
    let mut non_increasing = true;
    for seed in cfg.sweep_seeds() {
        let mut ticks = cfg.sweep.tick_durations.clone();
        ticks.sort_by(f64::total_cmp);
        let mut previous = f64::INFINITY;
        for tick in ticks {
            let mut c = cfg.seeded(seed);
            c.timing.tick_duration = tick;
            let ex = execute(&c)?;
            let r = &ex.report;
            let l = &r.latency;
            let last = r.scales.last().expect("at least one scale");
            non_increasing &= l.post_acquisition <= previous + SWEEP_SLACK;
            previous = l.post_acquisition;
            rows.push(SweepRow {
                seed,
                tick_duration: tick,
                points: ex.stream.len(),
                final_miou: last.cumulative.miou,
                unrefined_miou: last.unrefined_miou,
                baseline_miou: r.baseline.miou,
                cost_of_scalability: r.cost_of_scalability,
                refinement_lift: r.refinement_lift,
                acquisition_end: l.acquisition_end,
                post_acquisition: l.post_acquisition,
                lower_bound: l.lower_bound,
                upper_bound: l.upper_bound,
                baseline_processing: l.baseline_processing,
                speedup: l.speedup,
                first_prediction_fraction: l.first_prediction_fraction,
                within_bounds: l.lower_bound <= l.post_acquisition + SWEEP_SLACK
                    && l.post_acquisition <= l.upper_bound + SWEEP_SLACK,
            });
        }
    }
    let mut table = String::from(SWEEP_HEADER);
    table.push('\n');
    for r in &rows {
        table.push_str(&r.csv());
        table.push('\n');
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let all_within = rows.iter().all(|r| r.within_bounds);
    let summary = json!({
        "rows_count": rows.len(),
        "seeds": cfg.sweep_seeds(),
        "all_within_bounds": all_within,
        "post_acquisition_non_increasing": non_increasing,
        "mean_speedup": mean(|r| r.speedup),
        "mean_first_prediction_fraction": mean(|r| r.first_prediction_fraction),
        "mean_final_miou": mean(|r| r.final_miou),
        "mean_cost_of_scalability": mean(|r| r.cost_of_scalability),
        "rows": rows,
    });
    let mut out = Outputs::new(out_dir)?;
    out.text("sweep.csv", &table)?;
    out.json("sweep.json", &summary)?;
    out.manifest("sweep", Some(cfg), None)?;
    println!(
        "{} settings: mean speedup {:.1}%, post-acquisition latency {} in acquisition time",
        rows.len(),
        mean(|r| r.speedup) * 100.0,
        if non_increasing { "non-increasing" } else { "not monotone" }
    );
    let full_overlap = cfg.timing.overlap == OverlapMode::FullOverlap;
    let simulated = cfg.timing.backend == Backend::Sim;
    if simulated && !all_within {
        return Err(anyhow::anyhow!("post-acquisition latency left its bounds; see sweep.csv").into());
    }
    if simulated && full_overlap && !non_increasing {
        return Err(anyhow::anyhow!("full-overlap latency increased with acquisition time; see sweep.csv").into());
    }
    if !all_within {
        eprintln!("warning: measured latency left its bounds in some rows");
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(vec![format!("{}: {e}", path.display())]))
}

fn cmd_report(from: &Path, out_dir: &Path) -> Outcome {
    let report: MetricsReport = read_json(&from.join("metrics.json"))?;
    let timelines: Timelines = read_json(&from.join("timeline.json"))?;
    let mut out = Outputs::new(out_dir)?;
    write_report(&mut out, &report, &timelines)?;
    out.manifest("report", None, None)?;
    println!("report for {} scales written to {}", report.scales.len(), out_dir.display());
    Ok(())
}
