//! Aggregated run metrics and their tabular and SVG renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evaluation::{cost_of_scalability, coverage_curve, miou, MiouResult};
use crate::pipeline::{latency_metrics, BaselineRun, EventKind, LatencyMetrics, ScalableRun, Timeline};
use crate::point_stream::PointStream;
use crate::scanner::ViewFrame;

pub const COVERAGE_GRID: usize = 16;
pub const SCALES_CSV_HEADER: &str = "scale,cut,points,cumulative_miou,local_miou,unrefined_miou,available_at";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleMetrics {
    pub scale: usize,
    pub cut: u32,
    /// Points in the cumulative output.
    pub points: usize,
    pub cumulative: MiouResult,
    /// mIoU over the points that originate from this scale, after refinement.
    pub local_miou: Option<f64>,
    pub unrefined_miou: f64,
    pub available_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub t: i64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub scales: Vec<ScaleMetrics>,
    pub baseline: MiouResult,
    /// Baseline minus final scalable mIoU, percentage points.
    pub cost_of_scalability: f64,
    /// Final refined minus final unrefined mIoU, percentage points.
    pub refinement_lift: f64,
    pub latency: LatencyMetrics,
    pub coverage: Vec<CoveragePoint>,
}

impl MetricsReport {
    pub fn build(stream: &PointStream, run: &ScalableRun, baseline: &BaselineRun) -> Result<Self> {
        let mut scales = Vec::with_capacity(run.cumulative.len());
        for (i, (cum, unref)) in run.cumulative.iter().zip(&run.unrefined).enumerate() {
            let local = cum.from_scale(i + 1);
            scales.push(ScaleMetrics {
                scale: i + 1,
                cut: run.partitions[i].upper,
                points: cum.len(),
                cumulative: miou(cum)?,
                local_miou: if local.is_empty() { None } else { Some(miou(&local)?.miou) },
                unrefined_miou: miou(unref)?.miou,
                available_at: run
                    .timeline
                    .instant(EventKind::CumulativeAvailable, i + 1)
                    .unwrap_or(f64::NAN),
            });
        }
        let baseline_miou = miou(&baseline.output)?;
        let last = scales.last().ok_or(crate::error::Error::EmptyOutput)?;
        let coverage = match ViewFrame::from_stream(stream) {
            Some(view) => {
                let ts: Vec<i64> = run.partitions.iter().map(|p| i64::from(p.upper)).collect();
                coverage_curve(stream, &view, &ts, COVERAGE_GRID)
                    .into_iter()
                    .zip(ts)
                    .map(|(coverage, t)| CoveragePoint { t, coverage })
                    .collect()
            }
            None => Vec::new(),
        };
        Ok(Self {
            class_names: stream.labels().names().to_vec(),
            cost_of_scalability: cost_of_scalability(baseline_miou.miou, last.cumulative.miou),
            refinement_lift: (last.cumulative.miou - last.unrefined_miou) * 100.0,
            latency: latency_metrics(&run.timeline, &baseline.timeline)?,
            baseline: baseline_miou,
            coverage,
            scales,
        })
    }

    pub fn scales_csv(&self) -> String {
        let mut out = String::from(SCALES_CSV_HEADER);
        out.push('\n');
        for s in &self.scales {
            let local = s.local_miou.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.scale, s.cut, s.points, s.cumulative.miou, local, s.unrefined_miou, s.available_at
            );
        }
        out
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("scale,class,iou\n");
        for s in &self.scales {
            for (c, iou) in s.cumulative.per_class.iter().enumerate() {
                if let Some(v) = iou {
                    let _ = writeln!(out, "{},{},{v}", s.scale, self.class_names[c]);
                }
            }
        }
        for (c, iou) in self.baseline.per_class.iter().enumerate() {
            if let Some(v) = iou {
                let _ = writeln!(out, "baseline,{},{v}", self.class_names[c]);
            }
        }
        out
    }

    /// Line chart of cumulative and unrefined mIoU per scale, with the
    /// baseline as a horizontal reference.
    pub fn miou_svg(&self) -> String {
        let (w, h, m) = (480.0, 300.0, 40.0);
        let k = self.scales.len().max(1);
        let x = |i: usize| m + (w - 2.0 * m) * if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
        let y = |v: f64| h - m - (h - 2.0 * m) * v.clamp(0.0, 1.0);
        let poly = |vals: Vec<f64>| {
            vals.iter()
                .enumerate()
                .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut svg = svg_open(w, h);
        axes(&mut svg, w, h, m);
        let by = y(self.baseline.miou);
        let _ = writeln!(
            svg,
            r##"<line x1="{m}" y1="{by:.1}" x2="{:.1}" y2="{by:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
            w - m
        );
        let refined = poly(self.scales.iter().map(|s| s.cumulative.miou).collect());
        let unrefined = poly(self.scales.iter().map(|s| s.unrefined_miou).collect());
        let _ = writeln!(svg, r##"<polyline points="{unrefined}" fill="none" stroke="#d62728"/>"##);
        let _ = writeln!(svg, r##"<polyline points="{refined}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##);
        for s in &self.scales {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                x(s.scale - 1),
                h - m + 14.0,
                s.scale
            );
        }
        let _ = writeln!(svg, r#"<text x="{m}" y="16" font-size="12">mIoU per scale (refined, unrefined, baseline)</text>"#);
        svg.push_str("</svg>\n");
        svg
    }
}

fn svg_open(w: f64, h: f64) -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#) + "\n"
}

fn axes(svg: &mut String, w: f64, h: f64, m: f64) {
    let _ = writeln!(
        svg,
        r#"<path d="M{m},{m} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
}

/// Gantt chart of a timeline: one row per scale with its predictor and
/// cascade bars. Acquisition is shaded grey; the yellow band spans the
/// full-overlap to no-overlap completion window after acquisition.
pub fn timeline_svg(timeline: &Timeline) -> String {
    let k = timeline.scale_count().max(1);
    let (w, row, m) = (640.0, 22.0, 40.0);
    let h = 2.0 * m + row * k as f64;
    let acq = timeline.acquisition_end;
    let lower = timeline.stages.last().map_or(0.0, |s| s.predict + s.cascade);
    let upper: f64 = timeline.stages.iter().map(|s| s.predict + s.cascade).sum();
    let end = timeline.finish().unwrap_or(acq).max(acq + upper);
    let span = if end > 0.0 { end } else { 1.0 };
    let x = |t: f64| m + (w - 2.0 * m) * t / span;
    let mut svg = svg_open(w, h);
    let _ = writeln!(
        svg,
        r##"<rect x="{m}" y="{m}" width="{:.2}" height="{:.1}" fill="#e8e8e8"/>"##,
        x(acq) - m,
        row * k as f64
    );
    let _ = writeln!(
        svg,
        r##"<rect class="yellow-zone" x="{:.2}" y="{m}" width="{:.2}" height="{:.1}" fill="#fff3a0"/>"##,
        x(acq + lower),
        x(acq + upper) - x(acq + lower),
        row * k as f64
    );
    for s in 1..=timeline.scale_count() {
        let top = m + row * (s - 1) as f64 + 3.0;
        let bar = |svg: &mut String, from: Option<f64>, to: Option<f64>, color: &str| {
            if let (Some(a), Some(b)) = (from, to) {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{top:.1}" width="{:.2}" height="{:.1}" fill="{color}"/>"#,
                    x(a),
                    (x(b) - x(a)).max(0.5),
                    row - 6.0
                );
            }
        };
        bar(
            &mut svg,
            timeline.instant(EventKind::ScaleStart, s),
            timeline.instant(EventKind::ScaleDone, s),
            "#1f77b4",
        );
        let cascade_start = timeline
            .instant(EventKind::CumulativeAvailable, s)
            .map(|done| done - timeline.stages[s - 1].cascade);
        bar(
            &mut svg,
            cascade_start,
            timeline.instant(EventKind::CumulativeAvailable, s),
            "#ff7f0e",
        );
        if let Some(r) = timeline.instant(EventKind::PartitionReady, s) {
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{top:.1}" x2="{:.2}" y2="{:.1}" stroke="black"/>"#,
                x(r),
                x(r),
                top + row - 6.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{s}</text>"#,
            m - 6.0,
            top + row - 10.0
        );
    }
    axes(&mut svg, w, h, m);
    let _ = writeln!(
        svg,
        r#"<text x="{m}" y="16" font-size="12">timeline, {end:.4} s total, acquisition ends {:.4} s</text>"#,
        timeline.acquisition_end
    );
    svg.push_str("</svg>\n");
    svg
}
