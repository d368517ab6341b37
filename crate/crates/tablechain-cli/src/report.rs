//! CSV and SVG exports of an evaluation report.

use std::fs;
use std::path::Path;

use tablechain::eval::MetricsReport;

use crate::CliError;

pub fn write_csvs(report: &MetricsReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(e.to_string()))?;
    let write = |name: &str, text: String| -> Result<(), CliError> {
        fs::write(dir.join(name), text).map_err(|e| CliError::Other(e.to_string()))
    };

    let mut histogram = String::from("chain_length,count\n");
    for (length, count) in &report.chain_length_histogram {
        histogram.push_str(&format!("{length},{count}\n"));
    }
    write("chain_length_histogram.csv", histogram)?;

    let mut buckets = String::from("bucket,samples,correct,accuracy\n");
    for bucket in &report.buckets {
        let accuracy = bucket
            .accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        buckets.push_str(&format!(
            "{},{},{},{}\n",
            bucket.bucket, bucket.samples, bucket.correct, accuracy
        ));
    }
    write("buckets.csv", buckets)?;

    let budget = format!(
        "max_dynamicplan,max_generateargs,max_query,max_total,mean_total\n{},{},{},{},{:.6}\n",
        report.budget.max_dynamicplan,
        report.budget.max_generateargs,
        report.budget.max_query,
        report.budget.max_total,
        report.budget.mean_total
    );
    write("budget.csv", budget)?;
    Ok(())
}

/// Minimal vertical bar chart.
fn bar_chart(title: &str, bars: &[(String, f64)], max_value: f64) -> String {
    let bar_width = 40;
    let gap = 16;
    let height = 220;
    let chart_height = 160.0;
    let width = 40 + bars.len() * (bar_width + gap);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\">\n\
         <text x=\"8\" y=\"16\" font-family=\"monospace\" font-size=\"13\">{title}</text>\n"
    );
    let max_value = if max_value <= 0.0 { 1.0 } else { max_value };
    for (i, (label, value)) in bars.iter().enumerate() {
        let h = (value / max_value * chart_height).round();
        let x = 24 + i * (bar_width + gap);
        let y = 30.0 + (chart_height - h);
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_width}\" height=\"{h}\" fill=\"#4878a8\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{label}</text>\n\
             <text x=\"{tx}\" y=\"{vy}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{value}</text>\n",
            tx = x + bar_width / 2,
            ty = height - 8,
            vy = y - 4.0,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svgs(report: &MetricsReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(e.to_string()))?;
    let histogram: Vec<(String, f64)> = report
        .chain_length_histogram
        .iter()
        .map(|(length, count)| (length.to_string(), *count as f64))
        .collect();
    let max = histogram.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    fs::write(
        dir.join("chain_length_histogram.svg"),
        bar_chart("chain length distribution", &histogram, max),
    )
    .map_err(|e| CliError::Other(e.to_string()))?;

    let buckets: Vec<(String, f64)> = report
        .buckets
        .iter()
        .map(|b| (b.bucket.clone(), b.accuracy.unwrap_or(0.0)))
        .collect();
    fs::write(
        dir.join("bucket_accuracy.svg"),
        bar_chart("accuracy by table size", &buckets, 1.0),
    )
    .map_err(|e| CliError::Other(e.to_string()))?;
    Ok(())
}
