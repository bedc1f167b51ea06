//! Static HTML rendering of a finished [`Report`].
//!
//! Works on released values only; it never sees the dataset.

use std::fmt::Write;

use crate::catalog::{MeasureGroup, MeasureId};
use crate::measures::{Histogram, MeasureValue};
use crate::mechanisms::PrivacyMode;
use crate::report::{format_summary_value, summary_unit, MeasureRelease, Report, SummaryRelease};

const TOP_ROWS: usize = 20;

const STYLE: &str = "\
body{font-family:system-ui,sans-serif;margin:2rem auto;max-width:60rem;color:#222}
h1{font-size:1.6rem}h2{border-bottom:2px solid #2b6cb0;padding-bottom:.2rem;margin-top:2.5rem}
h3{margin-bottom:.3rem}.eps{color:#666;font-size:.85rem;font-weight:normal}
table{border-collapse:collapse;font-size:.85rem;margin:.4rem 0}
td,th{padding:.15rem .5rem;text-align:left;border-bottom:1px solid #eee}
td.n{text-align:right;font-variant-numeric:tabular-nums}
.bar{background:#2b6cb0;height:.8rem}.barcell{width:20rem}
.big{font-size:2rem;font-weight:600}.scroll{max-height:24rem;overflow-y:auto}
.prov{background:#f6f8fa;padding:1rem;border-radius:4px}
";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn eps_label(eps: f64) -> String {
    if eps == 0.0 {
        "no noise".to_string()
    } else {
        format!("ε = {eps}")
    }
}

fn bar_rows(out: &mut String, rows: &[(String, u64)]) {
    let max = rows.iter().map(|r| r.1).max().unwrap_or(0).max(1);
    out.push_str("<table>");
    for (label, v) in rows {
        let pct = *v as f64 / max as f64 * 100.0;
        let _ = write!(
            out,
            "<tr><td>{}</td><td class=\"barcell\"><div class=\"bar\" style=\"width:{pct:.1}%\"></div></td><td class=\"n\">{v}</td></tr>",
            esc(label)
        );
    }
    out.push_str("</table>");
}

fn histogram(out: &mut String, h: &Histogram) {
    let mut rows: Vec<(String, u64)> = (0..h.counts.len()).map(|k| (h.bins.label(k), h.counts[k])).collect();
    if h.bins.has_outliers() {
        rows.push(("outliers".to_string(), h.outlier_count));
    }
    bar_rows(out, &rows);
}

/// Tiles shaded by their share of the largest count.
fn choropleth(out: &mut String, tile_ids: &[String], counts: &[u64], outliers: u64) {
    let max = counts.iter().copied().max().unwrap_or(0).max(1);
    out.push_str("<div class=\"scroll\"><table><tr><th>tile</th><th>visits</th></tr>");
    for (id, &c) in tile_ids.iter().zip(counts) {
        let alpha = c as f64 / max as f64;
        let _ = write!(
            out,
            "<tr><td>{}</td><td class=\"n\" style=\"background:rgba(43,108,176,{alpha:.3})\">{c}</td></tr>",
            esc(id)
        );
    }
    let _ = write!(out, "<tr><td>outside tessellation</td><td class=\"n\">{outliers}</td></tr></table></div>");
}

fn top_table(out: &mut String, header: &[&str], mut rows: Vec<(Vec<String>, u64)>) {
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.push_str("<table><tr>");
    for h in header {
        let _ = write!(out, "<th>{}</th>", esc(h));
    }
    out.push_str("<th>count</th></tr>");
    for (cells, v) in rows.into_iter().filter(|r| r.1 > 0).take(TOP_ROWS) {
        out.push_str("<tr>");
        for c in cells {
            let _ = write!(out, "<td>{}</td>", esc(&c));
        }
        let _ = write!(out, "<td class=\"n\">{v}</td></tr>");
    }
    out.push_str("</table>");
}

fn summary(out: &mut String, measure: MeasureId, s: &SummaryRelease, normalized: bool) {
    let _ = write!(
        out,
        "<h4>Five-number summary <span class=\"eps\">{} · {}</span></h4>",
        eps_label(s.epsilon),
        esc(summary_unit(measure, normalized))
    );
    match s.summary {
        None => out.push_str("<p>No values.</p>"),
        Some(f) => {
            out.push_str("<table><tr><th>min</th><th>Q1</th><th>median</th><th>Q3</th><th>max</th></tr><tr>");
            for v in f.to_array() {
                let _ = write!(out, "<td class=\"n\">{}</td>", esc(&format_summary_value(measure, v)));
            }
            out.push_str("</tr></table>");
        }
    }
}

fn measure(out: &mut String, report: &Report, m: &MeasureRelease) {
    let _ = write!(
        out,
        "<section id=\"{}\"><h3>{} <span class=\"eps\">{}</span></h3>",
        m.measure,
        esc(m.measure.title()),
        eps_label(m.counts.epsilon)
    );
    let tiles = &report.tile_ids;
    match &m.counts.value {
        MeasureValue::Count(n) => {
            let _ = write!(out, "<p class=\"big\">{n}</p>");
        }
        MeasureValue::Histogram(h) => histogram(out, h),
        MeasureValue::TripsOverTime(t) => {
            let _ = write!(out, "<p>Per {:?}.</p>", t.granularity);
            histogram(out, &t.histogram);
        }
        MeasureValue::Spatial(s) => choropleth(out, tiles, &s.counts, s.outlier_count),
        MeasureValue::DestinationTime(d) => {
            let w = d.windows.len();
            let mut totals = Vec::with_capacity(w * 2);
            for (k, win) in d.windows.iter().enumerate() {
                for weekend in [false, true] {
                    let sum = (0..tiles.len()).map(|t| d.get(t, k, weekend)).sum();
                    let day = if weekend { "weekend" } else { "weekday" };
                    totals.push((format!("{} {day}", win.label), sum));
                }
            }
            bar_rows(out, &totals);
            let mut rows = Vec::new();
            for (t, id) in tiles.iter().enumerate() {
                for (k, win) in d.windows.iter().enumerate() {
                    for weekend in [false, true] {
                        let day = if weekend { "weekend" } else { "weekday" };
                        rows.push((vec![id.clone(), win.label.clone(), day.to_string()], d.get(t, k, weekend)));
                    }
                }
            }
            let _ = write!(out, "<h4>Busiest destinations</h4>");
            top_table(out, &["tile", "window", "day"], rows);
        }
        MeasureValue::OdMatrix(od) => {
            let rows = od
                .flows
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (vec![tiles[i / od.tiles].clone(), tiles[i % od.tiles].clone()], c))
                .collect();
            let _ = write!(out, "<h4>Top flows</h4>");
            top_table(out, &["origin", "destination"], rows);
            let _ = write!(out, "<p>Trips with an endpoint outside the tessellation: {}</p>", od.excluded_count);
        }
    }
    if let Some(s) = &m.summary {
        summary(out, m.measure, s, report.entropy_normalized);
    }
    out.push_str("</section>");
}

fn provenance(out: &mut String, report: &Report) {
    let p = &report.provenance;
    out.push_str("<section class=\"prov\" id=\"provenance\"><h2>Provenance</h2><table>");
    let eps = p.epsilon.map_or("per-release".to_string(), |e| e.to_string());
    let rows = [
        ("Privacy mode", p.privacy_mode.as_str().to_string()),
        ("Epsilon", if p.privacy_mode == PrivacyMode::WithoutDp { "none".into() } else { eps }),
        ("Max trips per user (M)", p.max_trips_per_user.to_string()),
        ("Seed", p.seed.to_string()),
        ("Dataset fingerprint", p.dataset_fingerprint.clone()),
        ("Tool version", p.tool_version.clone()),
    ];
    for (k, v) in rows {
        let _ = write!(out, "<tr><th>{}</th><td>{}</td></tr>", esc(k), esc(&v));
    }
    out.push_str("</table><h3>Budget allocation</h3><table><tr><th>release</th><th>ε</th></tr>");
    for (r, e) in &p.allocation {
        let _ = write!(out, "<tr><td>{r}</td><td class=\"n\">{e}</td></tr>");
    }
    out.push_str("</table></section>");
}

/// One self-contained HTML page: a section per measure group that has at
/// least one measure, then the provenance block.
pub fn render_html(report: &Report) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>Mobility report</title><style>");
    out.push_str(STYLE);
    out.push_str("</style></head><body><h1>Mobility report</h1>");
    for group in MeasureGroup::ALL {
        let members: Vec<&MeasureRelease> = report
            .measures
            .values()
            .filter(|m| m.measure.group() == group)
            .collect();
        if members.is_empty() {
            continue;
        }
        let _ = write!(out, "<h2>{}</h2>", group.title());
        for m in members {
            measure(&mut out, report, m);
        }
    }
    provenance(&mut out, report);
    out.push_str("</body></html>\n");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping() {
        assert_eq!(esc("<a href='x'>&</a>"), "&lt;a href=&#39;x&#39;&gt;&amp;&lt;/a&gt;");
    }
}
