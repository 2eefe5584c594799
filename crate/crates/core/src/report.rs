//! Self-contained HTML report: inline CSS and SVG, no external resources.
//!
//! The output is a pure function of the [`Outcome`] and the timestamp
//! string, and the timestamp appears in exactly one element
//! (`<span id="generated-at">`).

use std::fmt::Write as _;

use crate::corpus::QUANTILE_LEVELS;
use crate::extraction::GRAMMAR_VERSION;
use crate::money::Money;
use crate::pipeline::Outcome;
use crate::wire::{histogram, DensityCurves, ResolvedOpinion};

const STYLE: &str = "body{font-family:Georgia,serif;max-width:60rem;margin:2rem auto;padding:0 1rem;color:#222}\
h1{font-size:1.5rem}h2{font-size:1.15rem;margin-top:2rem;border-bottom:1px solid #ccc}\
table{border-collapse:collapse}td,th{padding:.25rem .75rem;border-bottom:1px solid #eee;text-align:left}\
td.num{text-align:right;font-variant-numeric:tabular-nums}\
.headline{font-size:2rem;font-weight:bold}.muted{color:#666;font-size:.9rem}\
.warn{color:#a40000}";

const PLOT_W: f64 = 720.0;
const PLOT_H: f64 = 260.0;
const MARGIN: f64 = 30.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.6}")
}

fn plot(outcome: &Outcome) -> String {
    let s = &outcome.summary;
    let bins = histogram(s);
    let curves = DensityCurves::sample(&outcome.estimate.prior, &outcome.estimate.posterior);
    let inner_w = PLOT_W - 2.0 * MARGIN;
    let inner_h = PLOT_H - 2.0 * MARGIN;
    let base_y = PLOT_H - MARGIN;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}" role="img" aria-label="cohort histogram with prior and posterior densities">"#
    );
    let _ = write!(
        svg,
        r##"<line x1="{MARGIN}" y1="{base_y}" x2="{x2}" y2="{base_y}" stroke="#444"/>"##,
        x2 = PLOT_W - MARGIN
    );

    let max_count = bins.iter().map(|b| b.count).max().unwrap_or(1).max(1) as f64;
    let bar_w = inner_w / bins.len() as f64;
    for (i, b) in bins.iter().enumerate() {
        let h = inner_h * b.count as f64 / max_count;
        let _ = write!(
            svg,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="#c9d6e8" stroke="#fff"><title>{lo} – {hi}: {n}</title></rect>"##,
            x = MARGIN + i as f64 * bar_w,
            y = base_y - h,
            w = bar_w,
            lo = escape(&Money(b.low_minor_units).to_string()),
            hi = escape(&Money(b.high_minor_units).to_string()),
            n = b.count
        );
    }

    let max_density = curves
        .prior
        .iter()
        .chain(curves.posterior.iter())
        .flatten()
        .fold(0.0_f64, |a, &d| a.max(d))
        .max(f64::MIN_POSITIVE);
    for (curve, colour, label) in [
        (&curves.prior, "#d08000", "prior"),
        (&curves.posterior, "#1f4e9c", "posterior"),
    ] {
        let mut path = String::new();
        let mut pen_down = false;
        for (x, d) in curves.x.iter().zip(curve.iter()) {
            match d {
                Some(d) => {
                    let px = MARGIN + x * inner_w;
                    let py = base_y - inner_h * d / max_density;
                    let _ = write!(path, "{}{px:.2},{py:.2} ", if pen_down { "L" } else { "M" });
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = write!(
            svg,
            r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="2"><title>{label} density</title></path>"#,
            path.trim_end()
        );
    }

    let e = &outcome.estimate;
    if s.max > s.min && e.theta_hat >= s.min && e.theta_hat <= s.max {
        let x = MARGIN + inner_w * (e.theta_hat - s.min).as_f64() / (s.max - s.min).as_f64();
        let _ = write!(
            svg,
            r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{base_y}" stroke="#a40000" stroke-dasharray="4 3"/>"##
        );
    }
    let _ = write!(
        svg,
        r##"<text x="{MARGIN}" y="{ty}" font-size="11">{lo}</text><text x="{tx}" y="{ty}" font-size="11" text-anchor="end">{hi}</text>"##,
        ty = PLOT_H - 8.0,
        tx = PLOT_W - MARGIN,
        lo = escape(&s.min.to_string()),
        hi = escape(&s.max.to_string())
    );
    svg.push_str("</svg>");
    svg
}

/// Renders the report. `generated_at` is the only varying input.
pub fn render_report(outcome: &Outcome, generated_at: &str) -> String {
    let e = &outcome.estimate;
    let s = &outcome.summary;
    let r = &outcome.resolved;

    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html lang=\"pt-BR\">\n<head>\n<meta charset=\"utf-8\">\n<title>Indemnity suggestion {}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n",
        escape(&s.cohort_id)
    );
    html.push_str("<h1>Suggested moral-damage indemnity</h1>\n");
    let _ = writeln!(
        html,
        "<p class=\"headline\" id=\"theta-hat\">{}</p>",
        escape(&e.theta_hat.to_string())
    );
    let _ = writeln!(
        html,
        "<p id=\"interval\">{:.0}% credible interval: {} to {}</p>",
        e.interval_mass * 100.0,
        escape(&e.interval_low.to_string()),
        escape(&e.interval_high.to_string())
    );
    if e.clamped {
        html.push_str(
            "<p class=\"warn\" id=\"clamped\">The calibration constant drives the suggestion below zero; it is shown as zero.</p>\n",
        );
    }

    html.push_str("<h2>Cohort</h2>\n<table id=\"cohort-summary\">\n");
    let mut row = |k: &str, v: String| {
        let _ = writeln!(
            html,
            "<tr><th>{}</th><td class=\"num\">{}</td></tr>",
            escape(k),
            escape(&v)
        );
    };
    row("cases (n)", s.n.to_string());
    row("minimum (m)", s.min.to_string());
    row("maximum (M)", s.max.to_string());
    row("mean", Money::round_half_up(s.mean).to_string());
    for p in QUANTILE_LEVELS {
        if let Some(q) = s.quantile(p) {
            row(&format!("quantile {p}"), q.to_string());
        }
    }
    html.push_str("</table>\n");
    html.push_str(&plot(outcome));
    html.push_str(
        "\n<p class=\"muted\">Bars: cohort amounts. Orange: prior density. Blue: posterior density. Dashed: suggested value.</p>\n",
    );

    html.push_str("<h2>Parameters</h2>\n<table id=\"parameters\">\n");
    let mut row = |k: &str, v: String| {
        let _ = writeln!(
            html,
            "<tr><th>{}</th><td class=\"num\">{}</td></tr>",
            escape(k),
            escape(&v)
        );
    };
    match &r.opinion {
        ResolvedOpinion::Ordinal {
            scale,
            concentration,
        } => {
            row("opinion level (s)", scale.to_string());
            row("concentration (λ)", concentration.to_string());
        }
        ResolvedOpinion::Manual { .. } => row("opinion", "manual α, β".to_string()),
        ResolvedOpinion::Auto {
            fallback_scale,
            concentration,
            fell_back,
        } => {
            row(
                "opinion",
                if *fell_back {
                    "auto-fit (fell back to ordinal)"
                } else {
                    "auto-fit"
                }
                .to_string(),
            );
            if let Some(s) = fallback_scale {
                row("fallback level (s)", s.to_string());
                row("concentration (λ)", concentration.to_string());
            }
        }
    }
    row("prior α", e.prior.alpha().to_string());
    row("prior β", e.prior.beta().to_string());
    row("posterior α", e.posterior.alpha().to_string());
    row("posterior β", e.posterior.beta().to_string());
    row("pooling", format!("{:?}", r.pooling_mode));
    row("data weight (w)", r.data_weight.to_string());
    row(
        "calibration (c)",
        Money(r.calibration_minor_units).to_string(),
    );
    row("point estimator", format!("{:?}", r.point_estimator));
    row("π̂", fmt_prob(e.pi_hat.value()));
    row("θ̂", e.theta_hat.to_string());
    html.push_str("</table>\n");

    html.push_str("<h2>Audit trail</h2>\n<table id=\"audit\">\n");
    let filter = serde_json::to_string(&r.filter).unwrap_or_default();
    let _ = writeln!(
        html,
        "<tr><th>cohort id</th><td>{}</td></tr>",
        escape(&s.cohort_id)
    );
    let _ = writeln!(
        html,
        "<tr><th>corpus version</th><td id=\"corpus-version\">{}</td></tr>",
        outcome.corpus_version
    );
    let _ = writeln!(
        html,
        "<tr><th>extraction grammar</th><td id=\"grammar-version\">{}</td></tr>",
        escape(GRAMMAR_VERSION)
    );
    let _ = writeln!(
        html,
        "<tr><th>filter</th><td><code>{}</code></td></tr>",
        escape(&filter)
    );
    let _ = writeln!(
        html,
        "<tr><th>generated</th><td><span id=\"generated-at\">{}</span></td></tr>",
        escape(generated_at)
    );
    html.push_str("</table>\n</body>\n</html>\n");
    html
}
