//! SVG charts and CSV / aligned-text tables.
//!
//! Every emitter is a pure function of its input. Coordinates are printed
//! with fixed precision so identical input gives identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ingest::{CorpusStats, StatsRow};
use crate::labels::PrevalenceTable;
use crate::sentiment::FigureReport;
use crate::terms::RankDelta;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.headers.len(), "row width must match header");
        self.rows.push(row);
    }

    /// RFC 4180 CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    /// Space-padded columns; the first is left-aligned, the rest right-aligned.
    pub fn to_text(&self) -> String {
        let width = |i: usize| {
            std::iter::once(&self.headers[i])
                .chain(self.rows.iter().map(|r| &r[i]))
                .map(|c| c.chars().count())
                .max()
                .unwrap_or(0)
        };
        let widths: Vec<usize> = (0..self.headers.len()).map(width).collect();
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i == 0 {
                    out.push_str(cell);
                    out.extend(std::iter::repeat_n(' ', pad));
                } else {
                    out.extend(std::iter::repeat_n(' ', pad));
                    out.push_str(cell);
                }
            }
            out.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.headers);
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }
}

/// `1234567` → `"1,234,567"`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

const STATS_HEADERS: [&str; 5] = [
    "data",
    "tweets",
    "unique_users",
    "hashtags_total",
    "hashtags_unique",
];

fn stats_rows(stats: &CorpusStats) -> [(&'static str, StatsRow); 3] {
    [
        ("retweets", stats.retweets),
        ("non-retweets", stats.non_retweets),
        ("total", stats.total),
    ]
}

fn stats_cells(r: &StatsRow) -> [u64; 4] {
    [r.n_tweets, r.n_unique_users, r.hashtags_total, r.hashtags_unique].map(|n| n as u64)
}

/// Retweet / non-retweet / total statistics of one corpus.
pub fn stats_table(stats: &CorpusStats) -> Table {
    let mut t = Table::new(STATS_HEADERS);
    for (name, row) in stats_rows(stats) {
        t.push(std::iter::once(name.to_string()).chain(stats_cells(&row).map(|n| n.to_string())));
    }
    t
}

/// Two corpora side by side, cells formatted `a / b`.
pub fn comparative_stats_table(a: &CorpusStats, b: &CorpusStats) -> Table {
    let mut t = Table::new(STATS_HEADERS);
    for ((name, ra), (_, rb)) in stats_rows(a).into_iter().zip(stats_rows(b)) {
        let cells = stats_cells(&ra)
            .into_iter()
            .zip(stats_cells(&rb))
            .map(|(x, y)| format!("{} / {}", thousands(x), thousands(y)));
        t.push(std::iter::once(name.to_string()).chain(cells));
    }
    t
}

/// Columns `label, count, percentage`, plus a total row.
pub fn prevalence_table(p: &PrevalenceTable) -> Table {
    let mut t = Table::new(["label", "count", "percentage"]);
    for r in &p.rows {
        t.push([r.label.clone(), r.count.to_string(), format!("{:.1}", r.percentage)]);
    }
    let total_pct = if p.total_positive > 0 { "100.0" } else { "0.0" };
    t.push([
        "total".to_string(),
        format!("{} (out of {})", p.total_positive, p.total_sampled),
        total_pct.to_string(),
    ]);
    t
}

/// Columns `figure, positive, negative, neutral, total`.
pub fn figure_table(reports: &[FigureReport]) -> Table {
    let mut t = Table::new(["figure", "positive", "negative", "neutral", "total"]);
    for r in reports {
        t.push([
            r.figure.clone(),
            format!("{:.2}", r.positive),
            format!("{:.2}", r.negative),
            format!("{:.2}", r.neutral),
            r.total.to_string(),
        ]);
    }
    t
}

/// Figure reports of two corpora side by side, matched by figure name.
pub fn comparative_figure_table(a: &[FigureReport], b: &[FigureReport]) -> Table {
    let mut t = Table::new(["figure", "positive", "negative", "neutral", "total"]);
    for ra in a {
        let Some(rb) = b.iter().find(|r| r.figure == ra.figure) else {
            continue;
        };
        t.push([
            ra.figure.clone(),
            format!("{:.2} / {:.2}", ra.positive, rb.positive),
            format!("{:.2} / {:.2}", ra.negative, rb.negative),
            format!("{:.2} / {:.2}", ra.neutral, rb.neutral),
            format!("{} / {}", thousands(ra.total as u64), thousands(rb.total as u64)),
        ]);
    }
    t
}

/// One row per delta, in the order given.
pub fn delta_table(deltas: &[RankDelta]) -> Table {
    let opt_rank = |r: Option<usize>| r.map_or(String::new(), |r| r.to_string());
    let mut t = Table::new([
        "group_key",
        "rank_a",
        "rank_b",
        "prevalence_a",
        "prevalence_b",
        "pp_change",
        "rel_change",
    ]);
    for d in deltas {
        t.push([
            d.group_key.clone(),
            opt_rank(d.rank_a),
            opt_rank(d.rank_b),
            format!("{:.6}", d.prevalence_a),
            format!("{:.6}", d.prevalence_b),
            format!("{:.4}", d.pp_change),
            d.rel_change.map_or(String::new(), |r| format!("{r:.4}")),
        ]);
    }
    t
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, width: u32, height: u32) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="DejaVu Sans, Arial, sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
}

const BUMP_LEFT_X: f64 = 220.0;
const BUMP_RIGHT_X: f64 = 480.0;
const BUMP_TOP: f64 = 50.0;
const BUMP_ROW: f64 = 22.0;

fn bump_y(rank: usize) -> f64 {
    BUMP_TOP + (rank - 1) as f64 * BUMP_ROW
}

/// Two ranked columns of the top `top_n` keys in A (left) and B (right),
/// with a line for each key ranked in both.
pub fn bump_chart(deltas: &[RankDelta], top_n: usize, titles: (&str, &str)) -> String {
    let in_top = |r: Option<usize>| r.filter(|&r| r >= 1 && r <= top_n);
    let mut left: Vec<(usize, &str)> = deltas
        .iter()
        .filter_map(|d| in_top(d.rank_a).map(|r| (r, d.group_key.as_str())))
        .collect();
    let mut right: Vec<(usize, &str)> = deltas
        .iter()
        .filter_map(|d| in_top(d.rank_b).map(|r| (r, d.group_key.as_str())))
        .collect();
    left.sort();
    right.sort();
    let rows = left.iter().chain(&right).map(|&(r, _)| r).max().unwrap_or(0);
    let height = (BUMP_TOP + rows as f64 * BUMP_ROW + 20.0) as u32;

    let mut out = String::new();
    svg_open(&mut out, 700, height);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{BUMP_LEFT_X:.1}" y="25.0" text-anchor="end" font-weight="bold">{}</text>"#,
        escape(titles.0)
    );
    let _ = writeln!(
        out,
        r#"<text class="title" x="{BUMP_RIGHT_X:.1}" y="25.0" font-weight="bold">{}</text>"#,
        escape(titles.1)
    );
    for d in deltas {
        if let (Some(a), Some(b)) = (in_top(d.rank_a), in_top(d.rank_b)) {
            let _ = writeln!(
                out,
                r##"<line class="link" data-key="{}" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#4477aa" stroke-width="1.5"/>"##,
                escape(&d.group_key),
                BUMP_LEFT_X + 10.0,
                bump_y(a) - 4.0,
                BUMP_RIGHT_X - 10.0,
                bump_y(b) - 4.0
            );
        }
    }
    for (rank, key) in &left {
        let _ = writeln!(
            out,
            r#"<text class="left" data-key="{k}" x="{BUMP_LEFT_X:.1}" y="{:.1}" text-anchor="end">{rank}. {k}</text>"#,
            bump_y(*rank),
            k = escape(key)
        );
    }
    for (rank, key) in &right {
        let _ = writeln!(
            out,
            r#"<text class="right" data-key="{k}" x="{BUMP_RIGHT_X:.1}" y="{:.1}">{rank}. {k}</text>"#,
            bump_y(*rank),
            k = escape(key)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeMode {
    /// Percentage-point change.
    Pp,
    Relative,
}

impl std::str::FromStr for ChangeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pp" => Ok(ChangeMode::Pp),
            "relative" | "rel" => Ok(ChangeMode::Relative),
            other => Err(Error::invalid(format!("unknown change mode {other:?}"))),
        }
    }
}

const BAR_AXIS_X: f64 = 400.0;
const BAR_HALF: f64 = 220.0;
const BAR_TOP: f64 = 50.0;
const BAR_ROW: f64 = 24.0;

/// Horizontal bars, largest `prevalence_a` first. Growth extends right of
/// the axis, decline left. A relative change with no A prevalence is drawn
/// as an empty bar labelled `n/a`.
pub fn change_bars(deltas: &[RankDelta], mode: ChangeMode) -> String {
    let mut sorted: Vec<&RankDelta> = deltas.iter().collect();
    sorted.sort_by(|a, b| {
        b.prevalence_a
            .total_cmp(&a.prevalence_a)
            .then_with(|| a.group_key.cmp(&b.group_key))
    });
    let value = |d: &RankDelta| match mode {
        ChangeMode::Pp => Some(d.pp_change),
        ChangeMode::Relative => d.rel_change.map(|r| 100.0 * r),
    };
    let max_abs = sorted
        .iter()
        .filter_map(|d| value(d))
        .map(f64::abs)
        .fold(0.0, f64::max);
    let height = (BAR_TOP + sorted.len() as f64 * BAR_ROW + 50.0) as u32;
    let axis_label = match mode {
        ChangeMode::Pp => "change in share of tweets (percentage points)",
        ChangeMode::Relative => "relative change in share of tweets (%)",
    };

    let mut out = String::new();
    svg_open(&mut out, 800, height);
    let bottom = BAR_TOP + sorted.len() as f64 * BAR_ROW;
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{BAR_AXIS_X:.1}" y1="{:.1}" x2="{BAR_AXIS_X:.1}" y2="{bottom:.1}" stroke="black"/>"#,
        BAR_TOP - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{BAR_AXIS_X:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        bottom + 30.0,
        escape(axis_label)
    );
    for (i, d) in sorted.iter().enumerate() {
        let y = BAR_TOP + i as f64 * BAR_ROW;
        let v = value(d);
        let len = match v {
            Some(v) if max_abs > 0.0 => v.abs() / max_abs * BAR_HALF,
            _ => 0.0,
        };
        let negative = v.is_some_and(|v| v < 0.0);
        let (x, fill) = if negative {
            (BAR_AXIS_X - len, "#cc6677")
        } else {
            (BAR_AXIS_X, "#117733")
        };
        let key = escape(&d.group_key);
        let _ = writeln!(
            out,
            r#"<rect class="bar" data-key="{key}" data-value="{}" x="{x:.2}" y="{:.1}" width="{len:.2}" height="{:.1}" fill="{fill}"/>"#,
            v.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            y,
            BAR_ROW - 6.0
        );
        let _ = writeln!(
            out,
            r#"<text class="key" x="{:.1}" y="{:.1}" text-anchor="end">{key}</text>"#,
            BAR_AXIS_X - BAR_HALF - 10.0,
            y + 13.0
        );
        let _ = writeln!(
            out,
            r#"<text class="value" x="{:.1}" y="{:.1}">{}</text>"#,
            BAR_AXIS_X + BAR_HALF + 10.0,
            y + 13.0,
            v.map_or("n/a".to_string(), |v| format!("{v:+.2}"))
        );
    }
    out.push_str("</svg>\n");
    out
}
