//! Line charts for the experiment CSVs, written as plain SVG.
//!
//! Rows sharing the series key columns form one line; rows that also share
//! the x value are averaged (seeds). Output depends only on the CSV
//! contents, so the same file always renders to the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use anyhow::{anyhow, bail, Context, Result};

/// Which columns to draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub series: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
}

impl PlotSpec {
    fn new(x: &str, y: &str, series: &[&str], log_x: bool, log_y: bool, title: &str) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            series: series.iter().map(|s| s.to_string()).collect(),
            log_x,
            log_y,
            title: title.into(),
        }
    }

    /// Preset for one of the known output files, by schema name
    /// (`accuracy`, `ratio`, `noise`, `noise-curves`, `de-time`,
    /// `de-error`).
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "accuracy" => Self::new("L", "accuracy", &["classifier", "phyaug"], true, false, "Accuracy vs real samples"),
            "ratio" => Self::new("level", "ratio", &["classifier"], false, true, "Data ratio vs accuracy"),
            "noise" => Self::new("xi", "accuracy_phyaug", &["classifier"], false, false, "Accuracy vs noise level"),
            "noise-curves" => {
                Self::new("L", "accuracy", &["xi", "classifier", "phyaug"], true, false, "Accuracy vs real samples per noise level")
            }
            "de-time" => Self::new("n", "mean_time_s", &["method"], true, true, "Inference time vs cells"),
            "de-error" => Self::new("n", "mean_error_km", &["method"], true, false, "Localization error vs cells"),
            other => bail!("unknown plot preset {other:?}"),
        })
    }

    /// Preset matching a file name such as `accuracy_vs_L.csv`.
    pub fn for_file(name: &str) -> Option<Self> {
        let preset = match name {
            "accuracy_vs_L.csv" => "accuracy",
            "ratio_vs_accuracy.csv" => "ratio",
            "noise_sweep.csv" => "noise",
            "noise_sweep_curves.csv" => "noise-curves",
            "de_bench.csv" => "de-time",
            _ => return None,
        };
        Self::preset(preset).ok()
    }
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

/// Groups and averages the CSV rows into named series sorted by x.
pub fn collect_series<R: Read>(input: R, spec: &PlotSpec) -> Result<Series> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().context("reading CSV header")?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("CSV schema mismatch: missing column {name:?}"))
    };
    let (xi, yi) = (column(&spec.x)?, column(&spec.y)?);
    let keys: Vec<usize> = spec.series.iter().map(|s| column(s)).collect::<Result<_>>()?;

    let mut sums: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading CSV row {}", line + 2))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let (xs, ys) = (field(xi), field(yi));
        if ys.is_empty() {
            continue; // unreachable levels and skipped methods leave blanks
        }
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.parse().with_context(|| format!("row {}: column {name:?} is not a number: {s:?}", line + 2))
        };
        let (x, y) = (parse(xs, &spec.x)?, parse(ys, &spec.y)?);
        let key = keys.iter().zip(&spec.series).map(|(&i, name)| format!("{name}={}", field(i))).collect::<Vec<_>>().join(" ");
        let slot = sums.entry(key).or_default().entry(x.to_bits()).or_insert((x, 0.0, 0));
        slot.1 += y;
        slot.2 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(k, pts)| {
            let mut v: Vec<(f64, f64)> = pts.into_values().map(|(x, s, n)| (x, s / n as f64)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, v)
        })
        .collect())
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let vals: Vec<f64> = values.filter(|v| v.is_finite() && (!log || *v > 0.0)).map(|v| if log { v.log10() } else { v }).collect();
        let (mut lo, mut hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Self { lo, hi, log }
    }

    /// Position in [0, 1], or `None` for values a log axis cannot show.
    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|k| {
                let t = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                let value = if self.log { 10f64.powf(t) } else { t };
                (k as f64 / 4.0, format_tick(value))
            })
            .collect()
    }
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series as an SVG document.
pub fn render_svg(series: &Series, spec: &PlotSpec) -> String {
    let all = || series.values().flatten();
    let ax = Axis::fit(all().map(|p| p.0), spec.log_x);
    let ay = Axis::fit(all().map(|p| p.1), spec.log_y);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |u: f64| LEFT + u * pw;
    let py = |u: f64| TOP + (1.0 - u) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&spec.title));
    let _ = writeln!(svg, r#"<g class="axes" stroke="black" fill="none"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></g>"#);
    for (u, label) in ax.ticks() {
        let x = px(u);
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (u, label) in ay.ticks() {
        let y = py(u);
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0, escape(&spec.x));
    let _ = writeln!(svg, r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, escape(&spec.y));

    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter_map(|(x, y)| Some(format!("{:.2},{:.2}", px(ax.unit(*x)?), py(ay.unit(*y)?))))
            .collect();
        if !coords.is_empty() {
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads a CSV and renders it.
pub fn plot_csv<R: Read>(input: R, spec: &PlotSpec) -> Result<String> {
    Ok(render_svg(&collect_series(input, spec)?, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PlotSpec {
        PlotSpec::preset("accuracy").unwrap()
    }

    #[test]
    fn header_only_gives_axes_only() {
        let svg = plot_csv("classifier,phyaug,L,seed,accuracy\n".as_bytes(), &spec()).unwrap();
        assert!(svg.contains(r#"class="axes""#));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn two_points_make_one_polyline() {
        let csv = "classifier,phyaug,L,seed,accuracy\nmlp,false,100,1,0.5\nmlp,false,1000,1,0.7\n";
        let svg = plot_csv(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 2);
    }

    #[test]
    fn seeds_are_averaged() {
        let csv = "classifier,phyaug,L,seed,accuracy\nsvm,true,10,1,0.4\nsvm,true,10,2,0.6\nsvm,true,20,1,0.8\n";
        let s = collect_series(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(s["classifier=svm phyaug=true"], vec![(10.0, 0.5), (20.0, 0.8)]);
    }

    #[test]
    fn missing_column_is_named() {
        let err = plot_csv("classifier,L,seed,accuracy\n".as_bytes(), &spec()).unwrap_err();
        assert!(err.to_string().contains("\"phyaug\""), "{err}");
    }

    #[test]
    fn blank_values_are_skipped() {
        let csv = "classifier,level,l_baseline,l_phyaug,ratio,status\nmlp,0.5,100,2,0.02,ok\nmlp,0.9,,,,unreachable\n";
        let s = collect_series(csv.as_bytes(), &PlotSpec::preset("ratio").unwrap()).unwrap();
        assert_eq!(s["classifier=mlp"].len(), 1);
    }

    #[test]
    fn rendering_is_deterministic() {
        let csv = "n,method,events,mean_time_s,mean_error_km\n100,de,5,0.01,0.05\n400,de,5,0.02,0.04\n100,mlp,5,1e-5,0.06\n";
        let spec = PlotSpec::preset("de-time").unwrap();
        assert_eq!(plot_csv(csv.as_bytes(), &spec).unwrap(), plot_csv(csv.as_bytes(), &spec).unwrap());
    }
}
