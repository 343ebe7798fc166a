use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::heatmap::{CellStatus, DomainFeatureRow, HeatmapCell, HeatmapTable};
use crate::error::{DriftError, Result};

/// Tables larger than this in either direction are drawn without numbers.
pub const ANNOTATION_LIMIT: usize = 30;

pub(crate) fn comment_block(provenance: Option<&str>) -> String {
    provenance
        .map(|p| p.lines().map(|l| format!("# {l}\n")).collect())
        .unwrap_or_default()
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn matrix_csv(
    table: &HeatmapTable,
    provenance: Option<&str>,
    value: impl Fn(&HeatmapCell) -> String,
) -> String {
    let mut out = comment_block(provenance);
    out.push_str("feature");
    for t in &table.targets {
        out.push(',');
        out.push_str(&csv_escape(t));
    }
    out.push('\n');
    for (f, row) in table.features.iter().zip(&table.cells) {
        out.push_str(&csv_escape(f));
        for cell in row {
            out.push(',');
            out.push_str(&value(cell));
        }
        out.push('\n');
    }
    out
}

fn ok_value(cell: &HeatmapCell, v: Option<f64>) -> String {
    match (cell.status, v) {
        (CellStatus::Ok, Some(x)) => format!("{x}"),
        _ => String::new(),
    }
}

/// Blue (−1) → white (0) → red (+1).
pub fn diverging_color(r: f64) -> (u8, u8, u8) {
    const BLUE: (f64, f64, f64) = (5.0, 48.0, 97.0);
    const RED: (f64, f64, f64) = (103.0, 0.0, 31.0);
    let t = r.clamp(-1.0, 1.0);
    let end = if t < 0.0 { BLUE } else { RED };
    let a = t.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    (mix(end.0), mix(end.1), mix(end.2))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Heatmap of signed r; non-ok cells are gray.
pub fn render_svg(table: &HeatmapTable, provenance: Option<&str>) -> String {
    let annotate = table.features.len() <= ANNOTATION_LIMIT && table.targets.len() <= ANNOTATION_LIMIT;
    let cell = if annotate { 44 } else { 14 };
    let label_w = 8 * table.features.iter().map(String::len).max().unwrap_or(0) + 12;
    let label_h = 7 * table.targets.iter().map(String::len).max().unwrap_or(0) + 12;
    let width = label_w + cell * table.targets.len() + 10;
    let height = label_h + cell * table.features.len() + 10;

    let mut svg = String::new();
    let _ = writeln!(svg, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    if let Some(p) = provenance {
        let _ = writeln!(svg, "<!-- {} -->", xml_escape(p).replace("--", "- -"));
    }
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    for (j, t) in table.targets.iter().enumerate() {
        let x = label_w + j * cell + cell / 2;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-60 {x} {})\">{}</text>",
            label_h - 4,
            label_h - 4,
            xml_escape(t)
        );
    }
    for (i, (f, row)) in table.features.iter().zip(&table.cells).enumerate() {
        let y = label_h + i * cell;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            label_w - 6,
            y + cell / 2 + 4,
            xml_escape(f)
        );
        for (j, c) in row.iter().enumerate() {
            let x = label_w + j * cell;
            let (fill, label) = match c.signed_r() {
                Some(r) if c.status == CellStatus::Ok => {
                    let (red, green, blue) = diverging_color(r);
                    (format!("rgb({red},{green},{blue})"), format!("{r:.2}"))
                }
                _ => ("rgb(200,200,200)".to_string(), String::new()),
            };
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"white\"/>"
            );
            if annotate && !label.is_empty() {
                let _ = writeln!(
                    svg,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
                    x + cell / 2,
                    y + cell / 2 + 4
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write `signed_r.csv`, `p_value.csv`, `q_value.csv`, `n_used.csv` and `heatmap.svg`.
pub fn emit_heatmap(
    table: &HeatmapTable,
    out_dir: impl AsRef<Path>,
    provenance: Option<&str>,
) -> Result<Vec<PathBuf>> {
    if table.is_empty() {
        return Err(DriftError::Invalid("no cells to emit".into()));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DriftError::io(dir, e))?;
    let files = [
        (
            "signed_r.csv",
            matrix_csv(table, provenance, |c| ok_value(c, c.signed_r())),
        ),
        (
            "p_value.csv",
            matrix_csv(table, provenance, |c| ok_value(c, c.p_value())),
        ),
        (
            "q_value.csv",
            matrix_csv(table, provenance, |c| ok_value(c, c.q_value)),
        ),
        (
            "n_used.csv",
            matrix_csv(table, provenance, |c| c.n_used.to_string()),
        ),
        ("heatmap.svg", render_svg(table, provenance)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| DriftError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Write rows as CSV: `domain` then one column per name (sorted), empty = missing.
pub fn write_named_table(
    rows: &[DomainFeatureRow],
    path: impl AsRef<Path>,
    provenance: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let names: std::collections::BTreeSet<&String> =
        rows.iter().flat_map(|r| r.features.keys()).collect();
    let mut out = comment_block(provenance);
    out.push_str("domain");
    for n in &names {
        out.push(',');
        out.push_str(&csv_escape(n));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&csv_escape(&row.domain));
        for n in &names {
            out.push(',');
            if let Some(Some(v)) = row.features.get(*n) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DriftError::io(path, e))
}

/// Read a table written by [`write_named_table`] (or any `domain,...` CSV).
pub fn read_named_table(path: impl AsRef<Path>) -> Result<Vec<DomainFeatureRow>> {
    let path = path.as_ref();
    let csv_err = |source| DriftError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("domain") {
        return Err(DriftError::Format {
            path: path.to_path_buf(),
            message: "first column must be `domain`".into(),
        });
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut row = DomainFeatureRow::new(&record[0]);
        for (name, raw) in header.iter().zip(record.iter()).skip(1) {
            let value = if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| DriftError::Format {
                    path: path.to_path_buf(),
                    message: format!("row {}: column {name}: cannot parse {raw:?}", line + 1),
                })?)
            };
            row.set(name, value);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_endpoints() {
        assert_eq!(diverging_color(0.0), (255, 255, 255));
        assert_eq!(diverging_color(-1.0), (5, 48, 97));
        assert_eq!(diverging_color(1.0), (103, 0, 31));
    }

    #[test]
    fn named_table_round_trip() {
        let mut a = DomainFeatureRow::new("news");
        a.set("x", Some(0.25));
        a.set("y", None);
        let mut b = DomainFeatureRow::new("legal");
        b.set("x", Some(-1.5));
        b.set("y", Some(3.0));
        let f = tempfile::NamedTempFile::new().unwrap();
        write_named_table(&[a.clone(), b.clone()], f.path(), Some("tool test")).unwrap();
        let back = read_named_table(f.path()).unwrap();
        assert_eq!(back, vec![a, b]);
    }
}
