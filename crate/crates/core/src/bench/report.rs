use std::fmt::Write as _;
use std::io::Write;

use super::{BenchReport, RowStatus};

pub const CSV_HEADER: [&str; 13] = [
    "variant",
    "bitrate_bps",
    "mean_packet_bits",
    "f1",
    "precision",
    "recall",
    "reduction_pct",
    "raw_bitrate_bps",
    "prehuffman_bitrate_bps",
    "refractory_bitrate_bps",
    "packets",
    "huffman",
    "status",
];

/// One row per variant. F1 columns are empty when not evaluated.
pub fn write_csv<W: Write>(out: W, report: &BenchReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let status = match &r.status {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Failed(e) => format!("failed: {e}"),
        };
        w.write_record([
            r.variant.name.clone(),
            format!("{:.3}", r.bitrate_bps),
            format!("{:.3}", r.mean_packet_bits),
            opt(r.f1.map(|f| f.f1)),
            opt(r.f1.map(|f| f.precision)),
            opt(r.f1.map(|f| f.recall)),
            format!("{:.6}", r.reduction_pct),
            format!("{:.3}", r.raw_bitrate_bps),
            format!("{:.3}", r.prehuffman_bitrate_bps),
            format!("{:.3}", r.refractory_bitrate_bps),
            r.packets.to_string(),
            r.variant.huffman.to_string(),
            status,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bitrate (log scale) against F1, one labelled point per variant.
pub fn write_svg<W: Write>(mut out: W, report: &BenchReport) -> std::io::Result<()> {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let points: Vec<(&str, f64, f64)> =
        report.rows.iter().filter(|r| r.bitrate_bps > 0.0).map(|r| (r.variant.name.as_str(), r.bitrate_bps.log10(), r.f1.map_or(0.0, |f| f.f1))).collect();
    let (lo, hi) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1.floor()), hi.max(p.1.ceil())));
    let (lo, hi) = if points.is_empty() { (0.0, 1.0) } else { (lo, hi.max(lo + 1.0)) };
    let sx = |v: f64| m + (v - lo) / (hi - lo) * (w - 2.0 * m);
    let sy = |f: f64| h - m - f * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<path d="M{m} {m} V{y} H{x}" fill="none" stroke="black"/>"#, y = h - m, x = w - m);
    let mut d = lo as i32;
    while d as f64 <= hi {
        let x = sx(d as f64);
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{x}" y2="{y2}" stroke="black"/>"#, y = h - m, y2 = h - m + 5.0);
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="middle">1e{d}</text>"#, y = h - m + 20.0);
        d += 1;
    }
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = sy(f);
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="end">{f:.2}</text>"#, x = m - 8.0, y = y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="middle">bitrate (bits/s)</text>"#, x = w / 2.0, y = h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{y}" transform="rotate(-90 15 {y})" text-anchor="middle">test F1</text>"#, y = h / 2.0);
    for (name, b, f) in &points {
        let (x, y) = (sx(*b), sy(*f));
        let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, x + 6.0, y - 6.0);
    }
    s.push_str("</svg>\n");
    out.write_all(s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::super::{Variant, VariantRow, F1};
    use super::*;

    fn report() -> BenchReport {
        let row = |name: &str, bitrate: f64, f1: Option<f64>, status: RowStatus| VariantRow {
            variant: Variant { name: name.into(), ..Variant::full() },
            status,
            bitrate_bps: bitrate,
            prehuffman_bitrate_bps: bitrate * 3.0,
            refractory_bitrate_bps: bitrate / 2.0,
            mean_packet_bits: 1400.0,
            packets: 10,
            raw_bitrate_bps: 2e7,
            reduction_pct: 100.0 * (1.0 - bitrate / 2e7),
            f1: f1.map(|f1| F1 { f1, precision: f1, recall: f1, zero_division: false }),
            train_loss: vec![],
        };
        BenchReport {
            rows: vec![row("full", 1e5, Some(0.9), RowStatus::Ok), row("mp-4", 3e5, None, RowStatus::Failed("boom".into()))],
            clips: 2,
            events: 10,
            duration_s: 1.0,
        }
    }

    #[test]
    fn csv_columns_and_reduction_recomputable() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &report()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(&header[..7], ["variant", "bitrate_bps", "mean_packet_bits", "f1", "precision", "recall", "reduction_pct"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            let bitrate: f64 = r[1].parse().unwrap();
            let raw: f64 = r[7].parse().unwrap();
            let reduction: f64 = r[6].parse().unwrap();
            assert!((reduction - 100.0 * (1.0 - bitrate / raw)).abs() < 1e-5);
        }
        assert_eq!(&rows[1][3], "");
        assert!(rows[1][12].starts_with("failed"));
    }

    #[test]
    fn svg_has_a_point_per_variant() {
        let mut buf = Vec::new();
        write_svg(&mut buf, &report()).unwrap();
        let svg = String::from_utf8(buf).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(">mp-4</text>"));
    }
}
