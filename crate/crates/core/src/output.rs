//! Flat output rows shared by every command, and their CSV encoding.

use serde::{Deserialize, Serialize};

use crate::markov::Mode;
use crate::metrics::{OutageProfile, PerformancePoint};
use crate::simulator::SimResult;

pub const CSV_COLUMNS: [&str; 18] = [
    "mode",
    "snr_db",
    "rate_bpshz",
    "p12",
    "p21",
    "p1r",
    "p2r",
    "pr1",
    "pr2",
    "goodput_bpshz",
    "normalized_rate",
    "eb_paper",
    "eb_renewal",
    "eb_empirical",
    "goodput_empirical",
    "source",
    "stderr_goodput",
    "stderr_eb",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Analytic,
    Mc,
}

impl RecordSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordSource::Analytic => "analytic",
            RecordSource::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub mode: Mode,
    pub snr_db: f64,
    pub rate_bpshz: f64,
    pub p12: Option<f64>,
    pub p21: Option<f64>,
    pub p1r: Option<f64>,
    pub p2r: Option<f64>,
    pub pr1: Option<f64>,
    pub pr2: Option<f64>,
    pub goodput_bpshz: Option<f64>,
    pub normalized_rate: Option<f64>,
    pub eb_paper: Option<f64>,
    pub eb_renewal: Option<f64>,
    pub eb_empirical: Option<f64>,
    pub goodput_empirical: Option<f64>,
    pub source: RecordSource,
    pub stderr_goodput: Option<f64>,
    pub stderr_eb: Option<f64>,
}

impl OutputRecord {
    pub fn from_point(snr_db: f64, mode: Mode, pt: &PerformancePoint, sim: Option<&SimResult>) -> Self {
        let mut rec = Self {
            mode,
            snr_db,
            rate_bpshz: pt.rate,
            p12: None,
            p21: None,
            p1r: None,
            p2r: None,
            pr1: None,
            pr2: None,
            goodput_bpshz: Some(pt.goodput),
            normalized_rate: Some(pt.normalized_rate),
            eb_paper: Some(pt.eb_paper),
            eb_renewal: Some(pt.eb_renewal),
            eb_empirical: None,
            goodput_empirical: None,
            source: RecordSource::Analytic,
            stderr_goodput: None,
            stderr_eb: None,
        };
        match pt.outage {
            OutageProfile::Af(p) => {
                rec.p12 = Some(p.p12);
                rec.p21 = Some(p.p21);
            }
            OutageProfile::Df(p) => {
                rec.p1r = Some(p.p1r);
                rec.p2r = Some(p.p2r);
                rec.pr1 = Some(p.pr1);
                rec.pr2 = Some(p.pr2);
            }
        }
        if let Some(sim) = sim {
            rec.source = RecordSource::Mc;
            rec.goodput_empirical = Some(sim.empirical_goodput.value);
            rec.stderr_goodput = Some(sim.empirical_goodput.stderr);
            rec.eb_empirical = Some(sim.empirical_eb.value);
            rec.stderr_eb = Some(sim.empirical_eb.stderr);
        }
        rec
    }

    fn numeric_fields(&self) -> [Option<f64>; 16] {
        [
            Some(self.snr_db),
            Some(self.rate_bpshz),
            self.p12,
            self.p21,
            self.p1r,
            self.p2r,
            self.pr1,
            self.pr2,
            self.goodput_bpshz,
            self.normalized_rate,
            self.eb_paper,
            self.eb_renewal,
            self.eb_empirical,
            self.goodput_empirical,
            self.stderr_goodput,
            self.stderr_eb,
        ]
    }

    pub fn to_csv_fields(&self) -> Vec<String> {
        let n = self.numeric_fields();
        let cell = |v: Option<f64>| v.map(format_g12).unwrap_or_default();
        let mut out = vec![self.mode.as_str().to_string()];
        out.extend(n[..14].iter().map(|&v| cell(v)));
        out.push(self.source.as_str().to_string());
        out.extend(n[14..].iter().map(|&v| cell(v)));
        out
    }

    pub fn from_csv_fields(fields: &[&str]) -> Result<Self, String> {
        if fields.len() != CSV_COLUMNS.len() {
            return Err(format!("expected {} fields, got {}", CSV_COLUMNS.len(), fields.len()));
        }
        let opt = |i: usize| -> Result<Option<f64>, String> {
            let s = fields[i];
            if s.is_empty() {
                return Ok(None);
            }
            parse_g(s)
                .map(Some)
                .ok_or_else(|| format!("column {}: bad number `{s}`", CSV_COLUMNS[i]))
        };
        let req = |i: usize| -> Result<f64, String> {
            opt(i)?.ok_or_else(|| format!("column {} is required", CSV_COLUMNS[i]))
        };
        let source = match fields[15] {
            "analytic" => RecordSource::Analytic,
            "mc" => RecordSource::Mc,
            other => return Err(format!("unknown source `{other}`")),
        };
        Ok(Self {
            mode: fields[0].parse()?,
            snr_db: req(1)?,
            rate_bpshz: req(2)?,
            p12: opt(3)?,
            p21: opt(4)?,
            p1r: opt(5)?,
            p2r: opt(6)?,
            pr1: opt(7)?,
            pr2: opt(8)?,
            goodput_bpshz: opt(9)?,
            normalized_rate: opt(10)?,
            eb_paper: opt(11)?,
            eb_renewal: opt(12)?,
            eb_empirical: opt(13)?,
            goodput_empirical: opt(14)?,
            source,
            stderr_goodput: opt(16)?,
            stderr_eb: opt(17)?,
        })
    }
}

/// `%.12g`: 12 significant digits, trailing zeros stripped, exponent form
/// outside `1e-4 <= |x| < 1e12`.
pub fn format_g12(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_g(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn write_csv<W: std::io::Write>(out: W, records: &[OutputRecord]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(r.to_csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[OutputRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

pub fn parse_csv(text: &str) -> Result<Vec<OutputRecord>, String> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(format!("unexpected header: {header:?}"));
    }
    rd.records()
        .map(|row| {
            let row = row.map_err(|e| e.to_string())?;
            let fields: Vec<&str> = row.iter().collect();
            OutputRecord::from_csv_fields(&fields)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EnergyUnits, NetworkConfig};
    use crate::metrics::analyze_point;
    use proptest::prelude::*;

    #[test]
    fn g12_matches_printf() {
        let cases = [
            (1.0, "1"),
            (0.5, "0.5"),
            (1.0 / 3.0, "0.333333333333"),
            (2.0 / 3.0, "0.666666666667"),
            (123456.789, "123456.789"),
            (1e-4, "0.0001"),
            (1.5e-5, "1.5e-05"),
            (1e12, "1e+12"),
            (999999999999.0, "999999999999"),
            (-2.5e-7, "-2.5e-07"),
            (6.02214076e23, "6.02214076e+23"),
            (0.0, "0"),
            (f64::INFINITY, "inf"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g12(x), want, "{x}");
        }
    }

    #[test]
    fn header_present_for_empty_output() {
        assert_eq!(to_csv_string(&[]), CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn af_and_df_rows_fill_their_own_columns() {
        let cfg = NetworkConfig::reference(10.0);
        let af = analyze_point(&cfg, Mode::Af, 2.0, EnergyUnits::Joules).unwrap();
        let df = analyze_point(&cfg, Mode::Df, 2.0, EnergyUnits::Joules).unwrap();
        let text = to_csv_string(&[
            OutputRecord::from_point(10.0, Mode::Af, &af, None),
            OutputRecord::from_point(10.0, Mode::Df, &df, None),
        ]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].starts_with("af,10,2,0."));
        assert!(lines[1].contains(",,,,,"));
        assert!(lines[2].starts_with("df,10,2,,,0."));
        assert!(lines[2].ends_with(",analytic,,"));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e30f64..1e30, -1e-3f64..1e-3, Just(0.0), Just(f64::INFINITY)]
    }

    proptest! {
        #[test]
        fn csv_round_trips(
            df in any::<bool>(),
            mc in any::<bool>(),
            vals in prop::collection::vec(finite(), 16),
        ) {
            let some = |i: usize| Some(vals[i]);
            let rec = OutputRecord {
                mode: if df { Mode::Df } else { Mode::Af },
                snr_db: vals[0],
                rate_bpshz: vals[1],
                p12: if df { None } else { some(2) },
                p21: if df { None } else { some(3) },
                p1r: if df { some(4) } else { None },
                p2r: if df { some(5) } else { None },
                pr1: if df { some(6) } else { None },
                pr2: if df { some(7) } else { None },
                goodput_bpshz: some(8),
                normalized_rate: some(9),
                eb_paper: some(10),
                eb_renewal: some(11),
                eb_empirical: if mc { some(12) } else { None },
                goodput_empirical: if mc { some(13) } else { None },
                source: if mc { RecordSource::Mc } else { RecordSource::Analytic },
                stderr_goodput: if mc { some(14) } else { None },
                stderr_eb: if mc { some(15) } else { None },
            };
            let text = to_csv_string(std::slice::from_ref(&rec));
            let parsed = parse_csv(&text).unwrap();
            prop_assert_eq!(to_csv_string(&parsed), text);
            let back = &parsed[0];
            for (a, b) in rec.numeric_fields().iter().zip(back.numeric_fields()) {
                match (a, b) {
                    (Some(x), Some(y)) if x.is_finite() => {
                        prop_assert!((x - y).abs() <= 1e-11 * x.abs());
                    }
                    (Some(x), Some(y)) => prop_assert_eq!(*x, y),
                    (None, None) => {}
                    _ => prop_assert!(false, "presence changed"),
                }
            }
        }
    }
}
