//! Plain comma-separated tables: a header row of column names followed by
//! numeric rows.

use std::io::{self, BufRead, Write};

use crate::Error;

/// Significant digits used for CSV output.
pub const CSV_DIGITS: usize = 9;
/// Significant digits used for numbers printed to the terminal.
pub const PRINT_DIGITS: usize = 6;

/// Formats `x` with `digits` significant digits in the style of C's `%g`:
/// fixed notation for moderate exponents, scientific otherwise, trailing
/// zeros removed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Round first, then read the exponent off the rounded value so that
    // 9.9999999999 rounds into the next decade correctly.
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes a header and rows of numbers with [`CSV_DIGITS`] significant
/// digits.
pub fn write_table<W: Write, R: AsRef<[f64]>>(
    mut out: W,
    header: &[impl AsRef<str>],
    rows: impl IntoIterator<Item = R>,
) -> io::Result<()> {
    let names: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
    writeln!(out, "{}", names.join(","))?;
    let mut line = String::new();
    for row in rows {
        line.clear();
        for (i, v) in row.as_ref().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt_sig(*v, CSV_DIGITS));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn read_table<R: BufRead>(input: R) -> Result<Table, Error> {
    let mut lines = input.lines();
    let header: Vec<String> = match lines.next() {
        Some(line) => line?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Parse("empty table".into())),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number `{}`", i + 2, s.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {}: expected {} fields, found {}",
                i + 2,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0, 9), "0");
        assert_eq!(fmt_sig(1.0, 9), "1");
        assert_eq!(fmt_sig(-2.5, 9), "-2.5");
        assert_eq!(fmt_sig(447.4136, 6), "447.414");
        assert_eq!(fmt_sig(0.485, 6), "0.485");
        assert_eq!(fmt_sig(6.305926e-4, 6), "0.000630593");
        assert_eq!(fmt_sig(1e-7, 9), "1e-7");
        assert_eq!(fmt_sig(2.4003e8, 9), "240030000");
        assert_eq!(fmt_sig(1.23456789012e12, 9), "1.23456789e12");
        assert_eq!(fmt_sig(9.9999999999, 6), "10");
    }

    #[test]
    fn table_round_trip() {
        let mut buf = Vec::new();
        write_table(&mut buf, &["t", "a"], [[0.0, 1.5], [1e-4, -2e-9]]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "t,a\n0,1.5\n0.0001,-2e-9\n");
        let t = read_table(&buf[..]).unwrap();
        assert_eq!(t.header, vec!["t", "a"]);
        assert_eq!(t.column("a").unwrap(), vec![1.5, -2e-9]);
        assert!(t.column("b").is_none());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(read_table(&b"a,b\n1,2\n3\n"[..]).is_err());
        assert!(read_table(&b"a\nx\n"[..]).is_err());
        assert!(read_table(&b""[..]).is_err());
    }

    proptest! {
        #[test]
        fn nine_digits_preserve_value(x in proptest::num::f64::NORMAL) {
            let back: f64 = fmt_sig(x, CSV_DIGITS).parse().unwrap();
            prop_assert!(((back - x) / x).abs() <= 5e-9);
        }
    }
}
