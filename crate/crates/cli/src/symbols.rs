//! Symbol files: one decimal symbol per line, or one byte per symbol.

use std::fmt::Write as _;

use ppmu::{Alphabet, SymbolSeq};

use crate::error::{CliError, Result};

pub fn to_lines(x: &SymbolSeq) -> String {
    let mut out = String::with_capacity(x.len() * 2);
    for &s in x.as_slice() {
        writeln!(out, "{s}").expect("string write");
    }
    out
}

/// Parses one symbol per line; blank lines are skipped.
pub fn from_lines(text: &str, alphabet: Alphabet) -> Result<SymbolSeq> {
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let s: usize = line
            .parse()
            .map_err(|_| CliError::Format(format!("line {}: {line:?} is not a symbol", i + 1)))?;
        if !alphabet.contains(s) {
            return Err(CliError::Format(format!(
                "line {}: symbol {s} outside alphabet of size {}",
                i + 1,
                alphabet.size()
            )));
        }
        data.push(s);
    }
    Ok(SymbolSeq::new(alphabet, data)?)
}

pub fn to_raw(x: &SymbolSeq) -> Result<Vec<u8>> {
    if x.alphabet().size() > 256 {
        return Err(CliError::Spec("raw output needs an alphabet of at most 256 symbols".into()));
    }
    Ok(x.as_slice().iter().map(|&s| s as u8).collect())
}

pub fn from_raw(bytes: &[u8], alphabet: Alphabet) -> Result<SymbolSeq> {
    if let Some((i, &b)) = bytes.iter().enumerate().find(|(_, &b)| !alphabet.contains(b as usize)) {
        return Err(CliError::Format(format!(
            "byte {i}: symbol {b} outside alphabet of size {}",
            alphabet.size()
        )));
    }
    Ok(SymbolSeq::new(alphabet, bytes.iter().map(|&b| b as usize).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let a = Alphabet::new(3).unwrap();
        let x = SymbolSeq::from_digits(a, "0120021").unwrap();
        assert_eq!(from_lines(&to_lines(&x), a).unwrap(), x);
        assert_eq!(to_lines(&SymbolSeq::empty(a)), "");
    }

    #[test]
    fn rejects_bad_symbols() {
        let a = Alphabet::BINARY;
        assert!(matches!(from_lines("0\n2\n", a), Err(CliError::Format(_))));
        assert!(matches!(from_lines("0\nx\n", a), Err(CliError::Format(_))));
        assert!(matches!(from_raw(&[0, 1, 5], a), Err(CliError::Format(_))));
    }

    #[test]
    fn raw_round_trip() {
        let a = Alphabet::new(4).unwrap();
        let x = SymbolSeq::from_digits(a, "3210").unwrap();
        assert_eq!(from_raw(&to_raw(&x).unwrap(), a).unwrap(), x);
    }
}
