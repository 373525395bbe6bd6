//! USGS RDB reader.
//!
//! Both layouts are accepted: *wide* (one column per parameter, e.g.
//! `p00618`) and *long* (one record per result, with `parm_cd` and
//! `result_va` columns). Parameter descriptions in the comment block
//! (`#  P00618 - Nitrate, water, filtered, milligrams per liter`) supply
//! labels and units.

use std::collections::HashMap;
use std::io::Read;

use super::{parse_date, parse_value, IngestError, TableBuilder, TimeSeriesTable, Variable};

const DATE_COLUMNS: &[&str] = &["sample_dt", "date", "sample_date", "activity_start_date", "datetime"];

pub fn parse_rdb<R: Read>(mut input: R) -> Result<TimeSeriesTable, IngestError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;

    let mut descriptions: HashMap<String, (String, String)> = HashMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

    let header = loop {
        match lines.next() {
            Some((_, l)) if l.starts_with('#') => {
                if let Some((code, label, unit)) = parse_description(&l[1..]) {
                    descriptions.insert(code, (label, unit));
                }
            }
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(IngestError::MalformedHeader("no header line".into())),
        }
    };
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let (_, format_line) = lines
        .next()
        .ok_or_else(|| IngestError::MalformedHeader("missing column-format line".into()))?;
    validate_format_line(format_line, columns.len())?;

    let lower: Vec<String> = columns.iter().map(|c| c.to_ascii_lowercase()).collect();
    let date_col = DATE_COLUMNS
        .iter()
        .find_map(|name| lower.iter().position(|c| c == name))
        .ok_or_else(|| IngestError::MalformedHeader("no date column".into()))?;
    let medium_col = lower.iter().position(|c| c == "medium_cd");
    let parm_col = lower.iter().position(|c| c == "parm_cd");
    let result_col = lower.iter().position(|c| c == "result_va");

    let describe = |code: &str| -> Variable {
        match descriptions.get(code) {
            Some((label, unit)) => Variable {
                code: code.to_string(),
                label: label.clone(),
                unit: unit.clone(),
            },
            None => Variable::new(code),
        }
    };

    let data_lines: Vec<(usize, Vec<&str>)> = lines
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, l)| (n, l.split('\t').collect()))
        .collect();
    for (n, fields) in &data_lines {
        if fields.len() != columns.len() {
            return Err(IngestError::RaggedRow(*n));
        }
    }

    match (parm_col, result_col) {
        (Some(pc), Some(rc)) => {
            let mut codes: Vec<String> = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            for (_, f) in &data_lines {
                let code = normalize_code(f[pc].trim());
                if !index.contains_key(&code) {
                    index.insert(code.clone(), codes.len());
                    codes.push(code);
                }
            }
            let mut builder = TableBuilder::new(codes.iter().map(|c| describe(c)).collect())?;
            for (n, f) in &data_lines {
                let date = parse_date(f[date_col], *n)?;
                builder.touch(date, medium_col.map(|m| f[m].trim().to_string()))?;
                let var = index[&normalize_code(f[pc].trim())];
                builder.set(date, var, parse_value(f[rc]))?;
            }
            Ok(builder.finish())
        }
        _ => {
            let var_cols: Vec<usize> = (0..columns.len())
                .filter(|&i| i != date_col && Some(i) != medium_col && !is_metadata(&lower[i]))
                .collect();
            let variables = var_cols
                .iter()
                .map(|&i| describe(&normalize_code(columns[i])))
                .collect();
            let mut builder = TableBuilder::new(variables)?;
            for (n, f) in &data_lines {
                let date = parse_date(f[date_col], *n)?;
                builder.touch(date, medium_col.map(|m| f[m].trim().to_string()))?;
                for (v, &i) in var_cols.iter().enumerate() {
                    builder.set(date, v, parse_value(f[i]))?;
                }
            }
            debug_assert_eq!(builder.n_vars(), var_cols.len());
            Ok(builder.finish())
        }
    }
}

fn validate_format_line(line: &str, arity: usize) -> Result<(), IngestError> {
    let tokens: Vec<&str> = line.split('\t').map(str::trim).collect();
    if tokens.len() != arity {
        return Err(IngestError::MalformedHeader(format!(
            "format line has {} fields, header has {arity}",
            tokens.len()
        )));
    }
    for t in tokens {
        let digits = t.trim_end_matches(|c: char| c.is_ascii_alphabetic());
        let kind = &t[digits.len()..];
        let ok = !digits.is_empty()
            && digits.chars().all(|c| c.is_ascii_digit())
            && matches!(kind, "s" | "d" | "n");
        if !ok {
            return Err(IngestError::MalformedHeader(format!("bad format token {t:?}")));
        }
    }
    Ok(())
}

/// Agency, site, time, remark and other bookkeeping columns.
fn is_metadata(name: &str) -> bool {
    const SUFFIXES: &[&str] = &["_cd", "_tm", "_dt", "_id", "_no", "_tx", "_nm"];
    if SUFFIXES.iter().any(|s| name.ends_with(s)) {
        return true;
    }
    // remark-code companions of wide-format parameter columns (r00618)
    let b = name.as_bytes();
    b.len() == 6 && b[0] == b'r' && b[1..].iter().all(u8::is_ascii_digit)
}

/// `p00618` and `P00618` both become `00618`.
fn normalize_code(name: &str) -> String {
    let b = name.as_bytes();
    if b.len() == 6 && (b[0] == b'p' || b[0] == b'P') && b[1..].iter().all(u8::is_ascii_digit) {
        name[1..].to_string()
    } else {
        name.to_string()
    }
}

fn parse_description(comment: &str) -> Option<(String, String, String)> {
    let s = comment.trim();
    let (code, rest) = s.split_once(char::is_whitespace)?;
    let code = normalize_code(code);
    if code.len() != 5 || !code.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let desc = rest.trim_start().strip_prefix('-')?.trim();
    match desc.rsplit_once(", ") {
        Some((label, unit)) => Some((code, label.trim().to_string(), unit.trim().to_string())),
        None => Some((code, desc.to_string(), String::new())),
    }
}
