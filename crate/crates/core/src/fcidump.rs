//! Active-space Hamiltonians and the FCIDUMP text format.
//!
//! Two-electron integrals are in chemists' notation `(pq|rs)` and are stored
//! once per 8-fold permutation class, indexed by compound pair indices.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// Compound index of the unordered pair `{p, q}`.
#[inline]
pub fn pair_index(p: usize, q: usize) -> usize {
    if p >= q {
        p * (p + 1) / 2 + q
    } else {
        q * (q + 1) / 2 + p
    }
}

/// Core energy, one-body matrix and two-body tensor of an active space.
#[derive(Clone, Debug, PartialEq)]
pub struct Integrals {
    pub norb: usize,
    pub nelec_alpha: usize,
    pub nelec_beta: usize,
    pub e_core: f64,
    /// Orbital symmetry labels from the header. Not used downstream.
    pub orbsym: Vec<u32>,
    pub isym: u32,
    h: Vec<f64>,
    v: Vec<f64>,
}

impl Integrals {
    /// All-zero integrals.
    pub fn zeros(norb: usize, nelec_alpha: usize, nelec_beta: usize) -> Self {
        let npair = norb * (norb + 1) / 2;
        Self {
            norb,
            nelec_alpha,
            nelec_beta,
            e_core: 0.0,
            orbsym: vec![1; norb],
            isym: 1,
            h: vec![0.0; norb * norb],
            v: vec![0.0; npair * (npair + 1) / 2],
        }
    }

    pub fn npair(&self) -> usize {
        self.norb * (self.norb + 1) / 2
    }

    #[inline]
    pub fn h(&self, p: usize, q: usize) -> f64 {
        self.h[p * self.norb + q]
    }

    /// Sets `h[p,q]` and `h[q,p]`.
    pub fn set_h(&mut self, p: usize, q: usize, value: f64) {
        self.h[p * self.norb + q] = value;
        self.h[q * self.norb + p] = value;
    }

    /// Dense row-major one-body matrix.
    pub fn one_body(&self) -> &[f64] {
        &self.h
    }

    #[inline]
    pub fn v(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.v[pair_index(pair_index(p, q), pair_index(r, s))]
    }

    /// `(pq|rs)` over compound pair indices.
    #[inline]
    pub fn v_pairs(&self, pq: usize, rs: usize) -> f64 {
        self.v[pair_index(pq, rs)]
    }

    /// Sets `(pq|rs)` and all of its permutation images.
    pub fn set_v(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        let idx = pair_index(pair_index(p, q), pair_index(r, s));
        self.v[idx] = value;
    }

    /// Canonical `(p, q, r, s, value)` entries with `p ≥ q`, `r ≥ s`, `pq ≥ rs`.
    pub fn canonical_two_body(&self) -> impl Iterator<Item = (usize, usize, usize, usize, f64)> + '_ {
        let n = self.norb;
        (0..n).flat_map(move |p| {
            (0..=p).flat_map(move |q| {
                let pq = pair_index(p, q);
                (0..=p).flat_map(move |r| {
                    let smax = if r == p { q } else { r };
                    (0..=smax).map(move |s| {
                        let rs = pair_index(r, s);
                        (p, q, r, s, self.v[pair_index(pq, rs)])
                    })
                })
            })
        })
    }

    /// Mean-field energy of the aufbau determinant.
    pub fn hartree_fock_energy(&self) -> f64 {
        let det = crate::Determinant::aufbau(self.nelec_alpha, self.nelec_beta);
        crate::hamiltonian::diagonal_element(&det, self)
    }
}

struct HeaderToken {
    text: String,
    line: usize,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let cleaned: String = field
        .chars()
        .map(|c| if c == 'D' || c == 'd' { 'e' } else { c })
        .collect();
    cleaned
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("non-numeric value {field:?}")))
}

/// Parses FCIDUMP text. Indices are 1-based in the file and 0-based in the
/// result. Later duplicate entries overwrite earlier ones.
pub fn parse_fcidump(text: &str) -> Result<Integrals> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut tokens: Vec<HeaderToken> = Vec::new();
    let mut started = false;
    let mut header_end = None;
    for (lineno, raw) in lines.by_ref() {
        let mut line = raw.trim();
        if !started {
            if line.is_empty() {
                continue;
            }
            let upper = line.to_ascii_uppercase();
            if !upper.starts_with("&FCI") {
                return Err(parse_err(lineno, "expected namelist header starting with &FCI"));
            }
            line = &line[4..];
            started = true;
        }
        let upper = line.to_ascii_uppercase();
        let (body, done) = if let Some(pos) = upper.find("&END") {
            (&line[..pos], true)
        } else if let Some(stripped) = line.strip_suffix('/') {
            (stripped, true)
        } else {
            (line, false)
        };
        for piece in body.split(|c: char| c == ',' || c.is_whitespace()) {
            if !piece.is_empty() {
                tokens.push(HeaderToken {
                    text: piece.to_string(),
                    line: lineno,
                });
            }
        }
        if done {
            header_end = Some(lineno);
            break;
        }
    }
    let header_end = header_end.ok_or_else(|| parse_err(text.lines().count().max(1), "unterminated namelist header"))?;

    // key -> (values, line of the key)
    let mut fields: Vec<(String, Vec<(String, usize)>, usize)> = Vec::new();
    for tok in tokens {
        let t = tok.text.as_str();
        if let Some(eq) = t.find('=') {
            let key = t[..eq].trim().to_ascii_uppercase();
            if key.is_empty() {
                return Err(parse_err(tok.line, format!("malformed header field {t:?}")));
            }
            let mut values = Vec::new();
            let rest = t[eq + 1..].trim();
            if !rest.is_empty() {
                values.push((rest.to_string(), tok.line));
            }
            fields.push((key, values, tok.line));
        } else {
            match fields.last_mut() {
                Some((_, values, _)) => values.push((tok.text.clone(), tok.line)),
                None => return Err(parse_err(tok.line, format!("value {t:?} before any key"))),
            }
        }
    }
    let lookup = |key: &str| fields.iter().rev().find(|(k, _, _)| k == key);
    let scalar = |key: &str, required: bool| -> Result<Option<i64>> {
        match lookup(key) {
            None if required => Err(parse_err(header_end, format!("missing {key} in header"))),
            None => Ok(None),
            Some((_, values, line)) => {
                if values.len() != 1 {
                    return Err(parse_err(*line, format!("{key} expects one value")));
                }
                let (v, l) = &values[0];
                v.parse::<i64>()
                    .map(Some)
                    .map_err(|_| parse_err(*l, format!("{key}={v:?} is not an integer")))
            }
        }
    };
    let norb = scalar("NORB", true)?.unwrap_or(0);
    let nelec = scalar("NELEC", true)?.unwrap_or(0);
    let ms2 = scalar("MS2", false)?.unwrap_or(0);
    let isym = scalar("ISYM", false)?.unwrap_or(1);
    if let Some((_, values, line)) = lookup("UHF").or_else(|| lookup("IUHF")) {
        let flag = values.first().map(|(v, _)| v.to_ascii_uppercase());
        if matches!(flag.as_deref(), Some(".TRUE.") | Some("T") | Some("TRUE") | Some("1")) {
            return Err(parse_err(*line, "unrestricted dumps are not supported"));
        }
    }
    let key_line = |k: &str| lookup(k).map(|f| f.2).unwrap_or(header_end);
    if !(1..=crate::determinant::MAX_ORBITALS as i64).contains(&norb) {
        return Err(parse_err(key_line("NORB"), format!("NORB={norb} out of range")));
    }
    if nelec < 0 || (nelec + ms2) % 2 != 0 || ms2.abs() > nelec {
        return Err(parse_err(
            key_line("NELEC"),
            format!("inconsistent NELEC={nelec}, MS2={ms2}"),
        ));
    }
    let norb = norb as usize;
    let na = ((nelec + ms2) / 2) as usize;
    let nb = ((nelec - ms2) / 2) as usize;
    if na > norb || nb > norb {
        return Err(parse_err(
            key_line("NELEC"),
            format!("{nelec} electrons do not fit in {norb} orbitals"),
        ));
    }
    let mut ints = Integrals::zeros(norb, na, nb);
    ints.isym = isym.max(0) as u32;
    if let Some((_, values, _)) = lookup("ORBSYM") {
        if values.len() != norb {
            return Err(parse_err(key_line("ORBSYM"), "ORBSYM length differs from NORB"));
        }
        ints.orbsym = values
            .iter()
            .map(|(v, l)| {
                v.parse::<u32>()
                    .map_err(|_| parse_err(*l, format!("ORBSYM entry {v:?} is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
    }

    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let value = parse_value(fields[0], lineno)?;
        let mut idx = [0usize; 4];
        for (slot, f) in idx.iter_mut().zip(&fields[1..]) {
            let i: i64 = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("non-integer index {f:?}")))?;
            if i < 0 || i > norb as i64 {
                return Err(Error::Index {
                    line: lineno,
                    index: i,
                    norb,
                });
            }
            *slot = i as usize;
        }
        match idx {
            [0, 0, 0, 0] => ints.e_core = value,
            [p, q, 0, 0] if p > 0 && q > 0 => ints.set_h(p - 1, q - 1, value),
            [p, q, r, s] if p > 0 && q > 0 && r > 0 && s > 0 => {
                ints.set_v(p - 1, q - 1, r - 1, s - 1, value)
            }
            // orbital energies
            [p, 0, 0, 0] if p > 0 => {}
            _ => return Err(parse_err(lineno, "unrecognized index pattern")),
        }
    }
    Ok(ints)
}

/// Writes FCIDUMP text: header, canonical two-body entries, one-body entries
/// with `p ≥ q`, and the core energy. Values carry 17 significant digits so
/// parsing the output reproduces every value bit for bit.
pub fn emit_fcidump(ints: &Integrals) -> String {
    let mut out = String::new();
    let nelec = ints.nelec_alpha + ints.nelec_beta;
    let ms2 = ints.nelec_alpha as i64 - ints.nelec_beta as i64;
    let _ = writeln!(out, "&FCI NORB={},NELEC={},MS2={},", ints.norb, nelec, ms2);
    out.push_str(" ORBSYM=");
    for s in &ints.orbsym {
        let _ = write!(out, "{s},");
    }
    out.push('\n');
    let _ = writeln!(out, " ISYM={},", ints.isym);
    out.push_str("&END\n");
    let mut line = |v: f64, p: usize, q: usize, r: usize, s: usize| {
        let _ = writeln!(out, "{v:.16e} {p:>4} {q:>4} {r:>4} {s:>4}");
    };
    for (p, q, r, s, v) in ints.canonical_two_body() {
        if v != 0.0 {
            line(v, p + 1, q + 1, r + 1, s + 1);
        }
    }
    for p in 0..ints.norb {
        for q in 0..=p {
            let v = ints.h(p, q);
            if v != 0.0 {
                line(v, p + 1, q + 1, 0, 0);
            }
        }
    }
    line(ints.e_core, 0, 0, 0, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_energy_only() {
        let ints = parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n-1.25 0 0 0 0\n").unwrap();
        assert_eq!(ints.norb, 2);
        assert_eq!((ints.nelec_alpha, ints.nelec_beta), (1, 1));
        assert_eq!(ints.e_core, -1.25);
        assert!(ints.one_body().iter().all(|&x| x == 0.0));
        let text = emit_fcidump(&ints);
        let body: Vec<&str> = text.lines().skip_while(|l| !l.contains("&END")).skip(1).collect();
        assert_eq!(body.len(), 1);
        assert!(body[0].ends_with("0    0    0    0"));
    }

    #[test]
    fn two_body_symmetry_closure() {
        let ints = parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0 /\n0.7 1 1 1 1\n0.3 2 1 2 2\n").unwrap();
        assert_eq!(ints.v(0, 0, 0, 0), 0.7);
        for (p, q, r, s) in [
            (1, 0, 1, 1),
            (0, 1, 1, 1),
            (1, 1, 1, 0),
            (1, 1, 0, 1),
        ] {
            assert_eq!(ints.v(p, q, r, s), 0.3);
        }
    }

    #[test]
    fn one_body_single_line() {
        let mut ints = Integrals::zeros(3, 1, 1);
        ints.set_h(0, 1, 0.1);
        let text = emit_fcidump(&ints);
        let count = text.lines().filter(|l| l.ends_with("0    0") && !l.ends_with("0    0    0    0")).count();
        assert_eq!(count, 1);
        assert_eq!(parse_fcidump(&text).unwrap(), ints);
    }

    #[test]
    fn last_entry_wins_and_fortran_exponents() {
        let ints =
            parse_fcidump("&FCI NORB=1,NELEC=2,MS2=0,\n ORBSYM=1,\n ISYM=1,\n&END\n1.0 1 1 0 0\n2.5D-1 1 1 0 0\n").unwrap();
        assert_eq!(ints.h(0, 0), 0.25);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            parse_fcidump("NORB=2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_fcidump("&FCI NORB=two,NELEC=2 &END\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 3 1 1 1\n"),
            Err(Error::Index { line: 3, index: 3, .. })
        ));
        assert!(matches!(
            parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0,\n&END\nabc 1 1 1 1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0,\n"),
            Err(Error::Parse { .. })
        ));
    }
}
