//! Plain-text reaction network format.
//!
//! ```text
//! #! species: X, Y, Z
//! X + Y <-> Z ; k1, k2   # reversible pair, forward label first
//! Z -> 2X ; k3
//! X -> 0 ; k4
//! ```
//!
//! One reaction per line, `#` starts a comment. The optional `#! species:`
//! pragma fixes the species order; otherwise species are numbered by first
//! appearance.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{Complex, NetworkError, ReactionNetwork};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSource {
    pub text: String,
    pub name: Option<String>,
}

impl NetworkSource {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            name: None,
        }
    }

    pub fn named(text: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            name: Some(name.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.file, self.line, self.column, sev, self.message
        )
    }
}

/// Result of a parse: the network if there were no errors, plus all diagnostics.
#[derive(Debug, Clone)]
pub struct ParseOutput {
    pub network: Option<ReactionNetwork>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseOutput {
    pub fn errors(&self) -> impl Iterator<Item = &ParseDiagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }
}

pub fn parse_network(src: &NetworkSource) -> Result<ReactionNetwork, Vec<ParseDiagnostic>> {
    let out = parse(src);
    match out.network {
        Some(n) => Ok(n),
        None => Err(out.diagnostics),
    }
}

/// Parses raw bytes; invalid UTF-8 is reported as a diagnostic.
pub fn parse_bytes(bytes: &[u8], name: Option<&str>) -> ParseOutput {
    let file = name.unwrap_or("<input>").to_string();
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(&NetworkSource {
            text: text.to_string(),
            name: Some(file),
        }),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or("");
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            ParseOutput {
                network: None,
                diagnostics: vec![ParseDiagnostic {
                    file,
                    line,
                    column,
                    severity: Severity::Error,
                    message: "invalid UTF-8".to_string(),
                }],
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Plus,
    Arrow,
    BiArrow,
    Semi,
    Comma,
}

#[derive(Debug)]
struct LineError {
    col: usize,
    msg: String,
}

fn err<T>(col: usize, msg: impl Into<String>) -> Result<T, LineError> {
    Err(LineError {
        col,
        msg: msg.into(),
    })
}

fn lex(line: &str) -> Result<Vec<(Tok, usize)>, LineError> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len()
                && (chars[i] == '.'
                    || chars[i] == '/'
                    || chars[i] == 'e' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()))
            {
                return err(col, "stoichiometric coefficients must be positive integers");
            }
            let digits: String = chars[start..i].iter().collect();
            let Ok(v) = digits.parse::<u64>() else {
                return err(col, format!("coefficient {digits} is too large"));
            };
            toks.push((Tok::Int(v), col));
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        match c {
            '+' => {
                toks.push((Tok::Plus, col));
                i += 1;
            }
            ';' => {
                toks.push((Tok::Semi, col));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, col));
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                toks.push((Tok::Arrow, col));
                i += 2;
            }
            '-' if chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) => {
                return err(col, "stoichiometric coefficients must be positive integers");
            }
            '<' if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') => {
                toks.push((Tok::BiArrow, col));
                i += 3;
            }
            _ => return err(col, format!("unexpected character '{}'", c.escape_debug())),
        }
    }
    Ok(toks)
}

struct RawReaction {
    lhs: Vec<(String, u64)>,
    rhs: Vec<(String, u64)>,
    reversible: bool,
    labels: Vec<(String, usize)>,
    col: usize,
}

fn parse_complex(
    toks: &[(Tok, usize)],
    pos: &mut usize,
    end_col: usize,
) -> Result<Vec<(String, u64)>, LineError> {
    if let Some((Tok::Int(0), _)) = toks.get(*pos) {
        if !matches!(toks.get(*pos + 1), Some((Tok::Ident(_), _))) {
            *pos += 1;
            return Ok(Vec::new());
        }
    }
    let mut terms = Vec::new();
    loop {
        let mut coef = 1;
        if let Some((Tok::Int(v), c)) = toks.get(*pos) {
            if *v == 0 {
                return err(*c, "stoichiometric coefficients must be positive integers");
            }
            coef = *v;
            *pos += 1;
        }
        match toks.get(*pos) {
            Some((Tok::Ident(name), _)) => {
                terms.push((name.clone(), coef));
                *pos += 1;
            }
            Some((t, c)) => {
                return err(*c, format!("expected species name, found {}", describe(t)))
            }
            None => return err(end_col, "expected species name"),
        }
        if let Some((Tok::Plus, _)) = toks.get(*pos) {
            *pos += 1;
            continue;
        }
        return Ok(terms);
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(v) => format!("'{v}'"),
        Tok::Plus => "'+'".into(),
        Tok::Arrow => "'->'".into(),
        Tok::BiArrow => "'<->'".into(),
        Tok::Semi => "';'".into(),
        Tok::Comma => "','".into(),
    }
}

fn parse_line(line: &str) -> Result<Option<RawReaction>, LineError> {
    let toks = lex(line)?;
    if toks.is_empty() {
        return Ok(None);
    }
    let end_col = line.chars().count() + 1;
    let col = toks[0].1;
    let mut pos = 0;
    let lhs = parse_complex(&toks, &mut pos, end_col)?;
    let reversible = match toks.get(pos) {
        Some((Tok::Arrow, _)) => false,
        Some((Tok::BiArrow, _)) => true,
        Some((t, c)) => return err(*c, format!("expected '->' or '<->', found {}", describe(t))),
        None => return err(end_col, "expected '->' or '<->'"),
    };
    pos += 1;
    let rhs = parse_complex(&toks, &mut pos, end_col)?;
    match toks.get(pos) {
        Some((Tok::Semi, _)) => pos += 1,
        Some((t, c)) => {
            return err(
                *c,
                format!("expected ';' before rate labels, found {}", describe(t)),
            )
        }
        None => return err(end_col, "expected ';' followed by rate labels"),
    }
    let mut labels = Vec::new();
    loop {
        match toks.get(pos) {
            Some((Tok::Ident(l), c)) => labels.push((l.clone(), *c)),
            Some((t, c)) => return err(*c, format!("expected rate label, found {}", describe(t))),
            None => return err(end_col, "expected rate label"),
        }
        pos += 1;
        match toks.get(pos) {
            None => break,
            Some((Tok::Comma, _)) => pos += 1,
            Some((t, c)) => {
                return err(
                    *c,
                    format!("expected ',' or end of line, found {}", describe(t)),
                )
            }
        }
    }
    let want = if reversible { 2 } else { 1 };
    if labels.len() != want {
        let c = labels.get(want).map_or(labels[0].1, |l| l.1);
        return err(
            c,
            format!(
                "'{}' takes {want} rate label{}, found {}",
                if reversible { "<->" } else { "->" },
                if want == 1 { "" } else { "s" },
                labels.len()
            ),
        );
    }
    Ok(Some(RawReaction {
        lhs,
        rhs,
        reversible,
        labels,
        col,
    }))
}

fn parse_pragma(rest: &str, offset: usize) -> Result<Vec<(String, usize)>, LineError> {
    let mut out = Vec::new();
    let mut col = offset;
    for part in rest.split(',') {
        let lead = part.chars().take_while(|c| c.is_whitespace()).count();
        let name = part.trim();
        let c = col + lead;
        if !name.is_empty() {
            let ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return err(c, format!("invalid species name '{name}'"));
            }
            out.push((name.to_string(), c));
        }
        col += part.chars().count() + 1;
    }
    Ok(out)
}

pub fn parse(src: &NetworkSource) -> ParseOutput {
    let file = src.name.clone().unwrap_or_else(|| "<input>".to_string());
    let mut diags = Vec::new();
    let diag = |line: usize, col: usize, severity: Severity, message: String| ParseDiagnostic {
        file: file.clone(),
        line,
        column: col.max(1),
        severity,
        message,
    };

    let mut species: Vec<String> = Vec::new();
    let mut declared: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut used: BTreeMap<String, ()> = BTreeMap::new();
    let mut reactions: Vec<(Complex, Complex, String, usize, usize)> = Vec::new();
    let mut raw: Vec<(RawReaction, usize)> = Vec::new();

    for (idx, line) in src.text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("#!") {
            let lead = line.chars().count() - trimmed.chars().count();
            let body = rest.trim_start();
            let Some(list) = body.strip_prefix("species:") else {
                diags.push(diag(
                    lineno,
                    lead + 1,
                    Severity::Warning,
                    "unknown pragma ignored".into(),
                ));
                continue;
            };
            let offset =
                lead + 2 + (rest.chars().count() - body.chars().count()) + "species:".len() + 1;
            match parse_pragma(list, offset) {
                Ok(names) => {
                    for (n, c) in names {
                        if declared.contains_key(&n) {
                            diags.push(diag(
                                lineno,
                                c,
                                Severity::Error,
                                format!("species {n} declared twice"),
                            ));
                        } else {
                            declared.insert(n.clone(), (lineno, c));
                            species.push(n);
                        }
                    }
                }
                Err(e) => diags.push(diag(lineno, e.col, Severity::Error, e.msg)),
            }
            continue;
        }
        match parse_line(line) {
            Ok(Some(r)) => raw.push((r, lineno)),
            Ok(None) => {}
            Err(e) => diags.push(diag(lineno, e.col, Severity::Error, e.msg)),
        }
    }

    for (r, _) in &raw {
        for (name, _) in r.lhs.iter().chain(&r.rhs) {
            used.insert(name.clone(), ());
            if !species.contains(name) {
                species.push(name.clone());
            }
        }
    }
    for (name, (line, col)) in &declared {
        if !used.contains_key(name) {
            diags.push(diag(
                *line,
                *col,
                Severity::Warning,
                format!("species {name} does not occur in any reaction"),
            ));
        }
    }

    let n = species.len();
    let to_complex = |terms: &[(String, u64)]| -> Result<Complex, String> {
        let mut c = vec![0u32; n];
        for (name, k) in terms {
            let i = species
                .iter()
                .position(|s| s == name)
                .expect("species registered above");
            let total = c[i] as u64 + k;
            if total > u32::MAX as u64 {
                return Err(format!("coefficient of {name} is too large"));
            }
            c[i] = total as u32;
        }
        Ok(Complex::new(c))
    };

    let mut labels_seen: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (r, lineno) in &raw {
        let (a, b) = match (to_complex(&r.lhs), to_complex(&r.rhs)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(m), _) | (_, Err(m)) => {
                diags.push(diag(*lineno, r.col, Severity::Error, m));
                continue;
            }
        };
        if a == b {
            diags.push(diag(
                *lineno,
                r.col,
                Severity::Error,
                "reactant and product complexes are identical".into(),
            ));
            continue;
        }
        let mut pairs = vec![(a.clone(), b.clone(), &r.labels[0])];
        if r.reversible {
            pairs.push((b, a, &r.labels[1]));
        }
        for (x, y, (label, col)) in pairs {
            if let Some((l0, _)) = labels_seen.get(label) {
                diags.push(diag(
                    *lineno,
                    *col,
                    Severity::Error,
                    format!("rate label {label} already used on line {l0}"),
                ));
                continue;
            }
            labels_seen.insert(label.clone(), (*lineno, *col));
            if let Some(prev) = reactions.iter().find(|p| p.0 == x && p.1 == y) {
                diags.push(diag(
                    *lineno,
                    *col,
                    Severity::Error,
                    format!("reaction duplicates {} on line {}", prev.2, prev.3),
                ));
                continue;
            }
            reactions.push((x, y, label.clone(), *lineno, *col));
        }
    }

    if diags.iter().any(|d| d.severity == Severity::Error) {
        diags.sort_by_key(|d| (d.line, d.column));
        return ParseOutput {
            network: None,
            diagnostics: diags,
        };
    }
    let built = ReactionNetwork::from_reactions(
        species,
        reactions.into_iter().map(|(a, b, l, _, _)| (a, b, l)),
    );
    match built {
        Ok(net) => {
            diags.sort_by_key(|d| (d.line, d.column));
            ParseOutput {
                network: Some(net),
                diagnostics: diags,
            }
        }
        Err(e) => {
            let msg = match e {
                NetworkError::DuplicateSpecies(s) => format!("species {s} declared twice"),
                other => other.to_string(),
            };
            diags.push(diag(1, 1, Severity::Error, msg));
            ParseOutput {
                network: None,
                diagnostics: diags,
            }
        }
    }
}

/// Canonical text: species pragma, then one irreversible reaction per line.
pub fn render_network(net: &ReactionNetwork) -> NetworkSource {
    let mut s = format!("#! species: {}\n", net.species().join(", "));
    for r in net.reactions() {
        s.push_str(&format!(
            "{} -> {} ; {}\n",
            net.complex_to_string(&net.complexes()[r.reactant]),
            net.complex_to_string(&net.complexes()[r.product]),
            r.label
        ));
    }
    NetworkSource {
        text: s,
        name: None,
    }
}
