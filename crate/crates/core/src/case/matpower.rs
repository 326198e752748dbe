//! Reader and writer for MATPOWER version 2 case files.
//!
//! Only `baseMVA`, `bus`, `gen` and `branch` are interpreted. Any other
//! `mpc.*` assignment (gencost, bus_name, areas, ...) is parsed and skipped.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{Branch, Bus, BusKind, Generator, Load, NetworkCase, DEFAULT_V_MAX, DEFAULT_V_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("missing required entry mpc.{0}")]
    MissingMatrix(&'static str),
    #[error("mpc.{matrix} row {row}: expected at least {expected} columns, found {found}")]
    ShortRow { matrix: &'static str, row: usize, expected: usize, found: usize },
    #[error("mpc.{matrix} row {row}: reference to unknown bus {bus}")]
    DanglingBus { matrix: &'static str, row: usize, bus: usize },
    #[error("bus {0} is defined more than once")]
    DuplicateBus(usize),
    #[error("mpc.bus row {row}: invalid value {value} in column {column}")]
    InvalidValue { row: usize, column: usize, value: f64 },
    #[error("multiple slack buses: {0:?}")]
    MultipleSlack(Vec<usize>),
    #[error("no slack bus")]
    NoSlack,
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Eq,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Semi,
    Comma,
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| ParseError::Syntax { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        let start_col = col;
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, column: start_col });
        match c {
            '\n' => {
                push(&mut out, Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '%' | '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '=' => push(&mut out, Tok::Eq),
            '[' => push(&mut out, Tok::LBracket),
            ']' => push(&mut out, Tok::RBracket),
            '{' => push(&mut out, Tok::LBrace),
            '}' => push(&mut out, Tok::RBrace),
            ';' => push(&mut out, Tok::Semi),
            ',' => push(&mut out, Tok::Comma),
            '\'' | '"' => {
                let quote = c;
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => {
                            return Err(err(line, start_col, "unterminated string".into()))
                        }
                        Some(&ch) if ch == quote => {
                            // doubled quote is an escaped quote
                            if chars.get(i + 1) == Some(&quote) {
                                i += 2;
                                col += 2;
                                continue;
                            }
                            break;
                        }
                        Some(_) => {
                            i += 1;
                            col += 1;
                        }
                    }
                }
                push(&mut out, Tok::Str);
            }
            '.' if chars[i..].starts_with(&['.', '.', '.']) => {
                // line continuation: skip to end of line, newline included
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_ascii_digit()
                || ((c == '-' || c == '+' || c == '.')
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.' || *n == 'I' || *n == 'N')) =>
            {
                let s = i;
                i += 1;
                while i < chars.len() {
                    let ch = chars[i];
                    let exp_sign = (ch == '-' || ch == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if ch.is_ascii_alphanumeric() || ch == '.' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let word: String = chars[s..i].iter().collect();
                let value = parse_number(&word)
                    .ok_or_else(|| err(line, start_col, format!("invalid number '{word}'")))?;
                push(&mut out, Tok::Num(value));
                col += i - s;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let s = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                let word: String = chars[s..i].iter().collect();
                let tok = match word.as_str() {
                    "Inf" | "inf" => Tok::Num(f64::INFINITY),
                    "NaN" | "nan" => Tok::Num(f64::NAN),
                    _ => Tok::Ident(word),
                };
                push(&mut out, tok);
                col += i - s;
                continue;
            }
            other => return Err(err(line, start_col, format!("unexpected character '{other}'"))),
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

fn parse_number(word: &str) -> Option<f64> {
    match word {
        "Inf" | "+Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        "NaN" | "-NaN" | "+NaN" => Some(f64::NAN),
        w => w.parse().ok(),
    }
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = match self.peek().or(self.toks.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        };
        ParseError::Syntax { line, column, message: message.into() }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Newline | Tok::Semi | Tok::Comma)) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.tok == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    fn statements(&mut self) -> Result<HashMap<String, Value>, ParseError> {
        let mut out = HashMap::new();
        loop {
            self.skip_separators();
            let Some(tok) = self.peek().cloned() else { break };
            match tok.tok {
                Tok::Ident(ref w) if w == "function" => {
                    // function mpc = name
                    while !matches!(self.peek().map(|t| &t.tok), None | Some(Tok::Newline)) {
                        self.pos += 1;
                    }
                }
                Tok::Ident(ref w) if w == "end" || w == "endfunction" || w == "return" => {
                    self.pos += 1;
                }
                Tok::Ident(name) => {
                    self.pos += 1;
                    self.expect(Tok::Eq, "'='")?;
                    let value = self.value()?;
                    out.insert(name, value);
                }
                _ => return Err(self.error_here("expected an assignment")),
            }
        }
        Ok(out)
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Value::Scalar(v))
            }
            Some(Tok::Str) => {
                self.pos += 1;
                Ok(Value::Other)
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                self.matrix().map(Value::Matrix)
            }
            Some(Tok::LBrace) => {
                self.pos += 1;
                self.skip_cell()?;
                Ok(Value::Other)
            }
            _ => Err(self.error_here("expected a number, string, matrix or cell array")),
        }
    }

    fn matrix(&mut self) -> Result<Vec<Vec<f64>>, ParseError> {
        let mut rows = Vec::new();
        let mut row = Vec::new();
        loop {
            let Some(t) = self.peek().cloned() else {
                return Err(self.error_here("unterminated matrix"));
            };
            self.pos += 1;
            match t.tok {
                Tok::Num(v) => row.push(v),
                Tok::Comma => {}
                Tok::Semi | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Tok::RBracket => {
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(rows);
                }
                _ => {
                    return Err(ParseError::Syntax {
                        line: t.line,
                        column: t.column,
                        message: "unexpected token inside matrix".into(),
                    })
                }
            }
        }
    }

    fn skip_cell(&mut self) -> Result<(), ParseError> {
        let mut depth = 1;
        while depth > 0 {
            let Some(t) = self.peek() else {
                return Err(self.error_here("unterminated cell array"));
            };
            match t.tok {
                Tok::LBrace => depth += 1,
                Tok::RBrace => depth -= 1,
                _ => {}
            }
            self.pos += 1;
        }
        Ok(())
    }
}

fn take_matrix(vals: &mut HashMap<String, Value>, key: &'static str) -> Result<Vec<Vec<f64>>, ParseError> {
    match vals.remove(&format!("mpc.{key}")) {
        Some(Value::Matrix(m)) => Ok(m),
        _ => Err(ParseError::MissingMatrix(key)),
    }
}

fn check_cols(m: &[Vec<f64>], matrix: &'static str, expected: usize) -> Result<(), ParseError> {
    for (row, r) in m.iter().enumerate() {
        if r.len() < expected {
            return Err(ParseError::ShortRow { matrix, row: row + 1, expected, found: r.len() });
        }
    }
    Ok(())
}

/// Parses MATPOWER case text into a per-unit [`NetworkCase`].
pub fn parse_matpower(text: &str) -> Result<NetworkCase, ParseError> {
    let toks = lex(text)?;
    let name = toks
        .windows(4)
        .find_map(|w| match (&w[0].tok, &w[2].tok, &w[3].tok) {
            (Tok::Ident(f), Tok::Eq, Tok::Ident(n)) if f == "function" => Some(n.clone()),
            _ => None,
        })
        .unwrap_or_else(|| "case".to_string());
    let mut vals = Parser { toks, pos: 0 }.statements()?;

    let base_mva = match vals.remove("mpc.baseMVA") {
        Some(Value::Scalar(v)) => v,
        _ => return Err(ParseError::MissingMatrix("baseMVA")),
    };
    let bus_m = take_matrix(&mut vals, "bus")?;
    let gen_m = take_matrix(&mut vals, "gen")?;
    let branch_m = take_matrix(&mut vals, "branch")?;
    check_cols(&bus_m, "bus", 11)?;
    check_cols(&gen_m, "gen", 8)?;
    check_cols(&branch_m, "branch", 11)?;

    let mut buses = Vec::with_capacity(bus_m.len());
    let mut loads = Vec::new();
    let mut ids = HashSet::new();
    for (row, r) in bus_m.iter().enumerate() {
        let id = r[0] as usize;
        if r[0] < 0.0 || r[0].fract() != 0.0 {
            return Err(ParseError::InvalidValue { row: row + 1, column: 1, value: r[0] });
        }
        if !ids.insert(id) {
            return Err(ParseError::DuplicateBus(id));
        }
        let kind = match r[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::PV,
            1 => BusKind::PQ,
            _ => return Err(ParseError::InvalidValue { row: row + 1, column: 2, value: r[1] }),
        };
        if r[2] != 0.0 || r[3] != 0.0 {
            loads.push(Load { bus: id, p_nom: r[2] / base_mva, q_nom: r[3] / base_mva });
        }
        let (v_max, v_min) = if r.len() >= 13 { (r[11], r[12]) } else { (DEFAULT_V_MAX, DEFAULT_V_MIN) };
        buses.push(Bus {
            id,
            kind,
            v_set: r[7],
            vm_init: r[7],
            angle_set: r[8].to_radians(),
            v_min,
            v_max,
            gs: r[4] / base_mva,
            bs: r[5] / base_mva,
            area: r[6] as u32,
            zone: r[10] as u32,
            base_kv: r[9],
        });
    }

    let mut generators = Vec::with_capacity(gen_m.len());
    for (row, r) in gen_m.iter().enumerate() {
        let bus = r[0] as usize;
        if !ids.contains(&bus) {
            return Err(ParseError::DanglingBus { matrix: "gen", row: row + 1, bus });
        }
        let col = |i: usize, default: f64| r.get(i).copied().unwrap_or(default);
        generators.push(Generator {
            bus,
            p_set: r[1] / base_mva,
            q_set: r[2] / base_mva,
            q_max: r[3] / base_mva,
            q_min: r[4] / base_mva,
            v_set: r[5],
            mbase: r[6],
            in_service: r[7] > 0.0,
            p_max: col(8, f64::INFINITY) / base_mva,
            p_min: col(9, f64::NEG_INFINITY) / base_mva,
        });
    }

    let mut branches = Vec::with_capacity(branch_m.len());
    for (row, r) in branch_m.iter().enumerate() {
        for bus in [r[0] as usize, r[1] as usize] {
            if !ids.contains(&bus) {
                return Err(ParseError::DanglingBus { matrix: "branch", row: row + 1, bus });
            }
        }
        let col = |i: usize, default: f64| r.get(i).copied().unwrap_or(default);
        branches.push(Branch {
            from: r[0] as usize,
            to: r[1] as usize,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a: r[5] / base_mva,
            rate_b: r[6] / base_mva,
            rate_c: r[7] / base_mva,
            tap: if r[8] == 0.0 { 1.0 } else { r[8] },
            shift: r[9].to_radians(),
            in_service: r[10] > 0.0,
            ang_min: col(11, -360.0).to_radians(),
            ang_max: col(12, 360.0).to_radians(),
        });
    }

    // Regulated buses take their setpoint from the first in-service
    // generator; PV buses without one are demoted to PQ.
    let mut vg: HashMap<usize, f64> = HashMap::new();
    for g in generators.iter().filter(|g| g.in_service) {
        vg.entry(g.bus).or_insert(g.v_set);
    }
    for b in &mut buses {
        match (b.kind, vg.get(&b.id)) {
            (BusKind::PV | BusKind::Slack, Some(&v)) => b.v_set = v,
            (BusKind::PV, None) => b.kind = BusKind::PQ,
            _ => {}
        }
    }

    let slacks: Vec<usize> = buses.iter().filter(|b| b.kind == BusKind::Slack).map(|b| b.id).collect();
    match slacks.len() {
        0 => return Err(ParseError::NoSlack),
        1 => {}
        _ => return Err(ParseError::MultipleSlack(slacks)),
    }

    Ok(NetworkCase { name, base_mva, buses, loads, generators, branches })
}

/// Reads and parses a case file from disk.
pub fn read_matpower(path: impl AsRef<Path>) -> Result<NetworkCase, ParseError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| ParseError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_matpower(&String::from_utf8_lossy(&bytes))
}

/// Writes the case back out as MATPOWER text.
pub fn serialize_matpower(case: &NetworkCase) -> String {
    let base = case.base_mva;
    let mut s = String::new();
    let fname = if case.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !case.name.is_empty() {
        case.name.as_str()
    } else {
        "case"
    };
    let _ = writeln!(s, "function mpc = {fname}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {base};");

    let mut pd: HashMap<usize, (f64, f64)> = HashMap::new();
    for l in &case.loads {
        let e = pd.entry(l.bus).or_default();
        e.0 += l.p_nom;
        e.1 += l.q_nom;
    }
    let _ = writeln!(s, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.buses {
        let (p, q) = pd.get(&b.id).copied().unwrap_or_default();
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.id,
            b.kind.matpower_code(),
            p * base,
            q * base,
            b.gs * base,
            b.bs * base,
            b.area,
            b.vm_init,
            degrees(b.angle_set),
            b.base_kv,
            b.zone,
            b.v_max,
            b.v_min
        );
    }
    let _ = writeln!(s, "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus,
            g.p_set * base,
            g.q_set * base,
            fmt_num(g.q_max * base),
            fmt_num(g.q_min * base),
            g.v_set,
            g.mbase,
            u8::from(g.in_service),
            fmt_num(g.p_max * base),
            fmt_num(g.p_min * base)
        );
    }
    let _ = writeln!(s, "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax");
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let tap = if br.tap == 1.0 && br.shift == 0.0 { 0.0 } else { br.tap };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b,
            br.rate_a * base,
            br.rate_b * base,
            br.rate_c * base,
            tap,
            degrees(br.shift),
            u8::from(br.in_service),
            degrees(br.ang_min),
            degrees(br.ang_max)
        );
    }
    let _ = writeln!(s, "];");
    s
}

/// Degrees that convert back to exactly `rad`, when a neighbour of the
/// plain conversion does; keeps write-then-read free of drift.
fn degrees(rad: f64) -> f64 {
    let d = rad.to_degrees();
    [d, d.next_up(), d.next_down()].into_iter().find(|x| x.to_radians() == rad).unwrap_or(d)
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        v.to_string()
    }
}
