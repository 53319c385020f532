//! OpenQASM 2.0 export and a parser for the single-register gate subset.
//!
//! Export lowers every gate to `rz`, `ry`, `rx`, `u3` and `cz`, so global
//! phases of individual gates may differ while the circuit action on density
//! matrices is unchanged.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{Ansatz, Gate, GateKind};

const H: (f64, f64, f64) = (PI / 2.0, 0.0, PI);

struct Emitter {
    body: String,
    count: usize,
}

impl Emitter {
    fn rot(&mut self, name: &str, angle: f64, q: usize) {
        let _ = writeln!(self.body, "{name}({}) q[{q}];", fmt_angle(angle));
        self.count += 1;
    }

    fn u3(&mut self, (t, p, l): (f64, f64, f64), q: usize) {
        let _ = writeln!(
            self.body,
            "u3({},{},{}) q[{q}];",
            fmt_angle(t),
            fmt_angle(p),
            fmt_angle(l)
        );
        self.count += 1;
    }

    fn cz(&mut self, a: usize, b: usize) {
        let _ = writeln!(self.body, "cz q[{a}],q[{b}];");
        self.count += 1;
    }

    fn cx(&mut self, c: usize, t: usize) {
        self.u3(H, t);
        self.cz(c, t);
        self.u3(H, t);
    }

    /// Controlled rotation about `axis` ("rz" or "ry").
    fn controlled_rot(&mut self, axis: &str, angle: f64, c: usize, t: usize) {
        self.rot(axis, angle / 2.0, t);
        self.cx(c, t);
        self.rot(axis, -angle / 2.0, t);
        self.cx(c, t);
    }

    fn gate(&mut self, g: &Gate, params: &[f64]) {
        let p: Vec<f64> = g.slots.iter().map(|&s| params[s]).collect();
        let q = &g.qubits;
        match g.kind {
            GateKind::Rx => self.rot("rx", p[0], q[0]),
            GateKind::Ry => self.rot("ry", p[0], q[0]),
            GateKind::Rz => self.rot("rz", p[0], q[0]),
            GateKind::U3 => self.u3((p[0], p[1], p[2]), q[0]),
            GateKind::Rzyz => {
                self.rot("rz", p[0], q[0]);
                self.rot("ry", p[1], q[0]);
                self.rot("rz", p[2], q[0]);
            }
            GateKind::Rzxz => {
                self.rot("rz", p[0], q[0]);
                self.rot("rx", p[1], q[0]);
                self.rot("rz", p[2], q[0]);
            }
            GateKind::Prx => {
                self.rot("rz", -p[1], q[0]);
                self.rot("rx", p[0], q[0]);
                self.rot("rz", p[1], q[0]);
            }
            GateKind::Cz => self.cz(q[0], q[1]),
            GateKind::ControlledV => {
                self.controlled_rot("rz", p[0], q[0], q[1]);
                self.controlled_rot("ry", p[1], q[0], q[1]);
                self.controlled_rot("rz", p[2], q[0], q[1]);
            }
            GateKind::H => self.u3(H, q[0]),
            GateKind::X => self.u3((PI, 0.0, PI), q[0]),
            GateKind::Y => self.u3((PI, PI / 2.0, PI / 2.0), q[0]),
            GateKind::Z => self.rot("rz", PI, q[0]),
            GateKind::S => self.rot("rz", PI / 2.0, q[0]),
            GateKind::Sdg => self.rot("rz", -PI / 2.0, q[0]),
            GateKind::T => self.rot("rz", PI / 4.0, q[0]),
            GateKind::Tdg => self.rot("rz", -PI / 4.0, q[0]),
            GateKind::Cx => self.cx(q[0], q[1]),
            GateKind::Swap => {
                self.cx(q[0], q[1]);
                self.cx(q[1], q[0]);
                self.cx(q[0], q[1]);
            }
        }
    }
}

fn fmt_angle(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.17}")
}

/// Exported program text and the number of gate statements in it.
#[derive(Clone, Debug, PartialEq)]
pub struct QasmExport {
    pub text: String,
    pub gate_count: usize,
}

/// Serializes a bound circuit. Each line of `header` becomes a leading comment.
pub fn export_qasm(ansatz: &Ansatz, params: &[f64], header: &str) -> Result<QasmExport> {
    ansatz.check_params(params)?;
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "// {line}");
    }
    out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", ansatz.num_qubits);
    let mut e = Emitter {
        body: String::new(),
        count: 0,
    };
    for g in &ansatz.gates {
        e.gate(g, params);
    }
    out.push_str(&e.body);
    Ok(QasmExport {
        text: out,
        gate_count: e.count,
    })
}

/// A parsed circuit: every parameterized gate gets its own slot holding the
/// literal angle.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCircuit {
    pub ansatz: Ansatz,
    pub params: Vec<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses OpenQASM 2.0 restricted to quantum registers and the standard
/// one- and two-qubit gates (`rx ry rz u3 u u2 u1 p h x y z s sdg t tdg id
/// cx cz swap`). `creg`, `barrier` and `measure` statements are ignored.
pub fn parse_qasm(text: &str) -> Result<ParsedCircuit> {
    let mut registers: Vec<(String, usize, usize)> = Vec::new();
    let mut num_qubits = 0usize;
    let mut gates = Vec::new();
    let mut params = Vec::new();
    let mut saw_header = false;

    // statements may span lines; track the line on which each one starts
    let mut stmt = String::new();
    let mut stmt_line = 1;
    let mut statements = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap_or("");
        for ch in line.chars() {
            if stmt.trim().is_empty() {
                stmt_line = i + 1;
            }
            if ch == ';' {
                statements.push((stmt_line, stmt.trim().to_string()));
                stmt.clear();
            } else {
                stmt.push(ch);
            }
        }
        stmt.push(' ');
    }
    if !stmt.trim().is_empty() {
        return Err(parse_err(
            stmt_line,
            "statement is missing a terminating ';'",
        ));
    }

    for (line, s) in statements {
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix("OPENQASM") {
            if rest.trim() != "2.0" {
                return Err(parse_err(
                    line,
                    format!("unsupported version {:?}", rest.trim()),
                ));
            }
            saw_header = true;
            continue;
        }
        if !saw_header {
            return Err(parse_err(line, "expected 'OPENQASM 2.0;' header"));
        }
        if s.starts_with("include") {
            continue;
        }
        let (word, rest) = split_word(&s);
        match word {
            "qreg" => {
                let (name, size) = parse_decl(rest, line)?;
                if registers.iter().any(|(n, _, _)| *n == name) {
                    return Err(parse_err(line, format!("register {name} declared twice")));
                }
                registers.push((name, num_qubits, size));
                num_qubits += size;
            }
            "creg" | "barrier" | "measure" => {}
            _ => {
                let (name, args, operands) = split_gate(&s, line)?;
                let angles = args
                    .iter()
                    .map(|a| eval_expr(a).map_err(|m| parse_err(line, m)))
                    .collect::<Result<Vec<f64>>>()?;
                let qubits = operands
                    .iter()
                    .map(|o| resolve(o, &registers, line))
                    .collect::<Result<Vec<usize>>>()?;
                let (kind, values) = map_gate(name, &angles, line)?;
                let Some(kind) = kind else { continue };
                if qubits.len() != kind.arity() {
                    return Err(parse_err(
                        line,
                        format!(
                            "{name} expects {} qubits, got {}",
                            kind.arity(),
                            qubits.len()
                        ),
                    ));
                }
                if qubits.len() == 2 && qubits[0] == qubits[1] {
                    return Err(parse_err(line, format!("{name} acts twice on one qubit")));
                }
                let slots = (params.len()..params.len() + values.len()).collect();
                params.extend(values);
                gates.push(Gate::new(kind, qubits, slots));
            }
        }
    }
    if num_qubits == 0 {
        return Err(parse_err(1, "no quantum register declared"));
    }
    let ansatz = Ansatz::new(num_qubits, params.len(), gates)?;
    Ok(ParsedCircuit { ansatz, params })
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim();
    match s.find(|c: char| c.is_whitespace() || c == '(') {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    }
}

fn parse_decl(rest: &str, line: usize) -> Result<(String, usize)> {
    let rest = rest.trim();
    let open = rest
        .find('[')
        .ok_or_else(|| parse_err(line, "register declaration needs a size"))?;
    let close = rest
        .find(']')
        .ok_or_else(|| parse_err(line, "unterminated register size"))?;
    let name = rest[..open].trim().to_string();
    let size: usize = rest[open + 1..close]
        .trim()
        .parse()
        .map_err(|_| parse_err(line, "register size is not an integer"))?;
    if name.is_empty() || size == 0 {
        return Err(parse_err(line, "invalid register declaration"));
    }
    Ok((name, size))
}

fn split_gate(s: &str, line: usize) -> Result<(&str, Vec<String>, Vec<String>)> {
    let s = s.trim();
    let (name, rest) = split_word(s);
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(parse_err(line, format!("cannot parse statement {s:?}")));
    }
    let (args, operands) = if let Some(r) = rest.strip_prefix('(') {
        let mut depth = 1;
        let mut end = None;
        for (i, c) in r.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let end = end.ok_or_else(|| parse_err(line, "unbalanced parentheses"))?;
        let args = r[..end].split(',').map(|a| a.trim().to_string()).collect();
        (args, r[end + 1..].to_string())
    } else {
        (Vec::new(), rest.to_string())
    };
    let operands: Vec<String> = operands
        .split(',')
        .map(|o| o.trim().to_string())
        .filter(|o| !o.is_empty())
        .collect();
    if operands.is_empty() {
        return Err(parse_err(line, format!("{name} has no operands")));
    }
    Ok((name, args, operands))
}

fn resolve(operand: &str, registers: &[(String, usize, usize)], line: usize) -> Result<usize> {
    let open = operand
        .find('[')
        .ok_or_else(|| parse_err(line, format!("operand {operand:?} must index a qubit")))?;
    let close = operand
        .find(']')
        .ok_or_else(|| parse_err(line, "unterminated qubit index"))?;
    let name = operand[..open].trim();
    let idx: usize = operand[open + 1..close]
        .trim()
        .parse()
        .map_err(|_| parse_err(line, "qubit index is not an integer"))?;
    let (_, offset, size) = registers
        .iter()
        .find(|(n, _, _)| n == name)
        .ok_or_else(|| parse_err(line, format!("unknown register {name:?}")))?;
    if idx >= *size {
        return Err(parse_err(
            line,
            format!("index {idx} out of range for {name}[{size}]"),
        ));
    }
    Ok(offset + idx)
}

fn map_gate(name: &str, a: &[f64], line: usize) -> Result<(Option<GateKind>, Vec<f64>)> {
    let want = |n: usize| -> Result<()> {
        if a.len() != n {
            Err(parse_err(
                line,
                format!("{name} expects {n} parameters, got {}", a.len()),
            ))
        } else {
            Ok(())
        }
    };
    let fixed = |k: GateKind| -> Result<(Option<GateKind>, Vec<f64>)> {
        want(0)?;
        Ok((Some(k), Vec::new()))
    };
    match name {
        "rx" => want(1).map(|_| (Some(GateKind::Rx), a.to_vec())),
        "ry" => want(1).map(|_| (Some(GateKind::Ry), a.to_vec())),
        "rz" | "u1" | "p" => want(1).map(|_| (Some(GateKind::Rz), a.to_vec())),
        "u3" | "u" | "U" => want(3).map(|_| (Some(GateKind::U3), a.to_vec())),
        "u2" => want(2).map(|_| (Some(GateKind::U3), vec![PI / 2.0, a[0], a[1]])),
        "id" => want(0).map(|_| (None, Vec::new())),
        "h" => fixed(GateKind::H),
        "x" => fixed(GateKind::X),
        "y" => fixed(GateKind::Y),
        "z" => fixed(GateKind::Z),
        "s" => fixed(GateKind::S),
        "sdg" => fixed(GateKind::Sdg),
        "t" => fixed(GateKind::T),
        "tdg" => fixed(GateKind::Tdg),
        "cx" | "CX" => fixed(GateKind::Cx),
        "cz" => fixed(GateKind::Cz),
        "swap" => fixed(GateKind::Swap),
        other => Err(parse_err(line, format!("unsupported gate {other:?}"))),
    }
}

/// Evaluates a real expression over numbers, `pi`, `+ - * /`, unary minus
/// and parentheses.
fn eval_expr(src: &str) -> std::result::Result<f64, String> {
    let tokens = tokenize(src)?;
    let mut pos = 0;
    let v = expr(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(format!("unexpected token in expression {src:?}"));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Op(char),
}

fn tokenize(src: &str) -> std::result::Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let lit: String = chars[start..i].iter().collect();
            out.push(Tok::Num(
                lit.parse().map_err(|_| format!("bad number {lit:?}"))?,
            ));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "pi" => out.push(Tok::Num(PI)),
                _ => return Err(format!("unknown identifier {word:?}")),
            }
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

fn expr(t: &[Tok], pos: &mut usize) -> std::result::Result<f64, String> {
    let mut v = term(t, pos)?;
    while let Some(Tok::Op(c @ ('+' | '-'))) = t.get(*pos) {
        *pos += 1;
        let r = term(t, pos)?;
        v = if *c == '+' { v + r } else { v - r };
    }
    Ok(v)
}

fn term(t: &[Tok], pos: &mut usize) -> std::result::Result<f64, String> {
    let mut v = factor(t, pos)?;
    while let Some(Tok::Op(c @ ('*' | '/'))) = t.get(*pos) {
        *pos += 1;
        let r = factor(t, pos)?;
        v = if *c == '*' { v * r } else { v / r };
    }
    Ok(v)
}

fn factor(t: &[Tok], pos: &mut usize) -> std::result::Result<f64, String> {
    match t.get(*pos) {
        Some(Tok::Num(v)) => {
            *pos += 1;
            Ok(*v)
        }
        Some(Tok::Op('-')) => {
            *pos += 1;
            Ok(-factor(t, pos)?)
        }
        Some(Tok::Op('+')) => {
            *pos += 1;
            factor(t, pos)
        }
        Some(Tok::Op('(')) => {
            *pos += 1;
            let v = expr(t, pos)?;
            if t.get(*pos) != Some(&Tok::Op(')')) {
                return Err("missing ')'".into());
            }
            *pos += 1;
            Ok(v)
        }
        _ => Err("expected a number".into()),
    }
}
