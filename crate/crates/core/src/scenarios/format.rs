//! Line-oriented scenario file format.
//!
//! ```text
//! # comments run to end of line
//! scenario filelock
//! attr locked none f
//! attr quota 0 1 2
//! states product            # or: state s0 locked=none quota=0
//! initial s0
//! agent write(f)
//! env lock(f)
//! adm s0 write(f) true
//! decide s0 write(f) allow  # or: decide-from-adm [escalate-when quota=1]
//! trans s0 write(f) s1
//! envtrans s0 lock(f) s3
//! external 0 1 2
//! extread s0 0
//! extdecide s0 write(f) 0 allow
//! exteffect lock(f) 0 2
//! partition local
//! partition global locked quota
//! partition adm locked quota
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::decision::Disposition;
use crate::model::{ActionLabel, ValueId};
use crate::scenario::{ScenarioBuilder, ScenarioError, ScenarioSpec};

use super::builtin::{builtin, BUILTIN_NAMES};

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

struct LineCtx<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> LineCtx<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    /// Re-anchors a builder error at this line.
    fn wrap(&self, e: ScenarioError) -> ScenarioError {
        self.err(self.tokens[0].column, e.to_string())
    }

    fn arity(&self, n: usize) -> Result<(), ScenarioError> {
        if self.tokens.len() != n + 1 {
            let column = self
                .tokens
                .get(n + 1)
                .map_or_else(|| self.end_column(), |t| t.column);
            return Err(self.err(
                column,
                format!("`{}` takes {n} argument(s), got {}", self.tokens[0].text, self.tokens.len() - 1),
            ));
        }
        Ok(())
    }

    fn at_least(&self, n: usize) -> Result<(), ScenarioError> {
        if self.tokens.len() < n + 1 {
            return Err(self.err(
                self.end_column(),
                format!("`{}` needs at least {n} argument(s)", self.tokens[0].text),
            ));
        }
        Ok(())
    }

    fn end_column(&self) -> usize {
        let last = self.tokens.last().unwrap();
        last.column + last.text.chars().count()
    }

    fn arg(&self, i: usize) -> &'a str {
        self.tokens[i].text
    }

    fn check(&self, i: usize, ok: bool, what: &str) -> Result<&'a str, ScenarioError> {
        if ok {
            Ok(self.tokens[i].text)
        } else {
            Err(self.err(self.tokens[i].column, format!("undeclared {what} `{}`", self.tokens[i].text)))
        }
    }

    fn disposition(&self, i: usize) -> Result<Disposition, ScenarioError> {
        Disposition::parse(self.tokens[i].text).ok_or_else(|| {
            self.err(
                self.tokens[i].column,
                format!("expected allow, refuse or escalate, got `{}`", self.tokens[i].text),
            )
        })
    }

    fn assignments(&self, from: usize, b: &ScenarioBuilder) -> Result<Vec<(&'a str, &'a str)>, ScenarioError> {
        self.tokens[from..]
            .iter()
            .map(|t| {
                let (a, v) = t
                    .text
                    .split_once('=')
                    .ok_or_else(|| self.err(t.column, format!("expected attr=value, got `{}`", t.text)))?;
                if !b.has_attr(a) {
                    return Err(self.err(t.column, format!("undeclared attribute `{a}`")));
                }
                if !b.attr_has_value(a, v) {
                    return Err(self.err(t.column, format!("attribute `{a}` has no value `{v}`")));
                }
                Ok((a, v))
            })
            .collect()
    }
}

/// Parses scenario text. Syntax and reference errors carry 1-based line and
/// column; totality and cross-table errors are reported after the last line.
pub fn parse(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let mut builder: Option<ScenarioBuilder> = None;
    for (i, raw) in text.lines().enumerate() {
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        let cx = LineCtx { line: i + 1, tokens };
        let directive = cx.arg(0);
        let Some(b) = builder.as_mut() else {
            if directive != "scenario" {
                return Err(cx.err(cx.tokens[0].column, "file must start with `scenario NAME`"));
            }
            cx.arity(1)?;
            builder = Some(ScenarioBuilder::new(cx.arg(1)));
            continue;
        };
        match directive {
            "scenario" => return Err(cx.err(cx.tokens[0].column, "duplicate `scenario` line")),
            "attr" => {
                cx.at_least(2)?;
                let values: Vec<&str> = cx.tokens[2..].iter().map(|t| t.text).collect();
                b.attr(cx.arg(1), &values).map_err(|e| cx.wrap(e))?;
            }
            "state" => {
                cx.at_least(1)?;
                let assignments = cx.assignments(2, b)?;
                b.state(cx.arg(1), &assignments).map_err(|e| cx.wrap(e))?;
            }
            "states" => {
                cx.arity(1)?;
                if cx.arg(1) != "product" {
                    return Err(cx.err(cx.tokens[1].column, "expected `states product`"));
                }
                b.product_states().map_err(|e| cx.wrap(e))?;
            }
            "initial" => {
                cx.arity(1)?;
                let s = cx.check(1, b.has_state(cx.arg(1)), "state")?;
                b.initial(s);
            }
            "agent" | "env" => {
                cx.at_least(1)?;
                for t in &cx.tokens[1..] {
                    let res = if directive == "agent" {
                        b.agent(t.text)
                    } else {
                        b.env(t.text)
                    };
                    res.map_err(|e| cx.err(t.column, e.to_string()))?;
                }
            }
            "adm" => {
                cx.arity(3)?;
                let s = cx.check(1, b.has_state(cx.arg(1)), "state")?;
                let a = cx.check(2, b.has_agent(cx.arg(2)), "agent action")?;
                let v = match cx.arg(3) {
                    "true" => true,
                    "false" => false,
                    other => return Err(cx.err(cx.tokens[3].column, format!("expected true or false, got `{other}`"))),
                };
                b.adm(s, a, v).map_err(|e| cx.wrap(e))?;
            }
            "decide" => {
                cx.arity(3)?;
                let s = cx.check(1, b.has_state(cx.arg(1)), "state")?;
                let a = cx.check(2, b.has_agent(cx.arg(2)), "agent action")?;
                let d = cx.disposition(3)?;
                b.decide(s, a, d).map_err(|e| cx.wrap(e))?;
            }
            "decide-from-adm" => {
                let conds = if cx.tokens.len() > 1 {
                    if cx.arg(1) != "escalate-when" {
                        return Err(cx.err(cx.tokens[1].column, "expected `escalate-when`"));
                    }
                    cx.at_least(2)?;
                    cx.assignments(2, b)?
                } else {
                    Vec::new()
                };
                b.decide_from_adm(&conds);
            }
            "trans" | "envtrans" => {
                cx.arity(3)?;
                let s = cx.check(1, b.has_state(cx.arg(1)), "state")?;
                let t = cx.check(3, b.has_state(cx.arg(3)), "state")?;
                if directive == "trans" {
                    let a = cx.check(2, b.has_agent(cx.arg(2)), "agent action")?;
                    b.trans(s, a, t).map_err(|e| cx.wrap(e))?;
                } else {
                    let e = cx.check(2, b.has_env(cx.arg(2)), "environment action")?;
                    b.env_trans(s, e, t).map_err(|e| cx.wrap(e))?;
                }
            }
            "external" => {
                cx.at_least(1)?;
                let values: Vec<&str> = cx.tokens[1..].iter().map(|t| t.text).collect();
                b.external_values(&values).map_err(|e| cx.wrap(e))?;
            }
            "extread" => {
                cx.arity(2)?;
                let s = cx.check(1, b.has_state(cx.arg(1)), "state")?;
                let v = cx.check(2, b.has_external_value(cx.arg(2)), "external value")?;
                b.ext_read(s, v).map_err(|e| cx.wrap(e))?;
            }
            "extdecide" => {
                cx.arity(4)?;
                let s = cx.check(1, b.has_state(cx.arg(1)), "state")?;
                let a = cx.check(2, b.has_agent(cx.arg(2)), "agent action")?;
                let v = cx.check(3, b.has_external_value(cx.arg(3)), "external value")?;
                let d = cx.disposition(4)?;
                b.ext_decide(s, a, v, d).map_err(|e| cx.wrap(e))?;
            }
            "exteffect" => {
                cx.arity(3)?;
                let e = cx.check(1, b.has_env(cx.arg(1)), "environment action")?;
                let from = cx.check(2, b.has_external_value(cx.arg(2)), "external value")?;
                let to = cx.check(3, b.has_external_value(cx.arg(3)), "external value")?;
                b.ext_effect(e, from, to).map_err(|e| cx.wrap(e))?;
            }
            "partition" => {
                cx.at_least(1)?;
                let part = match cx.arg(1) {
                    "local" => 0,
                    "global" => 1,
                    "adm" => 2,
                    other => {
                        return Err(cx.err(
                            cx.tokens[1].column,
                            format!("expected local, global or adm, got `{other}`"),
                        ))
                    }
                };
                let mut attrs = Vec::new();
                for i in 2..cx.tokens.len() {
                    attrs.push(cx.check(i, b.has_attr(cx.arg(i)), "attribute")?.to_string());
                }
                b.partition_part(part, attrs);
            }
            other => return Err(cx.err(cx.tokens[0].column, format!("unknown directive `{other}`"))),
        }
    }
    builder
        .ok_or_else(|| ScenarioError::Parse {
            line: 1,
            column: 1,
            message: "empty scenario file".into(),
        })?
        .build()
}

/// Canonical explicit rendering: every state and table row is spelled out, so
/// `parse(&serialize(s)) == s`.
pub fn serialize(sc: &ScenarioSpec) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "scenario {}", sc.name);
    for a in &sc.attributes {
        let _ = writeln!(w, "attr {} {}", a.name, a.values.join(" "));
    }
    for s in sc.state_ids() {
        let mut line = format!("state {}", sc.state_name(s));
        for (i, a) in sc.attributes.iter().enumerate() {
            let _ = write!(line, " {}={}", a.name, sc.value_name(s, crate::model::AttrId::from(i)));
        }
        let _ = writeln!(w, "{line}");
    }
    let _ = writeln!(w, "initial {}", sc.state_name(sc.initial));
    for a in &sc.agent_actions {
        let _ = writeln!(w, "agent {a}");
    }
    for e in &sc.env_actions {
        let _ = writeln!(w, "env {e}");
    }
    for (s, a, v) in sc.adm.iter() {
        let _ = writeln!(w, "adm {} {} {}", sc.state_name(s), sc.agent_name(a), v);
    }
    for (s, a, d) in sc.decision.iter() {
        let _ = writeln!(w, "decide {} {} {}", sc.state_name(s), sc.agent_name(a), d.as_str());
    }
    for (s, a, t) in sc.transition.iter() {
        let _ = writeln!(w, "trans {} {} {}", sc.state_name(s), sc.agent_name(a), sc.state_name(*t));
    }
    for &(s, label, t) in sc.env_transitions.rows() {
        if let ActionLabel::Env { action } = label {
            let _ = writeln!(w, "envtrans {} {} {}", sc.state_name(s), sc.env_name(action), sc.state_name(t));
        }
    }
    if let Some(ext) = &sc.external {
        let _ = writeln!(w, "external {}", ext.values.join(" "));
        for s in sc.state_ids() {
            let _ = writeln!(w, "extread {} {}", sc.state_name(s), ext.value_name(ext.read(s)));
        }
        for s in sc.state_ids() {
            for a in sc.agent_ids() {
                for v in (0..ext.values.len()).map(ValueId::from) {
                    let _ = writeln!(
                        w,
                        "extdecide {} {} {} {}",
                        sc.state_name(s),
                        sc.agent_name(a),
                        ext.value_name(v),
                        ext.decide(s, a, v).as_str()
                    );
                }
            }
        }
        for (e, map) in &ext.effects {
            for (from, to) in map.iter().enumerate() {
                let _ = writeln!(
                    w,
                    "exteffect {} {} {}",
                    sc.env_name(*e),
                    ext.value_name(ValueId::from(from)),
                    ext.value_name(*to)
                );
            }
        }
    }
    if let Some(p) = &sc.partition {
        for (part, attrs) in [("local", &p.local), ("global", &p.global), ("adm", &p.adm_dependency)] {
            let mut line = format!("partition {part}");
            for a in attrs {
                let _ = write!(line, " {}", sc.attributes[a.index()].name);
            }
            let _ = writeln!(w, "{line}");
        }
    }
    out
}

/// Resolves a builtin name, or else reads and parses a scenario file.
pub fn load(name_or_path: &str) -> Result<ScenarioSpec, ScenarioError> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(ScenarioError::UnknownBuiltin(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: name_or_path.to_string(),
        message: e.to_string(),
    })?;
    parse(&text)
}
