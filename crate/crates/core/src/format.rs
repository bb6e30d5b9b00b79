//! Line-oriented `.crn` text format, flat parameter files, and float rendering.
//!
//! ```text
//! # comments run to end of line
//! species X1 X2
//! reaction R1: X2 -> X1 rate 1 orders { X2: 0.8 }
//! reaction R2: X1 + X2 -> 2X2 rate 2 orders { X1: 0.5, X2: 0.8 }
//! ```

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kinetics::{KineticsError, PowerLawKineticSystem};
use crate::linalg::Rational;
use crate::network::{Complex, NetworkError, ReactionNetwork};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("line {line}, column {col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("input defines no species or reactions")]
    Empty,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error("parameter file: {0}")]
    Params(String),
}

impl FormatError {
    /// Grammar-level failures, as opposed to invalid network content.
    pub fn is_syntax(&self) -> bool {
        matches!(self, Self::Syntax { .. } | Self::Empty | Self::Params(_))
    }
}

/// Renders `x` with 17 significant digits in `%g` style, trailing zeros removed.
pub fn fmt_g17(x: f64) -> String {
    fmt_sig(x, 17)
}

/// Renders `x` with `digits` significant digits in `%g` style.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A parsed `.crn` file: the network and, when present, its kinetics.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnFile {
    pub network: ReactionNetwork,
    pub kinetics: Option<Kinetics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kinetics {
    /// r x m kinetic order matrix.
    pub orders: DMatrix<f64>,
    pub rate_constants: Vec<f64>,
}

impl CrnFile {
    /// The kinetic system, if the file carried kinetics.
    pub fn system(&self) -> Option<Result<PowerLawKineticSystem, KineticsError>> {
        self.kinetics.as_ref().map(|k| {
            PowerLawKineticSystem::new(self.network.clone(), k.orders.clone(), k.rate_constants.clone())
        })
    }
}

/// A parsed term: species name, coefficient, column.
pub(crate) type Term = (String, Rational, usize);

struct RawReaction {
    line: usize,
    label: String,
    reactant: Vec<Term>,
    product: Vec<Term>,
    rate: Option<f64>,
    orders: Option<Vec<(String, f64, usize)>>,
}

pub fn parse_crn(text: &str) -> Result<CrnFile, FormatError> {
    let mut species: Vec<String> = Vec::new();
    let mut species_lookup: HashMap<String, usize> = HashMap::new();
    let mut raw = Vec::new();
    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match full_line.find('#') {
            Some(p) => &full_line[..p],
            None => full_line,
        };
        let mut cur = Cursor::new(content, line_no);
        cur.skip_ws();
        if cur.at_end() {
            continue;
        }
        let keyword = cur.ident("`species` or `reaction`")?;
        match keyword.as_str() {
            "species" => {
                cur.skip_ws();
                if cur.at_end() {
                    return Err(cur.expected("species name"));
                }
                while !cur.at_end() {
                    let col = cur.col();
                    let name = cur.ident("species name")?;
                    if species_lookup.contains_key(&name) {
                        return Err(FormatError::Semantic {
                            line: line_no,
                            message: format!("species `{name}` declared twice (column {col})"),
                        });
                    }
                    species_lookup.insert(name.clone(), species.len());
                    species.push(name);
                    cur.skip_ws();
                }
            }
            "reaction" => raw.push(parse_reaction_line(&mut cur)?),
            _ => {
                return Err(FormatError::Syntax {
                    line: line_no,
                    col: 1 + content.len() - content.trim_start().len(),
                    expected: "`species` or `reaction`".into(),
                })
            }
        }
    }
    if species.is_empty() && raw.is_empty() {
        return Err(FormatError::Empty);
    }

    let mut list = Vec::with_capacity(raw.len());
    for r in &raw {
        let reactant = resolve_terms(&r.reactant, &species_lookup, r.line)?;
        let product = resolve_terms(&r.product, &species_lookup, r.line)?;
        if reactant == product {
            return Err(FormatError::Semantic {
                line: r.line,
                message: format!("reaction `{}` has identical reactant and product", r.label),
            });
        }
        list.push((r.label.clone(), reactant, product));
    }
    let network = ReactionNetwork::from_reaction_list(species.clone(), list)?;

    let with_kinetics = raw.iter().filter(|r| r.rate.is_some() || r.orders.is_some()).count();
    let kinetics = if with_kinetics == 0 {
        None
    } else {
        let m = species.len();
        let mut orders = DMatrix::zeros(raw.len(), m);
        let mut rates = Vec::with_capacity(raw.len());
        for (j, r) in raw.iter().enumerate() {
            let (Some(rate), Some(row)) = (r.rate, r.orders.as_ref()) else {
                let missing = if r.rate.is_none() { "rate" } else { "orders" };
                return Err(FormatError::Semantic {
                    line: r.line,
                    message: format!(
                        "reaction `{}` lacks `{missing}` while other reactions carry kinetics",
                        r.label
                    ),
                });
            };
            rates.push(rate);
            let mut seen = vec![false; m];
            for (name, value, col) in row {
                let Some(&i) = species_lookup.get(name) else {
                    return Err(FormatError::Semantic {
                        line: r.line,
                        message: format!("unknown species `{name}` in orders at column {col}"),
                    });
                };
                if seen[i] {
                    return Err(FormatError::Semantic {
                        line: r.line,
                        message: format!("order for `{name}` given twice"),
                    });
                }
                seen[i] = true;
                orders[(j, i)] = *value;
            }
        }
        Some(Kinetics {
            orders,
            rate_constants: rates,
        })
    };
    let file = CrnFile { network, kinetics };
    if let Some(result) = file.system() {
        result?;
    }
    Ok(file)
}

pub(crate) fn resolve_terms(
    terms: &[Term],
    lookup: &HashMap<String, usize>,
    line: usize,
) -> Result<Complex, FormatError> {
    let mut mapped = Vec::with_capacity(terms.len());
    for (name, coef, col) in terms {
        let Some(&i) = lookup.get(name) else {
            return Err(FormatError::Semantic {
                line,
                message: format!("unknown species `{name}` at column {col}"),
            });
        };
        mapped.push((i, *coef));
    }
    Complex::from_terms(mapped).map_err(|e| FormatError::Semantic {
        line,
        message: e.to_string(),
    })
}

/// Parses `<label>: <complex> -> <complex>` and returns the char offset just
/// past the product complex.
pub(crate) fn parse_reaction_head(
    text: &str,
    line: usize,
) -> Result<(String, Vec<Term>, Vec<Term>, usize), FormatError> {
    let mut cur = Cursor::new(text, line);
    let (label, reactant, product) = parse_head(&mut cur)?;
    Ok((label, reactant, product, cur.pos))
}

fn parse_head(cur: &mut Cursor) -> Result<(String, Vec<Term>, Vec<Term>), FormatError> {
    cur.skip_ws();
    let label = cur.ident("reaction label")?;
    cur.skip_ws();
    cur.expect_char(':', "`:` after reaction label")?;
    let reactant = parse_complex(cur)?;
    cur.skip_ws();
    cur.expect_str("->", "`->`")?;
    let product = parse_complex(cur)?;
    Ok((label, reactant, product))
}

fn parse_reaction_line(cur: &mut Cursor) -> Result<RawReaction, FormatError> {
    let line = cur.line;
    let (label, reactant, product) = parse_head(cur)?;
    let mut rate = None;
    let mut orders = None;
    loop {
        cur.skip_ws();
        if cur.at_end() {
            break;
        }
        let col = cur.col();
        let word = cur.ident("`rate`, `orders` or end of line")?;
        match word.as_str() {
            "rate" if rate.is_none() => {
                cur.skip_ws();
                rate = Some(cur.float("rate constant")?);
            }
            "orders" if orders.is_none() => {
                cur.skip_ws();
                cur.expect_char('{', "`{`")?;
                let mut entries = Vec::new();
                cur.skip_ws();
                if cur.peek() == Some('}') {
                    cur.bump();
                } else {
                    loop {
                        cur.skip_ws();
                        let col = cur.col();
                        let name = cur.ident("species name")?;
                        cur.skip_ws();
                        cur.expect_char(':', "`:`")?;
                        cur.skip_ws();
                        let value = cur.float("kinetic order")?;
                        entries.push((name, value, col));
                        cur.skip_ws();
                        match cur.peek() {
                            Some(',') => {
                                cur.bump();
                            }
                            Some('}') => {
                                cur.bump();
                                break;
                            }
                            _ => return Err(cur.expected("`,` or `}`")),
                        }
                    }
                }
                orders = Some(entries);
            }
            _ => {
                return Err(FormatError::Syntax {
                    line,
                    col,
                    expected: "`rate`, `orders` or end of line".into(),
                })
            }
        }
    }
    Ok(RawReaction {
        line,
        label,
        reactant,
        product,
        rate,
        orders,
    })
}

fn parse_complex(cur: &mut Cursor) -> Result<Vec<Term>, FormatError> {
    cur.skip_ws();
    // a lone `0` is the zero complex
    if cur.peek() == Some('0') {
        let save = cur.pos;
        cur.bump();
        let next = cur.peek();
        if !matches!(next, Some(c) if c.is_ascii_alphanumeric() || c == '_' || c == '/') {
            let mut probe = cur.pos;
            while probe < cur.chars.len() && cur.chars[probe] == ' ' {
                probe += 1;
            }
            if probe >= cur.chars.len() || cur.chars[probe] != '+' {
                return Ok(Vec::new());
            }
        }
        cur.pos = save;
    }
    let mut terms = Vec::new();
    loop {
        cur.skip_ws();
        let col = cur.col();
        let coef = if cur.peek().is_some_and(|c| c.is_ascii_digit()) {
            let num = cur.digits();
            let mut value = Rational::from_integer(
                num.parse::<i64>().map_err(|_| cur.expected_at(col, "coefficient"))?,
            );
            if cur.peek() == Some('/') {
                cur.bump();
                let dcol = cur.col();
                let den = cur.digits();
                let den: i64 = den.parse().map_err(|_| cur.expected_at(dcol, "denominator"))?;
                if den == 0 {
                    return Err(cur.expected_at(dcol, "nonzero denominator"));
                }
                value /= Rational::from_integer(den);
            }
            cur.skip_ws();
            value
        } else {
            Rational::from_integer(1)
        };
        let name = cur.ident("species name")?;
        terms.push((name, coef, col));
        cur.skip_ws();
        if cur.peek() == Some('+') {
            cur.bump();
        } else {
            break;
        }
    }
    Ok(terms)
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(s: &str, line: usize) -> Self {
        Self {
            chars: s.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) {
        self.pos += 1;
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expected(&self, what: &str) -> FormatError {
        self.expected_at(self.col(), what)
    }

    fn expected_at(&self, col: usize, what: &str) -> FormatError {
        FormatError::Syntax {
            line: self.line,
            col,
            expected: what.into(),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, FormatError> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return Err(self.expected(what)),
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn expect_char(&mut self, c: char, what: &str) -> Result<(), FormatError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.expected(what))
        }
    }

    fn expect_str(&mut self, s: &str, what: &str) -> Result<(), FormatError> {
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            Ok(())
        } else {
            Err(self.expected(what))
        }
    }

    /// `[+-]digits[.digits][(e|E)[+-]digits]`, finite.
    fn float(&mut self, what: &str) -> Result<f64, FormatError> {
        let start = self.pos;
        let col = self.col();
        if matches!(self.peek(), Some('+' | '-')) {
            self.pos += 1;
        }
        let int = self.digits();
        let mut frac = String::new();
        if self.peek() == Some('.') {
            self.pos += 1;
            frac = self.digits();
        }
        if int.is_empty() && frac.is_empty() {
            self.pos = start;
            return Err(self.expected_at(col, what));
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if self.digits().is_empty() {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.expected_at(col, what)),
        }
    }
}

fn emit_complex(c: &Complex, names: &[String]) -> String {
    c.display(names).to_string()
}

/// Writes a bare network.
pub fn emit_network(net: &ReactionNetwork) -> String {
    emit(net, None)
}

/// Writes a network with its power-law kinetics; floats use 17 significant digits.
pub fn emit_system(sys: &PowerLawKineticSystem) -> String {
    emit(sys.network(), Some(sys))
}

fn emit(net: &ReactionNetwork, sys: Option<&PowerLawKineticSystem>) -> String {
    let names = net.species_names();
    let mut out = format!("species {}\n", names.join(" "));
    for (j, r) in net.reactions().iter().enumerate() {
        out.push_str(&format!(
            "reaction {}: {} -> {}",
            r.label,
            emit_complex(&net.complexes()[r.reactant], &names),
            emit_complex(&net.complexes()[r.product], &names)
        ));
        if let Some(sys) = sys {
            out.push_str(&format!(" rate {} orders {{", fmt_g17(sys.rate_constants()[j])));
            let entries: Vec<String> = (0..names.len())
                .filter(|&i| sys.orders()[(j, i)] != 0.0)
                .map(|i| format!("{}: {}", names[i], fmt_g17(sys.orders()[(j, i)])))
                .collect();
            if entries.is_empty() {
                out.push_str(" }");
            } else {
                out.push_str(&format!(" {} }}", entries.join(", ")));
            }
        }
        out.push('\n');
    }
    out
}

/// Flat `key = value` parameter file with numeric values.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, f64>, FormatError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| FormatError::Params(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (key, value) in table {
        let v = match value {
            toml::Value::Float(f) => f,
            toml::Value::Integer(i) => i as f64,
            other => {
                return Err(FormatError::Params(format!(
                    "`{key}` must be a number, found {}",
                    other.type_str()
                )))
            }
        };
        out.insert(key, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn g17_rendering() {
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-68.0), "-68");
        assert_eq!(fmt_g17(0.8), "0.80000000000000004");
        assert_eq!(fmt_g17(0.5), "0.5");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_sig(0.15000000000000002, 6), "0.15");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e+06");
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE, 0.580148] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn parses_toy_fixture() {
        let file = parse_crn(fixtures::TOY_CRN).unwrap();
        let sys = file.system().unwrap().unwrap();
        assert_eq!(sys, fixtures::toy_system(1.0, 2.0));
        assert_eq!(emit_system(&sys), fixtures::TOY_CRN);
    }

    #[test]
    fn parses_carbon_fixture() {
        let sys = parse_crn(fixtures::CARBON_CRN).unwrap().system().unwrap().unwrap();
        assert_eq!(sys, fixtures::carbon_system());
        assert_eq!(emit_system(&sys), fixtures::CARBON_CRN);
    }

    #[test]
    fn bare_network_and_comments() {
        let text = "# a comment\nspecies A B   # trailing\n\nreaction r: A -> B\nreaction s: B -> 0\n";
        let file = parse_crn(text).unwrap();
        assert!(file.kinetics.is_none());
        assert_eq!(file.network.num_complexes(), 3);
        assert_eq!(emit_network(&file.network), "species A B\nreaction r: A -> B\nreaction s: B -> 0\n");
    }

    #[test]
    fn rational_and_spaced_coefficients() {
        let file = parse_crn("species A B\nreaction r: 3/2A + 2 B -> 0\n").unwrap();
        let c = &file.network.complexes()[0];
        assert_eq!(c.coefficient(0), Rational::new(3, 2));
        assert_eq!(c.coefficient(1), Rational::from(2));
    }

    #[test]
    fn species_names_with_exponent_letters() {
        let file = parse_crn("species E1 e\nreaction r: 2E1 -> 3e\n").unwrap();
        assert_eq!(file.network.complexes()[0].coefficient(0), Rational::from(2));
        assert_eq!(file.network.complexes()[1].coefficient(1), Rational::from(3));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_crn("species A B\nreaction r A -> B\n") {
            Err(FormatError::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 12)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_crn("species A\nreaction r: A => 0\n"),
            Err(FormatError::Syntax { line: 2, col: 15, .. })
        ));
        assert!(matches!(
            parse_crn("species A\nreaction r: A -> 0 rate x\n"),
            Err(FormatError::Syntax { line: 2, .. })
        ));
        assert_eq!(parse_crn("  # nothing\n"), Err(FormatError::Empty));
    }

    #[test]
    fn semantic_errors() {
        let cases = [
            "species A\nreaction r: A -> A\n",
            "species A\nreaction r: B -> A\n",
            "species A B\nreaction r: A -> B rate 1 orders { A: 1 }\nreaction s: B -> A\n",
            "species A B\nreaction r: A -> B rate 1\n",
            "species A B\nreaction r: A -> B rate 1 orders { C: 1 }\n",
            "species A A\nreaction r: A -> 0\n",
        ];
        for text in cases {
            assert!(
                matches!(parse_crn(text), Err(FormatError::Semantic { .. })),
                "{text}: {:?}",
                parse_crn(text)
            );
        }
        assert!(matches!(
            parse_crn("species A B\nreaction r: A -> B rate -1 orders { }\n"),
            Err(FormatError::Kinetics(_))
        ));
    }

    #[test]
    fn params_file() {
        let p = parse_params("k = 0.7\nalpha_offtake = 0\n").unwrap();
        assert_eq!(p["k"], 0.7);
        assert_eq!(p["alpha_offtake"], 0.0);
        assert!(parse_params("k = \"x\"\n").is_err());
        assert!(parse_params("k 0.7\n").is_err());
    }
}
