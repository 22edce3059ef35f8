//! Mass-action reaction networks: model-file parsing, validation, and
//! propensity evaluation.
//!
//! The model file grammar is line-oriented and case-sensitive, with `#`
//! starting a comment:
//!
//! ```text
//! species <name> init=<uint>
//! param <name> = <float> [bounds=<float>,<float>]
//! reaction <name>: <lhs> -> <rhs> @ <param-name>
//! ```
//!
//! where each side of a reaction is either `0` (no molecules) or a
//! `+`-separated list of terms `[<uint>] <species-name>` (coefficient
//! defaults to 1). Propensities follow the mass-action counting convention
//! `alpha_k(x) = c_k * prod_i C(x_i, a_ik)` with `C` the binomial
//! coefficient, so a second-order homodimerization `2 X -> ...` fires at
//! rate `c * x(x-1)/2`. Total reactant order is limited to 2, which keeps
//! every propensity an exact quadratic polynomial in the species counts.

use std::collections::HashMap;
use std::fmt;

use crate::sym::SymMatrix;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate {kind} name '{name}'")]
    Duplicate {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: undeclared species '{name}'")]
    UndeclaredSpecies { line: usize, name: String },
    #[error("line {line}: undeclared parameter '{name}'")]
    UndeclaredParameter { line: usize, name: String },
    #[error("line {line}: reaction '{name}' has total reactant order {order}, but only orders <= 2 are supported")]
    OrderTooHigh {
        line: usize,
        name: String,
        order: u32,
    },
    #[error("line {line}: reaction '{name}' has zero net stoichiometry")]
    ZeroStoichiometry { line: usize, name: String },
    #[error("line {line}: parameter '{name}' must have a positive finite value, got {value}")]
    BadParameterValue {
        line: usize,
        name: String,
        value: f64,
    },
    #[error("line {line}: parameter '{name}' bounds must satisfy 0 < lower < upper, got [{lower}, {upper}]")]
    BadBounds {
        line: usize,
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("parameter point has {got} entries, network has {expected} parameters")]
    PointLength { got: usize, expected: usize },
    #[error("parameter point entry {index} is {value}, all entries must be > 0")]
    NonPositiveParameter { index: usize, value: f64 },
    #[error("state vector has {got} entries, network has {expected} species")]
    StateLength { got: usize, expected: usize },
    #[error("state entry {index} is negative ({value})")]
    NegativeState { index: usize, value: i64 },
}

/// A chemical species with its initial copy number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Species {
    pub name: String,
    pub initial_count: u64,
}

/// A rate parameter: nominal per-second value plus optional box bounds
/// for global sensitivity sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub bounds: Option<(f64, f64)>,
}

/// One mass-action reaction. Reactant/product maps are sorted by species
/// index; `stoichiometry` is the net change vector over all species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub name: String,
    /// (species index, a_ik) with a_ik > 0, sorted by species index.
    pub reactants: Vec<(usize, u32)>,
    /// (species index, b_ik) with b_ik > 0, sorted by species index.
    pub products: Vec<(usize, u32)>,
    /// Index into the network's parameter list (the rate constant c_k).
    pub rate_param: usize,
    /// Net change per firing, one entry per species.
    pub stoichiometry: Vec<i64>,
}

/// A validated reaction network. Species and parameter order is
/// declaration order and is preserved in every derived quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    parameters: Vec<Parameter>,
}

impl ReactionNetwork {
    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn initial_counts(&self) -> Vec<u64> {
        self.species.iter().map(|s| s.initial_count).collect()
    }

    /// Nominal parameter values as a validated point.
    pub fn nominal_point(&self) -> ParameterPoint {
        ParameterPoint::new(self.parameters.iter().map(|p| p.value).collect())
            .expect("validated at parse time")
    }

    /// Checks a parameter point against this network.
    pub fn check_point(&self, point: &ParameterPoint) -> Result<(), ModelError> {
        if point.values().len() != self.parameters.len() {
            return Err(ModelError::PointLength {
                got: point.values().len(),
                expected: self.parameters.len(),
            });
        }
        Ok(())
    }
}

/// An ordered vector of positive rate-constant values, aligned with the
/// network's parameter declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::NonPositiveParameter { index: i, value: v });
            }
        }
        Ok(ParameterPoint(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// New point with entry `i` multiplied by `1 + factor`.
    pub fn scaled_entry(&self, i: usize, factor: f64) -> Result<Self, ModelError> {
        let mut v = self.0.clone();
        v[i] *= 1.0 + factor;
        ParameterPoint::new(v)
    }
}

// ---------------------------------------------------------------------------
// Propensities
// ---------------------------------------------------------------------------

/// Number of distinct reactant combinations `C(x, a)` for a single species,
/// restricted to a <= 2.
#[inline]
fn combinations(x: i64, a: u32) -> f64 {
    match a {
        0 => 1.0,
        1 => x as f64,
        2 => (x as f64) * ((x - 1) as f64) / 2.0,
        _ => unreachable!("reactant order is validated to be <= 2"),
    }
}

/// Evaluates all reaction propensities at an integer state.
///
/// Rates are zero whenever a species count is below its reactant
/// stoichiometry; negative counts are an error.
pub fn propensity_eval(
    network: &ReactionNetwork,
    state: &[i64],
    point: &ParameterPoint,
) -> Result<Vec<f64>, ModelError> {
    if state.len() != network.num_species() {
        return Err(ModelError::StateLength {
            got: state.len(),
            expected: network.num_species(),
        });
    }
    if let Some((i, &v)) = state.iter().enumerate().find(|(_, &v)| v < 0) {
        return Err(ModelError::NegativeState { index: i, value: v });
    }
    network.check_point(point)?;
    let theta = point.values();
    Ok(network
        .reactions
        .iter()
        .map(|r| {
            let mut rate = theta[r.rate_param];
            for &(s, a) in &r.reactants {
                rate *= combinations(state[s], a);
            }
            rate.max(0.0)
        })
        .collect())
}

/// A propensity written out as an explicit quadratic polynomial in the
/// species counts, with every coefficient a multiple of the reaction's
/// rate constant:
///
/// `alpha(x) = c * (constant + linear . x + 1/2 x^T hessian x)`
///
/// The Hessian is constant because reactant order is at most 2; all third
/// derivatives vanish identically.
#[derive(Debug, Clone)]
pub struct PropensityPolynomial {
    /// Parameter index of the rate constant c.
    pub param: usize,
    /// Constant coefficient (unit: multiples of c).
    pub constant: f64,
    /// Linear coefficients, one per species (multiples of c).
    pub linear: Vec<f64>,
    /// Constant Hessian d^2 alpha / dx_l dx_m, divided by c.
    pub hessian: SymMatrix,
}

impl PropensityPolynomial {
    /// Polynomial value at a (real-valued) state, given the rate constant.
    pub fn eval(&self, x: &[f64], c: f64) -> f64 {
        c * (self.constant + dot(&self.linear, x) + 0.5 * self.hessian.quad_form(x))
    }

    /// Gradient at a state, given the rate constant.
    pub fn gradient(&self, x: &[f64], c: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.hessian.mul_vec(x, &mut g);
        for (gi, li) in g.iter_mut().zip(&self.linear) {
            *gi = c * (*gi + li);
        }
        g
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Expands every propensity into its exact polynomial form plus gradient
/// and constant Hessian. Guaranteed to succeed on a validated network.
pub fn propensity_polynomials(network: &ReactionNetwork) -> Vec<PropensityPolynomial> {
    let n = network.num_species();
    network
        .reactions
        .iter()
        .map(|r| {
            let mut constant = 0.0;
            let mut linear = vec![0.0; n];
            let mut hessian = SymMatrix::zeros(n);
            let order: u32 = r.reactants.iter().map(|&(_, a)| a).sum();
            match (order, r.reactants.as_slice()) {
                (0, _) => constant = 1.0,
                (1, &[(u, 1)]) => linear[u] = 1.0,
                (2, &[(u, 2)]) => {
                    // C(x,2) = (x^2 - x)/2
                    hessian.set(u, u, 1.0);
                    linear[u] = -0.5;
                }
                (2, &[(u, 1), (v, 1)]) => {
                    hessian.set(u, v, 1.0);
                }
                _ => unreachable!("reactant order is validated to be <= 2"),
            }
            PropensityPolynomial {
                param: r.rate_param,
                constant,
                linear,
                hessian,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Arrow,
    Sym(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "'{s}'"),
            Token::Number(s) => write!(f, "'{s}'"),
            Token::Arrow => write!(f, "'->'"),
            Token::Sym(c) => write!(f, "'{c}'"),
        }
    }
}

fn lex(line: &str, lineno: usize) -> Result<Vec<Token>, ModelError> {
    let mut out = Vec::new();
    let bytes: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && i + 1 < bytes.len() && bytes[i + 1] == '>' {
            out.push(Token::Arrow);
            i += 2;
        } else if matches!(c, '=' | ',' | ':' | '@' | '+') {
            out.push(Token::Sym(c));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            if c == '-' {
                i += 1;
            }
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                i += 1;
                if i < bytes.len() && (bytes[i] == '+' || bytes[i] == '-') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i == start || (bytes[start] == '-' && i == start + 1) {
                return Err(ModelError::Syntax {
                    line: lineno,
                    msg: format!("unexpected character '{c}'"),
                });
            }
            out.push(Token::Number(bytes[start..i].iter().collect()));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(bytes[start..i].iter().collect()));
        } else {
            return Err(ModelError::Syntax {
                line: lineno,
                msg: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct LineParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: usize,
}

impl<'a> LineParser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn err(&self, msg: impl Into<String>) -> ModelError {
        ModelError::Syntax {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ModelError> {
        match self.next() {
            Some(Token::Sym(s)) if *s == c => Ok(()),
            Some(t) => Err(self.err(format!("expected '{c}', found {t}"))),
            None => Err(self.err(format!("expected '{c}', found end of line"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ModelError> {
        match self.next() {
            Some(Token::Ident(s)) => Ok(s.clone()),
            Some(t) => Err(self.err(format!("expected {what}, found {t}"))),
            None => Err(self.err(format!("expected {what}, found end of line"))),
        }
    }

    fn expect_uint(&mut self, what: &str) -> Result<u64, ModelError> {
        match self.next() {
            Some(Token::Number(s)) => s
                .parse::<u64>()
                .map_err(|_| self.err(format!("expected {what}, found '{s}'"))),
            Some(t) => Err(self.err(format!("expected {what}, found {t}"))),
            None => Err(self.err(format!("expected {what}, found end of line"))),
        }
    }

    fn expect_float(&mut self, what: &str) -> Result<f64, ModelError> {
        match self.next() {
            Some(Token::Number(s)) => s
                .parse::<f64>()
                .map_err(|_| self.err(format!("expected {what}, found '{s}'"))),
            Some(t) => Err(self.err(format!("expected {what}, found {t}"))),
            None => Err(self.err(format!("expected {what}, found end of line"))),
        }
    }

    fn expect_end(&mut self) -> Result<(), ModelError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected trailing {t}"))),
        }
    }
}

/// One side of a reaction: `0` or `[coeff] name {+ [coeff] name}`.
fn parse_terms(p: &mut LineParser<'_>) -> Result<Vec<(String, u32)>, ModelError> {
    if matches!(p.peek(), Some(Token::Number(s)) if s == "0") {
        // the empty side; only valid when "0" stands alone
        let save = p.pos;
        p.next();
        match p.peek() {
            Some(Token::Ident(_)) => p.pos = save, // "0 X" is a zero coefficient, reject below
            _ => return Ok(Vec::new()),
        }
    }
    let mut terms = Vec::new();
    loop {
        let coeff = match p.peek() {
            Some(Token::Number(_)) => {
                let v = p.expect_uint("stoichiometric coefficient")?;
                if v == 0 {
                    return Err(p.err("stoichiometric coefficient must be positive"));
                }
                u32::try_from(v).map_err(|_| p.err("stoichiometric coefficient too large"))?
            }
            _ => 1,
        };
        let name = p.expect_ident("species name")?;
        terms.push((name, coeff));
        match p.peek() {
            Some(Token::Sym('+')) => {
                p.next();
            }
            _ => break,
        }
    }
    Ok(terms)
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<ReactionNetwork, ModelError> {
    let mut species: Vec<Species> = Vec::new();
    let mut parameters: Vec<Parameter> = Vec::new();
    let mut reactions: Vec<Reaction> = Vec::new();
    let mut species_idx: HashMap<String, usize> = HashMap::new();
    let mut param_idx: HashMap<String, usize> = HashMap::new();
    let mut reaction_names: HashMap<String, usize> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let tokens = lex(line, lineno)?;
        let mut p = LineParser {
            tokens: &tokens,
            pos: 0,
            line: lineno,
        };
        let keyword = p.expect_ident("'species', 'param', or 'reaction'")?;
        match keyword.as_str() {
            "species" => {
                let name = p.expect_ident("species name")?;
                let field = p.expect_ident("'init'")?;
                if field != "init" {
                    return Err(p.err(format!("expected 'init', found '{field}'")));
                }
                p.expect_sym('=')?;
                let init = p.expect_uint("initial count")?;
                p.expect_end()?;
                if species_idx.contains_key(&name) {
                    return Err(ModelError::Duplicate {
                        line: lineno,
                        kind: "species",
                        name,
                    });
                }
                species_idx.insert(name.clone(), species.len());
                species.push(Species {
                    name,
                    initial_count: init,
                });
            }
            "param" => {
                let name = p.expect_ident("parameter name")?;
                p.expect_sym('=')?;
                let value = p.expect_float("parameter value")?;
                let mut bounds = None;
                if let Some(Token::Ident(w)) = p.peek() {
                    if w == "bounds" {
                        p.next();
                        p.expect_sym('=')?;
                        let lo = p.expect_float("lower bound")?;
                        p.expect_sym(',')?;
                        let hi = p.expect_float("upper bound")?;
                        bounds = Some((lo, hi));
                    } else {
                        return Err(p.err(format!("unexpected trailing '{w}'")));
                    }
                }
                p.expect_end()?;
                if param_idx.contains_key(&name) {
                    return Err(ModelError::Duplicate {
                        line: lineno,
                        kind: "parameter",
                        name,
                    });
                }
                if !(value > 0.0) || !value.is_finite() {
                    return Err(ModelError::BadParameterValue {
                        line: lineno,
                        name,
                        value,
                    });
                }
                if let Some((lo, hi)) = bounds {
                    if !(0.0 < lo && lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(ModelError::BadBounds {
                            line: lineno,
                            name,
                            lower: lo,
                            upper: hi,
                        });
                    }
                }
                param_idx.insert(name.clone(), parameters.len());
                parameters.push(Parameter {
                    name,
                    value,
                    bounds,
                });
            }
            "reaction" => {
                let name = p.expect_ident("reaction name")?;
                p.expect_sym(':')?;
                let lhs = parse_terms(&mut p)?;
                match p.next() {
                    Some(Token::Arrow) => {}
                    Some(t) => return Err(p.err(format!("expected '->', found {t}"))),
                    None => return Err(p.err("expected '->', found end of line")),
                }
                let rhs = parse_terms(&mut p)?;
                p.expect_sym('@')?;
                let rate_name = p.expect_ident("parameter name")?;
                p.expect_end()?;

                if reaction_names.contains_key(&name) {
                    return Err(ModelError::Duplicate {
                        line: lineno,
                        kind: "reaction",
                        name,
                    });
                }
                let resolve = |terms: &[(String, u32)]| -> Result<Vec<(usize, u32)>, ModelError> {
                    let mut map: HashMap<usize, u32> = HashMap::new();
                    for (sname, coeff) in terms {
                        let idx = *species_idx.get(sname).ok_or_else(|| {
                            ModelError::UndeclaredSpecies {
                                line: lineno,
                                name: sname.clone(),
                            }
                        })?;
                        *map.entry(idx).or_insert(0) += coeff;
                    }
                    let mut v: Vec<(usize, u32)> = map.into_iter().collect();
                    v.sort_unstable();
                    Ok(v)
                };
                let reactants = resolve(&lhs)?;
                let products = resolve(&rhs)?;
                let rate_param =
                    *param_idx
                        .get(&rate_name)
                        .ok_or(ModelError::UndeclaredParameter {
                            line: lineno,
                            name: rate_name,
                        })?;
                let order: u32 = reactants.iter().map(|&(_, a)| a).sum();
                if order > 2 {
                    return Err(ModelError::OrderTooHigh {
                        line: lineno,
                        name,
                        order,
                    });
                }
                let mut stoichiometry = vec![0i64; species.len()];
                for &(s, a) in &reactants {
                    stoichiometry[s] -= a as i64;
                }
                for &(s, b) in &products {
                    stoichiometry[s] += b as i64;
                }
                if stoichiometry.iter().all(|&v| v == 0) {
                    return Err(ModelError::ZeroStoichiometry { line: lineno, name });
                }
                reaction_names.insert(name.clone(), reactions.len());
                reactions.push(Reaction {
                    name,
                    reactants,
                    products,
                    rate_param,
                    stoichiometry,
                });
            }
            other => {
                return Err(ModelError::Syntax {
                    line: lineno,
                    msg: format!("expected 'species', 'param', or 'reaction', found '{other}'"),
                })
            }
        }
    }

    // stoichiometry vectors were sized as species were declared; pad to final count
    for r in &mut reactions {
        r.stoichiometry.resize(species.len(), 0);
    }
    Ok(ReactionNetwork {
        species,
        reactions,
        parameters,
    })
}

/// Renders a network back into model-file text; `parse_model(render(n))`
/// reproduces `n` exactly.
pub fn render(network: &ReactionNetwork) -> String {
    let mut out = String::new();
    for s in &network.species {
        out.push_str(&format!("species {} init={}\n", s.name, s.initial_count));
    }
    for p in &network.parameters {
        match p.bounds {
            Some((lo, hi)) => {
                out.push_str(&format!("param {} = {} bounds={},{}\n", p.name, p.value, lo, hi))
            }
            None => out.push_str(&format!("param {} = {}\n", p.name, p.value)),
        }
    }
    let side = |terms: &[(usize, u32)]| -> String {
        if terms.is_empty() {
            return "0".to_string();
        }
        terms
            .iter()
            .map(|&(s, c)| {
                if c == 1 {
                    network.species[s].name.clone()
                } else {
                    format!("{} {}", c, network.species[s].name)
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    };
    for r in &network.reactions {
        out.push_str(&format!(
            "reaction {}: {} -> {} @ {}\n",
            r.name,
            side(&r.reactants),
            side(&r.products),
            network.parameters[r.rate_param].name
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const BIRTHDEATH: &str = include_str!("../../../models/birthdeath.model");
    const DIMERIZATION: &str = include_str!("../../../models/dimerization.model");

    #[test]
    fn parses_minimal_autocatalytic_model() {
        let net = parse_model("species X init=50\nparam c1 = 0.1\nreaction r1: X -> 2 X @ c1\n")
            .unwrap();
        assert_eq!(net.num_species(), 1);
        assert_eq!(net.num_reactions(), 1);
        assert_eq!(net.reactions()[0].stoichiometry, vec![1]);
    }

    #[test]
    fn parses_shipped_birthdeath_model() {
        let net = parse_model(BIRTHDEATH).unwrap();
        assert_eq!(net.num_species(), 1);
        assert_eq!(net.species()[0].initial_count, 50);
        assert_eq!(net.num_reactions(), 2);
        assert_eq!(net.reactions()[0].stoichiometry, vec![1]);
        assert_eq!(net.reactions()[1].stoichiometry, vec![-1]);
        assert_eq!(net.parameters()[0].value, 0.10);
        assert_eq!(net.parameters()[0].bounds, Some((0.05, 1.0)));
        assert_eq!(net.parameters()[1].value, 1.0);
        assert_eq!(net.parameters()[1].bounds, Some((0.5, 2.0)));
    }

    #[test]
    fn parses_shipped_dimerization_model() {
        let net = parse_model(DIMERIZATION).unwrap();
        assert_eq!(net.num_species(), 2);
        assert_eq!(net.species()[0].name, "X");
        assert_eq!(net.species()[0].initial_count, 301);
        assert_eq!(net.species()[1].initial_count, 0);
        assert_eq!(net.reactions()[0].stoichiometry, vec![-2, 1]);
        assert_eq!(net.reactions()[1].stoichiometry, vec![2, -1]);
        assert_eq!(net.parameters()[0].value, 1.66e-3);
        assert_eq!(net.parameters()[0].bounds, Some((1.0e-4, 9.0e-3)));
        assert_eq!(net.parameters()[1].bounds, Some((0.01, 1.0)));
    }

    #[test]
    fn rejects_zero_net_stoichiometry() {
        let err = parse_model("species X init=1\nparam c1 = 0.1\nreaction r: X -> X @ c1\n")
            .unwrap_err();
        assert!(matches!(err, ModelError::ZeroStoichiometry { line: 3, .. }));
    }

    #[test]
    fn rejects_order_above_two() {
        let err = parse_model("species X init=1\nparam c = 0.1\nreaction r: 3 X -> X @ c\n")
            .unwrap_err();
        assert!(matches!(err, ModelError::OrderTooHigh { order: 3, .. }));
        let err = parse_model(
            "species X init=1\nspecies Y init=1\nspecies Z init=1\nparam c = 0.1\nreaction r: X + Y + Z -> X @ c\n",
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::OrderTooHigh { order: 3, .. }));
    }

    #[test]
    fn rejects_undeclared_names_with_line_numbers() {
        let err = parse_model("species X init=1\nparam c = 0.1\nreaction r: Y -> X @ c\n")
            .unwrap_err();
        assert!(matches!(err, ModelError::UndeclaredSpecies { line: 3, .. }));
        let err = parse_model("species X init=1\nreaction r: X -> 2 X @ c9\n").unwrap_err();
        assert!(matches!(err, ModelError::UndeclaredParameter { line: 2, .. }));
    }

    #[test]
    fn rejects_duplicates_and_bad_bounds() {
        let err = parse_model("species X init=1\nspecies X init=2\n").unwrap_err();
        assert!(matches!(err, ModelError::Duplicate { kind: "species", .. }));
        let err = parse_model("param c = 0.1 bounds=2.0,1.0\n").unwrap_err();
        assert!(matches!(err, ModelError::BadBounds { .. }));
        let err = parse_model("param c = 0.1 bounds=0.0,1.0\n").unwrap_err();
        assert!(matches!(err, ModelError::BadBounds { .. }));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_model("species X init=1\nreaction oops\n").unwrap_err();
        match err {
            ModelError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn zeroth_order_reactions_parse() {
        let net = parse_model("species X init=0\nparam c = 2.0\nreaction birth: 0 -> X @ c\n")
            .unwrap();
        assert!(net.reactions()[0].reactants.is_empty());
        assert_eq!(net.reactions()[0].stoichiometry, vec![1]);
    }

    #[test]
    fn propensity_eval_matches_hand_values() {
        let bd = parse_model(BIRTHDEATH).unwrap();
        let rates = propensity_eval(&bd, &[50], &bd.nominal_point()).unwrap();
        assert_relative_eq!(rates[0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(rates[1], 50.0, max_relative = 1e-12);

        let dm = parse_model(DIMERIZATION).unwrap();
        let rates = propensity_eval(&dm, &[301, 0], &dm.nominal_point()).unwrap();
        assert_relative_eq!(rates[0], 74.949, max_relative = 1e-12);
        assert_eq!(rates[1], 0.0);
        // C(1,2) = 0
        let rates = propensity_eval(&dm, &[1, 150], &dm.nominal_point()).unwrap();
        assert_eq!(rates[0], 0.0);
        assert_relative_eq!(rates[1], 30.0, max_relative = 1e-12);
    }

    #[test]
    fn propensity_eval_rejects_negative_state() {
        let bd = parse_model(BIRTHDEATH).unwrap();
        let err = propensity_eval(&bd, &[-1], &bd.nominal_point()).unwrap_err();
        assert!(matches!(err, ModelError::NegativeState { index: 0, value: -1 }));
    }

    #[test]
    fn polynomials_match_hand_derivatives() {
        let dm = parse_model(DIMERIZATION).unwrap();
        let polys = propensity_polynomials(&dm);
        // 2 X -> Y: alpha = c (x^2 - x)/2, grad_x = c(x - 1/2), hess_xx = c
        let p = &polys[0];
        assert_eq!(p.param, 0);
        assert_eq!(p.constant, 0.0);
        assert_eq!(p.linear, vec![-0.5, 0.0]);
        assert_eq!(p.hessian.get(0, 0), 1.0);
        assert_eq!(p.hessian.get(0, 1), 0.0);
        let c = 1.66e-3;
        assert_relative_eq!(p.eval(&[301.0, 0.0], c), 74.949, max_relative = 1e-12);
        let g = p.gradient(&[301.0, 0.0], c);
        assert_relative_eq!(g[0], c * 300.5, max_relative = 1e-12);
        assert_eq!(g[1], 0.0);

        // Y -> 2 X: alpha = c y, linear propensity
        let q = &polys[1];
        assert_eq!(q.linear, vec![0.0, 1.0]);
        assert_eq!(q.constant, 0.0);
        assert!(q.hessian.packed().iter().all(|&v| v == 0.0));

        // zeroth order: constant polynomial, zero gradient and Hessian
        let net = parse_model("species X init=0\nparam c = 2.0\nreaction b: 0 -> X @ c\n").unwrap();
        let polys = propensity_polynomials(&net);
        assert_eq!(polys[0].constant, 1.0);
        assert_eq!(polys[0].eval(&[7.0], 2.0), 2.0);
        assert_eq!(polys[0].gradient(&[7.0], 2.0), vec![0.0]);
    }

    #[test]
    fn render_round_trips_shipped_models() {
        for text in [BIRTHDEATH, DIMERIZATION] {
            let net = parse_model(text).unwrap();
            let again = parse_model(&render(&net)).unwrap();
            assert_eq!(net, again);
        }
    }

    #[test]
    fn mixed_second_order_uses_product_counting() {
        let net = parse_model(
            "species A init=3\nspecies B init=4\nparam c = 0.5\nreaction r: A + B -> A @ c\n",
        )
        .unwrap();
        let rates = propensity_eval(&net, &[3, 4], &net.nominal_point()).unwrap();
        assert_relative_eq!(rates[0], 0.5 * 12.0, max_relative = 1e-12);
        let polys = propensity_polynomials(&net);
        assert_eq!(polys[0].hessian.get(0, 1), 1.0);
        let g = polys[0].gradient(&[3.0, 4.0], 0.5);
        assert_relative_eq!(g[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(g[1], 1.5, max_relative = 1e-12);
    }
}
