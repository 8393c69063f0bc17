//! Reaction-network data model and the line-oriented model text format.
//!
//! ```text
//! # comments run to end of line
//! species A = 10
//! param k = 0.5
//! reaction r1: 2 A -> B @ k
//! reaction r2: B -> 0 @ 1.0
//! ```
//!
//! Species, parameters and reactions keep declaration order; that order is
//! the index order used by every simulator and every CSV column.

use std::collections::HashMap;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: undeclared species `{name}` in reaction `{reaction}`")]
    UndeclaredSpecies {
        line: usize,
        name: String,
        reaction: String,
    },
    #[error("line {line}: undeclared parameter `{name}` in reaction `{reaction}`")]
    UndeclaredParameter {
        line: usize,
        name: String,
        reaction: String,
    },
    #[error("line {line}: duplicate {kind} name `{name}`")]
    DuplicateName {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: rate of `{name}` must be a positive finite number, got {value}")]
    NonPositiveRate { line: usize, name: String, value: f64 },
    #[error("line {line}: reaction `{reaction}` has reactant order {order}; at most 2 is supported")]
    ReactionOrder { line: usize, reaction: String, order: u32 },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("firing reaction `{reaction}` drives species `{species}` negative")]
    NegativeAmount { reaction: String, species: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub initial_amount: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
}

/// An elementary mass-action reaction.
///
/// Reactant and product lists hold `(species index, stoichiometry)` pairs
/// sorted by species index, one entry per species.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub name: String,
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    /// Stochastic rate constant `c`, already resolved when `rate_param` is set.
    pub rate_constant: f64,
    pub rate_param: Option<usize>,
}

impl Reaction {
    /// Total reactant stoichiometry (0, 1 or 2).
    pub fn order(&self) -> u32 {
        self.reactants.iter().map(|&(_, k)| k).sum()
    }
}

/// Molecular amounts at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub amounts: Vec<i64>,
}

impl SystemState {
    pub fn new(time: f64, amounts: Vec<i64>) -> Self {
        Self { time, amounts }
    }
}

/// Integer species weights `w` with `wᵀν = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConservationLaw {
    pub coefficients: Vec<i64>,
}

impl ConservationLaw {
    pub fn evaluate(&self, amounts: &[i64]) -> i64 {
        self.coefficients.iter().zip(amounts).map(|(w, x)| w * x).sum()
    }

    pub fn evaluate_real(&self, amounts: &[f64]) -> f64 {
        self.coefficients.iter().zip(amounts).map(|(&w, x)| w as f64 * x).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    params: Vec<Parameter>,
    reactions: Vec<Reaction>,
    /// Row-major species × reactions.
    stoichiometry: Vec<i64>,
}

impl ReactionNetwork {
    /// Assembles a network from parts, validating the same invariants as the parser.
    pub fn new(
        species: Vec<Species>,
        params: Vec<Parameter>,
        mut reactions: Vec<Reaction>,
    ) -> Result<Self, ModelError> {
        check_unique(species.iter().map(|s| s.name.as_str()), "species")?;
        check_unique(params.iter().map(|p| p.name.as_str()), "parameter")?;
        check_unique(reactions.iter().map(|r| r.name.as_str()), "reaction")?;
        for p in &params {
            if !(p.value > 0.0 && p.value.is_finite()) {
                return Err(ModelError::NonPositiveRate {
                    line: 0,
                    name: p.name.clone(),
                    value: p.value,
                });
            }
        }
        for r in &mut reactions {
            if let Some(p) = r.rate_param {
                let param = params
                    .get(p)
                    .ok_or_else(|| ModelError::UnknownParameter(format!("#{p}")))?;
                r.rate_constant = param.value;
            }
            if !(r.rate_constant > 0.0 && r.rate_constant.is_finite()) {
                return Err(ModelError::NonPositiveRate {
                    line: 0,
                    name: r.name.clone(),
                    value: r.rate_constant,
                });
            }
            if r.order() > 2 {
                return Err(ModelError::ReactionOrder {
                    line: 0,
                    reaction: r.name.clone(),
                    order: r.order(),
                });
            }
            for &(s, _) in r.reactants.iter().chain(&r.products) {
                if s >= species.len() {
                    return Err(ModelError::UndeclaredSpecies {
                        line: 0,
                        name: format!("#{s}"),
                        reaction: r.name.clone(),
                    });
                }
            }
            r.reactants = merge_terms(std::mem::take(&mut r.reactants));
            r.products = merge_terms(std::mem::take(&mut r.products));
        }
        let n_r = reactions.len();
        let mut stoichiometry = vec![0i64; species.len() * n_r];
        for (j, r) in reactions.iter().enumerate() {
            for &(s, k) in &r.reactants {
                stoichiometry[s * n_r + j] -= i64::from(k);
            }
            for &(s, k) in &r.products {
                stoichiometry[s * n_r + j] += i64::from(k);
            }
        }
        Ok(Self {
            species,
            params,
            reactions,
            stoichiometry,
        })
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn species_names(&self) -> Vec<&str> {
        self.species.iter().map(|s| s.name.as_str()).collect()
    }

    /// `ν[species][reaction]`.
    pub fn stoichiometry(&self, species: usize, reaction: usize) -> i64 {
        self.stoichiometry[species * self.reactions.len() + reaction]
    }

    /// State-change vector of one reaction.
    pub fn change_vector(&self, reaction: usize) -> Vec<i64> {
        (0..self.species.len())
            .map(|i| self.stoichiometry(i, reaction))
            .collect()
    }

    pub fn initial_amounts(&self) -> Vec<i64> {
        self.species.iter().map(|s| s.initial_amount as i64).collect()
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::new(0.0, self.initial_amounts())
    }

    /// Copy of the network with one parameter replaced and rates re-resolved.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self, ModelError> {
        let idx = self
            .params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
        let mut params = self.params.clone();
        params[idx].value = value;
        Self::new(self.species.clone(), params, self.reactions.clone())
    }

    /// Stochastic propensity `a_j(x) = c_j · h_j(x)`, where `h_j` counts
    /// distinct reactant combinations.
    #[inline]
    pub fn propensity(&self, reaction: usize, amounts: &[i64]) -> f64 {
        let r = &self.reactions[reaction];
        let mut h = 1.0;
        for &(s, k) in &r.reactants {
            let n = amounts[s];
            if n < i64::from(k) {
                return 0.0;
            }
            h *= match k {
                1 => n as f64,
                _ => (n * (n - 1) / 2) as f64,
            };
        }
        r.rate_constant * h
    }

    /// Continuous extension of [`propensity`](Self::propensity) used by the
    /// rate equations and the hybrid flow. Keeps `x(x-1)/2` for
    /// dimerisation and is zero wherever the integer form would be.
    #[inline]
    pub fn propensity_continuous(&self, reaction: usize, amounts: &[f64]) -> f64 {
        let r = &self.reactions[reaction];
        let mut h = 1.0;
        for &(s, k) in &r.reactants {
            let x = amounts[s];
            h *= match k {
                1 => x.max(0.0),
                _ => {
                    if x <= 1.0 {
                        0.0
                    } else {
                        x * (x - 1.0) / 2.0
                    }
                }
            };
        }
        r.rate_constant * h
    }

    pub fn propensities_into(&self, amounts: &[i64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (j, a) in out.iter_mut().enumerate() {
            *a = self.propensity(j, amounts);
            total += *a;
        }
        total
    }

    /// Fires reaction `j` in place.
    pub fn fire(&self, amounts: &mut [i64], reaction: usize) -> Result<(), ModelError> {
        let n_r = self.reactions.len();
        for (i, x) in amounts.iter().enumerate() {
            if x + self.stoichiometry[i * n_r + reaction] < 0 {
                return Err(ModelError::NegativeAmount {
                    reaction: self.reactions[reaction].name.clone(),
                    species: self.species[i].name.clone(),
                });
            }
        }
        for (i, x) in amounts.iter_mut().enumerate() {
            *x += self.stoichiometry[i * n_r + reaction];
        }
        Ok(())
    }

    /// Returns the state after one firing of reaction `j`; time is unchanged.
    pub fn apply_reaction(&self, state: &SystemState, reaction: usize) -> Result<SystemState, ModelError> {
        let mut next = state.clone();
        self.fire(&mut next.amounts, reaction)?;
        Ok(next)
    }

    /// Basis of the integer left null space of `ν`, in canonical form
    /// (coprime entries, first nonzero entry positive).
    pub fn conservation_laws(&self) -> Vec<ConservationLaw> {
        let n_s = self.species.len();
        let n_r = self.reactions.len();
        // Rows of νᵀ; solve νᵀ w = 0 by exact row reduction.
        let mut m: Vec<Vec<Ratio<i128>>> = (0..n_r)
            .map(|j| {
                (0..n_s)
                    .map(|i| Ratio::from_integer(i128::from(self.stoichiometry(i, j))))
                    .collect()
            })
            .collect();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..n_s {
            let Some(p) = (row..n_r).find(|&r| m[r][col] != Ratio::from_integer(0)) else {
                continue;
            };
            m.swap(row, p);
            let lead = m[row][col];
            for v in m[row].iter_mut() {
                *v /= lead;
            }
            for r in 0..n_r {
                if r != row && m[r][col] != Ratio::from_integer(0) {
                    let f = m[r][col];
                    for c in 0..n_s {
                        let d = m[row][c] * f;
                        m[r][c] -= d;
                    }
                }
            }
            pivots.push(col);
            row += 1;
            if row == n_r {
                break;
            }
        }
        let free: Vec<usize> = (0..n_s).filter(|c| !pivots.contains(c)).collect();
        free.into_iter()
            .map(|f| {
                let mut w = vec![Ratio::from_integer(0i128); n_s];
                w[f] = Ratio::from_integer(1);
                for (r, &pc) in pivots.iter().enumerate() {
                    w[pc] = -m[r][f];
                }
                canonicalize(&w)
            })
            .collect()
    }

    /// Renders the network in the model text format.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

fn canonicalize(w: &[Ratio<i128>]) -> ConservationLaw {
    let lcm = w.iter().fold(1i128, |acc, v| acc.lcm(v.denom()));
    let ints: Vec<i128> = w.iter().map(|v| (v * lcm).to_integer()).collect();
    let gcd = ints.iter().fold(0i128, |acc, v| acc.gcd(v)).max(1);
    let sign = match ints.iter().find(|&&v| v != 0) {
        Some(&v) if v < 0 => -1,
        _ => 1,
    };
    ConservationLaw {
        coefficients: ints.iter().map(|v| (sign * v / gcd) as i64).collect(),
    }
}

fn merge_terms(mut terms: Vec<(usize, u32)>) -> Vec<(usize, u32)> {
    terms.sort_by_key(|&(s, _)| s);
    let mut out: Vec<(usize, u32)> = Vec::with_capacity(terms.len());
    for (s, k) in terms {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += k,
            _ => out.push((s, k)),
        }
    }
    out.retain(|&(_, k)| k > 0);
    out
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>, kind: &'static str) -> Result<(), ModelError> {
    let mut seen = HashMap::new();
    for name in names {
        if seen.insert(name, ()).is_some() {
            return Err(ModelError::DuplicateName {
                line: 0,
                kind,
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.species {
            writeln!(f, "species {} = {}", s.name, s.initial_amount)?;
        }
        for p in &self.params {
            writeln!(f, "param {} = {}", p.name, p.value)?;
        }
        let side = |terms: &[(usize, u32)]| -> String {
            if terms.is_empty() {
                return "0".to_string();
            }
            terms
                .iter()
                .map(|&(s, k)| {
                    let name = &self.species[s].name;
                    if k == 1 {
                        name.clone()
                    } else {
                        format!("{k} {name}")
                    }
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        for r in &self.reactions {
            let rate = match r.rate_param {
                Some(p) => self.params[p].name.clone(),
                None => r.rate_constant.to_string(),
            };
            writeln!(
                f,
                "reaction {}: {} -> {} @ {}",
                r.name,
                side(&r.reactants),
                side(&r.products),
                rate
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parser

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            line,
            _src: src,
        }
    }

    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::Syntax {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn expect(&mut self, token: &str) -> Result<(), ModelError> {
        self.skip_ws();
        let n = token.chars().count();
        let got: String = self.chars.iter().skip(self.pos).take(n).collect();
        if got == token {
            self.pos += n;
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ModelError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return Err(self.err("expected identifier")),
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    /// A run of non-whitespace characters that is not an operator.
    fn word(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if !c.is_whitespace() && c != '+' && c != '@') {
            if self.chars[self.pos..].starts_with(&['-', '>']) {
                break;
            }
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn unsigned(&mut self) -> Result<u64, ModelError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected non-negative integer"));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map_err(|_| {
            self.pos = start;
            self.err("integer out of range")
        })
    }
}

enum RateToken {
    Value(f64),
    Param(String),
}

struct RawReaction {
    line: usize,
    name: String,
    reactants: Vec<(String, u32)>,
    products: Vec<(String, u32)>,
    rate: RateToken,
}

fn parse_side(cur: &mut Cursor<'_>) -> Result<Vec<(String, u32)>, ModelError> {
    cur.skip_ws();
    if cur.peek() == Some('0') {
        let save = cur.pos;
        cur.pos += 1;
        cur.skip_ws();
        match cur.peek() {
            None | Some('-') | Some('@') => return Ok(Vec::new()),
            _ => cur.pos = save,
        }
    }
    let mut terms = Vec::new();
    loop {
        cur.skip_ws();
        let coeff = if matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
            let k = cur.unsigned()?;
            if k == 0 || k > u64::from(u32::MAX) {
                return Err(cur.err("stoichiometric coefficient must be positive"));
            }
            k as u32
        } else {
            1
        };
        let name = cur.ident()?;
        terms.push((name, coeff));
        cur.skip_ws();
        if cur.peek() == Some('+') {
            cur.pos += 1;
        } else {
            break;
        }
    }
    Ok(terms)
}

/// Parses the model text format.
pub fn parse_model(text: &str) -> Result<ReactionNetwork, ModelError> {
    let mut species: Vec<(usize, Species)> = Vec::new();
    let mut params: Vec<(usize, Parameter)> = Vec::new();
    let mut raw: Vec<RawReaction> = Vec::new();

    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = full_line.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(content, line_no);
        if cur.at_end() {
            continue;
        }
        let keyword = cur.ident()?;
        match keyword.as_str() {
            "species" => {
                let name = cur.ident()?;
                cur.expect("=")?;
                let amount = cur.unsigned()?;
                if !cur.at_end() {
                    return Err(cur.err("unexpected trailing input"));
                }
                if species.iter().any(|(_, s)| s.name == name) {
                    return Err(ModelError::DuplicateName {
                        line: line_no,
                        kind: "species",
                        name,
                    });
                }
                species.push((
                    line_no,
                    Species {
                        name,
                        initial_amount: amount,
                    },
                ));
            }
            "param" => {
                let name = cur.ident()?;
                cur.expect("=")?;
                let col = cur.pos;
                let word = cur.word();
                let value: f64 = word.parse().map_err(|_| {
                    cur.pos = col;
                    cur.err(format!("expected number, got `{word}`"))
                })?;
                if !cur.at_end() {
                    return Err(cur.err("unexpected trailing input"));
                }
                if !(value > 0.0 && value.is_finite()) {
                    return Err(ModelError::NonPositiveRate {
                        line: line_no,
                        name,
                        value,
                    });
                }
                if params.iter().any(|(_, p)| p.name == name) {
                    return Err(ModelError::DuplicateName {
                        line: line_no,
                        kind: "parameter",
                        name,
                    });
                }
                params.push((line_no, Parameter { name, value }));
            }
            "reaction" => {
                let name = cur.ident()?;
                cur.expect(":")?;
                let reactants = parse_side(&mut cur)?;
                cur.expect("->")?;
                let products = parse_side(&mut cur)?;
                cur.expect("@")?;
                cur.skip_ws();
                let col = cur.pos;
                let word = cur.word();
                let rate = if word.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
                    RateToken::Param(word)
                } else {
                    let value: f64 = word.parse().map_err(|_| {
                        cur.pos = col;
                        cur.err(format!("expected rate constant, got `{word}`"))
                    })?;
                    if !(value > 0.0 && value.is_finite()) {
                        return Err(ModelError::NonPositiveRate {
                            line: line_no,
                            name,
                            value,
                        });
                    }
                    RateToken::Value(value)
                };
                if !cur.at_end() {
                    return Err(cur.err("unexpected trailing input"));
                }
                if raw.iter().any(|r| r.name == name) {
                    return Err(ModelError::DuplicateName {
                        line: line_no,
                        kind: "reaction",
                        name,
                    });
                }
                let order: u32 = reactants.iter().map(|&(_, k)| k).sum();
                if order > 2 {
                    return Err(ModelError::ReactionOrder {
                        line: line_no,
                        reaction: name,
                        order,
                    });
                }
                raw.push(RawReaction {
                    line: line_no,
                    name,
                    reactants,
                    products,
                    rate,
                });
            }
            other => {
                cur.pos = 0;
                cur.skip_ws();
                return Err(cur.err(format!(
                    "unknown keyword `{other}` (expected species, param or reaction)"
                )));
            }
        }
    }

    let species_index: HashMap<&str, usize> = species
        .iter()
        .enumerate()
        .map(|(i, (_, s))| (s.name.as_str(), i))
        .collect();
    let param_index: HashMap<&str, usize> = params
        .iter()
        .enumerate()
        .map(|(i, (_, p))| (p.name.as_str(), i))
        .collect();

    let mut reactions = Vec::with_capacity(raw.len());
    for r in &raw {
        let resolve = |terms: &[(String, u32)]| -> Result<Vec<(usize, u32)>, ModelError> {
            terms
                .iter()
                .map(|(name, k)| {
                    species_index
                        .get(name.as_str())
                        .map(|&i| (i, *k))
                        .ok_or_else(|| ModelError::UndeclaredSpecies {
                            line: r.line,
                            name: name.clone(),
                            reaction: r.name.clone(),
                        })
                })
                .collect()
        };
        let (rate_constant, rate_param) = match &r.rate {
            RateToken::Value(v) => (*v, None),
            RateToken::Param(p) => {
                let i = *param_index
                    .get(p.as_str())
                    .ok_or_else(|| ModelError::UndeclaredParameter {
                        line: r.line,
                        name: p.clone(),
                        reaction: r.name.clone(),
                    })?;
                (params[i].1.value, Some(i))
            }
        };
        reactions.push(Reaction {
            name: r.name.clone(),
            reactants: resolve(&r.reactants)?,
            products: resolve(&r.products)?,
            rate_constant,
            rate_param,
        });
    }

    ReactionNetwork::new(
        species.into_iter().map(|(_, s)| s).collect(),
        params.into_iter().map(|(_, p)| p).collect(),
        reactions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn net(text: &str) -> ReactionNetwork {
        parse_model(text).unwrap()
    }

    #[test]
    fn parses_single_decay() {
        let n = net("species A = 10\nreaction r1: A -> 0 @ 1.0");
        assert_eq!(n.n_species(), 1);
        assert_eq!(n.species()[0].initial_amount, 10);
        assert_eq!(n.n_reactions(), 1);
        assert_eq!(n.change_vector(0), vec![-1]);
    }

    #[test]
    fn undeclared_species_is_reported() {
        let err = parse_model("reaction r1: B -> 0 @ 1.0").unwrap_err();
        assert!(matches!(err, ModelError::UndeclaredSpecies { ref name, line: 1, .. } if name == "B"));
    }

    #[test]
    fn duplicate_species_is_reported() {
        let err = parse_model("species A = 5\nspecies A = 6").unwrap_err();
        assert!(matches!(
            err,
            ModelError::DuplicateName {
                line: 2,
                kind: "species",
                ..
            }
        ));
        let err = parse_model("species A = 5\nreaction r: A -> 0 @ 1\nreaction r: 0 -> A @ 1").unwrap_err();
        assert!(matches!(err, ModelError::DuplicateName { kind: "reaction", .. }));
    }

    #[test]
    fn rejects_bad_rates_and_orders() {
        assert!(matches!(
            parse_model("species A = 1\nreaction r: A -> 0 @ 0").unwrap_err(),
            ModelError::NonPositiveRate { .. }
        ));
        assert!(matches!(
            parse_model("species A = 1\nreaction r: A -> 0 @ -2.5").unwrap_err(),
            ModelError::Syntax { .. } | ModelError::NonPositiveRate { .. }
        ));
        assert!(matches!(
            parse_model("species A = 1\nreaction r: 3 A -> 0 @ 1").unwrap_err(),
            ModelError::ReactionOrder { order: 3, .. }
        ));
        assert!(matches!(
            parse_model("species A = 1\nspecies B = 1\nreaction r: A + A + B -> 0 @ 1").unwrap_err(),
            ModelError::ReactionOrder { order: 3, .. }
        ));
        assert!(matches!(
            parse_model("species A = 1\nreaction r: A -> 0 @ k").unwrap_err(),
            ModelError::UndeclaredParameter { .. }
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_model("species A = 1\nreaction r1 A -> 0 @ 1").unwrap_err();
        assert_eq!(
            err,
            ModelError::Syntax {
                line: 2,
                column: 13,
                message: "expected `:`".into()
            }
        );
        let err = parse_model("specis A = 1").unwrap_err();
        assert!(matches!(err, ModelError::Syntax { line: 1, column: 1, .. }));
    }

    #[test]
    fn comments_params_and_coefficients() {
        let n = net(
            "# dimerisation\nspecies A = 4 # monomer\nspecies B = 0\nparam k = 0.1\n\
             reaction r2: 2 A -> B @ k\nreaction r3: B -> A + A @ 2e-1\n",
        );
        assert_eq!(n.reactions()[0].reactants, vec![(0, 2)]);
        assert_eq!(n.reactions()[0].rate_constant, 0.1);
        assert_eq!(n.reactions()[1].products, vec![(0, 2)]);
        assert_eq!(n.change_vector(1), vec![2, -1]);
        let m = n.with_parameter("k", 3.0).unwrap();
        assert_eq!(m.reactions()[0].rate_constant, 3.0);
        assert!(n.with_parameter("nope", 1.0).is_err());
    }

    #[test]
    fn propensity_conventions() {
        let n = net(
            "species A = 0\nspecies B = 0\nspecies C = 0\n\
             reaction uni: A -> B @ 2.0\nreaction bi: A + B -> C @ 0.5\nreaction dim: 2 A -> B @ 1.0\nreaction src: 0 -> A @ 3",
        );
        assert_eq!(n.propensity(0, &[5, 0, 0]), 10.0);
        assert_eq!(n.propensity(1, &[4, 3, 0]), 6.0);
        assert_eq!(n.propensity(2, &[5, 0, 0]), 10.0);
        assert_eq!(n.propensity(0, &[0, 0, 0]), 0.0);
        assert_eq!(n.propensity(2, &[1, 0, 0]), 0.0);
        assert_eq!(n.propensity(3, &[0, 0, 0]), 3.0);
        assert_eq!(n.propensity_continuous(2, &[5.0, 0.0, 0.0]), 10.0);
        assert_eq!(n.propensity_continuous(2, &[0.5, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn apply_reaction_updates_and_guards() {
        let n = net("species A = 5\nspecies B = 0\nreaction f: A -> B @ 1\nreaction d: 2 A -> B @ 1");
        let s = n.initial_state();
        assert_eq!(n.apply_reaction(&s, 0).unwrap().amounts, vec![4, 1]);
        let s2 = SystemState::new(0.0, vec![2, 0]);
        assert_eq!(n.apply_reaction(&s2, 1).unwrap().amounts, vec![0, 1]);
        let empty = SystemState::new(1.5, vec![0, 0]);
        assert!(matches!(
            n.apply_reaction(&empty, 0),
            Err(ModelError::NegativeAmount { .. })
        ));
        assert_eq!(n.apply_reaction(&s, 0).unwrap().time, 0.0);
    }

    #[test]
    fn conservation_law_examples() {
        let iso = net("species A = 1\nspecies B = 0\nreaction f: A -> B @ 1\nreaction b: B -> A @ 1");
        assert_eq!(
            iso.conservation_laws(),
            vec![ConservationLaw {
                coefficients: vec![1, 1]
            }]
        );

        let bd = net("species A = 0\nreaction b: 0 -> A @ 5\nreaction d: A -> 0 @ 1");
        assert!(bd.conservation_laws().is_empty());

        let enz = net("species E = 10\nspecies S = 100\nspecies ES = 0\nspecies P = 0\n\
             reaction bind: E + S -> ES @ 0.01\nreaction unbind: ES -> E + S @ 0.1\nreaction cat: ES -> E + P @ 0.1");
        let laws = enz.conservation_laws();
        assert_eq!(laws.len(), 2);
        // Each expected law must be an integer combination of the basis: check
        // the rank of basis ∪ {expected} stays 2.
        for expected in [vec![1, 0, 1, 0], vec![0, 1, 1, 1]] {
            assert!(in_span(&laws, &expected), "{expected:?} not spanned by {laws:?}");
        }
    }

    fn in_span(basis: &[ConservationLaw], v: &[i64]) -> bool {
        let mut rows: Vec<Vec<f64>> = basis
            .iter()
            .map(|l| l.coefficients.iter().map(|&x| x as f64).collect())
            .collect();
        rows.push(v.iter().map(|&x| x as f64).collect());
        rank(rows) == basis.len()
    }

    fn rank(mut m: Vec<Vec<f64>>) -> usize {
        let cols = m[0].len();
        let mut r = 0;
        for c in 0..cols {
            let Some(p) = (r..m.len()).find(|&i| m[i][c].abs() > 1e-9) else {
                continue;
            };
            m.swap(r, p);
            for i in 0..m.len() {
                if i != r {
                    let f = m[i][c] / m[r][c];
                    for k in 0..cols {
                        m[i][k] -= f * m[r][k];
                    }
                }
            }
            r += 1;
        }
        r
    }

    #[test]
    fn render_round_trips_examples() {
        let text = "species A = 4\nspecies B = 0\nparam k = 0.1\n\
                    reaction r2: A + A -> B @ k\nreaction r3: B -> 0 @ 0.30000000000000004\nreaction r4: 0 -> A @ 1e-7\n";
        let n = net(text);
        assert_eq!(parse_model(&n.render()).unwrap(), n);
    }

    fn arb_network() -> impl Strategy<Value = ReactionNetwork> {
        (1usize..5, 0usize..6).prop_flat_map(|(n_s, n_r)| {
            let species = proptest::collection::vec(0u64..1000, n_s);
            let term = (0..n_s, 1u32..3);
            let reaction = (
                proptest::collection::vec(term.clone(), 0..3),
                proptest::collection::vec(term, 0..3),
                1e-6f64..1e6,
            );
            (species, proptest::collection::vec(reaction, n_r)).prop_filter_map(
                "order too high",
                |(amounts, reactions)| {
                    let species = amounts
                        .iter()
                        .enumerate()
                        .map(|(i, &a)| Species {
                            name: format!("S{i}"),
                            initial_amount: a,
                        })
                        .collect();
                    let reactions = reactions
                        .into_iter()
                        .enumerate()
                        .map(|(j, (re, pr, c))| Reaction {
                            name: format!("r{j}"),
                            reactants: re,
                            products: pr,
                            rate_constant: c,
                            rate_param: None,
                        })
                        .collect();
                    ReactionNetwork::new(species, Vec::new(), reactions).ok()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(n in arb_network()) {
            prop_assert_eq!(parse_model(&n.render()).unwrap(), n);
        }

        #[test]
        fn conservation_laws_annihilate_stoichiometry(n in arb_network()) {
            for law in n.conservation_laws() {
                prop_assert!(law.coefficients.iter().any(|&w| w != 0));
                let first = law.coefficients.iter().find(|&&w| w != 0).unwrap();
                prop_assert!(*first > 0);
                let g = law.coefficients.iter().fold(0i64, |a, b| a.gcd(b));
                prop_assert_eq!(g, 1);
                for j in 0..n.n_reactions() {
                    let dot: i64 = (0..n.n_species()).map(|i| law.coefficients[i] * n.stoichiometry(i, j)).sum();
                    prop_assert_eq!(dot, 0);
                }
            }
        }

        #[test]
        fn propensity_vanishes_when_reactants_short(n in arb_network(), x in proptest::collection::vec(0i64..4, 5)) {
            let x = &x[..n.n_species()];
            for (j, r) in n.reactions().iter().enumerate() {
                let short = r.reactants.iter().any(|&(s, k)| x[s] < i64::from(k));
                let a = n.propensity(j, x);
                prop_assert!(a >= 0.0);
                if short { prop_assert_eq!(a, 0.0); }
            }
        }

        #[test]
        fn forward_then_reverse_restores(a in 1i64..50, b in 0i64..50) {
            let n = net("species A = 0\nspecies B = 0\nspecies C = 0\nreaction f: A + B -> C @ 1\nreaction r: C -> A + B @ 1\nreaction g: 2 A -> C @ 1\nreaction h: C -> 2 A @ 1");
            let s = SystemState::new(0.0, vec![a.max(2), b.max(1), 0]);
            let there = n.apply_reaction(&s, 0).unwrap();
            prop_assert_eq!(n.apply_reaction(&there, 1).unwrap(), s.clone());
            let there = n.apply_reaction(&s, 2).unwrap();
            prop_assert_eq!(n.apply_reaction(&there, 3).unwrap(), s);
        }
    }
}
