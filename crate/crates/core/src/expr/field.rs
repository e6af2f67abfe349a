//! Square vector fields F: R^n x R^p -> R^n.

use super::parse::{parse_expr, ParseError, SymbolTable};
use super::{Expr, Symbol, SymbolKind};

/// A named square system: n component expressions over n variables and
/// p parameters.
#[derive(Clone, Debug)]
pub struct VectorField {
    name: String,
    variables: Vec<Symbol>,
    parameters: Vec<Symbol>,
    components: Vec<Expr>,
    table: SymbolTable,
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum FieldError {
    #[error("component {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("invalid symbol name `{0}`")]
    InvalidSymbolName(String),
    #[error("system must be square: {vars} variables but {comps} components")]
    NotSquare { vars: usize, comps: usize },
    #[error("system needs at least one variable")]
    Empty,
    #[error("component {index} references undeclared symbol `{name}`")]
    Undeclared { index: usize, name: String },
}

impl VectorField {
    /// Build a field from pre-constructed expressions.
    pub fn new(
        name: &str,
        variables: Vec<Symbol>,
        parameters: Vec<Symbol>,
        components: Vec<Expr>,
    ) -> Result<Self, FieldError> {
        if variables.is_empty() {
            return Err(FieldError::Empty);
        }
        if components.len() != variables.len() {
            return Err(FieldError::NotSquare {
                vars: variables.len(),
                comps: components.len(),
            });
        }
        let mut table = SymbolTable::new();
        for s in variables.iter().chain(parameters.iter()) {
            table
                .insert(*s)
                .map_err(FieldError::DuplicateSymbol)?;
        }
        for (index, c) in components.iter().enumerate() {
            for s in c.free_symbols() {
                if table.get(&s.name()) != Some(s) {
                    return Err(FieldError::Undeclared {
                        index,
                        name: s.name(),
                    });
                }
            }
        }
        Ok(VectorField {
            name: name.to_string(),
            variables,
            parameters,
            components,
            table,
        })
    }

    /// Parse component expression texts against declared variable and
    /// parameter names.
    pub fn parse(
        name: &str,
        variables: &[&str],
        parameters: &[&str],
        components: &[&str],
    ) -> Result<Self, FieldError> {
        let vars: Vec<Symbol> = variables
            .iter()
            .map(|n| Symbol::new(n, SymbolKind::Variable))
            .collect::<Result<_, _>>()?;
        let params: Vec<Symbol> = parameters
            .iter()
            .map(|n| Symbol::new(n, SymbolKind::Parameter))
            .collect::<Result<_, _>>()?;
        let mut table = SymbolTable::new();
        for s in vars.iter().chain(params.iter()) {
            table
                .insert(*s)
                .map_err(FieldError::DuplicateSymbol)?;
        }
        let comps: Vec<Expr> = components
            .iter()
            .enumerate()
            .map(|(index, text)| {
                parse_expr(text, &table).map_err(|source| FieldError::Parse { index, source })
            })
            .collect::<Result<_, _>>()?;
        VectorField::new(name, vars, params, comps)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of variables (and components).
    pub fn n(&self) -> usize {
        self.variables.len()
    }

    /// Number of parameters.
    pub fn p(&self) -> usize {
        self.parameters.len()
    }

    pub fn variables(&self) -> &[Symbol] {
        &self.variables
    }

    pub fn parameters(&self) -> &[Symbol] {
        &self.parameters
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.table.get(name)
    }

    /// All symbols, variables first, in declaration order.
    pub fn all_symbols(&self) -> Vec<Symbol> {
        self.variables
            .iter()
            .chain(self.parameters.iter())
            .copied()
            .collect()
    }
}
