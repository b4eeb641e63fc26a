//! Real functions of `x` given as text, e.g. `0.5 * x^2` or
//! `math::sin(pi * x)^2`. Besides `x` the constants `pi` and `e` are defined.

use std::fmt;

use evalexpr::error::EvalexprResultValue;
use evalexpr::{
    build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value,
};

use super::HarnessError;

#[derive(Clone)]
pub struct Expression {
    source: String,
    node: Node<DefaultNumericTypes>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

struct PointContext {
    x: Value,
    pi: Value,
    e: Value,
}

impl Context for PointContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value> {
        match identifier {
            "x" => Some(&self.x),
            "pi" => Some(&self.pi),
            "e" => Some(&self.e),
            _ => None,
        }
    }

    fn call_function(&self, identifier: &str, _argument: &Value) -> EvalexprResultValue {
        Err(EvalexprError::FunctionIdentifierNotFound(
            identifier.to_string(),
        ))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, disabled: bool) -> EvalexprResult<()> {
        if disabled {
            Err(EvalexprError::BuiltinFunctionsCannotBeDisabled)
        } else {
            Ok(())
        }
    }
}

impl Expression {
    /// Parses `source` and checks that it evaluates to a number at `x = 0`.
    pub fn parse(source: &str) -> Result<Self, HarnessError> {
        let node = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| HarnessError::Expression(format!("{source:?}: {e}")))?;
        let expr = Self {
            source: source.to_string(),
            node,
        };
        expr.try_eval(0.0)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn try_eval(&self, x: f64) -> Result<f64, HarnessError> {
        let ctx = PointContext {
            x: Value::Float(x),
            pi: Value::Float(std::f64::consts::PI),
            e: Value::Float(std::f64::consts::E),
        };
        self.node
            .eval_number_with_context(&ctx)
            .map_err(|e| HarnessError::Expression(format!("{:?} at x = {x}: {e}", self.source)))
    }

    /// Value at `x`; evaluation errors give NaN, which the potential checks
    /// downstream reject.
    pub fn eval(&self, x: f64) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }

    /// True for expressions that are identically zero as written.
    pub fn is_zero_literal(&self) -> bool {
        matches!(self.source.trim(), "0" | "0.0")
    }
}
