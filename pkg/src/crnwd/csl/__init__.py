"""Time-bounded CSL: formulas, exact and statistical checking, goal catalog."""
from .formula import (
    And, Compare, FalseF, Formula, FormulaError, GloballyAll, Healthy, Implies, Label, Named,
    Not, Or, PredicateContext, ProbEventually, ProbGlobally, ProbWeakUntil, TrueF,
    compile_predicate, eval_state, parse_csl_file, parse_formula, to_text,
)
