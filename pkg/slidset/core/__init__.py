"""Formula algebra: terms, formulas, evaluation and syntactic transformations."""
