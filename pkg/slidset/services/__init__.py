"""Decision procedure stages: closures, automata, abstraction and the solver."""
