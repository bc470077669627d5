"""
Finite automata over symbolic letters.

A letter assigns a truth value to every track (variable name). Transitions
are labelled with cubes, partial assignments written as frozensets of
``(track, value)`` literals; a cube matches every letter agreeing with it,
and tracks it does not mention are unconstrained. This keeps products and
subset constructions independent of the number of tracks.

Every automaton built by ``slidset.services.msow`` accepts a language closed
under appending and removing trailing all-false letters; ``pad_close``
restores that property after projection.
"""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from slidset.config import get_max_states
from slidset.core.errors import StateBlowup

logger = logging.getLogger(__name__)

Literal_ = tuple[str, bool]
Cube = frozenset[Literal_]
Letter = frozenset[str]
TOP: Cube = frozenset()


# === Cubes ===

def cube(**values: bool) -> Cube:
    return frozenset(values.items())


def lit(track: str, value: bool = True) -> Cube:
    return frozenset(((track, value),))


def cube_and(a: Cube, b: Cube) -> Cube | None:
    """Conjunction of two cubes, or None when they contradict."""
    if len(a) > len(b):
        a, b = b, a
    for track, value in a:
        if (track, not value) in b:
            return None
    return a | b


def cube_negation(c: Cube) -> list[Cube]:
    """Pairwise disjoint cubes covering exactly the letters outside ``c``."""
    out: list[Cube] = []
    prefix: set[Literal_] = set()
    for track, value in sorted(c):
        out.append(frozenset(prefix | {(track, not value)}))
        prefix.add((track, value))
    return out


def cube_matches(c: Cube, letter: Letter) -> bool:
    return all((track in letter) == value for track, value in c)


def cube_admits_zero(c: Cube) -> bool:
    return not any(value for _, value in c)


def cube_letter(c: Cube) -> Letter:
    """Smallest letter matching ``c``: unconstrained tracks are false."""
    return frozenset(track for track, value in c if value)


def cube_text(c: Cube) -> str:
    return "{" + ",".join(("" if v else "!") + t for t, v in sorted(c)) + "}"


# === Automata ===

@dataclass(frozen=True)
class Nfa:
    """States are 0..size-1."""

    size: int
    initial: frozenset[int]
    finals: frozenset[int]
    transitions: tuple[tuple[int, Cube, int], ...] = ()
    tracks: frozenset[str] = field(default=frozenset())

    @cached_property
    def out(self) -> dict[int, list[tuple[Cube, int]]]:
        table: dict[int, list[tuple[Cube, int]]] = defaultdict(list)
        for src, c, dst in self.transitions:
            table[src].append((c, dst))
        return table

    def successors(self, state: int) -> list[tuple[Cube, int]]:
        return self.out.get(state, [])


def make_nfa(
    size: int,
    initial: Iterable[int],
    finals: Iterable[int],
    transitions: Iterable[tuple[int, Cube, int]],
) -> Nfa:
    transitions = tuple(dict.fromkeys(transitions))
    tracks = frozenset(t for _, c, _ in transitions for t, _ in c)
    return Nfa(size, frozenset(initial), frozenset(finals), transitions, tracks)


def universal() -> Nfa:
    return make_nfa(1, [0], [0], [(0, TOP, 0)])


def empty() -> Nfa:
    return make_nfa(1, [0], [], [])


def _budget(limit: int | None) -> int:
    return limit if limit is not None else get_max_states()


def product(a: Nfa, b: Nfa, limit: int | None = None) -> Nfa:
    """Intersection, restricted to reachable state pairs."""
    automaton, _ = product_many([a, b], limit)
    return automaton


def product_many(parts: Sequence[Nfa], limit: int | None = None) -> tuple[Nfa, list[tuple[int, ...]]]:
    """Intersection of several automata; also returns the component states of each state."""
    limit = _budget(limit)
    index: dict[tuple[int, ...], int] = {}
    order: list[tuple[int, ...]] = []
    queue: deque[tuple[int, ...]] = deque()

    def visit(state: tuple[int, ...]) -> int:
        if state not in index:
            if len(order) >= limit:
                logger.error(f"Product exceeds the state budget of {limit}")
                raise StateBlowup(limit)
            index[state] = len(order)
            order.append(state)
            queue.append(state)
        return index[state]

    initial = [visit(s) for s in _initial_tuples(parts)]
    transitions: list[tuple[int, Cube, int]] = []
    while queue:
        state = queue.popleft()
        src = index[state]
        for c, dst in _joint_moves(parts, state):
            transitions.append((src, c, visit(dst)))
    finals = [i for i, s in enumerate(order) if all(q in p.finals for q, p in zip(s, parts))]
    return make_nfa(len(order), initial, finals, transitions), order


def _initial_tuples(parts: Sequence[Nfa]) -> list[tuple[int, ...]]:
    tuples: list[tuple[int, ...]] = [()]
    for p in parts:
        tuples = [t + (q,) for t in tuples for q in sorted(p.initial)]
    return tuples


def _joint_moves(parts: Sequence[Nfa], state: tuple[int, ...]):
    moves: list[tuple[Cube, tuple[int, ...]]] = [(TOP, ())]
    for p, q in zip(parts, state):
        nxt = []
        for c, targets in moves:
            for c2, dst in p.successors(q):
                joined = cube_and(c, c2)
                if joined is not None:
                    nxt.append((joined, targets + (dst,)))
        moves = nxt
        if not moves:
            break
    return moves


def union(a: Nfa, b: Nfa) -> Nfa:
    shift = a.size
    return make_nfa(
        a.size + b.size,
        a.initial | {q + shift for q in b.initial},
        a.finals | {q + shift for q in b.finals},
        list(a.transitions) + [(s + shift, c, d + shift) for s, c, d in b.transitions],
    )


def project(a: Nfa, track: str) -> Nfa:
    """Existential projection of one track, followed by padding closure."""
    moved = [(s, frozenset(l for l in c if l[0] != track), d) for s, c, d in a.transitions]
    return pad_close(make_nfa(a.size, a.initial, a.finals, moved))


def pad_close(a: Nfa) -> Nfa:
    """Accept every word that some all-false extension of it leads to acceptance."""
    incoming: dict[int, list[int]] = defaultdict(list)
    for s, c, d in a.transitions:
        if cube_admits_zero(c):
            incoming[d].append(s)
    finals = set(a.finals)
    queue = deque(finals)
    while queue:
        q = queue.popleft()
        for p in incoming[q]:
            if p not in finals:
                finals.add(p)
                queue.append(p)
    return Nfa(a.size, a.initial, frozenset(finals), a.transitions, a.tracks)


def trim(a: Nfa) -> Nfa:
    """Drop states that are unreachable or cannot reach a final state."""
    reach = _closure(a.initial, lambda q: (d for _, d in a.successors(q)))
    backward: dict[int, list[int]] = defaultdict(list)
    for s, _, d in a.transitions:
        backward[d].append(s)
    coreach = _closure(a.finals, lambda q: backward[q])
    keep = sorted(reach & coreach)
    if not keep:
        return empty()
    rename = {q: i for i, q in enumerate(keep)}
    return make_nfa(
        len(keep),
        [rename[q] for q in a.initial if q in rename],
        [rename[q] for q in a.finals if q in rename],
        [(rename[s], c, rename[d]) for s, c, d in a.transitions if s in rename and d in rename],
    )


def _closure(start: Iterable[int], step) -> set[int]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        q = queue.popleft()
        for nxt in step(q):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def determinize(a: Nfa, complete: bool = True, limit: int | None = None) -> Nfa:
    """Subset construction; the letters leaving each subset are split into disjoint cubes."""
    limit = _budget(limit)
    start = frozenset(a.initial)
    index: dict[frozenset[int], int] = {start: 0}
    order = [start]
    queue = deque([start])
    transitions: list[tuple[int, Cube, int]] = []
    while queue:
        subset = queue.popleft()
        src = index[subset]
        for c, targets in _split_letters(a, subset):
            if not targets and not complete:
                continue
            if targets not in index:
                if len(order) >= limit:
                    logger.error(f"Determinization exceeds the state budget of {limit}")
                    raise StateBlowup(limit)
                index[targets] = len(order)
                order.append(targets)
                queue.append(targets)
            transitions.append((src, c, index[targets]))
    finals = [i for i, s in enumerate(order) if s & a.finals]
    logger.debug(f"Determinized {a.size} states into {len(order)}")
    return make_nfa(len(order), [0], finals, transitions)


def _split_letters(a: Nfa, subset: frozenset[int]) -> list[tuple[Cube, frozenset[int]]]:
    by_cube: dict[Cube, set[int]] = defaultdict(set)
    for q in subset:
        for c, d in a.successors(q):
            by_cube[c].add(d)
    regions: list[tuple[Cube, frozenset[int]]] = [(TOP, frozenset())]
    for c in sorted(by_cube, key=sorted):
        dsts = frozenset(by_cube[c])
        refined: list[tuple[Cube, frozenset[int]]] = []
        for region, targets in regions:
            inside = cube_and(region, c)
            if inside is None:
                refined.append((region, targets))
                continue
            refined.append((inside, targets | dsts))
            for piece in cube_negation(c):
                outside = cube_and(region, piece)
                if outside is not None:
                    refined.append((outside, targets))
        regions = refined
    return regions


def complement(a: Nfa, limit: int | None = None) -> Nfa:
    d = determinize(a, complete=True, limit=limit)
    flipped = Nfa(d.size, d.initial, frozenset(range(d.size)) - d.finals, d.transitions, d.tracks)
    return minimize(flipped)


def minimize(d: Nfa) -> Nfa:
    """Merge states of a deterministic automaton with identical behaviour.

    Blocks are refined by the set of (cube, target block) pairs leaving each
    state, so only syntactically equal cube partitions are merged; the result
    is equivalent though not always minimal.
    """
    block = {q: int(q in d.finals) for q in range(d.size)}
    while True:
        signature = {
            q: (block[q], tuple(sorted((tuple(sorted(c)), block[t]) for c, t in d.successors(q))))
            for q in range(d.size)
        }
        names: dict = {}
        refined = {q: names.setdefault(signature[q], len(names)) for q in range(d.size)}
        if len(names) == len(set(block.values())):
            block = refined
            break
        block = refined
    size = len(set(block.values()))
    transitions = {(block[s], c, block[t]) for s, c, t in d.transitions}
    return make_nfa(
        size,
        {block[q] for q in d.initial},
        {block[q] for q in d.finals},
        sorted(transitions, key=lambda e: (e[0], sorted(e[1]), e[2])),
    )


def reverse(a: Nfa) -> Nfa:
    return make_nfa(a.size, a.finals, a.initial, [(d, c, s) for s, c, d in a.transitions])


# === Queries ===

def accepts(a: Nfa, word: Sequence[Letter]) -> bool:
    current = set(a.initial)
    for letter in word:
        current = {d for q in current for c, d in a.successors(q) if cube_matches(c, letter)}
        if not current:
            return False
    return bool(current & a.finals)


def shortest_word(a: Nfa) -> list[Letter] | None:
    """A shortest accepted word, or None when the language is empty."""
    parent: dict[int, tuple[int, Cube] | None] = {q: None for q in a.initial}
    queue = deque(sorted(a.initial))
    while queue:
        q = queue.popleft()
        if q in a.finals:
            word: list[Letter] = []
            while parent[q] is not None:
                prev, c = parent[q]
                word.append(cube_letter(c))
                q = prev
            return list(reversed(word))
        for c, d in a.successors(q):
            if d not in parent:
                parent[d] = (q, c)
                queue.append(d)
    return None


def is_empty(a: Nfa) -> bool:
    return shortest_word(a) is None


def dump(a: Nfa) -> str:
    """Plain-text listing: header lines, then one sorted line per transition."""
    lines = [
        f"states {a.size}",
        "initial " + " ".join(str(q) for q in sorted(a.initial)),
        "final " + " ".join(str(q) for q in sorted(a.finals)),
    ]
    lines += sorted(f"{s} {cube_text(c)} {d}" for s, c, d in a.transitions)
    return "\n".join(lines)
