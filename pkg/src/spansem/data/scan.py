"""SCAN-SP: navigation-command corpus generated from a synchronous CFG.

Each generated item pairs a command with its DSL program, the span tree
induced by the grammar derivation, and the executed action sequence.  The
DSL uses predicates and/after (sequencing), walk/jump/run/look/turn
(actions with optional direction and manner slots), twice/thrice
(repetition) and the constants l, r (directions), op, ar (manners).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import Category, Span, SpanTree, Utterance
from ..typesys import DomainConstant, DomainSchema, ENTITY, PREDICATE, Program

ACT, DIR, MAN = "act", "dir", "man"

_ACTION_WORDS = {"walk": "WALK", "jump": "JUMP", "run": "RUN", "look": "LOOK"}
_TURN = {"l": "LTURN", "r": "RTURN"}
_DIR_WORDS = {"left": "l", "right": "r"}
_MAN_WORDS = {"opposite": "op", "around": "ar"}


class ExecError(ValueError):
    """Program cannot be executed (unsaturated or ill-formed)."""


def scan_schema() -> DomainSchema:
    schema = DomainSchema(name="scan", types=(ACT, DIR, MAN))
    for name in ("l", "r"):
        schema.add(DomainConstant(name, ENTITY, DIR))
    for name in ("op", "ar"):
        schema.add(DomainConstant(name, ENTITY, MAN))
    for name in ("walk", "jump", "run", "look", "turn"):
        schema.add(DomainConstant(name, PREDICATE, ACT, (DIR, MAN), min_args=0))
    for name in ("twice", "thrice"):
        schema.add(DomainConstant(name, PREDICATE, ACT, (ACT,)))
    for name in ("and", "after"):
        schema.add(DomainConstant(name, PREDICATE, ACT, (ACT, ACT)))
    return schema


def scan_lexicon_entries() -> list:
    """Manual lexicon: one phrase per constant (word identity)."""
    pairs = [(w, w) for w in ("walk", "jump", "run", "look", "turn",
                              "twice", "thrice", "and", "after")]
    pairs += [("left", "l"), ("right", "r"), ("opposite", "op"), ("around", "ar")]
    return pairs


@dataclass(frozen=True)
class ScanExample:
    utterance: Utterance
    program: Program
    tree: SpanTree
    actions: tuple


# --- generation -------------------------------------------------------------

# A phrase is (tokens, builder) where builder(start) returns (tree, program)
# with leaf spans laid out from token index `start`.


def _leaf(word: str, const: str, schema: DomainSchema):
    def build(start: int):
        tree = SpanTree(Span(start, start), Category.constant(const))
        return tree, schema.atom(const)

    return [word], build


def _join(left, right):
    """Combine two phrases under a Join node, the function child being
    whichever side has an open slot matching the other's result type."""
    ltoks, lbuild = left
    rtoks, rbuild = right

    def build(start: int):
        ltree, lprog = lbuild(start)
        rtree, rprog = rbuild(start + len(ltoks))
        span = Span(ltree.span.start, rtree.span.end)
        tree = SpanTree(span, Category.join(), (ltree, rtree))
        try:
            prog = lprog.fill(_slot_for(lprog, rprog), rprog)
        except ValueError:
            prog = rprog.fill(_slot_for(rprog, lprog), lprog)
        return tree, prog

    return ltoks + rtoks, build


def _slot_for(fn: Program, arg: Program) -> int:
    for i, existing in enumerate(fn.args):
        if existing is None and fn.head.arg_types[i] == arg.result_type:
            return i
    raise ValueError(f"no open slot of {fn.head.name} accepts {arg.head.name}")


def _verb_phrases(schema: DomainSchema):
    """All 34 verb phrases of the command grammar."""
    phrases = []
    actions = list(_ACTION_WORDS) + ["turn"]
    for word in _ACTION_WORDS:
        phrases.append(_leaf(word, word, schema))  # bare action
    for word in actions:
        for dword, dconst in _DIR_WORDS.items():
            head = _leaf(word, word, schema)
            phrases.append(_join(head, _leaf(dword, dconst, schema)))
            for mword, mconst in _MAN_WORDS.items():
                modified = _join(_leaf(word, word, schema),
                                 _leaf(mword, mconst, schema))
                phrases.append(_join(modified, _leaf(dword, dconst, schema)))
    return phrases


def _clauses(schema: DomainSchema):
    clauses = []
    for vp in _verb_phrases(schema):
        clauses.append(vp)
        for rep in ("twice", "thrice"):
            clauses.append(_join(vp, _leaf(rep, rep, schema)))
    return clauses


def generate_scan_sp(schema: DomainSchema | None = None) -> list:
    """Exhaustively enumerate the command grammar (20,910 commands)."""
    schema = schema or scan_schema()
    clauses = _clauses(schema)
    phrases = list(clauses)
    for conj in ("and", "after"):
        for left in clauses:
            for right in clauses:
                phrases.append(_join(_join(left, _leaf(conj, conj, schema)), right))

    examples = []
    for tokens, build in phrases:
        tree, program = build(1)
        tree = SpanTree(tree.span, tree.category, tree.children, is_root=True)
        utt = Utterance(raw_text=" ".join(tokens), tokens=tuple(tokens))
        examples.append(
            ScanExample(utt, program, tree, actions=exec_scan(program))
        )
    return examples


# --- execution --------------------------------------------------------------


def exec_scan(z: Program) -> tuple:
    """Denotation of a SCAN-SP program: the action-token sequence."""
    name = z.head.name
    if name in ("and", "after"):
        a, b = z.args
        if a is None or b is None:
            raise ExecError(f"unsaturated {name}")
        first, second = (a, b) if name == "and" else (b, a)
        return exec_scan(first) + exec_scan(second)
    if name in ("twice", "thrice"):
        if z.args[0] is None:
            raise ExecError(f"unsaturated {name}")
        return exec_scan(z.args[0]) * (2 if name == "twice" else 3)
    if name in _ACTION_WORDS or name == "turn":
        direction, manner = z.args
        if direction is None and manner is not None:
            raise ExecError(f"{name} has a manner but no direction")
        base = (_ACTION_WORDS[name],) if name != "turn" else ()
        if direction is None:
            if name == "turn":
                raise ExecError("bare turn has no denotation")
            return base
        turn = (_TURN[direction.head.name],)
        if manner is None:
            return turn + base
        if manner.head.name == "op":
            return turn + turn + base
        return (turn + base) * 4  # around
    raise ExecError(f"cannot execute constant {name}")
