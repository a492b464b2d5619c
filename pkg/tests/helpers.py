"""Shared test utilities: synthetic corpus generation, random tree
generation and the independent oracles the unit tests compare against."""

from __future__ import annotations

import numpy as np

from path2seq.ast_core import Ast, AstNode, NodeKind, node, terminal
from path2seq.minij import SourceUnit, extract_target_name, parse_method

VERBS = ("get", "set", "add", "reset", "inc")
NOUNS = ("width", "height", "total", "index", "value", "cache", "buffer",
         "score", "limit", "offset", "weight", "depth", "size", "rank",
         "count", "span", "step", "gain", "mass", "tilt")

# Each verb has a structurally distinct, compact body; the noun variable
# carries the name's noun subtokens. Bodies stay small enough that every
# example has fewer contexts than the usual sampling cap, so training and
# inference consume identical context sets. `needs_param` marks templates
# whose body reads the first parameter.
_BODY_TEMPLATES = {
    "get": ("int {name}({params}) {{ return {var}; }}", False),
    "set": ("void {name}({params}) {{ {var} = {p0}; }}", True),
    "add": ("void {name}({params}) {{ {var} = {var} + {p0}; }}", True),
    "reset": ("void {name}({params}) {{ {var} = {lit}; }}", False),
    "inc": ("void {name}({params}) {{ {var}++; }}", False),
}
_PARAM_POOL = ("a", "b", "n", "v", "m", "q")


def camel(subtokens) -> str:
    head, *rest = subtokens
    return head + "".join(w.capitalize() for w in rest)


def synth_method(verb: str, nouns: tuple[str, ...], rng: np.random.Generator,
                 extra_params: int = 0) -> tuple[str, str]:
    """One MiniJ method whose name is verb + nouns; returns (name, source)."""
    name = camel((verb,) + nouns)
    var = camel(nouns)
    template, needs_param = _BODY_TEMPLATES[verb]
    order = rng.permutation(len(_PARAM_POOL))
    params = [_PARAM_POOL[order[i]] for i in range(int(needs_param) + extra_params)]
    fills = {
        "name": name,
        "var": var,
        "p0": params[0] if params else "",
        "lit": str(rng.integers(0, 100)),
        "params": ", ".join(f"int {p}" for p in params),
    }
    return name, template.format(**fills)


def synth_corpus(n: int, seed: int, n_verbs: int = len(VERBS),
                 n_nouns: int = len(NOUNS)) -> list[tuple[str, str]]:
    """Distinct (name, source) pairs covering verb x noun combinations."""
    rng = np.random.default_rng(seed)
    combos = [(verb, (noun,)) for verb in VERBS[:n_verbs] for noun in NOUNS[:n_nouns]]
    if len(combos) < n:
        raise ValueError(f"only {len(combos)} distinct combos available, wanted {n}")
    picked = rng.permutation(len(combos))[:n]
    return [synth_method(*combos[i], rng) for i in sorted(picked)]


def synth_split(seed: int, n_train: int = 900, n_test: int = 100,
                held_out_combos: int = 10) -> tuple[list, list]:
    """Train/test corpora where every test method name is an unseen
    verb+noun combination of subtokens that each appear in training.

    Surface variety (parameter names, literals, an optional unused extra
    parameter) makes repeated combos distinct methods.
    """
    rng = np.random.default_rng(seed)
    combos = [(verb, (noun,)) for verb in VERBS for noun in NOUNS]
    order = rng.permutation(len(combos))
    held = [combos[i] for i in order[:held_out_combos]]
    seen = [combos[i] for i in order[held_out_combos:]]
    held_verbs = {v for v, _ in held}
    held_nouns = {n[0] for _, n in held}
    assert held_verbs <= {v for v, _ in seen} and \
        held_nouns <= {n[0] for _, n in seen}, "held-out subtokens must be seen"

    def variants(pool, count):
        out = []
        for i in range(count):
            verb, nouns = pool[i % len(pool)]
            out.append(synth_method(verb, nouns, rng, extra_params=int(rng.integers(0, 2))))
        return out

    return variants(seen, n_train), variants(held, n_test)


def corpus_examples(pairs, ecfg):
    """Parse synthetic methods into masked examples."""
    from path2seq.paths import build_example

    out = []
    for i, (name, source) in enumerate(pairs):
        ast = parse_method(SourceUnit(source))
        masked, extracted = extract_target_name(ast)
        assert extracted == name
        ex = build_example(masked, extracted, ecfg)
        ex.index = i
        out.append(ex)
    return out


# --- toy model fixtures ---

def toy_examples(n: int = 12):
    """Tiny hand-shaped examples whose targets appear in their contexts."""
    from path2seq.paths import Example, PathContext

    words = ["alpha", "beta", "gamma", "delta"]
    out = []
    for i in range(n):
        a, b = words[i % 4], words[(i * 3 + 1) % 4]
        ctxs = [
            PathContext((a,), ("P^", "Q", "R_"), (b,)),
            PathContext((b,), ("Q",), (a,)),
            PathContext((a, b), ("P^", "Q"), ("end",)),
        ]
        out.append(Example(contexts=ctxs, target=[a, b], index=i))
    return out


def tiny_setup(examples=None, ablation="full", seed=1, **cfg_kw):
    """(examples, vocabs, cfg, params) with 4-dimensional everything."""
    from path2seq.model import ModelConfig, ModelParams
    from path2seq.vocab import build_vocabularies

    examples = examples if examples is not None else toy_examples()
    vocabs = build_vocabularies(examples)
    defaults = dict(d_nodes=4, d_tokens=4, d_hidden=4, d_target=4, d_path=4,
                    d_decoder=4, k=3, input_dropout=0.0, recurrent_dropout=0.0,
                    max_target_len=5)
    defaults.update(cfg_kw)
    cfg = ModelConfig(**defaults)
    params = ModelParams(cfg, vocabs, ablation=ablation, seed=seed)
    return examples, vocabs, cfg, params


# --- random trees and the brute-force path oracle ---

def random_tree(rng: np.random.Generator, max_terminals: int = 12) -> Ast:
    """A random well-formed tree with value-carrying leaves."""
    kinds = [NodeKind(f"K{i}") for i in range(6)]
    values = ["a", "b", "c", "d", "e"]
    budget = rng.integers(2, max_terminals + 1)

    def grow(depth: int, terminals_left: list[int]) -> AstNode:
        if depth > 4 or (terminals_left[0] <= 1 and rng.random() < 0.7):
            if terminals_left[0] > 0:
                terminals_left[0] -= 1
                return terminal(str(rng.choice(values)))
            return terminal(str(rng.choice(values)))
        width = int(rng.integers(1, 4))
        children = []
        for _ in range(width):
            if terminals_left[0] > 0 and rng.random() < 0.55:
                terminals_left[0] -= 1
                children.append(terminal(str(rng.choice(values))))
            else:
                children.append(grow(depth + 1, terminals_left))
        return node(kinds[int(rng.integers(0, len(kinds)))], *children)

    root = grow(0, [int(budget)])
    while root.is_terminal:
        root = node(kinds[0], root, terminal("x"))
    return Ast(root)


def oracle_ancestor_chain(ast: Ast, node_id: int) -> list[int]:
    chain = [node_id]
    while ast.parents[chain[-1]] != -1:
        chain.append(ast.parents[chain[-1]])
    return chain


def oracle_lca(ast: Ast, a: int, b: int) -> int:
    """LCA by intersecting full ancestor chains."""
    chain_a = oracle_ancestor_chain(ast, a)
    chain_b = set(oracle_ancestor_chain(ast, b))
    for n in chain_a:
        if n in chain_b:
            return n
    raise AssertionError("disconnected tree")


def oracle_paths(ast: Ast, max_interior: int) -> set[tuple]:
    """Brute-force path enumeration: all terminal pairs by DFS, paths built
    by joining full ancestor chains at the LCA. Returns a comparable set of
    (left id, interior (kind, direction) steps, right id)."""
    from path2seq.paths import Direction, path_terminals

    terms = path_terminals(ast)
    found = set()
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            a, b = terms[i].node_id, terms[j].node_id
            lca = oracle_lca(ast, a, b)
            up_ids = []
            x = ast.parents[a]
            while x != lca:
                up_ids.append(x)
                x = ast.parents[x]
            up_ids.append(lca)
            down_ids = []
            y = ast.parents[b]
            while y != lca:
                down_ids.append(y)
                y = ast.parents[y]
            down_ids.reverse()
            if len(up_ids) + len(down_ids) > max_interior:
                continue
            steps = tuple((ast.nodes[n].kind.name, Direction.UP) for n in up_ids) + \
                tuple((ast.nodes[n].kind.name, Direction.DOWN) for n in down_ids)
            found.add((a, steps, b))
    return found


def random_minij_method(rng: np.random.Generator) -> str:
    """A random small MiniJ method built from statement templates."""
    names = ["x", "y", "count", "total", "flag", "item"]
    exprs = [
        lambda: f"{rng.choice(names)}",
        lambda: f"{int(rng.integers(0, 50))}",
        lambda: f"{rng.choice(names)} + {int(rng.integers(1, 9))}",
        lambda: f"{rng.choice(names)}.size()",
        lambda: f"{rng.choice(names)}[{int(rng.integers(0, 5))}]",
    ]
    stmts = [
        lambda: f"int {rng.choice(names)} = {exprs[int(rng.integers(0, len(exprs)))]()};",
        lambda: f"{rng.choice(names)} = {exprs[int(rng.integers(0, len(exprs)))]()};",
        lambda: f"{rng.choice(names)}++;",
        lambda: f"if ({rng.choice(names)} > {int(rng.integers(0, 9))}) {rng.choice(names)}++;",
        lambda: f"while ({rng.choice(names)} < {int(rng.integers(1, 9))}) {rng.choice(names)}++;",
        lambda: f"do {rng.choice(names)}++; while ({rng.choice(names)} != {int(rng.integers(0, 9))});",
    ]
    body = " ".join(stmts[int(rng.integers(0, len(stmts)))]()
                    for _ in range(int(rng.integers(1, 4))))
    ret = f"return {rng.choice(names)};"
    return f"int m(int x) {{ {body} {ret} }}"
