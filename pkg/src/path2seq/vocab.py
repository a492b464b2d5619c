"""Symbol tables for path symbols, source subtokens and target subtokens,
plus the whole-name table used by the single-shot prediction variant.

Reserved entries sit at fixed indices: the target table starts with
PAD, SOS, EOS, UNK (0..3); source and node tables with PAD, UNK (0..1);
the name table with UNK (0). Out-of-vocabulary lookups map to UNK.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

PAD = "<PAD>"
SOS = "<SOS>"
EOS = "<EOS>"
UNK = "<UNK>"

TARGET_SPECIALS = (PAD, SOS, EOS, UNK)
SOURCE_SPECIALS = (PAD, UNK)
NAME_SPECIALS = (UNK,)


class Vocabulary:
    def __init__(self, symbols: list[str]):
        self.symbols = list(symbols)
        self.index = {s: i for i, s in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise ValueError("duplicate vocabulary symbols")
        self.unk_id = self.index.get(UNK)

    def __len__(self) -> int:
        return len(self.symbols)

    def id(self, symbol: str) -> int:
        got = self.index.get(symbol)
        if got is None:
            if self.unk_id is None:
                raise KeyError(symbol)
            return self.unk_id
        return got

    def ids(self, symbols) -> list[int]:
        return [self.id(s) for s in symbols]

    def symbol(self, idx: int) -> str:
        return self.symbols[idx]

    @classmethod
    def from_counts(cls, counts: Counter, specials: tuple[str, ...]) -> "Vocabulary":
        # order by falling count, ties alphabetically, for reproducible ids
        ordered = sorted(counts, key=lambda s: (-counts[s], s))
        return cls(list(specials) + [s for s in ordered if s not in specials])


@dataclass
class Vocabularies:
    nodes: Vocabulary
    source: Vocabulary        # source subtokens
    source_full: Vocabulary   # whole source tokens (subtokens joined by |)
    target: Vocabulary        # target subtokens
    names: Vocabulary         # whole target names (subtokens joined by |)

    FIELDS = ("nodes", "source", "source_full", "target", "names")

    def to_dict(self) -> dict:
        return {name: getattr(self, name).symbols for name in self.FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabularies":
        return cls(**{name: Vocabulary(data[name]) for name in cls.FIELDS})

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=0, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocabularies":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocabularies(examples) -> Vocabularies:
    """Symbol tables from a training split. Validation and test splits must
    not contribute: anything unseen here becomes UNK downstream."""
    nodes, source, source_full, target, names = (
        Counter(), Counter(), Counter(), Counter(), Counter())
    for ex in examples:
        for ctx in ex.contexts:
            nodes.update(ctx.path_symbols)
            source.update(ctx.left_subtokens)
            source.update(ctx.right_subtokens)
            source_full["|".join(ctx.left_subtokens)] += 1
            source_full["|".join(ctx.right_subtokens)] += 1
        target.update(ex.target)
        names["|".join(ex.target)] += 1
    return Vocabularies(
        nodes=Vocabulary.from_counts(nodes, SOURCE_SPECIALS),
        source=Vocabulary.from_counts(source, SOURCE_SPECIALS),
        source_full=Vocabulary.from_counts(source_full, SOURCE_SPECIALS),
        target=Vocabulary.from_counts(target, TARGET_SPECIALS),
        names=Vocabulary.from_counts(names, NAME_SPECIALS),
    )
