"""Character-level Aho-Corasick automaton."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Iterator


class Automaton:
    """Finds every occurrence of a fixed set of patterns in one pass over a text.

    ``find_all`` yields ``(start, end, pattern_index)`` with ``end``
    exclusive, ordered by end offset.
    """

    def __init__(self, patterns: Iterable[str]):
        self.patterns = list(patterns)
        self._goto: list[dict[str, int]] = [{}]
        self._fail = [0]
        self._out: list[list[int]] = [[]]
        for i, pattern in enumerate(self.patterns):
            if not pattern:
                raise ValueError("empty pattern")
            self._insert(pattern, i)
        self._link()

    def _insert(self, pattern, index):
        state = 0
        for ch in pattern:
            nxt = self._goto[state].get(ch)
            if nxt is None:
                nxt = len(self._goto)
                self._goto[state][ch] = nxt
                self._goto.append({})
                self._fail.append(0)
                self._out.append([])
            state = nxt
        self._out[state].append(index)

    def _link(self):
        queue = deque(self._goto[0].values())
        while queue:
            state = queue.popleft()
            for ch, nxt in self._goto[state].items():
                queue.append(nxt)
                f = self._fail[state]
                while f and ch not in self._goto[f]:
                    f = self._fail[f]
                target = self._goto[f].get(ch, 0)
                self._fail[nxt] = target if target != nxt else 0
                # outputs of the longest proper suffix state are inherited
                self._out[nxt] = self._out[nxt] + self._out[self._fail[nxt]]

    def find_all(self, text: str) -> Iterator[tuple[int, int, int]]:
        state = 0
        goto, fail, out = self._goto, self._fail, self._out
        for pos, ch in enumerate(text):
            while state and ch not in goto[state]:
                state = fail[state]
            state = goto[state].get(ch, 0)
            for index in out[state]:
                yield pos + 1 - len(self.patterns[index]), pos + 1, index

    def __len__(self):
        return len(self.patterns)
