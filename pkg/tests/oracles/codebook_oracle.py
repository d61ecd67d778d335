"""Independent codebook builder used to freeze the golden table.

Written without importing stegsuggest: re-derives the SplitMix64 counter
stream, the rejection-sampled Fisher-Yates shuffle and the filtering pipeline
from their definitions.

    python tests/oracles/codebook_oracle.py WORDLIST KEY OUT
"""

import sys
from collections import Counter


def stream(seed):
    """Infinite SplitMix64 output in counter form."""
    m = 2 ** 64
    state = seed % m
    while True:
        state = (state + 0x9E3779B97F4A7C15) % m
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % m
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % m
        yield z ^ (z >> 31)


def uniform(gen, n):
    cut = (2 ** 64 // n) * n
    for x in gen:
        if x < cut:
            return x % n


def shuffle(gen, n):
    a = list(range(n))
    i = n - 1
    while i > 0:
        j = uniform(gen, i + 1)
        a[i], a[j] = a[j], a[i]
        i -= 1
    return a


def build(rows, key):
    spell = Counter(w for _, w, _ in rows)
    kept = sorted((r, w) for r, w, p in rows if p != "other" and spell[w] == 1)[:4096]
    gen = stream(key)
    table = {}
    for g in range(4):
        members = [w for k, (_, w) in enumerate(kept) if k % 4 == g]
        perm = shuffle(gen, 1024)
        for k, w in enumerate(members):
            table[(g, perm[k])] = w
    return table


def main(wordlist, key, out):
    rows = []
    with open(wordlist) as fh:
        for line in fh:
            r, w, p = line.rstrip("\n").split("\t")
            rows.append((int(r), w, p))
    table = build(rows, int(key, 0))
    with open(out, "w") as fh:
        for (g, v) in sorted(table):
            fh.write(f"{g}\t{v}\t{table[(g, v)]}\n")


if __name__ == "__main__":
    main(*sys.argv[1:4])
