"""Extended-precision reference for the STS report on fixtures/eval/sts_3lang.csv.

Pearson, Spearman (average ranks for ties) and the Fisher-z average are
evaluated with mpmath at 60 significant digits from the exact binary values
of the CSV floats.
"""

import csv
import sys
from collections import defaultdict

import mpmath as mp

mp.mp.dps = 60


def pearson(x, y):
    n = len(x)
    mx = mp.fsum(x) / n
    my = mp.fsum(y) / n
    sxy = mp.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = mp.fsum((a - mx) ** 2 for a in x)
    syy = mp.fsum((b - my) ** 2 for b in y)
    return sxy / mp.sqrt(sxx * syy)


def ranks(v):
    order = sorted(range(len(v)), key=lambda i: v[i])
    out = [None] * len(v)
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and v[order[j]] == v[order[i]]:
            j += 1
        for k in order[i:j]:
            out[k] = mp.mpf(i + 1 + j) / 2
        i = j
    return out


def fisher(rs):
    return mp.tanh(mp.fsum(mp.atanh(r) for r in rs) / len(rs))


groups = defaultdict(lambda: ([], []))
with open(sys.argv[1] if len(sys.argv) > 1 else "fixtures/eval/sts_3lang.csv") as f:
    for row in csv.DictReader(f):
        x, y = groups[row["lang_pair"]]
        x.append(mp.mpf(float(row["model_score"])))
        y.append(mp.mpf(float(row["gold_score"])))

ps, ss = [], []
for lang in sorted(groups):
    x, y = groups[lang]
    p, s = pearson(x, y), pearson(ranks(x), ranks(y))
    ps.append(p)
    ss.append(s)
    print(lang, mp.nstr(p, 20), mp.nstr(s, 20))
print("avg", mp.nstr(fisher(ps), 20), mp.nstr(fisher(ss), 20))
