"""Reference pipeline for the tiny fixture, written independently of the
Rust code: brute-force segmentation, dense log-domain Sinkhorn, min-rule
policy.

    python3 oracle/golden_policy.py tiny > tiny/golden_policy.jsonl
"""

import json
import math
import sys
from collections import Counter
from itertools import product

import numpy as np
from scipy.special import logsumexp

ALPHA = 0.5
GAMMA = 0.1
C_MAX = 30.0
CATEGORIES = sorted(["LOC", "ORG", "PER", "O"])


def read_vocab(path):
    return {l.strip() for l in open(path, encoding="utf-8") if l.strip()}


def read_conll(path):
    rows = []
    for line in open(path, encoding="utf-8"):
        line = line.strip()
        if line:
            word, tag = line.split()
            rows.append((word, "O" if tag == "O" else tag[2:]))
    return rows


def greedy(word, vocab):
    pieces, start = [], 0
    while start < len(word):
        for end in range(len(word), start, -1):
            piece = word[start:end] if start == 0 else "##" + word[start:end]
            if piece in vocab:
                pieces.append(piece)
                start = end
                break
        else:
            return ["[UNK]"]
    return pieces


def all_segmentations(word, vocab):
    out = []
    n = len(word)
    for cuts in product([False, True], repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        pieces = [word[a:b] if a == 0 else "##" + word[a:b] for a, b in zip(bounds, bounds[1:])]
        if all(p in vocab for p in pieces):
            out.append(pieces)
    return out or [greedy(word, vocab)]


def sinkhorn(a, b, cost, mask):
    log_k = np.where(mask, -cost / GAMMA, -np.inf)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    for _ in range(100000):
        f = np.log(a) - logsumexp(log_k + g[None, :], axis=1)
        g = np.log(b) - logsumexp(log_k + f[:, None], axis=0)
        plan = np.exp(log_k + f[:, None] + g[None, :])
        err = np.abs(plan.sum(1) - a).sum() + np.abs(plan.sum(0) - b).sum()
        if err < 1e-14:
            break
    return plan


def main(root):
    vocab = read_vocab(f"{root}/vocab.txt")
    source = read_conll(f"{root}/source.conll")
    target = read_conll(f"{root}/target.annotated.conll")

    counts = Counter()
    for w, y in target:
        for t in greedy(w, vocab):
            counts[(t, y)] += 1
    t_types = sorted({t for t, _ in counts})
    denom = sum(counts.values()) + ALPHA * len(t_types) * len(CATEGORIES)
    joint = {(t, y): (counts[(t, y)] + ALPHA) / denom for t in t_types for y in CATEGORIES}
    marg = {t: sum(joint[(t, y)] for y in CATEGORIES) for t in t_types}

    def cost_of(t, y):
        if t not in marg:
            return C_MAX
        p = joint[(t, y)] / marg[t]
        return min(max(-math.log(p), 0.0), C_MAX) if p > 0 else C_MAX

    phi_wy = Counter(source)
    phi_w = Counter(w for w, _ in source)
    segs = {w: all_segmentations(w, vocab) for w in phi_w}
    subs = {w: {t for s in segs[w] for t in s} for w in phi_w}

    rows = sorted(phi_wy)
    cols = sorted({t for w in phi_w for t in subs[w]})
    a = np.array([phi_wy[r] * len(subs[r[0]]) for r in rows], dtype=float)
    b = np.array([sum(phi_w[w] for w in phi_w if t in subs[w]) for t in cols], dtype=float)
    a /= a.sum()
    b /= b.sum()
    mask = np.array([[t in subs[w] for t in cols] for w, _ in rows])
    cost = np.array([[cost_of(t, y) if t in subs[w] else 0.0 for t in cols] for w, y in rows])

    plan = sinkhorn(a, b, cost, mask)
    for i, (w, y) in enumerate(rows):
        cond = {t: plan[i, j] / a[i] for j, t in enumerate(cols) if mask[i, j]}
        ss = sorted(segs[w], key=lambda s: (len(s), s))
        if len(ss) == 1:
            probs = [1.0]
        else:
            scores = [min(cond[t] for t in s) for s in ss]
            probs = [s / sum(scores) for s in scores]
        rec = {"word": w, "label": y, "segs": [{"pieces": s, "p": p} for s, p in zip(ss, probs)]}
        print(json.dumps(rec, ensure_ascii=False))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tiny")
