"""Pure numpy twin of the compiled tree kernel.

Node-level work is vectorised across the sampled features. Accumulations use
``np.add.accumulate`` (strictly sequential) so sums match the C loops bit for
bit; the split scan takes the first strict maximum in (feature draw order,
position) order, which is what ``argmax`` over the flattened score matrix
returns.
"""

import numpy as np

GINI = 0
LEAST_SQUARES = 1

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def _score(G, H, criterion):
    a = (G * G) / H
    if criterion == GINI:
        D = H - G
        return a + (D * D) / H
    return a


def build_tree(X, g, h, rows, order, criterion, max_depth, min_samples_split,
               min_samples_leaf, max_features, seed):
    n_in = rows.shape[0]
    d = X.shape[1]
    m = max_features if 0 < max_features < d else d
    rng = SplitMix64(seed)

    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    node_g, node_h, node_n = [0.0], [0.0], [0]
    start, end, depth = [0], [n_in], [0]
    stack = [0]

    while stack:
        node = stack.pop()
        s, e = start[node], end[node]
        n = e - s
        seg_rows = rows[s:e]
        if n:
            G = float(np.add.accumulate(g[seg_rows])[-1])
            H = float(np.add.accumulate(h[seg_rows])[-1])
        else:
            G = H = 0.0
        node_g[node], node_h[node], node_n[node] = G, H, n

        if n < min_samples_split or n < 2 * min_samples_leaf or H <= 0.0:
            continue
        if max_depth >= 0 and depth[node] >= max_depth:
            continue
        if criterion == GINI and (G == 0.0 or G == H):
            continue

        parent = _score(G, H, criterion)

        perm = list(range(d))
        for i in range(m):
            j = i + rng.next() % (d - i)
            perm[i], perm[j] = perm[j], perm[i]
        feats = np.asarray(perm[:m], dtype=np.int64)

        seg = order[feats, s:e]
        xs = X[seg, feats[:, None]]
        GL = np.add.accumulate(g[seg], axis=1)[:, :-1]
        HL = np.add.accumulate(h[seg], axis=1)[:, :-1]
        GR = G - GL
        HR = H - HL
        nl = np.arange(1, n)
        valid = xs[:, 1:] > xs[:, :-1]
        valid &= (nl >= min_samples_leaf) & (n - nl >= min_samples_leaf)
        valid &= (HL > 0.0) & (HR > 0.0)
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            sc = _score(GL, HL, criterion) + _score(GR, HR, criterion)
        sc = np.where(valid, sc, -np.inf)
        flat = int(np.argmax(sc))
        fi, bi = divmod(flat, n - 1)
        best = float(sc[fi, bi])
        if not (best - parent > 1e-12 * parent):
            continue

        best_f = int(feats[fi])
        x_i = X[seg[fi, bi], best_f]
        x_next = X[seg[fi, bi + 1], best_f]
        thr = (x_i + x_next) * 0.5
        if thr == x_next:
            thr = x_i

        goes_left = X[seg_rows, best_f] <= thr
        n_left = int(goes_left.sum())
        rows[s:e] = np.concatenate([seg_rows[goes_left], seg_rows[~goes_left]])
        block = order[:, s:e]
        flags = X[block, best_f] <= thr
        perm_idx = np.argsort(~flags, axis=1, kind="stable")
        order[:, s:e] = np.take_along_axis(block, perm_idx, axis=1)

        pos = len(feature)
        feature[node], threshold[node] = best_f, thr
        left[node], right[node] = pos, pos + 1
        for child_start, child_end in ((s, s + n_left), (s + n_left, e)):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            node_g.append(0.0)
            node_h.append(0.0)
            node_n.append(0)
            start.append(child_start)
            end.append(child_end)
            depth.append(depth[node] + 1)
        stack.append(pos + 1)
        stack.append(pos)

    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(node_g, dtype=np.float64),
        np.asarray(node_h, dtype=np.float64),
        np.asarray(node_n, dtype=np.int64),
    )


def apply_tree(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        cur = node[idx]
        go_left = X[idx, feature[cur]] <= threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
        active[idx] = feature[node[idx]] >= 0
    return node
