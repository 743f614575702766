#!/usr/bin/env python3
"""Convert the filtered Chameleon release (chameleon_filtered.npz) into a graph bundle.

The npz holds node_features (n x d), node_labels (n) and edges (m x 2).
Splits are not copied: ptformer derives the stratified 48/32/20 split for
each seed when it loads a bundle without one.
"""
import argparse
import pathlib
import sys

import numpy as np


def convert(npz_path, out_dir):
    data = np.load(npz_path)
    for key in ("node_features", "node_labels", "edges"):
        if key not in data:
            raise ValueError(f"{npz_path}: missing array '{key}'")
    x = np.asarray(data["node_features"], dtype=np.float64)
    y = np.asarray(data["node_labels"]).astype(np.int64)
    e = np.asarray(data["edges"]).astype(np.int64)
    n, d = x.shape
    if y.shape != (n,):
        raise ValueError(f"labels shape {y.shape} does not match {n} nodes")
    if e.ndim != 2 or e.shape[1] != 2:
        raise ValueError(f"edges must be m x 2, got {e.shape}")
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ValueError("edge endpoint out of range")
    classes = np.unique(y)
    if classes[0] < 0:
        raise ValueError("negative label")
    num_classes = int(classes[-1]) + 1

    # undirected, deduplicated, self-loops dropped
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    keep = lo != hi
    pairs = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta").write_text(f"n {n}\nd {d}\nclasses {num_classes}\nseeds\n")
    with open(out / "edges", "w") as f:
        for i, j in pairs:
            f.write(f"{i} {j}\n")
    with open(out / "features", "w") as f:
        for row in x:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    (out / "labels").write_text("".join(f"{int(v)}\n" for v in y))
    return n, len(pairs), num_classes, d


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("npz")
    ap.add_argument("out")
    args = ap.parse_args()
    try:
        n, m, c, d = convert(args.npz, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"nodes {n}\nedges {m}\nclasses {c}\nfeatures {d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
