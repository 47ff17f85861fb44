#!/usr/bin/env python3
"""Regenerate the bundled toy task: 8x8 digit features and a dense ReLU classifier.

Writes data/digits/{calib,val,test}.csv and data/digits_mlp.json. The library never
trains; this script is the only place where training happens.

    python3 tools/train_toy_model.py
"""
import json
import pathlib

import numpy as np
from sklearn.datasets import load_digits
from sklearn.neural_network import MLPClassifier

SEED = 20240611
HIDDEN = 32
FORMAT_VERSION = 1

root = pathlib.Path(__file__).resolve().parent.parent
out_dir = root / "data" / "digits"
out_dir.mkdir(parents=True, exist_ok=True)

digits = load_digits()
x = digits.data / 16.0
y = digits.target
rng = np.random.default_rng(SEED)
perm = rng.permutation(len(y))
x, y = x[perm], y[perm]

splits = {"calib": slice(0, 300), "train": slice(300, 1100), "val": slice(1100, 1450), "test": slice(1450, None)}

clf = MLPClassifier(hidden_layer_sizes=(HIDDEN,), activation="relu", alpha=1e-3,
                    max_iter=2000, random_state=SEED)
clf.fit(np.vstack([x[splits["train"]], x[splits["calib"]]]),
        np.concatenate([y[splits["train"]], y[splits["calib"]]]))

layers = []
for i, (w, b) in enumerate(zip(clf.coefs_, clf.intercepts_)):
    layers.append({
        "weights": w.T.tolist(),
        "bias": b.tolist(),
        "relu": i + 1 < len(clf.coefs_),
    })

for name in ("calib", "val", "test"):
    sl = splits[name]
    acc = clf.score(x[sl], y[sl])
    print(f"{name}: n={len(y[sl])} float accuracy={acc:.4f}")
    with open(out_dir / f"{name}.csv", "w") as f:
        f.write(f"# format_version={FORMAT_VERSION}\n")
        for xi, yi in zip(x[sl], y[sl]):
            f.write(str(int(yi)) + "," + ",".join(repr(float(v)) for v in xi) + "\n")

model = {
    "format_version": FORMAT_VERSION,
    "layers": layers,
    "reference_accuracy": {name: clf.score(x[splits[name]], y[splits[name]]) for name in ("val", "test")},
}
with open(root / "data" / "digits_mlp.json", "w") as f:
    json.dump(model, f)
